"""Random model generators shared across the test modules."""

import numpy as np

from mvmr import graph
from mvmr.errors import GraphStructureError, StandardizationError


def random_standardized_sem(rng, n_nodes=6, edge_prob=0.35, bicov_prob=0.15):
    """Random acyclic SEM with unit implied variances.

    Retries until the error-variance calibration is feasible and the error
    covariance stays positive semidefinite.
    """
    names = [f"V{i}" for i in range(n_nodes)]
    while True:
        edges, coeffs = [], {}
        for j in range(n_nodes):
            for i in range(j + 1, n_nodes):
                if rng.random() < edge_prob:
                    edges.append((names[j], names[i]))
                    coeffs[(names[j], names[i])] = rng.uniform(-0.5, 0.5)
        bedges, bicov = [], {}
        for j in range(n_nodes):
            for i in range(j + 1, n_nodes):
                if rng.random() < bicov_prob:
                    bedges.append((names[j], names[i]))
                    bicov[(names[j], names[i])] = rng.uniform(-0.25, 0.25)
        diagram = graph.CausalDiagram(names, edges, bedges)
        try:
            sem = graph.calibrate_unit_variances(diagram, coeffs, bicov)
        except (StandardizationError, GraphStructureError):
            continue
        return diagram, sem


def random_mvmr_graph(rng, n_exposures=2, cross_prob=0.5, sabotage=None):
    """MVMR-shaped SEM: correlated instruments, exposures, one outcome.

    Every exposure gets its own instrument edge plus random cross edges;
    instruments share pairwise error correlations.  ``sabotage`` breaks
    the instrumental-set condition: ``"pleiotropy"`` adds a direct
    instrument-outcome edge, ``"missing_variant"`` removes one exposure's
    causal variant so only LD connects it.

    Returns (diagram, sem, instruments, exposures, outcome, true_effects).
    """
    K = n_exposures
    instruments = [f"E{i + 1}" for i in range(K)]
    exposures = [f"X{i + 1}" for i in range(K)]
    outcome = "Y"
    while True:
        edges, coeffs = [], {}
        for i in range(K):
            for j in range(K):
                if i == j or rng.random() < cross_prob:
                    edges.append((instruments[i], exposures[j]))
                    coeffs[(instruments[i], exposures[j])] = rng.uniform(0.1, 0.4) * rng.choice([-1, 1])
        true_effects = rng.uniform(0.1, 0.6, size=K) * rng.choice([-1, 1], size=K)
        for j in range(K):
            edges.append((exposures[j], outcome))
            coeffs[(exposures[j], outcome)] = true_effects[j]

        bicov = {}
        for i in range(K):
            for j in range(i + 1, K):
                bicov[(instruments[i], instruments[j])] = rng.uniform(0.1, 0.6)
        if K > 1 and rng.random() < 0.5:
            bicov[(exposures[0], exposures[1])] = rng.uniform(-0.2, 0.2)
        if rng.random() < 0.5:
            bicov[(exposures[rng.integers(K)], outcome)] = rng.uniform(-0.2, 0.2)

        if sabotage == "pleiotropy":
            edges.append((instruments[0], outcome))
            coeffs[(instruments[0], outcome)] = rng.uniform(0.1, 0.3)
        elif sabotage == "missing_variant":
            edges = [(s, t) for (s, t) in edges if s != instruments[-1]]
            coeffs = {k: v for k, v in coeffs.items() if k[0] != instruments[-1]}
            # the last instrument now only connects through LD with the others

        diagram = graph.CausalDiagram(
            instruments + exposures + [outcome], edges, list(bicov)
        )
        try:
            sem = graph.calibrate_unit_variances(diagram, coeffs, bicov)
        except (StandardizationError, GraphStructureError):
            continue
        return diagram, sem, instruments, exposures, outcome, np.asarray(true_effects)


def population_statistics(diagram, sem, instruments, exposures, outcome, n_outcome=None):
    """SummaryStatistics built from the SEM's implied covariance matrix."""
    from mvmr.estimators import SummaryStatistics

    sigma = graph.implied_covariance(sem)
    iE = [diagram.index(e) for e in instruments]
    iX = [diagram.index(x) for x in exposures]
    iY = diagram.index(outcome)
    return SummaryStatistics(
        sigma[np.ix_(iE, iX)],
        sigma[iE, iY],
        sigma[np.ix_(iE, iE)],
        n_outcome=n_outcome,
        exposure_names=tuple(exposures),
        instrument_names=tuple(instruments),
    )
