import numpy as np
import pytest

from mvmr import graph
from mvmr.errors import (
    CombinatorialLimitError,
    GraphStructureError,
    PathEnumerationError,
    StandardizationError,
    UnknownNodeError,
)
from helpers import random_standardized_sem, random_mvmr_graph


def fig_2a_model(alpha=0.9, A=((0.3, 0.1), (0.2, 0.25)), c=(0.2, 0.6)):
    diagram = graph.CausalDiagram(
        ["E1", "E2", "X1", "X2", "Y"],
        [
            ("E1", "X1"),
            ("E1", "X2"),
            ("E2", "X1"),
            ("E2", "X2"),
            ("X1", "Y"),
            ("X2", "Y"),
        ],
        [("E1", "E2")],
    )
    coeffs = {
        ("E1", "X1"): A[0][0],
        ("E1", "X2"): A[0][1],
        ("E2", "X1"): A[1][0],
        ("E2", "X2"): A[1][1],
        ("X1", "Y"): c[0],
        ("X2", "Y"): c[1],
    }
    sem = graph.calibrate_unit_variances(diagram, coeffs, {("E1", "E2"): alpha})
    return diagram, sem


class TestDiagramValidation:
    def test_rejects_cycle(self):
        with pytest.raises(GraphStructureError):
            graph.CausalDiagram(["A", "B"], [("A", "B"), ("B", "A")])

    def test_rejects_self_loop(self):
        with pytest.raises(GraphStructureError):
            graph.CausalDiagram(["A"], [("A", "A")])

    def test_rejects_duplicate_nodes(self):
        with pytest.raises(GraphStructureError):
            graph.CausalDiagram(["A", "A"], [])

    def test_rejects_unknown_edge_node(self):
        with pytest.raises(UnknownNodeError):
            graph.CausalDiagram(["A"], [("A", "B")])

    def test_sem_pattern_must_match_diagram(self):
        diagram = graph.CausalDiagram(["A", "B"], [("A", "B")])
        C = np.array([[0.0, 0.5], [0.3, 0.0]])  # upper entry has no edge
        with pytest.raises(GraphStructureError):
            graph.SemParameters(C, np.eye(2)).validate_against(diagram)


class TestImpliedCovariance:
    def test_no_edges_identity(self):
        sem = graph.SemParameters(np.zeros((2, 2)), np.eye(2))
        assert np.array_equal(graph.implied_covariance(sem), np.eye(2))

    def test_chain_product(self):
        # E -> X (0.5), X -> Y (0.3), unit variances: sigma_EY = 0.15
        diagram = graph.CausalDiagram(["E", "X", "Y"], [("E", "X"), ("X", "Y")])
        sem = graph.calibrate_unit_variances(
            diagram, {("E", "X"): 0.5, ("X", "Y"): 0.3}
        )
        sigma = graph.implied_covariance(sem)
        assert sigma[diagram.index("E"), diagram.index("Y")] == pytest.approx(0.15, abs=1e-14)
        assert np.allclose(np.diag(sigma), 1.0, atol=1e-12)

    def test_matches_path_rule_on_random_sems(self):
        rng = np.random.default_rng(101)
        for _ in range(25):
            diagram, sem = random_standardized_sem(rng, n_nodes=6)
            sigma = graph.implied_covariance(sem)
            for a in diagram.nodes:
                for b in diagram.nodes:
                    if a == b:
                        continue
                    w = graph.wright_covariance(diagram, sem, a, b)
                    assert w == pytest.approx(
                        sigma[diagram.index(a), diagram.index(b)], abs=1e-12
                    )


class TestWrightCovariance:
    def test_disconnected_nodes_zero(self):
        diagram = graph.CausalDiagram(["A", "B"], [])
        sem = graph.SemParameters(np.zeros((2, 2)), np.eye(2))
        assert graph.wright_covariance(diagram, sem, "A", "B") == 0.0

    def test_fig2a_four_paths(self):
        diagram, sem = fig_2a_model()
        paths = graph.enumerate_paths(diagram, "E1", "Y")
        assert len(paths) == 4
        value = graph.wright_covariance(diagram, sem, "E1", "Y")
        # direct: 0.3*0.2 + 0.1*0.6; through the LD edge: 0.9*(0.2*0.2 + 0.25*0.6)
        assert value == pytest.approx(0.291, abs=1e-12)
        sigma = graph.implied_covariance(sem)
        assert value == pytest.approx(
            sigma[diagram.index("E1"), diagram.index("Y")], abs=1e-12
        )

    def test_collider_path_contributes_nothing(self):
        # E1 -> X <- E2 with a direct bidirected E1 <-> E2: only the
        # bidirected edge carries covariance
        diagram = graph.CausalDiagram(
            ["E1", "E2", "X"], [("E1", "X"), ("E2", "X")], [("E1", "E2")]
        )
        sem = graph.calibrate_unit_variances(
            diagram, {("E1", "X"): 0.4, ("E2", "X"): 0.3}, {("E1", "E2"): 0.2}
        )
        assert graph.wright_covariance(diagram, sem, "E1", "E2") == pytest.approx(
            0.2, abs=1e-14
        )

    def test_standardized_mode_enforces_unit_variances(self):
        diagram = graph.CausalDiagram(["E", "X"], [("E", "X")])
        sem = graph.sem_from_values(diagram, {("E", "X"): 0.5})  # var(X) = 1.25
        with pytest.raises(StandardizationError):
            graph.wright_covariance(diagram, sem, "E", "X")

    def test_root_variance_multiplier(self):
        # non-standardized: sigma_EY = a*c*var(E)
        diagram = graph.CausalDiagram(["E", "X", "Y"], [("E", "X"), ("X", "Y")])
        sem = graph.sem_from_values(
            diagram, {("E", "X"): 0.5, ("X", "Y"): 0.3}, error_var={"E": 2.0}
        )
        sigma = graph.implied_covariance(sem)
        value = graph.wright_covariance(
            diagram, sem, "E", "Y", standardized=False, root_variances={"E": 2.0}
        )
        assert value == pytest.approx(sigma[0, 2], abs=1e-14)
        assert value == pytest.approx(0.3, abs=1e-14)

    def test_node_cap_guard(self):
        names = [f"N{i}" for i in range(25)]
        diagram = graph.CausalDiagram(names, [])
        sem = graph.SemParameters(np.zeros((25, 25)), np.eye(25))
        with pytest.raises(PathEnumerationError):
            graph.wright_covariance(diagram, sem, "N0", "N1")
        assert (
            graph.wright_covariance(diagram, sem, "N0", "N1", max_nodes=30) == 0.0
        )


class TestDSeparation:
    def test_exposure_edges_removed(self):
        diagram, _, instruments, exposures, outcome, _ = random_mvmr_graph(
            np.random.default_rng(0), n_exposures=2
        )
        removed = [(x, outcome) for x in exposures]
        for e in instruments:
            assert graph.d_separated(diagram, e, outcome, removed)

    def test_open_chain_connected(self):
        diagram = graph.CausalDiagram(["E", "X", "Y"], [("E", "X"), ("X", "Y")])
        assert not graph.d_separated(diagram, "E", "Y")

    def test_isolated_nodes_separated(self):
        diagram = graph.CausalDiagram(["A", "B"], [])
        assert graph.d_separated(diagram, "A", "B")

    def test_unknown_node_lookup_error(self):
        diagram = graph.CausalDiagram(["A", "B"], [])
        with pytest.raises(UnknownNodeError):
            graph.d_separated(diagram, "A", "Z")

    def test_removed_edges_must_exist(self):
        diagram = graph.CausalDiagram(["A", "B"], [("A", "B")])
        with pytest.raises(GraphStructureError):
            graph.d_separated(diagram, "A", "B", [("B", "A")])

    def test_separation_implies_zero_covariance(self):
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 40:
            diagram, sem = random_standardized_sem(rng, n_nodes=6)
            sigma = graph.implied_covariance(sem)
            for a in diagram.nodes:
                for b in diagram.nodes:
                    if a < b and graph.d_separated(diagram, a, b):
                        assert abs(sigma[diagram.index(a), diagram.index(b)]) < 1e-12
                        checked += 1


class TestInstrumentalSet:
    def test_fig1b_satisfied(self):
        diagram = graph.CausalDiagram(
            ["E1", "E2", "X1", "X2", "Y"],
            [("E1", "X1"), ("E2", "X2"), ("X1", "Y"), ("X2", "Y")],
            [("E1", "E2"), ("X1", "Y"), ("X2", "Y"), ("X1", "X2")],
        )
        result = graph.check_instrumental_set(diagram, ["E1", "E2"], ["X1", "X2"], "Y")
        assert result.satisfied
        assert result.failed_condition is None
        assert len(result.witness) == 2

    def test_fig1c_fails_condition_three(self):
        # one causal variant; the second connects to the exposures only
        # through LD with the first
        diagram = graph.CausalDiagram(
            ["E1", "E2", "X1", "X2", "Y"],
            [("E1", "X1"), ("E1", "X2"), ("X1", "Y"), ("X2", "Y")],
            [("E1", "E2")],
        )
        result = graph.check_instrumental_set(diagram, ["E1", "E2"], ["X1", "X2"], "Y")
        assert not result.satisfied
        assert result.failed_condition == 3

    def test_classical_single_iv(self):
        diagram = graph.CausalDiagram(
            ["E", "X", "Y"], [("E", "X"), ("X", "Y")], [("X", "Y")]
        )
        assert graph.check_instrumental_set(diagram, ["E"], ["X"], "Y").satisfied

    def test_pleiotropy_fails_condition_two(self):
        diagram = random_mvmr_graph(
            np.random.default_rng(3), n_exposures=2, sabotage="pleiotropy"
        )[0]
        result = graph.check_instrumental_set(diagram, ["E1", "E2"], ["X1", "X2"], "Y")
        assert not result.satisfied
        assert result.failed_condition == 2

    def test_outcome_among_instruments_rejected(self):
        diagram = graph.CausalDiagram(["E", "X", "Y"], [("E", "X"), ("X", "Y")])
        with pytest.raises(ValueError):
            graph.check_instrumental_set(diagram, ["Y"], ["X"], "Y")

    def test_permutation_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            sabotage = rng.choice([None, "pleiotropy", "missing_variant"])
            diagram, sem, instruments, exposures, outcome, _ = random_mvmr_graph(
                rng, n_exposures=3, sabotage=sabotage
            )
            base = graph.check_instrumental_set(diagram, instruments, exposures, outcome)
            order = rng.permutation(len(instruments))
            shuffled = graph.check_instrumental_set(
                diagram, [instruments[i] for i in order], exposures, outcome
            )
            assert base.satisfied == shuffled.satisfied

    def test_combinatorial_cap(self):
        K = 9
        nodes = [f"E{i}" for i in range(K)] + [f"X{i}" for i in range(K)] + ["Y"]
        edges = [(f"E{i}", f"X{i}") for i in range(K)] + [
            (f"X{i}", "Y") for i in range(K)
        ]
        diagram = graph.CausalDiagram(nodes, edges)
        with pytest.raises(CombinatorialLimitError):
            graph.check_instrumental_set(
                diagram,
                [f"E{i}" for i in range(K)],
                [f"X{i}" for i in range(K)],
                "Y",
            )

    def test_find_instrumental_subset(self):
        # three candidate variants, two causal: some square subset works
        diagram = graph.CausalDiagram(
            ["E1", "E2", "E3", "X1", "X2", "Y"],
            [("E1", "X1"), ("E2", "X2"), ("X1", "Y"), ("X2", "Y")],
            [("E1", "E2"), ("E2", "E3"), ("E1", "E3")],
        )
        subset, result = graph.find_instrumental_subset(
            diagram, ["E1", "E2", "E3"], ["X1", "X2"], "Y"
        )
        assert result.satisfied
        assert set(subset) == {"E1", "E2"}


class TestDiagramText:
    def test_round_trip_semantics(self):
        text = """
        # comment line
        edge E -> X 0.5
        edge X -> Y 0.3
        bicov X <-> Y 0.1
        var E 1.0
        var X 0.75
        var Y 0.8
        """
        diagram, sem = graph.parse_diagram_text(text)
        assert diagram.nodes == ("E", "X", "Y")
        assert sem.coefficient(diagram, "E", "X") == 0.5
        assert sem.error_covariance(diagram, "X", "Y") == 0.1
        assert sem.error_covariance(diagram, "E", "E") == 1.0

    def test_duplicate_declaration_rejected(self):
        with pytest.raises(GraphStructureError):
            graph.parse_diagram_text("edge A -> B 0.5\nedge A -> B 0.2")

    def test_malformed_line_rejected(self):
        with pytest.raises(GraphStructureError):
            graph.parse_diagram_text("edge A => B 0.5")
