"""Synthetic genotype / exposure / outcome studies with replicate harness.

Genotypes are binomial (two allele draws per SNP) with a Markov dependence
between consecutive SNPs so that per-SNP minor allele frequencies and
consecutive-pair correlations hit their targets exactly in expectation.
Scenarios that need an arbitrary full correlation matrix (e.g. Wishart
perturbation experiments) use a Gaussian genotype mode instead, since only
second moments enter the estimators.

Exposures follow ``X_j = sum_i A[i, j] * E_i + noise`` and the outcome
``Y = sum_j c_j * X_j + noise`` with noise variance 1 by default.  All
columns are standardized before summary statistics are computed; estimates
are mapped back to the generative scale (multiplying by the sample
sd(Y)/sd(X_k) ratio) so that replicate bias is measured against the
scenario's true effect vector.

Replicates draw independent RNG streams spawned from the master seed by
replicate index, making results bit-identical regardless of the degree of
parallelism.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as sps

from .errors import FeasibilityError, MvmrError, ScenarioError
from .estimators import (
    ESTIMATORS,
    IndividualData,
    SummaryStatistics,
    conditional_f,
    p_values,
    standard_errors,
    _unit_diagonal,
)

# ---------------------------------------------------------------------------
# Genotype models


@dataclass(frozen=True)
class GenotypeModel:
    """Markov-chain binomial genotype sampler settings.

    ``mafs[k]`` is the minor allele frequency of SNP k (in (0, 0.5]) and
    ``successive_r[k]`` the target correlation between SNPs k and k+1.
    Each genotype is the sum of two allele draws; the allele chain for SNP
    k+1 is Bernoulli with success probability linear in the paired allele
    of SNP k, which reproduces both the MAF and the pairwise correlation.
    """

    mafs: tuple
    successive_r: tuple = ()

    def __init__(self, mafs, successive_r=()):
        object.__setattr__(self, "mafs", tuple(float(m) for m in mafs))
        object.__setattr__(self, "successive_r", tuple(float(r) for r in successive_r))
        if len(self.successive_r) != max(len(self.mafs) - 1, 0):
            raise ScenarioError("need one successive correlation per SNP pair")
        for k, m in enumerate(self.mafs):
            if not 0.0 < m <= 0.5:
                raise ScenarioError(f"maf[{k}]={m} outside (0, 0.5]")
        for k, r in enumerate(self.successive_r):
            if not -1.0 < r < 1.0:
                raise ScenarioError(f"successive r[{k}]={r} outside (-1, 1)")
            _conditional_allele_probs(self.mafs[k], self.mafs[k + 1], r, k)

    @property
    def n_snps(self):
        return len(self.mafs)

    @classmethod
    def pair(cls, correlation, maf=0.3):
        return cls((maf, maf), (correlation,))

    @classmethod
    def from_ld_matrix(cls, ld, mafs):
        """Markov model matching the first off-diagonal of an LD matrix."""
        ld = np.asarray(ld, dtype=float)
        succ = tuple(ld[k, k + 1] for k in range(ld.shape[0] - 1))
        return cls(tuple(mafs), succ)

    def implied_ld(self):
        """Full correlation matrix implied by the Markov chain closure."""
        L = self.n_snps
        out = np.eye(L)
        for i in range(L):
            acc = 1.0
            for j in range(i + 1, L):
                acc *= self.successive_r[j - 1]
                out[i, j] = out[j, i] = acc
        return out


def _conditional_allele_probs(maf_prev, maf_next, r, pair_index):
    """Bernoulli success probabilities for the next allele given the previous.

    Raises :class:`FeasibilityError` naming the pair when the target
    correlation is unreachable for the MAF combination.
    """
    slope = r * np.sqrt(maf_next * (1 - maf_next) / (maf_prev * (1 - maf_prev)))
    p0 = maf_next + slope * (0.0 - maf_prev)
    p1 = maf_next + slope * (1.0 - maf_prev)
    if not (0.0 <= p0 <= 1.0 and 0.0 <= p1 <= 1.0):
        raise FeasibilityError(
            f"SNP pair {pair_index}-{pair_index + 1}: correlation {r} is "
            f"infeasible for MAFs ({maf_prev}, {maf_next}); conditional "
            f"allele probabilities ({p0:.4f}, {p1:.4f}) leave [0, 1]"
        )
    return p0, p1


def sample_genotypes(model, n, seed):
    """Draw an (n, L) integer genotype matrix from the Markov model."""
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    L = model.n_snps
    alleles = np.empty((2, n, L), dtype=np.int8)
    for copy in range(2):
        alleles[copy, :, 0] = rng.random(n) < model.mafs[0]
        for k in range(1, L):
            p0, p1 = _conditional_allele_probs(
                model.mafs[k - 1], model.mafs[k], model.successive_r[k - 1], k - 1
            )
            prev = alleles[copy, :, k - 1]
            probs = np.where(prev == 1, p1, p0)
            alleles[copy, :, k] = rng.random(n) < probs
    return alleles.sum(axis=0).astype(np.int64)


def perturb_ld(reference, df, seed):
    """Sample a unit-diagonal LD matrix from a Wishart centred on ``reference``.

    The scatter matrix is Wishart(df, reference/df), so its expectation is
    the reference itself before renormalisation to unit diagonal.
    """
    reference = np.asarray(reference, dtype=float)
    dim = reference.shape[0]
    if df < dim:
        raise ScenarioError(
            f"Wishart degrees of freedom {df} below matrix dimension {dim}"
        )
    try:
        np.linalg.cholesky(reference)
    except np.linalg.LinAlgError:
        raise ScenarioError("reference LD matrix must be positive definite") from None
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    draw = sps.wishart.rvs(df=df, scale=reference / df, random_state=rng)
    return _unit_diagonal(np.atleast_2d(draw))


def pc1_explained_variance(r):
    """Expected share of variance on the first principal component, (1+r)/2."""
    if not -1.0 < r < 1.0:
        raise ValueError(f"correlation must lie strictly inside (-1, 1), got {r}")
    return (1.0 + r) / 2.0


def empirical_pc1_share(r, n=2000, repetitions=2000, maf=0.3, seed=0):
    """Mean empirical PC1 variance share over repeated genotype-pair samples."""
    model = GenotypeModel.pair(r, maf)
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    shares = np.empty(repetitions)
    for rep in range(repetitions):
        g = sample_genotypes(model, n, rng).astype(float)
        z = (g - g.mean(axis=0)) / g.std(axis=0)
        eig = np.linalg.eigvalsh(z.T @ z / n)
        shares[rep] = eig[-1] / eig.sum()
    return float(shares.mean())


# ---------------------------------------------------------------------------
# Scenario description


def _causal_mask(causal_rows, n_instruments, n_exposures):
    """Boolean causal-entry mask from a shared row list or per-exposure lists.

    Returns ``(mask, shared_rows)``; ``shared_rows`` is the flat row list
    when the same rows apply to every exposure (enabling determinant
    constraints), else None.
    """
    if causal_rows is None:
        return np.ones((n_instruments, n_exposures), dtype=bool), list(range(n_instruments))
    rows = list(causal_rows)
    per_exposure = bool(rows) and isinstance(rows[0], (list, tuple))
    mask = np.zeros((n_instruments, n_exposures), dtype=bool)
    if per_exposure:
        if len(rows) != n_exposures:
            raise ScenarioError("need one causal-instrument list per exposure")
        for k, sub in enumerate(rows):
            mask[list(sub), k] = True
        return mask, None
    mask[rows, :] = True
    return mask, rows


@dataclass(frozen=True)
class EffectSizes:
    """Instrument -> exposure effect matrix, fixed or resampled per replicate.

    When ``matrix`` is None, causal entries get magnitudes drawn uniformly
    from [low, high] (positive, or random-signed when ``signs='random'``),
    rejection-sampled per replicate until all requested design constraints
    hold:

    * ``det_min`` / ``det_max``: determinant of the square causal block
      above (strong designs) or in absolute value below (weak designs) the
      bound;
    * ``design_gram_min``: determinant of the normalized Gram matrix of the
      population instrument-exposure correlations at least this large (the
      identifiability screen);
    * ``design_strength_min``: every exposure's instrument-signal column
      norm, in correlation units, at least this large (no weak designs).

    The last two need the scenario's reference LD / instrument variances
    and are what keeps highly correlated instrument panels estimable.
    """

    matrix: tuple | None = None
    low: float = 0.1
    high: float = 0.3
    signs: str = "positive"  # or "random"
    det_min: float | None = None
    det_max: float | None = None
    design_gram_min: float | None = None
    design_strength_min: float | None = None

    def __post_init__(self):
        if self.signs not in ("positive", "random"):
            raise ScenarioError(f"unknown sign policy {self.signs!r}")
        if self.matrix is not None:
            object.__setattr__(
                self, "matrix", tuple(map(tuple, np.asarray(self.matrix, dtype=float)))
            )

    def realize(
        self,
        rng,
        n_instruments,
        n_exposures,
        causal_rows=None,
        reference_ld=None,
        instrument_sds=None,
        noise_variance=1.0,
        batch=256,
        max_draws=2_000_000,
    ):
        if self.matrix is not None:
            A = np.asarray(self.matrix, dtype=float)
            if A.shape != (n_instruments, n_exposures):
                raise ScenarioError(
                    f"fixed effect matrix shape {A.shape} does not match "
                    f"(L={n_instruments}, K={n_exposures})"
                )
            return A
        mask, shared_rows = _causal_mask(causal_rows, n_instruments, n_exposures)
        square = shared_rows is not None and len(shared_rows) == n_exposures
        needs_screen = (
            self.design_gram_min is not None or self.design_strength_min is not None
        )
        if needs_screen:
            if reference_ld is None:
                raise ScenarioError("design screen requires a reference LD matrix")
            sds = (
                np.ones(n_instruments)
                if instrument_sds is None
                else np.asarray(instrument_sds, dtype=float)
            )
            cov_E = reference_ld * np.outer(sds, sds)

        drawn = 0
        while drawn < max_draws:
            A_full = rng.uniform(self.low, self.high, size=(batch, n_instruments, n_exposures))
            if self.signs == "random":
                A_full *= rng.choice([-1.0, 1.0], size=A_full.shape)
            A_full *= mask[None, :, :]
            drawn += batch
            ok = np.ones(batch, dtype=bool)
            if square and self.det_min is not None:
                ok &= np.linalg.det(A_full[:, shared_rows, :]) > self.det_min
            if square and self.det_max is not None:
                ok &= np.abs(np.linalg.det(A_full[:, shared_rows, :])) < self.det_max
            if needs_screen and ok.any():
                covEX = np.einsum("ij,bjk->bik", cov_E, A_full)
                varX = np.einsum("bji,jk,bkl->bil", A_full, cov_E, A_full)
                sdX = np.sqrt(np.einsum("bii->bi", varX) + noise_variance)
                S = covEX / sds[None, :, None] / sdX[:, None, :]
                norms = np.linalg.norm(S, axis=1)
                if self.design_strength_min is not None:
                    ok &= norms.min(axis=1) >= self.design_strength_min
                with np.errstate(invalid="ignore", divide="ignore"):
                    Sn = S / np.where(norms > 0, norms, 1.0)[:, None, :]
                    grams = np.einsum("bji,bjk->bik", Sn, Sn)
                    if self.design_gram_min is not None:
                        ok &= np.linalg.det(grams) > self.design_gram_min
            hits = np.flatnonzero(ok)
            if hits.size:
                return A_full[hits[0]]
        raise ScenarioError(
            f"could not satisfy the effect-matrix design constraints after "
            f"{max_draws} draws"
        )


@dataclass(frozen=True)
class SimulationScenario:
    """Declarative description of one simulation cell."""

    true_effects: tuple
    n_samples: int
    genotypes: GenotypeModel | None = None  # Markov mode when set
    ld_matrix: tuple | None = None  # Gaussian mode when set (row tuples)
    effects: EffectSizes = field(default_factory=EffectSizes)
    causal_instruments: tuple | None = None
    noise_variance: float = 1.0
    hidden_exposures: tuple = ()
    hidden_effect_grid: tuple | None = None
    instrument_subset: tuple | None = None
    n_outcome: int | None = None
    ld_choice: str = "exposure"  # two-sample LD source: exposure|outcome|reference
    ld_wishart_df: int | None = None  # one-sample generative LD perturbation
    ld_df_scale: float | None = None  # two-sample per-cohort Wishart df = n*scale
    use_reference_ld: bool = False  # estimate with the reference LD matrix
    replicates: int = 1000
    seed: int | None = None
    name: str = "scenario"
    exposure_names: tuple | None = None
    instrument_names: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "true_effects", tuple(float(c) for c in self.true_effects))
        if self.ld_matrix is not None:
            ld = np.asarray(self.ld_matrix, dtype=float)
            object.__setattr__(self, "ld_matrix", tuple(map(tuple, ld)))
        if (self.genotypes is None) == (self.ld_matrix is None):
            raise ScenarioError("specify exactly one of genotypes (Markov) or ld_matrix (Gaussian)")
        if self.causal_instruments is not None:
            rows = list(self.causal_instruments)
            if rows and isinstance(rows[0], (list, tuple)):
                object.__setattr__(
                    self, "causal_instruments", tuple(tuple(r) for r in rows)
                )
                distinct = set().union(*(set(r) for r in rows))
            else:
                object.__setattr__(self, "causal_instruments", tuple(rows))
                distinct = set(rows)
            if len(distinct) < self.n_exposures:
                raise ScenarioError(
                    "need at least as many causal instruments as exposures"
                )
        if self.hidden_exposures:
            object.__setattr__(self, "hidden_exposures", tuple(self.hidden_exposures))
            if not set(self.hidden_exposures) < set(range(self.n_exposures)):
                raise ScenarioError("hidden exposures must be a strict subset")
        if self.instrument_subset is not None:
            object.__setattr__(self, "instrument_subset", tuple(self.instrument_subset))
        if self.ld_choice not in ("exposure", "outcome", "reference"):
            raise ScenarioError(f"unknown ld_choice {self.ld_choice!r}")
        if self.noise_variance < 0:
            raise ScenarioError("noise variance must be >= 0")
        if self.ld_wishart_df is not None and self.ld_matrix is None:
            raise ScenarioError(
                "generative LD perturbation needs the Gaussian genotype mode "
                "(ld_matrix); the Markov sampler cannot target an arbitrary "
                "perturbed matrix"
            )

    @property
    def n_exposures(self):
        return len(self.true_effects)

    @property
    def n_instruments_total(self):
        if self.genotypes is not None:
            return self.genotypes.n_snps
        return len(self.ld_matrix)

    @property
    def n_instruments(self):
        if self.instrument_subset is not None:
            return len(self.instrument_subset)
        return self.n_instruments_total

    def reference_ld(self):
        if self.ld_matrix is not None:
            return np.asarray(self.ld_matrix, dtype=float)
        return self.genotypes.implied_ld()

    def instrument_sds(self):
        """Population instrument standard deviations on the generative scale."""
        if self.genotypes is not None:
            m = np.asarray(self.genotypes.mafs)
            return np.sqrt(2.0 * m * (1.0 - m))
        return np.ones(self.n_instruments_total)


def select_by_ld_threshold(ld, max_r2):
    """Greedy instrument subset whose mutual r^2 stays at or below ``max_r2``.

    SNPs are scanned in order; a SNP is retained when its squared
    correlation with every already-retained SNP does not exceed the
    threshold.
    """
    ld = np.asarray(ld, dtype=float)
    kept = []
    for k in range(ld.shape[0]):
        if all(ld[k, j] ** 2 <= max_r2 for j in kept):
            kept.append(k)
    return kept


# ---------------------------------------------------------------------------
# Dataset generation


@dataclass
class GeneratedDataset:
    """One simulated dataset: standardized arrays plus generative scales."""

    individual: IndividualData
    statistics: SummaryStatistics
    sd_exposures: np.ndarray
    sd_outcome: float
    effect_matrix: np.ndarray


def _standardize(columns):
    arr = np.asarray(columns, dtype=float)
    means = arr.mean(axis=0)
    sds = arr.std(axis=0)
    if np.any(sds <= 0):
        raise ScenarioError("degenerate (constant) column in generated data")
    return (arr - means) / sds, sds


def _draw_genotypes(scenario, n, rng, ld_override=None):
    if scenario.genotypes is not None:
        return sample_genotypes(scenario.genotypes, n, rng).astype(float)
    ld = scenario.reference_ld() if ld_override is None else ld_override
    chol = np.linalg.cholesky(ld)
    return rng.standard_normal((n, ld.shape[0])) @ chol.T


def _generate_arrays(scenario, A, n, rng, ld_override=None):
    e_raw = _draw_genotypes(scenario, n, rng, ld_override)
    noise_sd = np.sqrt(scenario.noise_variance)
    x = e_raw @ A + noise_sd * rng.standard_normal((n, scenario.n_exposures))
    y = x @ np.asarray(scenario.true_effects) + noise_sd * rng.standard_normal(n)
    return e_raw, x, y


def _assemble(scenario, e_raw, x, y):
    subset = scenario.instrument_subset
    if subset is not None:
        e_raw = e_raw[:, list(subset)]
    e_std, _ = _standardize(e_raw)
    x_std, sd_x = _standardize(x)
    y_std, sd_y = _standardize(y.reshape(-1, 1))
    individual = IndividualData(e_std, x_std, y_std[:, 0])
    stats = individual.summary_statistics()
    if scenario.use_reference_ld:
        reference = scenario.reference_ld()
        if subset is not None:
            reference = reference[np.ix_(list(subset), list(subset))]
        stats = SummaryStatistics(
            stats.sigma_EX, stats.sigma_EY, reference, stats.n_exposure, stats.n_outcome
        )
    return individual, stats, sd_x, float(sd_y[0])


def generate_dataset(scenario, seed):
    """Simulate one dataset and its summary statistics.

    Returns a :class:`GeneratedDataset`; for two-sample scenarios
    (``n_outcome`` set) the summary statistics mix the exposure-sample
    instrument-exposure block with the outcome-sample instrument-outcome
    covariances, with the LD matrix taken from the cohort selected by
    ``ld_choice``.
    """
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    A = scenario.effects.realize(
        rng,
        scenario.n_instruments_total,
        scenario.n_exposures,
        scenario.causal_instruments,
        reference_ld=scenario.reference_ld(),
        instrument_sds=scenario.instrument_sds(),
        noise_variance=scenario.noise_variance,
    )

    if scenario.n_outcome is None:
        ld_override = None
        if scenario.ld_wishart_df is not None:
            ld_override = perturb_ld(scenario.reference_ld(), scenario.ld_wishart_df, rng)
        e_raw, x, y = _generate_arrays(scenario, A, scenario.n_samples, rng, ld_override)
        individual, stats, sd_x, sd_y = _assemble(scenario, e_raw, x, y)
        return GeneratedDataset(individual, stats, sd_x, sd_y, A)

    # Two-sample: independent exposure and outcome cohorts sharing the
    # same effect matrix, optionally each with its own perturbed LD.
    def cohort_ld(n):
        if scenario.ld_df_scale is None:
            return None
        dim = scenario.n_instruments_total
        df = max(dim, int(round(n * scenario.ld_df_scale)))
        return perturb_ld(scenario.reference_ld(), df, rng)

    e_exp, x_exp, y_exp = _generate_arrays(
        scenario, A, scenario.n_samples, rng, cohort_ld(scenario.n_samples)
    )
    e_out, x_out, y_out = _generate_arrays(
        scenario, A, scenario.n_outcome, rng, cohort_ld(scenario.n_outcome)
    )
    individual, stats_exp, sd_x, _ = _assemble(scenario, e_exp, x_exp, y_exp)
    _, stats_out, _, sd_y_out = _assemble(scenario, e_out, x_out, y_out)
    if scenario.ld_choice == "exposure":
        sigma_EE = stats_exp.sigma_EE
    elif scenario.ld_choice == "outcome":
        sigma_EE = stats_out.sigma_EE
    else:
        reference = scenario.reference_ld()
        if scenario.instrument_subset is not None:
            keep = list(scenario.instrument_subset)
            reference = reference[np.ix_(keep, keep)]
        sigma_EE = reference
    stats = SummaryStatistics(
        stats_exp.sigma_EX,
        stats_out.sigma_EY,
        sigma_EE,
        n_exposure=scenario.n_samples,
        n_outcome=scenario.n_outcome,
        exposure_names=scenario.exposure_names,
        instrument_names=scenario.instrument_names,
    )
    return GeneratedDataset(individual, stats, sd_x, sd_y_out, A)


# ---------------------------------------------------------------------------
# Replicate harness


@dataclass
class ReplicateSummary:
    """Per-replicate estimates for each estimator plus derived summaries."""

    scenario: SimulationScenario
    estimator_names: tuple
    estimates: dict
    standard_errors: dict
    p_values: dict
    failures: dict
    conditional_f: np.ndarray | None
    seed: int

    @property
    def n_replicates(self):
        first = self.estimates[self.estimator_names[0]]
        return first.shape[0]

    def mean(self, estimator):
        return np.nanmean(self.estimates[estimator], axis=0)

    def sd(self, estimator):
        return np.nanstd(self.estimates[estimator], axis=0, ddof=1)

    def bias(self, estimator):
        return self.mean(estimator) - np.asarray(self.scenario.true_effects)

    def failure_rate(self, estimator):
        return len(self.failures[estimator]) / self.n_replicates

    def exposure_labels(self):
        if self.scenario.exposure_names:
            return list(self.scenario.exposure_names)
        return [f"X{k + 1}" for k in range(len(self.scenario.true_effects))]

    def summary_dict(self):
        out = {
            "scenario": self.scenario.name,
            "seed": self.seed,
            "replicates": self.n_replicates,
            "true_effects": list(self.scenario.true_effects),
            "estimators": {},
        }
        for est in self.estimator_names:
            out["estimators"][est] = {
                "mean": [float(v) for v in self.mean(est)],
                "sd": [float(v) for v in self.sd(est)],
                "bias": [float(v) for v in self.bias(est)],
                "failure_rate": self.failure_rate(est),
            }
        if self.conditional_f is not None:
            out["median_conditional_f"] = [
                float(v) for v in np.nanmedian(self.conditional_f, axis=1)
            ]
        return out

    def iter_rows(self, labels=None):
        """Long-format rows: one per replicate, estimator and exposure."""
        labels = labels or {}
        names = self.exposure_labels()
        for est in self.estimator_names:
            effects = self.estimates[est]
            ses = self.standard_errors[est]
            pvals = self.p_values[est]
            for rep in range(effects.shape[0]):
                for k, exposure in enumerate(names):
                    yield {
                        **labels,
                        "replicate": rep,
                        "estimator": est,
                        "exposure": exposure,
                        "true_effect": self.scenario.true_effects[k],
                        "estimate": effects[rep, k],
                        "se": ses[rep, k],
                        "p_value": pvals[rep, k],
                    }


def _replicate_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _run_indexed(fn, replicates, seed, threads):
    """Evaluate ``fn(index, rng)`` for every replicate, in order, possibly
    on a thread pool; results are merged by replicate index so parallel and
    serial execution agree exactly."""
    if threads is None or threads <= 1:
        return [fn(i, _replicate_rng(seed, i)) for i in range(replicates)]
    results = [None] * replicates
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {
            pool.submit(fn, i, _replicate_rng(seed, i)): i for i in range(replicates)
        }
        for future, index in futures.items():
            results[index] = future.result()
    return results


def _estimate_once(stats, method, sd_x, sd_y, individual=None):
    """Run one estimator with inference, mapped back to the generative scale."""
    result = ESTIMATORS[method](stats)
    standard_errors(result, stats, individual=individual)
    p_values(result)
    scale = sd_y / sd_x
    return (
        result.effects * scale,
        result.standard_errors * scale,
        result.p_values,
        result.individual_standard_errors * scale
        if result.individual_standard_errors is not None
        else None,
    )


def _nan_payload(K):
    return (np.full(K, np.nan), np.full(K, np.nan), np.full(K, np.nan), None)


def run_replicates(
    scenario,
    estimators=("ls", "gmm"),
    replicates=None,
    seed=None,
    threads=1,
    collect_conditional_f=False,
):
    """Replicate study of a scenario under one or more estimators.

    Deterministic for a given seed regardless of ``threads``.  Estimator
    failures inside a replicate are recorded (NaN estimates) rather than
    raised; the failure rate is part of the summary.
    """
    replicates = scenario.replicates if replicates is None else replicates
    seed = scenario.seed if seed is None else seed
    if seed is None:
        raise ScenarioError("a seed is required (scenario.seed or argument)")
    if replicates < 1:
        raise ScenarioError("need at least one replicate")
    for est in estimators:
        if est not in ESTIMATORS:
            raise ScenarioError(f"unknown estimator {est!r}")
    K = scenario.n_exposures

    def one(index, rng):
        data = generate_dataset(scenario, rng)
        payload = {}
        for est in estimators:
            try:
                payload[est] = _estimate_once(
                    data.statistics,
                    est,
                    data.sd_exposures,
                    data.sd_outcome,
                    individual=data.individual if scenario.n_outcome is None else None,
                )
            except (MvmrError, ValueError, np.linalg.LinAlgError) as exc:
                payload[est] = _nan_payload(K)
                payload.setdefault("_failures", []).append((index, est, str(exc)))
        if collect_conditional_f:
            try:
                payload["_cf"] = conditional_f(data.individual)
            except (MvmrError, ValueError, np.linalg.LinAlgError):
                payload["_cf"] = np.full(K, np.nan)
        return payload

    rows = _run_indexed(one, replicates, seed, threads)

    estimates = {est: np.empty((replicates, K)) for est in estimators}
    ses = {est: np.empty((replicates, K)) for est in estimators}
    pvals = {est: np.empty((replicates, K)) for est in estimators}
    failures = {est: [] for est in estimators}
    cf = np.empty((K, replicates)) if collect_conditional_f else None
    for i, payload in enumerate(rows):
        for est in estimators:
            effects, se, p, _ = payload[est]
            estimates[est][i] = effects
            ses[est][i] = se
            pvals[est][i] = p
        for index, est, message in payload.get("_failures", ()):
            failures[est].append((index, message))
        if collect_conditional_f:
            cf[:, i] = payload["_cf"]

    return ReplicateSummary(
        scenario=scenario,
        estimator_names=tuple(estimators),
        estimates=estimates,
        standard_errors=ses,
        p_values=pvals,
        failures=failures,
        conditional_f=cf,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Experiments


@dataclass
class PleiotropyResult:
    """Correct-model and hidden-exposure-model summaries per grid value."""

    hidden_effect_grid: tuple
    correct: list
    misspecified: list
    hidden_exposures: tuple

    def bias_band_check(self, estimator="ls"):
        """Per grid value: max |misspecified bias| / correct-model sd."""
        out = []
        for correct, missp in zip(self.correct, self.misspecified):
            sd = correct.sd(estimator)
            keep = [
                k
                for k in range(len(correct.scenario.true_effects))
                if k not in self.hidden_exposures
            ]
            ratio = np.abs(missp.bias(estimator)) / sd[keep]
            out.append(float(np.max(ratio)))
        return out


def pleiotropy_experiment(
    scenario,
    hidden_exposures=None,
    hidden_effect_grid=None,
    estimators=("ls",),
    replicates=None,
    seed=None,
    threads=1,
):
    """Paired correct/misspecified estimates over a hidden-effect grid.

    For each grid value the hidden exposures' true effects are set to that
    value, one dataset per replicate is generated from the full model, and
    both the full model and the model omitting the hidden exposures are
    estimated on the same data.
    """
    hidden = tuple(hidden_exposures if hidden_exposures is not None else scenario.hidden_exposures)
    if not hidden:
        raise ScenarioError("pleiotropy experiment needs hidden exposures")
    grid = tuple(
        hidden_effect_grid
        if hidden_effect_grid is not None
        else (scenario.hidden_effect_grid or ())
    )
    if not grid:
        raise ScenarioError("pleiotropy experiment needs a hidden-effect grid")
    replicates = scenario.replicates if replicates is None else replicates
    seed = scenario.seed if seed is None else seed
    if seed is None:
        raise ScenarioError("a seed is required")
    keep = [k for k in range(scenario.n_exposures) if k not in hidden]
    K_full = scenario.n_exposures
    K_keep = len(keep)

    correct_summaries = []
    missp_summaries = []
    for g, value in enumerate(grid):
        effects = list(scenario.true_effects)
        for h in hidden:
            effects[h] = value
        cell = replace(
            scenario,
            true_effects=tuple(effects),
            hidden_exposures=hidden,
            name=f"{scenario.name}[hidden={value}]",
        )

        def one(index, rng, cell=cell):
            data = generate_dataset(cell, rng)
            dropped = data.statistics.drop_exposures(hidden)
            payload = {}
            for est in estimators:
                try:
                    payload[("full", est)] = _estimate_once(
                        data.statistics, est, data.sd_exposures, data.sd_outcome
                    )
                except (MvmrError, ValueError, np.linalg.LinAlgError):
                    payload[("full", est)] = _nan_payload(K_full)
                try:
                    payload[("drop", est)] = _estimate_once(
                        dropped, est, data.sd_exposures[keep], data.sd_outcome
                    )
                except (MvmrError, ValueError, np.linalg.LinAlgError):
                    payload[("drop", est)] = _nan_payload(K_keep)
            return payload

        rows = _run_indexed(one, replicates, seed + g, threads)

        def collect(tag, k, scenario_out):
            estimates = {est: np.empty((replicates, k)) for est in estimators}
            ses = {est: np.empty((replicates, k)) for est in estimators}
            ps = {est: np.empty((replicates, k)) for est in estimators}
            for i, payload in enumerate(rows):
                for est in estimators:
                    eff, se, p, _ = payload[(tag, est)]
                    estimates[est][i] = eff
                    ses[est][i] = se
                    ps[est][i] = p
            return ReplicateSummary(
                scenario=scenario_out,
                estimator_names=tuple(estimators),
                estimates=estimates,
                standard_errors=ses,
                p_values=ps,
                failures={est: [] for est in estimators},
                conditional_f=None,
                seed=seed + g,
            )

        correct_summaries.append(collect("full", K_full, cell))
        missp_scenario = replace(
            cell,
            true_effects=tuple(np.asarray(cell.true_effects)[keep]),
            hidden_exposures=(),
            exposure_names=tuple(np.asarray(cell.exposure_names)[keep])
            if cell.exposure_names
            else None,
            name=f"{cell.name}/misspecified",
        )
        missp_summaries.append(collect("drop", K_keep, missp_scenario))

    return PleiotropyResult(grid, correct_summaries, missp_summaries, hidden)


def two_sample_experiment(
    scenario,
    n_exposure_grid,
    n_outcome_grid,
    ld_choice=None,
    estimators=("ls", "gmm"),
    replicates=None,
    seed=None,
    threads=1,
):
    """Replicate summaries over a grid of (exposure, outcome) sample sizes.

    Exposure and outcome cohorts are drawn independently per replicate; a
    shared effect matrix links them.  Returns a dict keyed by the sample
    size pair.
    """
    n_exposure_grid = list(n_exposure_grid)
    n_outcome_grid = list(n_outcome_grid)
    if not n_exposure_grid or not n_outcome_grid:
        raise ScenarioError("two-sample grids must be nonempty")
    out = {}
    for i, ne in enumerate(n_exposure_grid):
        for j, no in enumerate(n_outcome_grid):
            cell = replace(
                scenario,
                n_samples=int(ne),
                n_outcome=int(no) if no is not None else None,
                ld_choice=ld_choice or scenario.ld_choice,
                name=f"{scenario.name}[n_exp={ne},n_out={no}]",
            )
            cell_seed = (scenario.seed if seed is None else seed)
            if cell_seed is None:
                raise ScenarioError("a seed is required")
            out[(ne, no)] = run_replicates(
                cell,
                estimators=estimators,
                replicates=replicates,
                seed=cell_seed + 1000 * i + j,
                threads=threads,
            )
    return out


def type1_power(
    null_scenario,
    alt_scenario,
    replicates=2000,
    alpha=0.05,
    seed=None,
    estimators=("ls", "gmm"),
    exposure=None,
    threads=1,
):
    """Rejection rates under a null-effect and an alternative scenario.

    ``exposure`` is the index of the tested exposure; by default the first
    exposure whose effect is zero in the null scenario and nonzero in the
    alternative.  Type-1 error is the fraction of null replicates with
    p < alpha, power the same fraction under the alternative.
    """
    if exposure is None:
        candidates = [
            k
            for k, (c0, c1) in enumerate(
                zip(null_scenario.true_effects, alt_scenario.true_effects)
            )
            if c0 == 0.0 and c1 != 0.0
        ]
        if not candidates:
            raise ScenarioError(
                "no exposure has a zero null effect and nonzero alternative"
            )
        exposure = candidates[0]
    if null_scenario.true_effects[exposure] != 0.0:
        raise ScenarioError("tested exposure must have zero effect in the null scenario")

    null_summary = run_replicates(
        null_scenario, estimators=estimators, replicates=replicates, seed=seed, threads=threads
    )
    alt_summary = run_replicates(
        alt_scenario, estimators=estimators, replicates=replicates, seed=None if seed is None else seed + 7919, threads=threads
    )
    rates = {}
    for est in estimators:
        p_null = null_summary.p_values[est][:, exposure]
        p_alt = alt_summary.p_values[est][:, exposure]
        rates[est] = {
            "type1": float(np.nanmean(p_null < alpha)),
            "power": float(np.nanmean(p_alt < alpha)),
        }
    return {
        "alpha": alpha,
        "exposure": exposure,
        "replicates": replicates,
        "rates": rates,
        "null": null_summary,
        "alternative": alt_summary,
    }


# ---------------------------------------------------------------------------
# Scenario files (declarative JSON)

_EFFECT_KEYS = {
    "matrix",
    "low",
    "high",
    "signs",
    "det_min",
    "det_max",
    "design_gram_min",
    "design_strength_min",
}
_GENOTYPE_KEYS = {"mode", "mafs", "successive_r", "correlation", "maf", "ld", "fixture"}
_SCENARIO_KEYS = {
    "name",
    "kind",
    "n_samples",
    "true_effects",
    "effects",
    "genotypes",
    "causal_instruments",
    "noise_variance",
    "hidden_exposures",
    "hidden_effect_grid",
    "instrument_subset",
    "ld_prune_r2",
    "n_outcome",
    "ld_choice",
    "ld_wishart_df",
    "ld_df_scale",
    "use_reference_ld",
    "replicates",
    "seed",
    "exposure_names",
    "instrument_names",
    "estimators",
    "conditional_f",
    "alpha",
    "null_effects",
    "correlations",
    "pca_repetitions",
}
SCENARIO_KINDS = ("replicates", "pleiotropy", "two_sample", "type1_power", "pca")


def _check_keys(mapping, allowed, context):
    unknown = set(mapping) - allowed
    if unknown:
        raise ScenarioError(f"unknown {context} keys: {sorted(unknown)}")


def load_fixture(name):
    """Load a bundled locus fixture (LD matrix, MAFs, names) by name."""
    import importlib.resources as resources
    import json

    ref = resources.files("mvmr").joinpath("data", "fixtures", f"{name}.json")
    try:
        payload = json.loads(ref.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ScenarioError(f"no bundled fixture named {name!r}") from None
    return payload


def _genotypes_from_config(cfg):
    _check_keys(cfg, _GENOTYPE_KEYS, "genotype")
    mode = cfg.get("mode", "markov")
    fixture = load_fixture(cfg["fixture"]) if "fixture" in cfg else None
    if mode == "pair":
        return {"genotypes": GenotypeModel.pair(cfg["correlation"], cfg.get("maf", 0.3))}
    if mode == "gaussian_pair":
        r = float(cfg["correlation"])
        return {"ld_matrix": ((1.0, r), (r, 1.0))}
    if mode == "markov":
        if fixture is not None:
            return {
                "genotypes": GenotypeModel.from_ld_matrix(fixture["ld"], fixture["mafs"])
            }
        return {"genotypes": GenotypeModel(cfg["mafs"], cfg.get("successive_r", ()))}
    if mode == "gaussian":
        ld = fixture["ld"] if fixture is not None else cfg["ld"]
        return {"ld_matrix": tuple(map(tuple, np.asarray(ld, dtype=float)))}
    raise ScenarioError(f"unknown genotype mode {mode!r}")


def scenario_from_dict(config):
    """Build a :class:`SimulationScenario` from a declarative mapping.

    Unknown keys are hard errors.  Grid-valued fields are not expanded
    here; see :func:`expand_scenario_config`.
    """
    _check_keys(config, _SCENARIO_KEYS, "scenario")
    cfg = dict(config)
    for runner_key in ("kind", "estimators", "conditional_f", "alpha", "null_effects", "correlations", "pca_repetitions"):
        cfg.pop(runner_key, None)

    effects_cfg = dict(cfg.pop("effects", {}))
    _check_keys(effects_cfg, _EFFECT_KEYS, "effects")
    effects = EffectSizes(**effects_cfg)

    geno_cfg = cfg.pop("genotypes", None)
    if geno_cfg is None:
        raise ScenarioError("scenario needs a 'genotypes' section")
    geno_fields = _genotypes_from_config(dict(geno_cfg))

    prune_r2 = cfg.pop("ld_prune_r2", None)
    scenario = SimulationScenario(effects=effects, **geno_fields, **cfg)
    if prune_r2 is not None:
        subset = select_by_ld_threshold(scenario.reference_ld(), float(prune_r2))
        scenario = replace(scenario, instrument_subset=tuple(subset))
    return scenario


def expand_scenario_config(config):
    """Expand grid-valued scenario fields into labelled cells.

    ``correlation`` (pair mode), ``n_samples``, ``n_outcome``,
    ``ld_prune_r2`` and ``hidden_effect_grid`` may be lists; the Cartesian
    product of list-valued fields yields one ``(labels, scenario)`` pair
    per cell.  ``hidden_effect_grid`` stays on the scenario (consumed by
    the pleiotropy experiment).
    """
    import itertools as it

    config = dict(config)
    grids = []
    geno = config.get("genotypes", {})
    if isinstance(geno, dict) and isinstance(geno.get("correlation"), (list, tuple)):
        grids.append(("correlation", list(geno["correlation"])))
    for key in ("n_samples", "n_outcome", "ld_prune_r2"):
        if isinstance(config.get(key), (list, tuple)):
            grids.append((key, list(config[key])))

    if not grids:
        return [({}, scenario_from_dict(config))]

    cells = []
    for values in it.product(*(v for _, v in grids)):
        cell_cfg = dict(config)
        labels = {}
        for (key, _), value in zip(grids, values):
            labels[key] = value
            if key == "correlation":
                cell_cfg["genotypes"] = {**geno, "correlation": value}
            else:
                cell_cfg[key] = value
        base = cell_cfg.get("name", "scenario")
        suffix = ",".join(f"{k}={v}" for k, v in labels.items())
        cell_cfg["name"] = f"{base}[{suffix}]"
        cells.append((labels, scenario_from_dict(cell_cfg)))
    return cells


def load_scenario_file(path):
    """Parse a scenario JSON file into ``(kind, config dict)``."""
    import json

    with open(path, encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid scenario JSON in {path}: {exc}") from None
    if not isinstance(config, dict):
        raise ScenarioError(f"scenario file {path} must hold a JSON object")
    _check_keys(config, _SCENARIO_KEYS, "scenario")
    kind = config.get("kind", "replicates")
    if kind not in SCENARIO_KINDS:
        raise ScenarioError(f"unknown scenario kind {kind!r}")
    return kind, config


# ---------------------------------------------------------------------------
# Locus-file bridge (same formats as the locus pipeline)


def export_locus_files(
    stats,
    out_dir,
    gene_names,
    snp_names=None,
    tissue="SIM",
    chrom="1",
    start_pos=1_000_000,
    spacing=5_000,
    gwas_n=None,
):
    """Write eQTL/GWAS/LD summary files for a set of summary statistics.

    Produces the three files consumed by the locus pipeline so that
    simulated data can complete the full analysis round trip.  Returns the
    (eqtl, gwas, ld) paths.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    L, K = stats.sigma_EX.shape
    snps = list(snp_names) if snp_names else [f"rs{900000 + i}" for i in range(L)]
    genes = list(gene_names)
    if len(genes) != K:
        raise ValueError("need one gene name per exposure")
    n_out = gwas_n or stats.n_outcome or 10000
    n_exp = stats.n_exposure or n_out

    eqtl_path = os.path.join(out_dir, "eqtl.tsv")
    gwas_path = os.path.join(out_dir, "gwas.tsv")
    ld_path = os.path.join(out_dir, "ld.txt")

    with open(eqtl_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n")
        for i, snp in enumerate(snps):
            pos = start_pos + i * spacing
            for k, gene in enumerate(genes):
                beta = float(stats.sigma_EX[i, k])
                se = max(1.0 / float(np.sqrt(n_exp)), 1e-6)
                fh.write(
                    f"{snp}\t{chrom}\t{pos}\t{gene}\t{tissue}\t{beta!r}\t{se!r}\t0.3\t0.001\n"
                )

    with open(gwas_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("snp\tchrom\tpos\tbeta\tse\tpval\tn\n")
        for i, snp in enumerate(snps):
            pos = start_pos + i * spacing
            beta = float(stats.sigma_EY[i])
            se = max(1.0 / float(np.sqrt(n_out)), 1e-12)
            z = beta / se
            pval = max(float(2.0 * sps.norm.sf(abs(z))), 1e-300)
            pval = min(pval, 4.9e-8)  # keep every simulated SNP genome-wide significant
            fh.write(f"{snp}\t{chrom}\t{pos}\t{beta!r}\t{se!r}\t{pval!r}\t{n_out}\n")

    with open(ld_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(" ".join(snps) + "\n")
        for i in range(L):
            fh.write(" ".join(repr(float(v)) for v in stats.sigma_EE[i]) + "\n")

    return eqtl_path, gwas_path, ld_path
