"""Causal-effect estimators for multivariable MR from summary statistics.

All estimators consume instrument-exposure covariances (L x K), the
instrument-outcome covariance vector (L), and the instrument correlation
(LD) matrix (L x L), computed on standardized data.  The family

    c(Delta) = (S_EX^T Delta S_EX)^-1 S_EX^T Delta S_EY

contains the plain least-squares solution (Delta = I) and, with Delta the
inverse LD matrix, the minimum-variance weighting that coincides with
two-stage least squares.  A shrunk variant reproduces the behaviour of a
published transcriptome-wide MR implementation whose weight matrix is
regularised toward the identity with a hard-coded factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .errors import (
    CollinearExposuresError,
    IllConditionedLdError,
    UnderdeterminedError,
    WeakInstrumentError,
)

RANK_RTOL = 1e-10
LD_CONDITION_LIMIT = 1e12
BONFERRONI_DEFAULT = 3e-4  # the 0.05/150 multiple-testing threshold, as quoted
TWMR_DEFAULT_ALPHA = 1.0 / math.sqrt(3781)

DET_PASS = 0.05
DET_FAIL = 0.001


@dataclass
class SummaryStatistics:
    """Summary-level inputs: Sigma_EX (L x K), Sigma_EY (L), Sigma_EE (L x L)."""

    sigma_EX: np.ndarray
    sigma_EY: np.ndarray
    sigma_EE: np.ndarray
    n_exposure: int | None = None
    n_outcome: int | None = None
    exposure_names: tuple | None = None
    instrument_names: tuple | None = None

    def __post_init__(self):
        self.sigma_EX = np.atleast_2d(np.asarray(self.sigma_EX, dtype=float))
        self.sigma_EY = np.asarray(self.sigma_EY, dtype=float).reshape(-1)
        self.sigma_EE = np.atleast_2d(np.asarray(self.sigma_EE, dtype=float))
        L, K = self.sigma_EX.shape
        if K < 1 or L < K:
            raise ValueError(f"need L >= K >= 1 instruments/exposures, got L={L}, K={K}")
        if self.sigma_EY.shape != (L,):
            raise ValueError("sigma_EY length must match instrument count")
        if self.sigma_EE.shape != (L, L):
            raise ValueError("sigma_EE must be square with one row per instrument")
        if not (
            np.all(np.isfinite(self.sigma_EX))
            and np.all(np.isfinite(self.sigma_EY))
            and np.all(np.isfinite(self.sigma_EE))
        ):
            raise ValueError("summary statistics contain non-finite entries")
        if np.max(np.abs(self.sigma_EE - self.sigma_EE.T)) > 1e-8:
            raise ValueError("sigma_EE must be symmetric")
        if np.max(np.abs(np.diag(self.sigma_EE) - 1.0)) > 1e-8:
            raise ValueError("sigma_EE must have unit diagonal (standardized scale)")
        if np.linalg.eigvalsh(self.sigma_EE).min() < -1e-10:
            raise ValueError("sigma_EE must be positive definite within tolerance")

    @property
    def n_instruments(self):
        return self.sigma_EX.shape[0]

    @property
    def n_exposures(self):
        return self.sigma_EX.shape[1]

    def reorder_instruments(self, order):
        order = list(order)
        return SummaryStatistics(
            self.sigma_EX[order],
            self.sigma_EY[order],
            self.sigma_EE[np.ix_(order, order)],
            self.n_exposure,
            self.n_outcome,
            self.exposure_names,
            tuple(self.instrument_names[i] for i in order)
            if self.instrument_names
            else None,
        )

    def drop_exposures(self, indices):
        keep = [k for k in range(self.n_exposures) if k not in set(indices)]
        return SummaryStatistics(
            self.sigma_EX[:, keep],
            self.sigma_EY,
            self.sigma_EE,
            self.n_exposure,
            self.n_outcome,
            tuple(self.exposure_names[k] for k in keep) if self.exposure_names else None,
            self.instrument_names,
        )


@dataclass
class IndividualData:
    """Individual-level data: genotypes (N x L), exposures (N x K), outcome (N)."""

    genotypes: np.ndarray
    exposures: np.ndarray
    outcome: np.ndarray
    standardized: bool = True

    def __post_init__(self):
        self.genotypes = np.atleast_2d(np.asarray(self.genotypes, dtype=float))
        self.exposures = np.atleast_2d(np.asarray(self.exposures, dtype=float))
        self.outcome = np.asarray(self.outcome, dtype=float).reshape(-1)
        n = self.genotypes.shape[0]
        if self.exposures.shape[0] != n or self.outcome.shape[0] != n:
            raise ValueError("genotypes, exposures and outcome disagree on N")
        if n <= self.genotypes.shape[1]:
            raise ValueError("need more observations than instruments")
        if self.standardized:
            for name, arr in (
                ("genotypes", self.genotypes),
                ("exposures", self.exposures),
                ("outcome", self.outcome.reshape(-1, 1)),
            ):
                means = arr.mean(axis=0)
                sds = arr.std(axis=0)
                if np.max(np.abs(means)) > 1e-8:
                    raise ValueError(f"{name} not mean-centred (max |mean| {np.max(np.abs(means)):.2e})")
                if np.max(np.abs(sds - 1.0)) > 1e-6:
                    raise ValueError(f"{name} not unit-scaled (max |sd-1| {np.max(np.abs(sds - 1.0)):.2e})")

    @property
    def n_observations(self):
        return self.genotypes.shape[0]

    def summary_statistics(self, n_outcome=None):
        """Empirical covariances of the standardized columns."""
        n = self.n_observations
        e, x, y = self.genotypes, self.exposures, self.outcome
        return SummaryStatistics(
            sigma_EX=e.T @ x / n,
            sigma_EY=e.T @ y / n,
            sigma_EE=_unit_diagonal(e.T @ e / n),
            n_exposure=n,
            n_outcome=n if n_outcome is None else n_outcome,
        )


def _unit_diagonal(matrix):
    """Force an exactly-unit diagonal on a near-correlation matrix."""
    out = np.array(matrix, dtype=float)
    d = np.sqrt(np.clip(np.diag(out), 1e-300, None))
    out /= np.outer(d, d)
    np.fill_diagonal(out, 1.0)
    return (out + out.T) / 2.0


@dataclass
class WeightMatrix:
    """Positive definite L x L weighting matrix for the moment quadratic form."""

    delta: np.ndarray

    def __post_init__(self):
        self.delta = np.atleast_2d(np.asarray(self.delta, dtype=float))
        if self.delta.shape[0] != self.delta.shape[1]:
            raise ValueError("weight matrix must be square")
        if np.max(np.abs(self.delta - self.delta.T)) > 1e-8:
            raise ValueError("weight matrix must be symmetric")
        try:
            np.linalg.cholesky(self.delta)
        except np.linalg.LinAlgError:
            raise ValueError("weight matrix must be positive definite") from None


@dataclass
class EstimateResult:
    """Per-exposure causal-effect estimates with inference and diagnostics."""

    method: str
    effects: np.ndarray
    standard_errors: np.ndarray | None = None
    individual_standard_errors: np.ndarray | None = None
    p_values: np.ndarray | None = None
    bonferroni_significant: np.ndarray | None = None
    degenerate: np.ndarray | None = None
    conditional_f: np.ndarray | None = None
    exposure_names: tuple | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class IdentifiabilityReport:
    det_normalized_gram: float
    det_ld: float
    rank_EX: int
    n_exposures: int
    n_instruments: int
    condition_EX: float
    condition_EE: float
    verdict: str  # "pass" | "warn" | "fail"

    def as_dict(self):
        return {
            "det_normalized_gram": self.det_normalized_gram,
            "det_ld": self.det_ld,
            "rank_EX": self.rank_EX,
            "n_exposures": self.n_exposures,
            "n_instruments": self.n_instruments,
            "condition_EX": self.condition_EX,
            "condition_EE": self.condition_EE,
            "verdict": self.verdict,
        }


def identifiability_diagnostics(stats, pass_threshold=DET_PASS, fail_threshold=DET_FAIL):
    """Determinant/rank report for the instrument-exposure design.

    The determinant is taken of the K x K Gram matrix of column-normalized
    Sigma_EX, so it lies in [0, 1] and vanishes exactly when the exposures'
    instrument signatures are linearly dependent (the non-identifiable
    pattern where fewer causal variants than exposures exist).
    """
    S = stats.sigma_EX
    norms = np.linalg.norm(S, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    G = (S / safe).T @ (S / safe)
    det_gram = float(np.linalg.det(G)) if np.all(norms > 0) else 0.0
    det_ld = float(np.linalg.det(stats.sigma_EE))
    svals = np.linalg.svd(S, compute_uv=False)
    rank = int(np.sum(svals > svals[0] * RANK_RTOL)) if svals[0] > 0 else 0
    cond_EX = float(svals[0] / svals[-1]) if svals[-1] > 0 else np.inf
    cond_EE = float(np.linalg.cond(stats.sigma_EE))
    if det_gram > pass_threshold:
        verdict = "pass"
    elif det_gram < fail_threshold:
        verdict = "fail"
    else:
        verdict = "warn"
    return IdentifiabilityReport(
        det_normalized_gram=det_gram,
        det_ld=det_ld,
        rank_EX=rank,
        n_exposures=stats.n_exposures,
        n_instruments=stats.n_instruments,
        condition_EX=cond_EX,
        condition_EE=cond_EE,
        verdict=verdict,
    )


def _require_full_rank(stats):
    report = identifiability_diagnostics(stats)
    if report.rank_EX < stats.n_exposures:
        raise UnderdeterminedError(
            "instrument-exposure covariance matrix is rank deficient "
            f"(rank {report.rank_EX} < {stats.n_exposures} exposures): causal "
            "effects are not identifiable; inspect the determinant/rank "
            "diagnostics",
            diagnostics=report,
        )
    return report


def gmm_estimate(stats, delta):
    """Method-of-moments estimator with weighting matrix ``delta``.

    ``c = (S_EX^T Delta S_EX)^-1 S_EX^T Delta S_EY``.  With the identity
    weight this is exactly the least-squares estimator; for exactly
    determined systems every positive definite weight gives the same
    solution.
    """
    if not isinstance(delta, WeightMatrix):
        delta = WeightMatrix(delta)
    D = delta.delta
    if D.shape[0] != stats.n_instruments:
        raise ValueError("weight matrix dimension must equal instrument count")
    report = _require_full_rank(stats)
    S = stats.sigma_EX
    M = S.T @ D @ S
    v = S.T @ D @ stats.sigma_EY
    try:
        effects = np.linalg.solve(M, v)
    except np.linalg.LinAlgError:
        raise UnderdeterminedError(
            "weighted moment matrix is singular", diagnostics=report
        ) from None
    return EstimateResult(
        method="gmm",
        effects=effects,
        exposure_names=stats.exposure_names,
        diagnostics=report.as_dict(),
    )


def ls_estimate(stats):
    """Least-squares solution of the moment equations (identity weighting)."""
    result = gmm_estimate(stats, np.eye(stats.n_instruments))
    result.method = "ls"
    return result


def _inverse_ld(stats):
    cond = np.linalg.cond(stats.sigma_EE)
    if not np.isfinite(cond) or cond > LD_CONDITION_LIMIT:
        raise IllConditionedLdError(
            f"LD matrix condition number {cond:.3e} exceeds {LD_CONDITION_LIMIT:.0e}; "
            "prune near-identical instruments (r^2 >= 0.95) before estimating"
        )
    return np.linalg.inv(stats.sigma_EE)

def gmm_optimal(stats):
    """Minimum-asymptotic-variance weighting: ``Delta = Sigma_EE^-1``.

    The homoskedastic error variance enters the optimal weight only as a
    scalar and cancels in the estimator, so it is omitted.  Equivalent to
    two-stage least squares on standardized data.
    """
    result = gmm_estimate(stats, _inverse_ld(stats))
    result.method = "gmm"
    return result


def twmr_shrunk_estimate(stats, alpha=TWMR_DEFAULT_ALPHA):
    """Optimal-weighting estimator with identity-shrunk inverse Hessian.

    Applies ``H_shrunk = (1 - alpha) H + alpha I`` to
    ``H = (S_EX^T Sigma_EE^-1 S_EX)^-1`` before completing the estimator,
    mimicking a published implementation whose shrinkage factor is fixed at
    ``1/sqrt(3781)``.  The shrinkage leaves a bias that does not vanish
    with sample size unless H is already close to the identity.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"shrinkage alpha must lie in [0, 1], got {alpha}")
    ld_inv = _inverse_ld(stats)
    report = _require_full_rank(stats)
    S = stats.sigma_EX
    H = np.linalg.inv(S.T @ ld_inv @ S)
    H_shrunk = (1.0 - alpha) * H + alpha * np.eye(stats.n_exposures)
    effects = H_shrunk @ (S.T @ ld_inv @ stats.sigma_EY)
    diagnostics = report.as_dict()
    diagnostics["shrinkage_alpha"] = alpha
    diagnostics["shrinkage_distance"] = float(
        np.linalg.norm(H - np.eye(stats.n_exposures))
    )
    return EstimateResult(
        method=f"twmr(alpha={alpha:.6g})",
        effects=effects,
        exposure_names=stats.exposure_names,
        diagnostics=diagnostics,
    )


def univariate_ratio(sigma_EX, sigma_EY, tolerance=1e-6):
    """Single-instrument, single-exposure ratio estimate sigma_EY / sigma_EX."""
    if abs(sigma_EX) <= tolerance:
        raise WeakInstrumentError(
            f"|sigma_EX| = {abs(sigma_EX):.3e} at or below the weak-instrument "
            f"guard {tolerance:.0e}"
        )
    return sigma_EY / sigma_EX


def standard_errors(result, stats, individual=None):
    """Per-exposure standard errors for an estimate on the same statistics.

    Summary mode divides the sandwich
    ``sigma_U^2 * (S_EX^T Sigma_EE^-1 S_EX)^-1`` by the outcome sample
    size, with the residual variance approximated on the standardized scale
    as ``max(0, 1 - c^T S_EX^T Sigma_EE^-1 S_EY)`` (conservative fallback
    to 1 when non-finite).  Individual mode uses the empirical residual
    variance of ``y - x c`` instead and divides by the observation count.
    Returns a dict with the computed modes; the summary-mode vector (when
    available) is attached to ``result.standard_errors``.
    """
    ld_inv = _inverse_ld(stats)
    S = stats.sigma_EX
    sandwich = np.linalg.inv(S.T @ ld_inv @ S)
    c = result.effects
    out = {}

    if individual is None and stats.n_outcome is None:
        raise ValueError("summary-mode standard errors require n_outcome")
    if stats.n_outcome is not None:
        explained = float(c @ (S.T @ ld_inv @ stats.sigma_EY))
        sigma_u2 = 1.0 - explained
        if not np.isfinite(sigma_u2):
            sigma_u2 = 1.0
        sigma_u2 = max(0.0, sigma_u2)
        out["summary"] = np.sqrt(
            np.clip(np.diag(sandwich) * sigma_u2 / stats.n_outcome, 0.0, None)
        )
    if individual is not None:
        resid = individual.outcome - individual.exposures @ c
        dof = max(individual.n_observations - stats.n_exposures, 1)
        sigma_u2 = float(resid @ resid) / dof
        out["individual"] = np.sqrt(
            np.clip(
                np.diag(sandwich) * sigma_u2 / individual.n_observations, 0.0, None
            )
        )
        result.individual_standard_errors = out["individual"]

    result.standard_errors = out.get("summary", out.get("individual"))
    return out


def p_values(result, bonferroni_threshold=BONFERRONI_DEFAULT):
    """Two-sided normal p-values of c / SE plus Bonferroni flags.

    A zero standard error with a nonzero effect yields p = 0 together with
    a degeneracy flag; a zero effect with zero SE yields p = 1 (flagged).
    """
    if result.standard_errors is None:
        raise ValueError("compute standard_errors before p_values")
    c = result.effects
    se = result.standard_errors
    degenerate = se == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(degenerate, np.where(c != 0, np.inf, 0.0), c / np.where(se == 0, 1.0, se))
    p = 2.0 * sps.norm.sf(np.abs(z))
    result.p_values = p
    result.degenerate = degenerate
    result.bonferroni_significant = p < bonferroni_threshold
    return p, result.bonferroni_significant


def conditional_f(individual):
    """Conditional instrument-strength F-statistic per exposure.

    For each exposure the remaining exposures are replaced by their
    instrument-fitted values, the exposure is regressed on those fitted
    values, and the instruments' incremental explanatory power for the
    residual is F-tested with the numerator degrees of freedom rescaled
    from L to L - K + 1.  With a single exposure this is the ordinary
    first-stage F.
    """
    e = individual.genotypes
    x = individual.exposures
    n, L = e.shape
    K = x.shape[1]
    if n <= L + K:
        raise ValueError("conditional F requires N > L + K")
    gram = e.T @ e
    fitted = e @ np.linalg.solve(gram, e.T @ x)
    stats_out = np.empty(K)
    for k in range(K):
        xk = x[:, k]
        others = np.delete(fitted, k, axis=1)
        if others.shape[1]:
            svals = np.linalg.svd(others, compute_uv=False)
            if svals[-1] <= svals[0] * RANK_RTOL:
                raise CollinearExposuresError(
                    "instrument-fitted exposures are collinear; conditional "
                    "F is undefined"
                )
            coef, *_ = np.linalg.lstsq(others, xk, rcond=None)
            resid = xk - others @ coef
        else:
            resid = xk
        rss0 = float(resid @ resid)
        proj, *_ = np.linalg.lstsq(e, resid, rcond=None)
        rss1 = float(np.sum((resid - e @ proj) ** 2))
        df_num = L - K + 1
        df_den = n - L
        if rss1 <= 0:
            stats_out[k] = np.inf
        else:
            stats_out[k] = ((rss0 - rss1) / df_num) / (rss1 / df_den)
    return stats_out


ESTIMATORS = {
    "ls": ls_estimate,
    "gmm": gmm_optimal,
    "twmr": twmr_shrunk_estimate,
}


def estimate(stats, method="ls", **kwargs):
    """Dispatch to a named estimator ('ls', 'gmm' or 'twmr')."""
    try:
        fn = ESTIMATORS[method]
    except KeyError:
        raise ValueError(
            f"unknown estimator {method!r}; choose from {sorted(ESTIMATORS)}"
        ) from None
    return fn(stats, **kwargs)
