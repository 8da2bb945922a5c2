"""Two-sample tests used to check identities in law on simulated pools."""

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import stats
from scipy.spatial.distance import pdist, squareform

from pathlaw.pathcore import RngStream
from pathlaw.util import ConfigError, DomainError, UnsupportedInput

log = logging.getLogger("pathlaw")

MIN_KS_SAMPLES = 50
MIN_PERMUTATIONS = 200

# Permutation statistics within this relative distance of the observed one
# count as ties.
_TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class SamplePool:
    """Rows of i.i.d. observations, optionally weighted.

    rows has shape (n_samples, dim); weights defaults to all ones.
    """

    rows: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[:, None]
        if rows.ndim != 2 or rows.shape[1] < 1:
            raise ConfigError(f"pool rows must be (n, dim), got {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise DomainError("pool rows must be finite")
        object.__setattr__(self, "rows", rows)
        if self.weights is not None:
            weights = np.asarray(self.weights, dtype=np.float64)
            if weights.shape != (rows.shape[0],):
                raise ConfigError("weights must have one entry per row")
            if np.any(~np.isfinite(weights)) or np.any(weights < 0):
                raise DomainError("weights must be finite and nonnegative")
            if not np.any(weights > 0):
                raise DomainError("weights must not be all zero")
            object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def is_weighted(self) -> bool:
        return self.weights is not None

    def column(self, j: int = 0) -> np.ndarray:
        return self.rows[:, j]


@dataclass
class TestReport:
    """Outcome of one statistical or algebraic check."""

    __test__ = False  # not a pytest class

    test_name: str
    statistic: float
    p_value: float | None
    n_lhs: int
    n_rhs: int
    passed: bool
    threshold: float
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "test_name": self.test_name,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n_lhs": self.n_lhs,
            "n_rhs": self.n_rhs,
            "pass": self.passed,
            "threshold": self.threshold,
            "details": self.details,
        }


def ks_two_sample(
    xs: SamplePool,
    ys: SamplePool,
    *,
    threshold: float = 0.001,
    name: str = "ks",
    min_n: int = MIN_KS_SAMPLES,
) -> TestReport:
    """Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.

    The p-value is the Kolmogorov survival function at D·√(n₁n₂/(n₁+n₂)).
    ``min_n`` may be lowered to check hand-computed statistics on tiny pools.
    """
    if xs.is_weighted or ys.is_weighted:
        raise UnsupportedInput("ks_two_sample takes unweighted pools")
    if xs.dim != 1 or ys.dim != 1:
        raise ConfigError("ks_two_sample takes one-dimensional pools")
    if xs.n < min_n or ys.n < min_n:
        raise ConfigError(f"ks_two_sample needs at least {min_n} samples per side")
    d = float(stats.ks_2samp(xs.column(), ys.column(), method="asymp").statistic)
    effective_n = xs.n * ys.n / (xs.n + ys.n)
    p_value = float(stats.kstwobign.sf(d * math.sqrt(effective_n)))
    return TestReport(
        test_name=name,
        statistic=d,
        p_value=p_value,
        n_lhs=xs.n,
        n_rhs=ys.n,
        passed=p_value >= threshold,
        threshold=threshold,
    )


def energy_statistic(xs: np.ndarray, ys: np.ndarray) -> float:
    """V-statistic energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'|."""
    n_x = xs.shape[0]
    distances = squareform(pdist(np.vstack([xs, ys])))
    labels = np.zeros(distances.shape[0])
    labels[:n_x] = 1.0
    return float(_energy_from_labels(distances, labels[:, None], n_x)[0])


def _energy_from_labels(distances: np.ndarray, labels: np.ndarray, n_x: int) -> np.ndarray:
    """Energy statistics for label columns (1 marks the x-side), one per column."""
    n_y = distances.shape[0] - n_x
    total = distances.sum()
    projected = distances @ labels
    within_x = np.einsum("ij,ij->j", labels, projected)
    between = projected.sum(axis=0) - within_x
    within_y = total - within_x - 2.0 * between
    return 2.0 * between / (n_x * n_y) - within_x / n_x**2 - within_y / n_y**2


def energy_distance_test(
    xs: SamplePool,
    ys: SamplePool,
    n_permutations: int,
    rng: RngStream,
    *,
    threshold: float = 0.01,
    name: str = "energy",
    max_rows: int | None = None,
) -> TestReport:
    """Multivariate energy-distance test with a permutation p-value.

    The observed statistic is part of the null set, so the p-value is
    (1 + #{permuted >= observed}) / (1 + n_permutations). ``max_rows`` keeps
    the first rows of each pool to bound the O(n²) distance matrix.
    """
    if xs.dim != ys.dim:
        raise ConfigError(f"pool dimensions differ: {xs.dim} vs {ys.dim}")
    if n_permutations < MIN_PERMUTATIONS:
        raise ConfigError(f"energy_distance_test needs at least {MIN_PERMUTATIONS} permutations")
    x_rows = xs.rows if max_rows is None else xs.rows[:max_rows]
    y_rows = ys.rows if max_rows is None else ys.rows[:max_rows]
    n_x, n_y = x_rows.shape[0], y_rows.shape[0]
    if n_x < 2 or n_y < 2:
        raise ConfigError("energy_distance_test needs at least two rows per side")

    distances = squareform(pdist(np.vstack([x_rows, y_rows])))
    n = n_x + n_y
    observed_labels = np.zeros((n, 1))
    observed_labels[:n_x] = 1.0
    observed = float(_energy_from_labels(distances, observed_labels, n_x)[0])

    labels = np.zeros((n, n_permutations))
    for k in range(n_permutations):
        labels[rng.generator.permutation(n)[:n_x], k] = 1.0
    permuted = _energy_from_labels(distances, labels, n_x)
    tol = _TIE_RTOL * max(abs(observed), float(np.max(np.abs(permuted))), 1e-300)
    exceed = int(np.count_nonzero(permuted >= observed - tol))
    p_value = (1 + exceed) / (1 + n_permutations)
    log.debug("%s: E=%.4g p=%.4g (%d perms)", name, observed, p_value, n_permutations)
    return TestReport(
        test_name=name,
        statistic=observed,
        p_value=p_value,
        n_lhs=n_x,
        n_rhs=n_y,
        passed=p_value >= threshold,
        threshold=threshold,
        details={"dim": xs.dim, "n_permutations": n_permutations},
    )


def weighted_mean_compare(
    lhs: SamplePool,
    rhs: SamplePool,
    k_sigma: float,
    *,
    name: str = "weighted_mean",
) -> TestReport:
    """Compare E[lhs] with E[w·rhs] within k_sigma combined standard errors.

    rhs rows excluded by an event must already be present with weight 0.
    """
    if lhs.n == 0 or rhs.n == 0:
        raise ConfigError("weighted_mean_compare needs nonempty pools")
    if lhs.is_weighted:
        raise UnsupportedInput("lhs pool must be unweighted")
    left = lhs.column()
    weights = rhs.weights if rhs.weights is not None else np.ones(rhs.n)
    right = weights * rhs.column()
    se_left = float(np.std(left, ddof=1) / math.sqrt(lhs.n)) if lhs.n > 1 else 0.0
    se_right = float(np.std(right, ddof=1) / math.sqrt(rhs.n)) if rhs.n > 1 else 0.0
    combined = math.hypot(se_left, se_right)
    diff = float(np.mean(left) - np.mean(right))
    bound = k_sigma * combined
    return TestReport(
        test_name=name,
        statistic=diff,
        p_value=None,
        n_lhs=lhs.n,
        n_rhs=rhs.n,
        passed=abs(diff) <= bound,
        threshold=k_sigma,
        details={
            "se": combined,
            "z_score": diff / combined if combined > 0 else (0.0 if diff == 0 else math.inf),
            "effective_rhs_fraction": float(np.mean(weights > 0)),
        },
    )


def zero_mean_test(pool: SamplePool, k_sigma: float, *, name: str = "zero_mean") -> TestReport:
    """Check that a pool of differences has mean 0 within k_sigma standard errors."""
    values = pool.column()
    se = float(np.std(values, ddof=1) / math.sqrt(pool.n))
    mean = float(np.mean(values))
    return TestReport(
        test_name=name,
        statistic=mean,
        p_value=None,
        n_lhs=pool.n,
        n_rhs=0,
        passed=abs(mean) <= k_sigma * se,
        threshold=k_sigma,
        details={"se": se},
    )


def bonferroni(reports: list[TestReport], family_alpha: float, *, name: str = "bonferroni") -> TestReport:
    """Family-wise decision: pass iff min p >= family_alpha / count."""
    if not reports:
        raise ConfigError("bonferroni needs at least one report")
    if any(r.p_value is None for r in reports):
        raise UnsupportedInput("bonferroni takes p-value tests only")
    p_values = [float(r.p_value) for r in reports]  # type: ignore[arg-type]
    cutoff = family_alpha / len(reports)
    min_p = min(p_values)
    return TestReport(
        test_name=name,
        statistic=min_p,
        p_value=min(1.0, min_p * len(reports)),
        n_lhs=reports[0].n_lhs,
        n_rhs=reports[0].n_rhs,
        passed=min_p >= cutoff,
        threshold=cutoff,
        details={
            "family_alpha": family_alpha,
            "bonferroni_factor": len(reports),
            "members": [r.test_name for r in reports],
        },
    )
