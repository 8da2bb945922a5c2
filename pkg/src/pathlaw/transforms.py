"""Anticipative path transformations acting on augmented paths.

A is never re-integrated here: each transform propagates it through the
closed-form rule for that transform, which keeps every algebraic law exact up
to floating-point rounding. Parameters (z, alpha, x) may be scalars or arrays
with one entry per path of a batch.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from pathlaw.functionals import exp_quad_A, z_of
from pathlaw.pathcore import AugmentedPath, Path, QuadRule, restrict
from pathlaw.util import DomainError, NumericOverflow

log = logging.getLogger("pathlaw")

# expm1 overflows just above 709.78
_EXP_LIMIT = 709.0


class LawId(Enum):
    ENDPOINT = "Endpoint"
    INVERSE_A = "InverseA"
    Z_INVARIANCE = "ZInvariance"
    SEMIGROUP = "Semigroup"
    R_CONJUGATION = "RConjugation"
    TILDE_ENDPOINT = "TildeEndpoint"
    TILDE_INVERSE_A = "TildeInverseA"
    TILDE_Z_INVARIANCE = "TildeZInvariance"
    TILDE_INVOLUTION = "TildeInvolution"
    TILDE_FOUR_FOLD = "TildeFourFold"
    COMPT_RELATION = "ComptRelation"
    R_COMMUTE = "RCommute"
    DURATION_COMPOSITION = "DurationComposition"
    LEXPR_CT = "LexprCt"
    LEXPR_TA = "LexprTa"
    PCAC1 = "Pcac1"
    PCAC2 = "Pcac2"


def _column(param: float | np.ndarray) -> np.ndarray:
    """Shape a scalar or per-path parameter to broadcast along the time axis."""
    return np.asarray(param, dtype=np.float64)[..., None]


def _first_bad(mask: np.ndarray) -> int | None:
    return int(np.flatnonzero(mask)[0]) if mask.ndim else None


def t_z(aug: AugmentedPath, z: float | np.ndarray) -> AugmentedPath:
    """T_z: φ_s - log{1 + (A_s/A_t)(e^z - 1)}, with A_s / {1 + (A_s/A_t)(e^z - 1)}."""
    z_arr = np.asarray(z, dtype=np.float64)
    over = np.abs(z_arr) > _EXP_LIMIT
    if np.any(over):
        raise NumericOverflow(f"e^z overflows for z={np.max(np.abs(z_arr))}",
                              path_index=_first_bad(over))
    a = aug.a_values
    shift = (a / a[..., -1:]) * np.expm1(_column(z_arr))
    factor = 1.0 + shift
    values = aug.values - np.log1p(shift)
    return AugmentedPath(Path(aug.grid, values), a / factor, None)


def t_tilde(aug: AugmentedPath) -> AugmentedPath:
    """T̃ = T_{2φ_t}."""
    return t_z(aug, 2.0 * aug.values[..., -1])


def t_alpha(aug: AugmentedPath, alpha: float | np.ndarray) -> AugmentedPath:
    """T_α(φ)_s = φ_s - log(1 + α A_s), realised as T_{log(1 + α A_t)}."""
    alpha_arr = np.asarray(alpha, dtype=np.float64)
    if np.any(alpha_arr < 0) or np.any(~np.isfinite(alpha_arr)):
        raise DomainError("T_alpha needs alpha >= 0")
    return t_z(aug, np.log1p(alpha_arr * aug.a_terminal))


def t_alpha_direct(aug: AugmentedPath, alpha: float | np.ndarray) -> np.ndarray:
    """Path values of T_α computed straight from its defining formula."""
    alpha_arr = np.asarray(alpha, dtype=np.float64)
    if np.any(alpha_arr < 0):
        raise DomainError("T_alpha needs alpha >= 0")
    return aug.values - np.log1p(_column(alpha_arr) * aug.a_values)


def reverse(aug: AugmentedPath) -> AugmentedPath:
    """R(φ)_s = φ_{t-s} - φ_t, with A'_s = e^{-2φ_t}(A_t - A_{t-s})."""
    values = aug.values
    a = aug.a_values
    terminal = values[..., -1:]
    over = -2.0 * values[..., -1] > _EXP_LIMIT
    if np.any(over):
        raise NumericOverflow("e^{-2phi_t} overflows", path_index=_first_bad(over))
    flipped = values[..., ::-1] - terminal
    a_rev = np.exp(-2.0 * terminal) * (a[..., -1:] - a[..., ::-1])
    a_rev[..., 0] = 0.0
    return AugmentedPath(Path(aug.grid, flipped), a_rev, None)


@dataclass(frozen=True, eq=False)
class DurationPair:
    """Both sides of the different-durations composition on [0, t]."""

    lhs: AugmentedPath
    rhs: AugmentedPath


def compose_durations(aug_long: AugmentedPath, t: float) -> DurationPair:
    """Evaluate T̃^t(T̃^{t+u}(φ)) and T^t_{φ_t + T̃^{t+u}(φ)(t)}(φ) on [0, t]."""
    grid = aug_long.grid
    k = grid.index_of(t)
    if k < 2:
        raise DomainError(f"time {t} leaves fewer than two steps")
    tilde_long = t_tilde(aug_long)
    lhs = t_tilde(restrict(tilde_long, k))
    z = aug_long.values[..., k] + tilde_long.values[..., k]
    rhs = t_z(restrict(aug_long, k), z)
    return DurationPair(lhs, rhs)


def quadrature_consistency(aug: AugmentedPath, rule: QuadRule = QuadRule.TRAPEZOID) -> np.ndarray:
    """|A_quad(t) - A_rule(t)| / A_rule(t) after re-integrating the transformed path."""
    requad = exp_quad_A(aug.path, rule)
    return np.abs(requad.a_terminal - aug.a_terminal) / aug.a_terminal


def path_distance(left: AugmentedPath, right: AugmentedPath) -> float:
    """max |Δφ| plus max relative |ΔA| over nodes i >= 1."""
    if left.grid != right.grid:
        raise DomainError("paths live on different grids")
    phi_gap = np.max(np.abs(left.values - right.values))
    a_ref = right.a_values[..., 1:]
    a_gap = np.max(np.abs(left.a_values[..., 1:] - a_ref) / a_ref)
    return float(phi_gap + a_gap)


def _endpoint_gap(aug: AugmentedPath, out: AugmentedPath, z: np.ndarray) -> float:
    phi_t = aug.values[..., -1]
    phi_gap = np.max(np.abs(out.values[..., -1] - (phi_t - z)))
    expected_a = np.exp(-z) * aug.a_terminal
    a_gap = np.max(np.abs(out.a_terminal - expected_a) / expected_a)
    return float(phi_gap + a_gap)


def _inverse_a_gap(aug: AugmentedPath, out: AugmentedPath, z: np.ndarray) -> float:
    # 1/A'_s - 1/A_s against (e^z - 1)/A_t, measured relative to 1/A'_s
    a = aug.a_values[..., 1:]
    a_new = out.a_values[..., 1:]
    lhs = 1.0 / a_new - 1.0 / a
    rhs = np.expm1(_column(z)) / aug.a_values[..., -1:]
    path_form = a * np.exp(out.values[..., 1:] - aug.values[..., 1:])
    gap_reciprocal = np.max(np.abs(lhs - rhs) * a_new)
    gap_path = np.max(np.abs(path_form - a_new) / a_new)
    return float(gap_reciprocal + gap_path)


def _z_gap(aug: AugmentedPath, out: AugmentedPath) -> float:
    z_in = z_of(aug)[..., 1:]
    return float(np.max(np.abs(z_of(out)[..., 1:] - z_in) / z_in))


def _require(mask_ok: np.ndarray, condition: str) -> None:
    if not np.all(mask_ok):
        raise DomainError(f"guard violated: {condition}")


def law_residual(
    law: LawId,
    aug: AugmentedPath,
    *,
    z: float | np.ndarray = 0.0,
    z_prime: float | np.ndarray = 0.0,
    alpha: float | np.ndarray = 0.0,
    x: float | np.ndarray = 0.0,
    t: float | None = None,
) -> float:
    """Max-norm residual between the two sides of the named identity.

    Args:
        law: identity to check
        aug: path (or batch of paths) with A
        z, z_prime: transform parameters for the T_z laws
        alpha: T_α parameter for LexprCt / LexprTa
        x: shift for Pcac1 / Pcac2
        t: inner horizon for DurationComposition (a node of aug's grid)

    Returns:
        Nonnegative residual; 0 for an exact identity.

    Raises:
        DomainError: a guard of the law does not hold
    """
    z = np.asarray(z, dtype=np.float64)
    z_prime = np.asarray(z_prime, dtype=np.float64)
    phi_t = aug.values[..., -1]
    a_t = aug.a_terminal

    if law is LawId.ENDPOINT:
        return _endpoint_gap(aug, t_z(aug, z), z)
    if law is LawId.INVERSE_A:
        return _inverse_a_gap(aug, t_z(aug, z), z)
    if law is LawId.Z_INVARIANCE:
        return _z_gap(aug, t_z(aug, z))
    if law is LawId.SEMIGROUP:
        return path_distance(t_z(t_z(aug, z_prime), z), t_z(aug, z + z_prime))
    if law is LawId.R_CONJUGATION:
        return path_distance(t_z(reverse(t_z(aug, z)), z), reverse(aug))
    if law is LawId.TILDE_ENDPOINT:
        return _endpoint_gap(aug, t_tilde(aug), 2.0 * phi_t)
    if law is LawId.TILDE_INVERSE_A:
        return _inverse_a_gap(aug, t_tilde(aug), 2.0 * phi_t)
    if law is LawId.TILDE_Z_INVARIANCE:
        return _z_gap(aug, t_tilde(aug))
    if law is LawId.TILDE_INVOLUTION:
        return path_distance(t_tilde(t_tilde(aug)), aug)
    if law is LawId.TILDE_FOUR_FOLD:
        return path_distance(t_tilde(t_z(t_tilde(t_z(aug, z)), z)), aug)
    if law is LawId.COMPT_RELATION:
        return path_distance(t_tilde(t_z(aug, z)), t_z(aug, 2.0 * phi_t - z))
    if law is LawId.R_COMMUTE:
        if np.any(aug.values[..., 0] != 0.0):
            raise DomainError("RCommute needs phi_0 = 0")
        return path_distance(reverse(t_tilde(aug)), t_tilde(reverse(aug)))
    if law is LawId.DURATION_COMPOSITION:
        if t is None:
            raise DomainError("DurationComposition needs an inner horizon t")
        pair = compose_durations(aug, t)
        return path_distance(pair.lhs, pair.rhs)
    if law is LawId.LEXPR_CT:
        rhs = t_z(aug, 2.0 * phi_t - np.log1p(np.asarray(alpha) * a_t))
        return path_distance(t_tilde(t_alpha(aug, alpha)), rhs)
    if law is LawId.LEXPR_TA:
        rhs = t_z(aug, np.log(np.exp(2.0 * phi_t) + np.asarray(alpha) * a_t))
        return path_distance(t_alpha(t_tilde(aug), alpha), rhs)
    if law is LawId.PCAC1:
        inner_arg = np.exp(2.0 * phi_t) - 2.0 * np.asarray(x) * a_t
        _require(inner_arg > 0, "e^{2psi_t} - 2xA_t(psi) > 0")
        inner = t_z(aug, np.log(inner_arg))
        outer_z = 2.0 * inner.values[..., -1] - np.log1p(2.0 * np.asarray(x) * inner.a_terminal)
        return path_distance(t_z(inner, outer_z), aug)
    if law is LawId.PCAC2:
        inner_arg = 1.0 - 2.0 * np.asarray(x) * a_t
        _require(inner_arg > 0, "1 - 2xA_t(psi) > 0")
        inner = t_z(aug, 2.0 * phi_t - np.log(inner_arg))
        outer_z = np.log(np.exp(2.0 * inner.values[..., -1]) + 2.0 * np.asarray(x) * inner.a_terminal)
        return path_distance(t_z(inner, outer_z), aug)
    raise DomainError(f"unknown law {law}")


def pcac_bounds(aug: AugmentedPath) -> tuple[np.ndarray, np.ndarray]:
    """Upper bounds on x for the Pcac1 and Pcac2 guards, per path."""
    a_t = aug.a_terminal
    return np.exp(2.0 * aug.values[..., -1]) / (2.0 * a_t), 1.0 / (2.0 * a_t)
