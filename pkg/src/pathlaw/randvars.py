"""Exact samplers for the auxiliary variables of the identities in law."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from pathlaw.pathcore import RngStream
from pathlaw.util import DomainError

log = logging.getLogger("pathlaw")


@dataclass(frozen=True)
class GammaParam:
    """Shape μ of a unit-rate gamma law."""

    mu: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.mu) or self.mu <= 0:
            raise DomainError(f"gamma shape must be positive, got {self.mu}")


def gamma_sample(
    p: GammaParam, rng: RngStream, size: int | None = None
) -> float | np.ndarray:
    """Draw γ_μ with density x^{μ-1}e^{-x}/Γ(μ).

    numpy's standard_gamma is the Marsaglia-Tsang rejection sampler (with the
    usual boost for μ < 1), so draws are exact in law.
    """
    draws = rng.generator.standard_gamma(p.mu, size=size)
    return float(draws) if size is None else draws


def dufresne_limit_sample(
    p: GammaParam, rng: RngStream, size: int | None = None
) -> float | np.ndarray:
    """Draw 1/(2γ_μ), the law of A^{(-μ)}_∞."""
    gammas = gamma_sample(p, rng, size)
    return 1.0 / (2.0 * gammas)


def hitting_time_sample(
    level_a: float | np.ndarray,
    drift_nu: float | np.ndarray,
    rng: RngStream,
) -> float | np.ndarray:
    """First passage of Brownian motion with drift ν > 0 to level a > 0.

    The passage time is inverse Gaussian with mean a/ν and shape a², which
    numpy exposes as the Wald distribution. Arguments broadcast, one draw
    per entry.
    """
    a = np.asarray(level_a, dtype=np.float64)
    nu = np.asarray(drift_nu, dtype=np.float64)
    if np.any(~np.isfinite(a)) or np.any(a <= 0):
        raise DomainError("hitting_time_sample needs level_a > 0")
    if np.any(~np.isfinite(nu)) or np.any(nu <= 0):
        raise DomainError("hitting_time_sample needs drift_nu > 0")
    draws = rng.generator.wald(a / nu, a * a)
    if np.ndim(draws) == 0:
        return float(draws)
    return draws
