"""Time grids, discretized paths and exact Brownian samplers.

Every sampler accepts an optional ``n_paths``; when given, values carry a
leading batch axis and the last axis is always time.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from pathlaw.util import ConfigError, DomainError

log = logging.getLogger("pathlaw")

# Node lookup tolerance, in units of the grid step.
_NODE_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform discretization of [0, t_horizon] into n_steps steps."""

    t_horizon: float
    n_steps: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.t_horizon) or self.t_horizon <= 0:
            raise ConfigError(f"t_horizon must be positive, got {self.t_horizon}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ConfigError(f"n_steps must be an integer >= 2, got {self.n_steps}")

    @property
    def step(self) -> float:
        return self.t_horizon / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        # i/n keeps the last node exactly equal to t_horizon
        return self.t_horizon * (np.arange(self.n_steps + 1) / self.n_steps)

    @property
    def fractions(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) / self.n_steps

    def index_of(self, s: float) -> int:
        """Return the node index of time *s*; DomainError if *s* is not a node."""
        position = s / self.step
        index = int(round(position))
        if abs(position - index) > _NODE_TOL or not 0 <= index <= self.n_steps:
            raise DomainError(f"time {s} is not a node of {self}")
        return index

    def marginal_indices(self, fractions: tuple[float, ...] | list[float]) -> list[int]:
        """Map fractions of t_horizon in (0, 1] onto the nearest node indices."""
        indices = []
        for frac in fractions:
            if not 0 < frac <= 1:
                raise ConfigError(f"marginal fraction {frac} outside (0, 1]")
            indices.append(max(1, int(round(frac * self.n_steps))))
        return indices


@dataclass(frozen=True, eq=False)
class Path:
    """Values φ(s_i) of one path, or of a batch of paths, on a TimeGrid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim not in (1, 2) or values.shape[-1] != self.grid.n_steps + 1:
            raise ConfigError(
                f"path values of shape {values.shape} do not fit {self.grid}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("path values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def is_batch(self) -> bool:
        return self.values.ndim == 2

    @property
    def n_paths(self) -> int:
        return self.values.shape[0] if self.is_batch else 1

    @property
    def endpoint(self) -> np.ndarray:
        return self.values[..., -1]

    def at(self, indices: list[int]) -> np.ndarray:
        """Values at the given node indices, shape (..., len(indices))."""
        return self.values[..., indices]

    def row(self, k: int) -> "Path":
        """The k-th path of a batch as a single Path."""
        if not self.is_batch:
            raise DomainError("row() needs a batch path")
        return Path(self.grid, self.values[k])


class QuadRule(Enum):
    """Quadrature rule used to integrate e^{2φ} along a path."""

    LEFT_RIEMANN = "left_riemann"
    TRAPEZOID = "trapezoid"
    PIECEWISE_LINEAR_EXACT = "piecewise_linear_exact"


@dataclass(frozen=True, eq=False)
class AugmentedPath:
    """A path together with its exponential functional A on the same grid.

    ``quad_rule`` records provenance: the QuadRule that produced a_values, or
    None when a_values were propagated through transform rules.
    """

    path: Path
    a_values: np.ndarray
    quad_rule: QuadRule | None = None

    def __post_init__(self) -> None:
        a = np.asarray(self.a_values, dtype=np.float64)
        if a.shape != self.path.values.shape:
            raise ConfigError(
                f"a_values of shape {a.shape} do not match path values {self.path.values.shape}"
            )
        if not np.all(np.isfinite(a)):
            raise DomainError("a_values must be finite")
        if np.any(a[..., 0] != 0.0):
            raise DomainError("a_values must start at 0")
        if np.any(np.diff(a, axis=-1) <= 0):
            raise DomainError("a_values must be strictly increasing")
        object.__setattr__(self, "a_values", a)

    @property
    def grid(self) -> TimeGrid:
        return self.path.grid

    @property
    def values(self) -> np.ndarray:
        return self.path.values

    @property
    def is_rule_propagated(self) -> bool:
        return self.quad_rule is None

    @property
    def a_terminal(self) -> np.ndarray:
        return self.a_values[..., -1]

    def row(self, k: int) -> "AugmentedPath":
        return AugmentedPath(self.path.row(k), self.a_values[k], self.quad_rule)


@dataclass
class RngStream:
    """Counter-based random substream keyed by (seed, stream_id).

    The generator is Philox keyed through SeedSequence([seed, stream_id]), so a
    given pair reproduces the same draws on every platform and distinct
    stream ids are independent. A stream must not be shared between threads.
    """

    seed: int
    stream_id: int
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if int(value) != value or not 0 <= value < 2**64:
                raise ConfigError(f"{name} must be a 64-bit unsigned integer, got {value}")
        sequence = np.random.SeedSequence([int(self.seed), int(self.stream_id)])
        self.generator = np.random.Generator(np.random.Philox(sequence))


def make_grid(t_horizon: float, n_steps: int) -> TimeGrid:
    return TimeGrid(float(t_horizon), int(n_steps))


def sample_bm(
    grid: TimeGrid, drift: float, rng: RngStream, n_paths: int | None = None
) -> Path:
    """Sample Brownian motion with drift on *grid*, starting at 0."""
    shape = (grid.n_steps,) if n_paths is None else (n_paths, grid.n_steps)
    increments = rng.generator.normal(drift * grid.step, math.sqrt(grid.step), size=shape)
    values = np.zeros(shape[:-1] + (grid.n_steps + 1,))
    np.cumsum(increments, axis=-1, out=values[..., 1:])
    return Path(grid, values)


def sample_bridge(
    grid: TimeGrid,
    endpoint_x: float | np.ndarray,
    rng: RngStream,
    n_paths: int | None = None,
) -> Path:
    """Sample a Brownian bridge from 0 to *endpoint_x* over the grid.

    Built as B_s - (s/t)B_t + (x/t)s from a driftless Brownian path, so the
    terminal node equals endpoint_x exactly. *endpoint_x* may be per path.
    """
    brownian = sample_bm(grid, 0.0, rng, n_paths)
    fractions = grid.fractions
    x = np.asarray(endpoint_x, dtype=np.float64)
    if x.ndim:
        x = x[:, None]
    pinned = brownian.values - fractions * brownian.endpoint[..., None]
    return Path(grid, pinned + fractions * x)


def gaussian_at_random_time(
    a: float | np.ndarray, rng: RngStream
) -> float | np.ndarray:
    """Draw β(a) = √a·N(0,1) for an independent Brownian motion β.

    Accepts a scalar or an array of times, one draw per entry.
    """
    times = np.asarray(a, dtype=np.float64)
    if np.any(~np.isfinite(times)) or np.any(times <= 0):
        raise DomainError("gaussian_at_random_time needs a > 0")
    draws = np.sqrt(times) * rng.generator.standard_normal(size=times.shape)
    if draws.ndim == 0:
        return float(draws)
    return draws


def refine(path: Path, rng: RngStream) -> Path:
    """Insert conditionally exact Brownian midpoints, doubling n_steps.

    Given neighbouring values, the midpoint of a Brownian segment of length Δ
    is Gaussian with the average as mean and variance Δ/4; the drift does not
    enter the conditional law.
    """
    grid = path.grid
    fine = make_grid(grid.t_horizon, 2 * grid.n_steps)
    left = path.values[..., :-1]
    right = path.values[..., 1:]
    noise = rng.generator.normal(0.0, math.sqrt(grid.step / 4.0), size=left.shape)
    values = np.empty(path.values.shape[:-1] + (fine.n_steps + 1,))
    values[..., 0::2] = path.values
    values[..., 1::2] = 0.5 * (left + right) + noise
    return Path(fine, values)


def restrict(aug: AugmentedPath, k: int) -> AugmentedPath:
    """Restrict an augmented path to [0, s_k]; A keeps its prefix."""
    grid = aug.grid
    if not 2 <= k <= grid.n_steps:
        raise DomainError(f"restriction index {k} outside [2, {grid.n_steps}]")
    sub = make_grid(k * grid.step, k)
    return AugmentedPath(
        Path(sub, aug.values[..., : k + 1]), aug.a_values[..., : k + 1], aug.quad_rule
    )


def ramp(t_horizon: float, n_steps: int, slope: float = 1.0) -> Path:
    """Deterministic path φ_s = slope·s."""
    grid = make_grid(t_horizon, n_steps)
    return Path(grid, slope * grid.nodes)
