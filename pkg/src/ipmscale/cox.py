"""Observation layer: cell counts, log-Gaussian noise, Poisson likelihood.

Observed point patterns are reduced to per-cell counts. The operating
intensity is the deterministic field times the exponential of a stationary
Gaussian process evaluated at the cell centers, and counts are Poisson
given that intensity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    ConvergenceError,
    DomainError,
    GridMismatchError,
    ZeroIntensityError,
)
from .grid import IntensityField, PointPattern, TraitGrid

GP_FAMILIES = ("exponential", "matern32")

# Intensity floor applied before multiplying in the log-GP factor during
# fitting; keeps the Poisson log-likelihood finite on empty cells.
INTENSITY_FLOOR = 1e-12

_JITTER_START = 1e-10
_JITTER_LIMIT = 1e-6


@dataclass(frozen=True)
class GPConfig:
    """Stationary GP on the trait axis: marginal variance and decay rate."""

    sigma2_eps: float
    phi: float
    family: str = "exponential"

    def __post_init__(self) -> None:
        if not self.sigma2_eps > 0:
            raise DomainError(f"sigma2_eps {self.sigma2_eps} must be positive")
        if not self.phi > 0:
            raise DomainError(f"phi {self.phi} must be positive")
        if self.family not in GP_FAMILIES:
            raise DomainError(f"family {self.family!r} not one of {GP_FAMILIES}")


@dataclass(frozen=True, eq=False)
class CellCounts:
    """Integer point counts per grid cell."""

    grid: TraitGrid
    counts: np.ndarray
    year: int | None = None
    bin_index: int | None = None

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if counts.shape != (self.grid.cells,):
            raise DomainError(
                f"counts shape {counts.shape} does not match grid with {self.grid.cells} cells"
            )
        if counts.dtype.kind not in "iu":
            rounded = np.rint(counts)
            if not np.allclose(counts, rounded):
                raise DomainError("counts must be integers")
            counts = rounded
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise DomainError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def bin_counts(pattern: PointPattern, grid: TraitGrid) -> CellCounts:
    """Histogram a pattern on the grid; points at the upper bound join the last cell."""
    idx = grid.index_of(pattern.diameters)
    counts = np.bincount(idx, minlength=grid.cells)
    return CellCounts(grid, counts, year=pattern.year)


def correlation(distance, config: GPConfig):
    """Stationary correlation at a given distance."""
    h = np.abs(np.asarray(distance, dtype=float))
    if config.family == "exponential":
        return np.exp(-config.phi * h)
    s = np.sqrt(3.0) * config.phi * h
    return (1.0 + s) * np.exp(-s)


def covariance_matrix(grid: TraitGrid, config: GPConfig) -> np.ndarray:
    centers = grid.centers
    return config.sigma2_eps * correlation(centers[:, None] - centers[None, :], config)


def cholesky_factor(cov: np.ndarray, sigma2_eps: float) -> np.ndarray:
    """Lower Cholesky factor, adding escalating diagonal jitter when needed."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    jitter = _JITTER_START * sigma2_eps
    limit = _JITTER_LIMIT * sigma2_eps
    while jitter <= limit * (1 + 1e-12):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise ConvergenceError(
        f"covariance matrix stayed non positive definite up to jitter {limit:g}"
    )


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_gp(grid: TraitGrid, config: GPConfig, rng) -> np.ndarray:
    """One mean-zero GP draw at the cell centers."""
    chol = cholesky_factor(covariance_matrix(grid, config), config.sigma2_eps)
    return chol @ as_rng(rng).standard_normal(grid.cells)


def gp_log_density(eps: np.ndarray, chol: np.ndarray) -> float:
    """Log density of a mean-zero multivariate normal given its Cholesky factor."""
    eps = np.asarray(eps, dtype=float)
    white = solve_triangular(chol, eps, lower=True, check_finite=False)
    logdet = np.log(np.diag(chol)).sum()
    return float(-0.5 * white @ white - logdet - 0.5 * eps.size * np.log(2.0 * np.pi))


def apply_log_gp(field: IntensityField, eps: np.ndarray) -> IntensityField:
    """Multiply the field by exp(eps) cellwise."""
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (field.grid.cells,):
        raise GridMismatchError(
            f"gp draw length {eps.shape} does not match grid with {field.grid.cells} cells"
        )
    return IntensityField(
        field.grid, field.values * np.exp(eps), year=field.year, bin_index=field.bin_index
    )


def log_likelihood(
    counts: CellCounts, intensity: IntensityField, multiplicity: int = 1
) -> float:
    """Poisson log-likelihood of cell counts under multiplicity * intensity.

    Cells with zero counts contribute exposure only; a positive count over a
    zero-intensity cell is an error rather than a negative infinity.
    """
    if counts.grid != intensity.grid:
        raise GridMismatchError("counts and intensity were built on different grids")
    if int(multiplicity) != multiplicity or multiplicity < 1:
        raise DomainError(f"multiplicity {multiplicity} must be a positive integer")
    multiplicity = int(multiplicity)
    lam = intensity.values
    n = counts.counts
    occupied = n > 0
    if np.any(lam[occupied] <= 0):
        bad = int(np.nonzero(occupied & (lam <= 0))[0][0])
        raise ZeroIntensityError(
            f"cell {bad} has {int(n[bad])} point(s) but zero intensity"
        )
    exposure = -multiplicity * intensity.grid.width * lam.sum()
    point_term = float((n[occupied] * np.log(multiplicity * lam[occupied])).sum())
    return exposure + point_term
