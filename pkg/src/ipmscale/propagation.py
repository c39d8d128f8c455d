"""Deterministic propagation of intensity fields through the kernel."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, DomainError, GridMismatchError
from .grid import IntensityField, TraitGrid, integrate
from .kernel import (
    KernelParams,
    climate_scale,
    growth_density,
    recruit_density,
    recruitment_rate,
    survival_prob,
)

PROJECTION_HEADER = ["bin", "year", "cell_center", "intensity"]


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Discretized kernel: entry (j, l) is K(center_j; center_l) * cell width."""

    grid: TraitGrid
    entries: np.ndarray

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=float).copy()
        if entries.shape != (self.grid.cells, self.grid.cells):
            raise DomainError(
                f"entries shape {entries.shape} does not match a {self.grid.cells}-cell grid"
            )
        if not np.all(np.isfinite(entries)) or np.any(entries < 0):
            raise DomainError("kernel entries must be finite and nonnegative")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)


def build_kernel_matrix(
    grid: TraitGrid, z, params: KernelParams, gamma_dot: float
) -> KernelMatrix:
    """Evaluate the kernel on the grid's center-by-center mesh."""
    centers = grid.centers
    q = survival_prob(params, gamma_dot)
    delta = recruitment_rate(params, gamma_dot)
    scale = climate_scale(z, params)
    growth = growth_density(centers[:, None] - centers[None, :], params)
    recruit = recruit_density(centers, params, grid.lower)
    entries = scale * (q * growth + delta * recruit[:, None]) * grid.width
    return KernelMatrix(grid, entries)


def pseudo_ipm_step(field: IntensityField, z, params: KernelParams) -> IntensityField:
    """One kernel step of the field, with density dependence taken from its mass."""
    gamma_dot = integrate(field)
    matrix = build_kernel_matrix(field.grid, z, params, gamma_dot)
    values = matrix.entries @ field.values
    year = None if field.year is None else field.year + 1
    return IntensityField(field.grid, values, year=year, bin_index=field.bin_index)


def project(
    field0: IntensityField,
    climates: list,
    params: KernelParams,
    horizon: int,
    anchors: list[IntensityField] | None = None,
) -> list[IntensityField]:
    """Chain ``horizon`` kernel steps from field0; returns all horizon+1 fields.

    By default each step feeds on the previous output. When ``anchors`` is
    given (one field per step), each step feeds on the matching anchor
    instead, which is the data-anchored mode used during fitting.
    """
    if horizon < 0:
        raise DomainError(f"horizon {horizon} must be nonnegative")
    if len(climates) < horizon:
        raise DomainError(f"need {horizon} climate entries, got {len(climates)}")
    if anchors is not None and len(anchors) < horizon:
        raise DomainError(f"need {horizon} anchor fields, got {len(anchors)}")
    fields = [field0]
    current = field0
    for t in range(horizon):
        source = anchors[t] if anchors is not None else current
        if source.grid != field0.grid:
            raise GridMismatchError("anchor grid differs from the starting grid")
        current = pseudo_ipm_step(source, climates[t], params)
        fields.append(current)
    return fields


def dominant_eigenpair(
    matrix: KernelMatrix, tol: float = 1e-10, max_iter: int = 10_000
) -> tuple[float, IntensityField]:
    """Leading eigenvalue and eigenfield of the kernel matrix by power iteration.

    Starts from a uniform field; stops once the max-norm residual drops below
    tol times the eigenvalue. The eigenfield is scaled to unit mass.
    """
    grid = matrix.grid
    w = np.full(grid.cells, 1.0 / grid.cells)
    lam = 0.0
    for _ in range(max_iter):
        v = matrix.entries @ w
        norm = np.abs(v).sum()
        if norm == 0:
            raise ConvergenceError("kernel matrix annihilated the start field")
        lam = float(w @ v / (w @ w))
        if np.max(np.abs(v - lam * w)) <= tol * abs(lam):
            mass = v.sum() * grid.width
            return lam, IntensityField(grid, v / mass)
        w = v / norm
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def write_projection_csv(
    fields: list[IntensityField], path: str | Path, bin_index: int | None = None
) -> None:
    """Write fields as rows of (bin, year, cell_center, intensity)."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(PROJECTION_HEADER)
        for t, field in enumerate(fields):
            label = field.bin_index if field.bin_index is not None else bin_index
            year = field.year if field.year is not None else t
            for center, value in zip(field.grid.centers, field.values):
                writer.writerow([label, year, f"{center:.10g}", f"{value:.10g}"])
