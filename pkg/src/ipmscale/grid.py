"""Trait grid, intensity fields, and point patterns.

The trait axis (stem diameter, in cm) is cut into equal cells; intensities
are stored as cell-center values and integrated with the midpoint rule.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, InputError

PATTERN_HEADER = ["plot_id", "year", "diameter_cm"]

_KDE_CHUNK = 8192


@dataclass(frozen=True)
class TraitGrid:
    """Regular grid of cells on the bounded trait interval [lower, upper].

    Cell centers sit at lower + (j + 1/2) * width for j = 0..cells-1.
    """

    lower: float
    upper: float
    cells: int
    centers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise DomainError("grid bounds must be finite")
        if self.lower >= self.upper:
            raise DomainError(
                f"invalid bounds: lower {self.lower} must be below upper {self.upper}"
            )
        if int(self.cells) != self.cells or self.cells < 2:
            raise DomainError(f"invalid cell count: {self.cells} (need an integer >= 2)")
        object.__setattr__(self, "cells", int(self.cells))
        centers = self.lower + (np.arange(self.cells) + 0.5) * self.width
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)

    @property
    def width(self) -> float:
        return (self.upper - self.lower) / self.cells

    def index_of(self, x: np.ndarray) -> np.ndarray:
        """Cell index per value; the upper bound maps into the last cell."""
        x = np.asarray(x, dtype=float)
        if x.size and (x.min() < self.lower or x.max() > self.upper):
            bad = x[(x < self.lower) | (x > self.upper)]
            raise DomainError(
                f"{bad.size} value(s) outside [{self.lower}, {self.upper}]: "
                f"first offender {bad.flat[0]}"
            )
        idx = np.floor((x - self.lower) / self.width).astype(int)
        return np.clip(idx, 0, self.cells - 1)


def discretize(lower: float, upper: float, cells: int) -> TraitGrid:
    """Build a TraitGrid; errors on reversed bounds or fewer than two cells."""
    return TraitGrid(float(lower), float(upper), cells)


@dataclass(frozen=True, eq=False)
class IntensityField:
    """Nonnegative intensity values at the cell centers of one grid."""

    grid: TraitGrid
    values: np.ndarray
    year: int | None = None
    bin_index: int | None = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).copy()
        if values.shape != (self.grid.cells,):
            raise DomainError(
                f"values shape {values.shape} does not match grid with {self.grid.cells} cells"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("intensity values must be finite")
        if np.any(values < 0):
            raise DomainError("intensity values must be nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Observed tree diameters on one plot in one year."""

    plot_id: str
    year: int
    diameters: np.ndarray
    climate: object | None = None

    def __post_init__(self) -> None:
        diam = np.asarray(self.diameters, dtype=float).copy()
        if diam.ndim != 1:
            raise DomainError("diameters must be one-dimensional")
        if diam.size and not np.all(np.isfinite(diam)):
            raise DomainError("diameters must be finite")
        diam.setflags(write=False)
        object.__setattr__(self, "diameters", diam)

    def __len__(self) -> int:
        return int(self.diameters.size)


def integrate(field_: IntensityField) -> float:
    """Midpoint-rule mass of the field: sum of values times cell width."""
    return float(field_.values.sum() * field_.grid.width)


def silverman_bandwidth(points: np.ndarray) -> float:
    """Silverman's rule on the pooled points; falls back on zero spread."""
    points = np.asarray(points, dtype=float)
    n = points.size
    if n < 2:
        return 0.0
    sd = float(points.std(ddof=1))
    q75, q25 = np.percentile(points, [75.0, 25.0])
    iqr = float(q75 - q25)
    spread = min(x for x in (sd, iqr / 1.34) if x > 0) if (sd > 0 or iqr > 0) else 0.0
    return 0.9 * spread * n ** (-0.2)


def empirical_intensity(
    patterns: list[PointPattern],
    grid: TraitGrid,
    bandwidth: float | None = None,
    per_plot: bool = False,
    allow_empty: bool = False,
) -> IntensityField:
    """Smoothed intensity of pooled patterns, evaluated at the cell centers.

    Uses a Gaussian kernel with reflection at both grid bounds, then rescales
    so the midpoint-rule mass equals the pooled point count (or the count per
    contributing plot when ``per_plot`` is set).

    Parameters
    ----------
    patterns : patterns to pool; all diameters must lie within the grid.
    bandwidth : kernel bandwidth; Silverman's rule when omitted, with the
        cell width substituted when the rule degenerates.
    per_plot : divide the target mass by the number of patterns.
    allow_empty : permit an empty pattern list and return a zero field.
    """
    if not patterns:
        if allow_empty:
            return IntensityField(grid, np.zeros(grid.cells))
        raise DomainError("no patterns supplied and zero fields were not permitted")
    pts = np.concatenate([p.diameters for p in patterns]) if patterns else np.empty(0)
    if pts.size and (pts.min() < grid.lower or pts.max() > grid.upper):
        raise DomainError(
            f"diameters outside [{grid.lower}, {grid.upper}] cannot be smoothed"
        )
    n = pts.size
    target = n / len(patterns) if per_plot else float(n)
    if n == 0:
        return IntensityField(grid, np.zeros(grid.cells))

    if bandwidth is None:
        bandwidth = silverman_bandwidth(pts)
    if not np.isfinite(bandwidth) or bandwidth <= 0:
        bandwidth = grid.width

    centers = grid.centers
    lo2, hi2 = 2.0 * grid.lower, 2.0 * grid.upper
    dens = np.zeros(grid.cells)
    inv = 1.0 / (bandwidth * np.sqrt(2.0 * np.pi))
    for start in range(0, n, _KDE_CHUNK):
        chunk = pts[start : start + _KDE_CHUNK]
        for source in (chunk, lo2 - chunk, hi2 - chunk):
            u = (centers[:, None] - source[None, :]) / bandwidth
            dens += inv * np.exp(-0.5 * u * u).sum(axis=1)
    mass = dens.sum() * grid.width
    values = dens * (target / mass)
    return IntensityField(grid, values)


def read_patterns_csv(path: str | Path) -> list[PointPattern]:
    """Read a row-per-tree CSV (plot_id, year, diameter_cm) into patterns.

    Malformed rows are collected and reported together with their line
    numbers; any malformed row aborts the read.
    """
    path = Path(path)
    groups: dict[tuple[str, int], list[float]] = {}
    problems: list[str] = []
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PATTERN_HEADER:
            raise InputError(
                f"{path}: expected header {','.join(PATTERN_HEADER)}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                problems.append(f"line {lineno}: expected 3 fields, got {len(row)}")
                continue
            pid = row[0].strip()
            try:
                year = int(row[1])
                diameter = float(row[2])
            except ValueError:
                problems.append(f"line {lineno}: could not parse {row[1]!r},{row[2]!r}")
                continue
            if not pid:
                problems.append(f"line {lineno}: empty plot_id")
                continue
            if not np.isfinite(diameter):
                problems.append(f"line {lineno}: non-finite diameter")
                continue
            groups.setdefault((pid, year), []).append(diameter)
    if problems:
        shown = "; ".join(problems[:10])
        more = f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""
        raise InputError(f"{path}: {len(problems)} malformed row(s): {shown}{more}")
    return [
        PointPattern(pid, year, np.array(diam))
        for (pid, year), diam in sorted(groups.items())
    ]


def write_patterns_csv(patterns: list[PointPattern], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(PATTERN_HEADER)
        for pattern in patterns:
            for diameter in pattern.diameters:
                writer.writerow([pattern.plot_id, pattern.year, f"{diameter:.10g}"])
