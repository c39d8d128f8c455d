"""Climate-space binning and sparse panel bookkeeping.

Plots are grouped by where their plot-year climate falls on a rectangular
grid over (winter temperature x annual precipitation). Model fitting then
works per bin-year: intensities are pooled over the bin members observed at
the start of a transition, and counts are pooled over the members observed
at the end, which need not be the same plots.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, EmptyBinError, InputError
from .grid import IntensityField, PointPattern, TraitGrid, empirical_intensity
from .kernel import ClimateRecord, KernelParams
from .cox import CellCounts, bin_counts
from .propagation import pseudo_ipm_step

CLIMATE_HEADER = ["plot_id", "year", "winter_temp_c", "annual_precip_mm"]
PANEL_SUMMARY_HEADER = [
    "year",
    "bin",
    "n_start",
    "m_end",
    "pooled_count_start",
    "pooled_count_end",
]


@dataclass(frozen=True, eq=False)
class ClimateBinning:
    """Rectangular climate bins with per-bin centroids.

    Bins are numbered 1..M row-major: temperature rows sweep slowest,
    precipitation columns fastest. Centroids average the climates of every
    plot-year that fell in the bin; empty bins carry no centroid.
    """

    temp_breaks: np.ndarray
    precip_breaks: np.ndarray
    centroids: dict[int, ClimateRecord]
    member_counts: dict[int, int]

    def __post_init__(self) -> None:
        for name in ("temp_breaks", "precip_breaks"):
            breaks = np.asarray(getattr(self, name), dtype=float).copy()
            if breaks.ndim != 1 or breaks.size < 2 or np.any(np.diff(breaks) <= 0):
                raise DomainError(f"{name} must be strictly increasing with >= 2 entries")
            breaks.setflags(write=False)
            object.__setattr__(self, name, breaks)

    @property
    def n_temp(self) -> int:
        return self.temp_breaks.size - 1

    @property
    def n_precip(self) -> int:
        return self.precip_breaks.size - 1

    @property
    def n_bins(self) -> int:
        return self.n_temp * self.n_precip

    @property
    def empty_bins(self) -> tuple[int, ...]:
        return tuple(
            l for l in range(1, self.n_bins + 1) if l not in self.centroids
        )


def _axis_index(value: float, breaks: np.ndarray, name: str) -> int:
    if value < breaks[0] or value > breaks[-1]:
        raise DomainError(
            f"{name} {value} falls outside [{breaks[0]}, {breaks[-1]}]"
        )
    # Values on an interior break join the lower-index bin; the axis maximum
    # joins the last bin.
    idx = int(np.searchsorted(breaks, value, side="left")) - 1
    return max(idx, 0)


def assign(record: ClimateRecord, binning: ClimateBinning) -> int:
    """Bin label (1-based, row-major) of a climate record."""
    ti = _axis_index(record.winter_temp, binning.temp_breaks, "winter_temp")
    pi = _axis_index(record.annual_precip, binning.precip_breaks, "annual_precip")
    return ti * binning.n_precip + pi + 1


def build_binning(
    climates: list[ClimateRecord], n_temp: int, n_precip: int
) -> ClimateBinning:
    """Equi-spaced bins over the bounding rectangle of the given climates."""
    if n_temp < 1 or n_precip < 1:
        raise DomainError("bin counts must be at least 1 per axis")
    if not climates:
        raise DomainError("cannot bin an empty climate list")
    temps = np.array([c.winter_temp for c in climates])
    precips = np.array([c.annual_precip for c in climates])
    if temps.min() == temps.max():
        raise DomainError("degenerate temperature range: all values identical")
    if precips.min() == precips.max():
        raise DomainError("degenerate precipitation range: all values identical")
    binning = ClimateBinning(
        np.linspace(temps.min(), temps.max(), n_temp + 1),
        np.linspace(precips.min(), precips.max(), n_precip + 1),
        centroids={},
        member_counts={},
    )
    members: dict[int, list[ClimateRecord]] = {}
    for record in climates:
        members.setdefault(assign(record, binning), []).append(record)
    centroids = {
        l: ClimateRecord(
            float(np.mean([r.winter_temp for r in recs])),
            float(np.mean([r.annual_precip for r in recs])),
        )
        for l, recs in members.items()
    }
    counts = {l: len(recs) for l, recs in members.items()}
    return ClimateBinning(binning.temp_breaks, binning.precip_breaks, centroids, counts)


@dataclass(frozen=True)
class CovariateScaler:
    """Optional standardization of climate covariates before the design vector."""

    temp_mean: float
    temp_sd: float
    precip_mean: float
    precip_sd: float

    @classmethod
    def fit(cls, climates: list[ClimateRecord]) -> "CovariateScaler":
        temps = np.array([c.winter_temp for c in climates])
        precips = np.array([c.annual_precip for c in climates])
        t_sd = float(temps.std()) or 1.0
        p_sd = float(precips.std()) or 1.0
        return cls(float(temps.mean()), t_sd, float(precips.mean()), p_sd)

    def design(self, record: ClimateRecord) -> np.ndarray:
        return np.array(
            [
                1.0,
                (record.winter_temp - self.temp_mean) / self.temp_sd,
                (record.annual_precip - self.precip_mean) / self.precip_sd,
            ]
        )


def bin_designs(
    binning: ClimateBinning,
    mode: str = "full",
    scaler: CovariateScaler | None = None,
) -> dict[int, np.ndarray]:
    """Per-bin covariate vectors from the bin centroids.

    Modes: ``full`` (intercept, raw temperature, raw precipitation),
    ``temp`` (bare temperature), ``standardized`` (intercept plus
    standardized temperature and precipitation via ``scaler``).
    """
    designs: dict[int, np.ndarray] = {}
    for l, centroid in binning.centroids.items():
        if mode == "full":
            designs[l] = centroid.design()
        elif mode == "temp":
            designs[l] = np.array([centroid.winter_temp])
        elif mode == "standardized":
            if scaler is None:
                raise DomainError("standardized mode requires a fitted scaler")
            designs[l] = scaler.design(centroid)
        else:
            raise DomainError(f"unknown covariate mode {mode!r}")
    return designs


@dataclass(eq=False)
class SparsePanel:
    """Plot-by-year panel of labels, observation indicators, and patterns.

    Every plot carries a bin label every year (climate is complete);
    patterns exist only for observed plot-years. The start-side member set
    of a transition (t, l) holds plots labeled l and observed at t; the
    end-side set holds plots labeled l at t and observed at t+1. In
    inventory-style data the two sides are typically disjoint.
    """

    plot_ids: tuple[str, ...]
    years: tuple[int, ...]
    labels: np.ndarray
    observed: np.ndarray
    patterns: dict[tuple[str, int], PointPattern]
    bin_covariates: dict[int, np.ndarray]

    def __post_init__(self) -> None:
        J, T = len(self.plot_ids), len(self.years)
        self.labels = np.asarray(self.labels, dtype=int)
        self.observed = np.asarray(self.observed, dtype=bool)
        if self.labels.shape != (J, T) or self.observed.shape != (J, T):
            raise DomainError(f"labels and observed must both have shape ({J}, {T})")
        plot_index = {pid: j for j, pid in enumerate(self.plot_ids)}
        year_index = {year: t for t, year in enumerate(self.years)}
        for (pid, year) in self.patterns:
            if pid not in plot_index or year not in year_index:
                raise DomainError(f"pattern ({pid!r}, {year}) outside the panel range")

    @property
    def n_years(self) -> int:
        return len(self.years)

    @property
    def n_plots(self) -> int:
        return len(self.plot_ids)

    def members(self, t: int, l: int) -> list[int]:
        """Plot indices labeled l in year index t."""
        return list(np.nonzero(self.labels[:, t] == l)[0])

    def start_members(self, t: int, l: int) -> list[int]:
        """Members of (t, l) that are observed at t."""
        mask = (self.labels[:, t] == l) & self.observed[:, t]
        return list(np.nonzero(mask)[0])

    def end_members(self, t: int, l: int) -> list[int]:
        """Members of (t, l) that are observed at t+1."""
        if t + 1 >= self.n_years:
            raise DomainError(f"year index {t} has no following year")
        mask = (self.labels[:, t] == l) & self.observed[:, t + 1]
        return list(np.nonzero(mask)[0])

    def n_start(self, t: int, l: int) -> int:
        return len(self.start_members(t, l))

    def m_end(self, t: int, l: int) -> int:
        return len(self.end_members(t, l))

    def pattern_at(self, j: int, t: int) -> PointPattern:
        return self.patterns[(self.plot_ids[j], self.years[t])]

    def bin_labels(self) -> list[int]:
        return sorted(set(self.labels.ravel().tolist()))

    def live_terms(self) -> list[tuple[int, int]]:
        """Transition terms (t, l) with observed plots on both sides."""
        out = []
        for t in range(self.n_years - 1):
            for l in self.bin_labels():
                if self.n_start(t, l) >= 1 and self.m_end(t, l) >= 1:
                    out.append((t, l))
        return out

    def observed_total(self, t: int) -> int:
        """Total observed point count in year index t."""
        total = 0
        for j in np.nonzero(self.observed[:, t])[0]:
            total += len(self.pattern_at(int(j), t))
        return total


def build_panel(
    patterns: list[PointPattern],
    climates: dict[tuple[str, int], ClimateRecord],
    binning: ClimateBinning,
    covariate_mode: str = "full",
) -> SparsePanel:
    """Assemble a panel from patterns and a complete plot-year climate table.

    The plot and year ranges come from the climate table; every plot-year in
    the rectangle must have a climate row, and every pattern must land on a
    known plot-year.
    """
    plot_ids = tuple(sorted({pid for pid, _ in climates}))
    years = tuple(sorted({year for _, year in climates}))
    if not plot_ids or len(years) < 2:
        raise InputError("climate table must cover at least one plot and two years")
    missing = [
        (pid, year) for pid in plot_ids for year in years if (pid, year) not in climates
    ]
    if missing:
        shown = ", ".join(f"{p}@{y}" for p, y in missing[:5])
        raise InputError(
            f"climate table is missing {len(missing)} plot-year(s): {shown}"
            + ("..." if len(missing) > 5 else "")
        )
    J, T = len(plot_ids), len(years)
    labels = np.zeros((J, T), dtype=int)
    for j, pid in enumerate(plot_ids):
        for t, year in enumerate(years):
            labels[j, t] = assign(climates[(pid, year)], binning)
    observed = np.zeros((J, T), dtype=bool)
    table: dict[tuple[str, int], PointPattern] = {}
    plot_index = {pid: j for j, pid in enumerate(plot_ids)}
    year_index = {year: t for t, year in enumerate(years)}
    for pattern in patterns:
        key = (pattern.plot_id, pattern.year)
        if pattern.plot_id not in plot_index or pattern.year not in year_index:
            raise InputError(
                f"pattern {key} has no climate row; the climate table must be complete"
            )
        if key in table:
            raise InputError(f"duplicate pattern for plot-year {key}")
        table[key] = pattern
        observed[plot_index[pattern.plot_id], year_index[pattern.year]] = True
    scaler = (
        CovariateScaler.fit(list(climates.values()))
        if covariate_mode == "standardized"
        else None
    )
    covariates = bin_designs(binning, covariate_mode, scaler)
    return SparsePanel(plot_ids, years, labels, observed, table, covariates)


def per_plot_intensity(
    panel: SparsePanel,
    t: int,
    l: int,
    grid: TraitGrid,
    bandwidth: float | None = None,
) -> IntensityField:
    """Average per-plot intensity of bin l's start-side members in year t.

    Pools the observed patterns and divides by how many plots contributed,
    so the field's mass is the average point count per observed plot.
    """
    ids = panel.start_members(t, l)
    if not ids:
        raise EmptyBinError(f"bin {l} has no observed plots in year index {t}")
    pooled = [panel.pattern_at(j, t) for j in ids]
    field = empirical_intensity(pooled, grid, bandwidth=bandwidth, per_plot=True)
    return IntensityField(grid, field.values, year=panel.years[t], bin_index=l)


def scaled_step_target(
    panel: SparsePanel,
    t: int,
    l: int,
    params: KernelParams,
    grid: TraitGrid,
    bandwidth: float | None = None,
) -> tuple[IntensityField, int, CellCounts]:
    """One bin-year likelihood target.

    Returns the kernel-stepped per-plot intensity for year t+1, the number
    of end-side plots, and their pooled cell counts at t+1.
    """
    anchor = per_plot_intensity(panel, t, l, grid, bandwidth)
    z = panel.bin_covariates[l]
    predicted = pseudo_ipm_step(anchor, z, params)
    end_ids = panel.end_members(t, l)
    if not end_ids:
        raise EmptyBinError(f"bin {l} has no observed plots in year index {t + 1}")
    pooled = np.zeros(grid.cells, dtype=np.int64)
    for j in end_ids:
        pooled += bin_counts(panel.pattern_at(j, t + 1), grid).counts
    counts = CellCounts(grid, pooled, year=panel.years[t + 1], bin_index=l)
    return predicted, len(end_ids), counts


def panel_summary(panel: SparsePanel) -> list[dict]:
    """Occupancy and pooled-count table per transition (year, bin)."""
    rows = []
    for t in range(panel.n_years - 1):
        for l in panel.bin_labels():
            start = panel.start_members(t, l)
            end = panel.end_members(t, l)
            rows.append(
                {
                    "year": panel.years[t],
                    "bin": l,
                    "n_start": len(start),
                    "m_end": len(end),
                    "pooled_count_start": sum(len(panel.pattern_at(j, t)) for j in start),
                    "pooled_count_end": sum(
                        len(panel.pattern_at(j, t + 1)) for j in end
                    ),
                }
            )
    return rows


def write_panel_summary_csv(panel: SparsePanel, path: str | Path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=PANEL_SUMMARY_HEADER)
        writer.writeheader()
        writer.writerows(panel_summary(panel))


def read_climate_csv(path: str | Path) -> dict[tuple[str, int], ClimateRecord]:
    """Read a plot-year climate table; malformed rows abort with line numbers."""
    path = Path(path)
    table: dict[tuple[str, int], ClimateRecord] = {}
    problems: list[str] = []
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CLIMATE_HEADER:
            raise InputError(
                f"{path}: expected header {','.join(CLIMATE_HEADER)}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                problems.append(f"line {lineno}: expected 4 fields, got {len(row)}")
                continue
            pid = row[0].strip()
            try:
                year = int(row[1])
                temp = float(row[2])
                precip = float(row[3])
            except ValueError:
                problems.append(f"line {lineno}: could not parse {row[1:]}")
                continue
            if not pid:
                problems.append(f"line {lineno}: empty plot_id")
                continue
            if (pid, year) in table:
                problems.append(f"line {lineno}: duplicate plot-year ({pid}, {year})")
                continue
            try:
                table[(pid, year)] = ClimateRecord(temp, precip)
            except DomainError as exc:
                problems.append(f"line {lineno}: {exc}")
    if problems:
        shown = "; ".join(problems[:10])
        more = f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""
        raise InputError(f"{path}: {len(problems)} malformed row(s): {shown}{more}")
    return table


def write_climate_csv(
    climates: dict[tuple[str, int], ClimateRecord], path: str | Path
) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CLIMATE_HEADER)
        for (pid, year), record in sorted(climates.items()):
            writer.writerow(
                [pid, year, f"{record.winter_temp:.10g}", f"{record.annual_precip:.10g}"]
            )
