"""Shared fixtures: small grids, reference parameters, and a toy panel."""
import numpy as np
import pytest

from ipmscale import (
    ClimateRecord,
    KernelParams,
    PointPattern,
    SimConfig,
    build_binning,
    build_panel,
    discretize,
    simulate_dataset,
)


@pytest.fixture(scope="session")
def grid50():
    return discretize(0.0, 50.0, 100)


@pytest.fixture(scope="session")
def grid10():
    return discretize(0.0, 10.0, 20)


@pytest.fixture(scope="session")
def truth_params():
    """The generator default truths with the boundary values fixed."""
    return KernelParams(
        q0=1.0, q1=0.01, sigma=0.25, delta0=0.30, delta1=0.0, eta=0.10,
        beta=np.array([0.01]), mu=0.0,
    )


def make_climates(plot_ids, years, by_plot_temp=None):
    """Complete climate table; temperature per plot, precipitation varied."""
    table = {}
    for i, pid in enumerate(plot_ids):
        temp = (by_plot_temp or {}).get(pid, float(i % 3))
        for year in years:
            table[(pid, year)] = ClimateRecord(temp, 100.0 + 10.0 * (i % 4))
    return table


@pytest.fixture()
def toy_panel(grid10):
    """Two plots, three years, fully observed, single climate bin."""
    rng = np.random.default_rng(7)
    plot_ids = ["a", "b"]
    years = [2000, 2001, 2002]
    patterns = [
        PointPattern(pid, year, rng.uniform(1.0, 9.0, size=12))
        for pid in plot_ids
        for year in years
    ]
    climates = {
        (pid, year): ClimateRecord(1.0 + 0.001 * i, 100.0 + i)
        for i, (pid, year) in enumerate(
            (p, y) for p in plot_ids for y in years
        )
    }
    binning = build_binning(list(climates.values()), 1, 1)
    panel = build_panel(patterns, climates, binning, covariate_mode="temp")
    return panel


@pytest.fixture(scope="session")
def small_dataset():
    """Seeded two-bin dataset used across inference tests."""
    cfg = SimConfig(
        n_bins=2,
        plots_per_bin=6,
        horizon=5,
        transition_matrix=np.eye(2),
        seed=42,
        initial_mass=25.0,
        use_gp=False,
        bandwidth=0.75,
    )
    return cfg, simulate_dataset(cfg)
