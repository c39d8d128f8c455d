"""Synthetic panel generation, missingness injection, and the experiment loops."""
import math

import numpy as np
import pytest

from ipmscale import (
    DomainError,
    GPConfig,
    GridMismatchError,
    IntensityField,
    KernelParams,
    MCMCConfig,
    PointPattern,
    PosteriorChain,
    PriorSpec,
    SimConfig,
    build_kernel_matrix,
    default_truth_params,
    derive_seed,
    discretize,
    generate_truth,
    inject_missingness,
    posterior_projection,
    projection_experiment,
    recovery_experiment,
    recovery_report,
    sample_pattern,
    simulate_dataset,
    truncate_panel,
)
from ipmscale.simulate import BAND_HEADER, RECOVERY_HEADER


class TestSimConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(n_bins=0),
            dict(plots_per_bin=0),
            dict(horizon=1),
            dict(missing_fraction=1.0),
            dict(initial_mass=0.0),
            dict(n_bins=2, transition_matrix=np.eye(3)),
            dict(n_bins=2, transition_matrix=np.array([[0.5, 0.4], [0.2, 0.8]])),
            dict(n_bins=2, transition_matrix=np.array([[1.5, -0.5], [0.0, 1.0]])),
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(DomainError):
            SimConfig(**kwargs)

    def test_default_transition_for_four_bins(self):
        cfg = SimConfig(n_bins=4, plots_per_bin=2, horizon=3)
        assert cfg.transition_matrix.shape == (4, 4)
        assert cfg.transition_matrix[0, 0] == 0.70
        np.testing.assert_allclose(cfg.transition_matrix.sum(axis=1), 1.0)

    def test_identity_fallback_for_other_bin_counts(self):
        cfg = SimConfig(n_bins=3, plots_per_bin=2, horizon=3)
        np.testing.assert_array_equal(cfg.transition_matrix, np.eye(3))

    def test_effective_gp(self):
        on = SimConfig(n_bins=2, plots_per_bin=2, horizon=3)
        gp = on.effective_gp()
        assert gp.sigma2_eps == pytest.approx(0.04)
        assert gp.phi == pytest.approx(0.5 / 50.0)
        off = SimConfig(n_bins=2, plots_per_bin=2, horizon=3, use_gp=False)
        assert off.effective_gp() is None
        custom = SimConfig(
            n_bins=2, plots_per_bin=2, horizon=3, gp=GPConfig(0.1, 0.2)
        )
        assert custom.effective_gp().phi == 0.2

    def test_truth_params_reference_values(self):
        p = default_truth_params()
        assert (p.q1, p.sigma, p.delta0, p.eta) == (0.01, 0.25, 0.30, 0.10)
        np.testing.assert_array_equal(p.beta, [0.01])
        assert p.q0 == 1.0 and p.delta1 == 0.0 and p.mu == 0.0


class TestGenerateTruth:
    def test_identity_transition_freezes_labels(self):
        cfg = SimConfig(
            n_bins=2, plots_per_bin=3, horizon=4,
            transition_matrix=np.eye(2), seed=5, use_gp=False,
        )
        truth = generate_truth(cfg)
        np.testing.assert_array_equal(
            truth.labels, np.repeat([[1], [2]], 3, axis=0).repeat(4, axis=1)
        )

    def test_initial_labels_fill_bins_evenly(self):
        cfg = SimConfig(n_bins=4, plots_per_bin=2, horizon=2, seed=0)
        truth = generate_truth(cfg)
        np.testing.assert_array_equal(
            truth.labels[:, 0], [1, 1, 2, 2, 3, 3, 4, 4]
        )

    def test_transition_frequencies_match_matrix(self):
        cfg = SimConfig(n_bins=4, plots_per_bin=100, horizon=10, seed=11)
        truth = generate_truth(cfg)
        labels = truth.labels
        for a in range(1, 5):
            origins = labels[:, :-1] == a
            n = int(origins.sum())
            for b in range(1, 5):
                p = cfg.transition_matrix[a - 1, b - 1]
                hits = int(((labels[:, 1:] == b) & origins).sum())
                se = math.sqrt(p * (1 - p) / n)
                assert abs(hits / n - p) <= 3 * se + 1e-12

    def test_deterministic_given_seed(self):
        cfg = SimConfig(n_bins=2, plots_per_bin=2, horizon=3, seed=7)
        a = generate_truth(cfg)
        b = generate_truth(cfg)
        np.testing.assert_array_equal(a.gammas, b.gammas)
        np.testing.assert_array_equal(a.labels, b.labels)
        c = generate_truth(
            SimConfig(n_bins=2, plots_per_bin=2, horizon=3, seed=8)
        )
        assert not np.array_equal(a.gammas, c.gammas)

    def test_path_advances_by_kernel_matrix(self):
        cfg = SimConfig(
            n_bins=1, plots_per_bin=1, horizon=3, seed=2, initial_mass=20.0,
        )
        truth = generate_truth(cfg)
        g0 = truth.gammas[0, 0]
        mass = float(g0.sum() * cfg.grid.width)
        mat = build_kernel_matrix(cfg.grid, truth.designs[1], cfg.true_params, mass)
        np.testing.assert_allclose(truth.gammas[0, 1], mat.entries @ g0, rtol=1e-12)

    def test_zero_climate_coefficient_makes_bins_identical(self):
        grid = discretize(0.0, 50.0, 100)
        params = KernelParams(
            q0=1.0, q1=0.01, sigma=0.25, delta0=0.3, delta1=0.0, eta=0.1,
            beta=np.array([0.0]),
        )
        centers = grid.centers
        vals = np.exp(-0.5 * ((centers - 8.0) / 2.0) ** 2)
        shared = [IntensityField(grid, vals), IntensityField(grid, vals)]
        cfg = SimConfig(
            n_bins=2, plots_per_bin=1, horizon=4, true_params=params,
            transition_matrix=np.eye(2), seed=3, grid=grid,
        )
        truth = generate_truth(cfg, initials=shared)
        np.testing.assert_allclose(
            truth.gammas[0], truth.gammas[1], rtol=1e-12
        )

    def test_initials_length_checked(self):
        cfg = SimConfig(n_bins=2, plots_per_bin=2, horizon=3)
        field = IntensityField(cfg.grid, np.ones(cfg.grid.cells))
        with pytest.raises(DomainError):
            generate_truth(cfg, initials=[field])

    def test_initials_grid_checked(self):
        cfg = SimConfig(n_bins=1, plots_per_bin=1, horizon=3)
        other = discretize(0.0, 50.0, 60)
        with pytest.raises(GridMismatchError):
            generate_truth(cfg, initials=[IntensityField(other, np.ones(60))])


class TestSamplePattern:
    def test_zero_intensity_gives_empty_pattern(self, grid10):
        lam = IntensityField(grid10, np.zeros(grid10.cells))
        pattern = sample_pattern(lam, 0)
        assert len(pattern) == 0

    def test_mean_count_matches_mass(self, grid10):
        lam = IntensityField(grid10, np.full(grid10.cells, 2.0))
        rng = np.random.default_rng(21)
        counts = [len(sample_pattern(lam, rng)) for _ in range(1000)]
        assert np.mean(counts) == pytest.approx(20.0, abs=3 * math.sqrt(20.0 / 1000))

    def test_points_fall_in_positive_cells(self, grid10):
        values = np.zeros(grid10.cells)
        values[4] = 50.0
        lam = IntensityField(grid10, values)
        pattern = sample_pattern(lam, 3)
        lo = grid10.lower + 4 * grid10.width
        assert len(pattern) > 0
        assert np.all(pattern.diameters >= lo)
        assert np.all(pattern.diameters <= lo + grid10.width)

    def test_year_and_plot_id(self, grid10):
        lam = IntensityField(grid10, np.ones(grid10.cells), year=7)
        pattern = sample_pattern(lam, 1, plot_id="px", year=9)
        assert pattern.year == 9 and pattern.plot_id == "px"
        assert sample_pattern(lam, 1).year == 7


class TestSimulateDataset:
    def test_deterministic(self, small_dataset):
        cfg, data = small_dataset
        again = simulate_dataset(cfg)
        assert len(again.patterns) == len(data.patterns)
        for a, b in zip(data.patterns, again.patterns):
            assert a.plot_id == b.plot_id and a.year == b.year
            np.testing.assert_array_equal(a.diameters, b.diameters)
        np.testing.assert_array_equal(data.truth.labels, again.truth.labels)

    def test_climate_encodes_bin_labels(self, small_dataset):
        cfg, data = small_dataset
        for (pid, t), record in data.climates.items():
            j = data.panel.plot_ids.index(pid)
            l = int(data.truth.labels[j, t])
            assert record.winter_temp == float(l - 1)
            assert record.annual_precip == 100.0 + 50.0 * (l - 1)

    def test_panel_reproduces_generator_labels(self, small_dataset):
        cfg, data = small_dataset
        np.testing.assert_array_equal(data.panel.labels, data.truth.labels)
        for l in range(1, cfg.n_bins + 1):
            np.testing.assert_allclose(
                data.panel.bin_covariates[l], [float(l - 1)]
            )

    def test_everything_observed(self, small_dataset):
        cfg, data = small_dataset
        assert data.panel.observed.all()
        assert len(data.patterns) == cfg.n_plots * cfg.horizon

    def test_gp_off_epsilons_are_zero(self, small_dataset):
        cfg, data = small_dataset
        assert set(data.epsilons) == {
            (l, t) for l in (1, 2) for t in range(cfg.horizon)
        }
        for eps in data.epsilons.values():
            assert not eps.any()

    def test_gp_on_epsilons_shared_within_bin_year(self):
        cfg = SimConfig(
            n_bins=2, plots_per_bin=2, horizon=3, seed=9,
            transition_matrix=np.eye(2),
        )
        data = simulate_dataset(cfg)
        eps = data.epsilons[(1, 0)]
        assert eps.shape == (cfg.grid.cells,)
        assert eps.any()
        assert not np.array_equal(eps, data.epsilons[(2, 0)])


class TestInjectMissingness:
    def test_zero_fraction_changes_nothing(self, small_dataset):
        _, data = small_dataset
        sparse = inject_missingness(data.panel, 0.0, seed=4)
        np.testing.assert_array_equal(sparse.observed, data.panel.observed)
        assert set(sparse.patterns) == set(data.panel.patterns)

    def test_exact_keep_counts(self, small_dataset):
        cfg, data = small_dataset
        sparse = inject_missingness(
            data.panel, 0.5, seed=4, plots_per_bin=cfg.plots_per_bin
        )
        last = sparse.n_years - 1
        for t in range(last):
            for l in (1, 2):
                kept = sum(
                    sparse.observed[j, t] for j in sparse.members(t, l)
                )
                assert kept == 3
        for l in (1, 2):
            kept_last = sum(
                sparse.observed[j, last] for j in sparse.members(last, l)
            )
            assert kept_last == cfg.plots_per_bin

    def test_retained_patterns_untouched(self, small_dataset):
        _, data = small_dataset
        sparse = inject_missingness(data.panel, 0.5, seed=4)
        for key, pattern in sparse.patterns.items():
            assert pattern is data.panel.patterns[key]

    def test_non_integral_removal_rejected(self, small_dataset):
        _, data = small_dataset
        with pytest.raises(DomainError, match="whole number"):
            inject_missingness(data.panel, 0.25, seed=4, plots_per_bin=6)

    def test_deterministic_given_seed(self, small_dataset):
        _, data = small_dataset
        a = inject_missingness(data.panel, 0.5, seed=12)
        b = inject_missingness(data.panel, 0.5, seed=12)
        np.testing.assert_array_equal(a.observed, b.observed)
        c = inject_missingness(data.panel, 0.5, seed=13)
        assert not np.array_equal(a.observed, c.observed)


class TestTruncatePanel:
    def test_slices_years(self, small_dataset):
        _, data = small_dataset
        short = truncate_panel(data.panel, 3)
        assert short.years == data.panel.years[:3]
        assert short.labels.shape == (data.panel.n_plots, 3)
        assert all(key[1] in short.years for key in short.patterns)
        n_expected = sum(1 for key in data.panel.patterns if key[1] < 3)
        assert len(short.patterns) == n_expected

    @pytest.mark.parametrize("n_years", [1, 6])
    def test_bounds(self, small_dataset, n_years):
        _, data = small_dataset
        with pytest.raises(DomainError):
            truncate_panel(data.panel, n_years)


class TestDeriveSeed:
    def test_deterministic_and_distinct(self):
        assert derive_seed(3, 5) == derive_seed(3, 5)
        assert derive_seed(3, 5) != derive_seed(3, 6)
        assert derive_seed(3, 5) != derive_seed(5, 3)
        assert 0 <= derive_seed(0, 0) < 2**32


def tiny_recovery_setup():
    sim = SimConfig(
        n_bins=2, plots_per_bin=4, horizon=3, seed=1,
        transition_matrix=np.eye(2), use_gp=False, bandwidth=0.75,
        initial_mass=25.0,
    )
    mcmc = MCMCConfig(iterations=260, burn_in=120, thin=1, seed=0)
    return sim, mcmc


class TestRecoveryExperiment:
    def test_row_structure_and_determinism(self):
        sim, mcmc = tiny_recovery_setup()
        rows = recovery_experiment(sim, mcmc, fractions=(0.0, 0.5), replicates=2)
        names = {"q1", "sigma", "eta", "delta0", "beta_0", "sigma2_eps", "phi"}
        assert len(rows) == 2 * 2 * len(names)
        for row in rows:
            assert set(row) == set(RECOVERY_HEADER)
            assert row["width"] == pytest.approx(row["upper"] - row["lower"])
            if row["param"] in ("sigma2_eps", "phi"):
                assert row["truth"] is None and row["covered"] is None
            else:
                assert row["covered"] in (True, False)
        again = recovery_experiment(sim, mcmc, fractions=(0.0, 0.5), replicates=2)
        assert rows == again

    def test_report_and_files(self, tmp_path):
        sim, mcmc = tiny_recovery_setup()
        rows = recovery_experiment(
            sim, mcmc, fractions=(0.0,), replicates=1, out_dir=tmp_path
        )
        csv_text = (tmp_path / "recovery.csv").read_text().splitlines()
        assert csv_text[0] == ",".join(RECOVERY_HEADER)
        assert len(csv_text) == 1 + len(rows)
        report = (tmp_path / "recovery_report.txt").read_text()
        assert "fraction 0" in report
        assert report == recovery_report(rows)


def constant_chain(samples_row, n=24, jitter=None):
    names = ("q1", "sigma", "eta", "delta0", "beta_0")
    base = np.tile(np.asarray(samples_row, dtype=float), (n, 1))
    if jitter is not None:
        rng = np.random.default_rng(0)
        base = base * np.exp(jitter * rng.standard_normal(base.shape))
    return PosteriorChain(
        names=names,
        samples=base,
        kept_iterations=np.arange(n, dtype=np.int64),
        log_post_trace=np.zeros(n),
        accept_rates={name: 0.3 for name in names},
        fixed={"q0": 1.0, "mu": 0.0, "delta1": 0.0, "sigma2_eps": 0.04, "phi": 0.1},
        constraint=(0.0, 2.0),
        rho_max=1.0,
        gp_family="exponential",
        seed=0,
        iterations=n,
        burn_in=0,
        thin=1,
        priors=PriorSpec(q1_rate=1.0, delta1_rate=1.0, phi_lower=0.1, phi_upper=1.0),
    )


class TestProjection:
    def test_zero_variance_chain_collapses_bands(self, small_dataset):
        cfg, data = small_dataset
        chain = constant_chain([0.01, 0.25, 0.1, 0.3, 0.01])
        field0 = IntensityField(cfg.grid, data.truth.gammas[0, 0])
        ends = posterior_projection(chain, field0, np.array([0.0]), steps=2)
        assert ends.shape == (24, cfg.grid.cells)
        np.testing.assert_array_equal(ends, np.tile(ends[0], (24, 1)))

    def test_projection_matches_manual_steps(self, small_dataset):
        cfg, data = small_dataset
        chain = constant_chain([0.01, 0.25, 0.1, 0.3, 0.01], n=3)
        field0 = IntensityField(cfg.grid, data.truth.gammas[0, 0])
        z = np.array([1.0])
        ends = posterior_projection(chain, field0, z, steps=2)
        params = chain.kernel_params(0)
        values = field0.values
        for _ in range(2):
            mass = float(values.sum() * cfg.grid.width)
            mat = build_kernel_matrix(cfg.grid, z, params, mass)
            values = mat.entries @ values
        np.testing.assert_allclose(ends[0], values, rtol=1e-12)

    def test_negative_steps_rejected(self, small_dataset):
        cfg, data = small_dataset
        chain = constant_chain([0.01, 0.25, 0.1, 0.3, 0.01], n=2)
        field0 = IntensityField(cfg.grid, data.truth.gammas[0, 0])
        with pytest.raises(DomainError):
            posterior_projection(chain, field0, np.array([0.0]), steps=-1)

    def test_experiment_orders_band_widths(self, small_dataset, tmp_path):
        cfg, data = small_dataset
        tight = constant_chain([0.01, 0.25, 0.1, 0.3, 0.01], jitter=0.02)
        wide = constant_chain([0.01, 0.25, 0.1, 0.3, 0.01], jitter=0.3)
        result = projection_experiment(
            data, {0.0: tight, 0.8: wide}, out_dir=tmp_path
        )
        assert result["steps"] == cfg.horizon - 1
        assert result["width_ratios"][0.8] > 1.0
        assert 0.0 <= result["containment"][0.0] <= 1.0
        rows = result["bands"][0.0]
        assert len(rows) == cfg.n_bins * cfg.grid.cells
        assert set(rows[0]) == set(BAND_HEADER)
        band_csv = (tmp_path / "bands_missing_0p8.csv").read_text().splitlines()
        assert band_csv[0] == ",".join(BAND_HEADER)
        report = (tmp_path / "projection_report.txt").read_text()
        assert "median band width ratio" in report


def test_headers():
    assert RECOVERY_HEADER == [
        "replicate", "fraction", "param", "truth", "mean", "lower", "upper",
        "covered", "width",
    ]
    assert BAND_HEADER == ["bin", "cell_center", "lower", "median", "upper", "truth"]
