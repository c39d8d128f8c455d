"""Grid, intensity-field, and point-pattern behavior."""
import numpy as np
import pytest

from ipmscale import (
    DomainError,
    InputError,
    IntensityField,
    PointPattern,
    discretize,
    empirical_intensity,
    integrate,
    read_patterns_csv,
    silverman_bandwidth,
    write_patterns_csv,
)
from ipmscale.grid import PATTERN_HEADER


class TestTraitGrid:
    def test_centers_and_width(self):
        grid = discretize(0.0, 10.0, 5)
        assert grid.width == 2.0
        np.testing.assert_allclose(grid.centers, [1.0, 3.0, 5.0, 7.0, 9.0])

    def test_reversed_bounds_rejected(self):
        with pytest.raises(DomainError):
            discretize(5.0, 1.0, 10)

    def test_single_cell_rejected(self):
        with pytest.raises(DomainError):
            discretize(0.0, 1.0, 1)

    def test_nonfinite_bounds_rejected(self):
        with pytest.raises(DomainError):
            discretize(0.0, np.inf, 10)

    def test_index_of_interior_and_boundary(self):
        grid = discretize(0.0, 10.0, 5)
        idx = grid.index_of(np.array([0.0, 1.9, 2.0, 9.9, 10.0]))
        # A value on an interior edge joins the upper cell; the grid maximum
        # stays in the last cell.
        np.testing.assert_array_equal(idx, [0, 0, 1, 4, 4])

    def test_index_of_out_of_range(self):
        grid = discretize(0.0, 10.0, 5)
        with pytest.raises(DomainError):
            grid.index_of(np.array([10.5]))


class TestIntensityField:
    def test_rejects_wrong_shape(self):
        grid = discretize(0.0, 10.0, 5)
        with pytest.raises(DomainError):
            IntensityField(grid, np.zeros(4))

    def test_rejects_negative(self):
        grid = discretize(0.0, 10.0, 5)
        with pytest.raises(DomainError):
            IntensityField(grid, np.array([1.0, -0.1, 0, 0, 0]))

    def test_rejects_nonfinite(self):
        grid = discretize(0.0, 10.0, 5)
        with pytest.raises(DomainError):
            IntensityField(grid, np.array([1.0, np.nan, 0, 0, 0]))

    def test_values_read_only(self):
        grid = discretize(0.0, 10.0, 5)
        field = IntensityField(grid, np.ones(5))
        with pytest.raises(ValueError):
            field.values[0] = 2.0


def test_integrate_constant_field():
    grid = discretize(0.0, 10.0, 25)
    field = IntensityField(grid, np.full(25, 2.0))
    assert integrate(field) == pytest.approx(20.0, rel=1e-12)


class TestSilverman:
    def test_matches_formula(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(10.0, 2.0, size=500)
        sd = pts.std(ddof=1)
        iqr = np.subtract(*np.percentile(pts, [75, 25]))
        expected = 0.9 * min(sd, iqr / 1.34) * 500 ** (-0.2)
        assert silverman_bandwidth(pts) == pytest.approx(expected, rel=1e-12)

    def test_degenerate_inputs(self):
        assert silverman_bandwidth(np.array([1.0])) == 0.0
        assert silverman_bandwidth(np.full(10, 3.0)) == 0.0


class TestEmpiricalIntensity:
    def test_mass_equals_count(self, grid10):
        pat = PointPattern("p", 0, np.array([2.0, 3.0, 5.0, 7.0]))
        field = empirical_intensity([pat], grid10, bandwidth=0.5)
        assert integrate(field) == pytest.approx(4.0, rel=1e-12)

    def test_per_plot_divides(self, grid10):
        pats = [
            PointPattern("p1", 0, np.array([2.0, 3.0])),
            PointPattern("p2", 0, np.array([5.0, 7.0, 8.0, 4.0])),
        ]
        field = empirical_intensity(pats, grid10, bandwidth=0.5, per_plot=True)
        assert integrate(field) == pytest.approx(3.0, rel=1e-12)

    def test_out_of_range_rejected(self, grid10):
        pat = PointPattern("p", 0, np.array([11.0]))
        with pytest.raises(DomainError):
            empirical_intensity([pat], grid10)

    def test_empty_list(self, grid10):
        with pytest.raises(DomainError):
            empirical_intensity([], grid10)
        field = empirical_intensity([], grid10, allow_empty=True)
        assert integrate(field) == 0.0

    def test_zero_spread_falls_back_to_cell_width(self, grid10):
        pat = PointPattern("p", 0, np.full(5, 4.0))
        field = empirical_intensity([pat], grid10)
        assert integrate(field) == pytest.approx(5.0, rel=1e-12)
        assert field.values.max() > 0


class TestPatternCsv:
    def test_round_trip(self, tmp_path):
        pats = [
            PointPattern("a", 2000, np.array([1.25, 3.5])),
            PointPattern("b", 2001, np.array([7.0])),
        ]
        path = tmp_path / "patterns.csv"
        write_patterns_csv(pats, path)
        back = read_patterns_csv(path)
        assert [(p.plot_id, p.year) for p in back] == [("a", 2000), ("b", 2001)]
        np.testing.assert_allclose(back[0].diameters, [1.25, 3.5])

    def test_header_enforced(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("plot,yr,size\na,2000,1.0\n")
        with pytest.raises(InputError):
            read_patterns_csv(path)

    def test_malformed_rows_reported_with_line_numbers(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            ",".join(PATTERN_HEADER)
            + "\na,2000,1.0\na,xxxx,2.0\n,2000,3.0\na,2001,nan\n"
        )
        with pytest.raises(InputError) as err:
            read_patterns_csv(path)
        msg = str(err.value)
        assert "line 3" in msg and "line 4" in msg and "line 5" in msg

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "ok.csv"
        path.write_text(",".join(PATTERN_HEADER) + "\n\na,2000,1.0\n\n")
        pats = read_patterns_csv(path)
        assert len(pats) == 1 and len(pats[0]) == 1
