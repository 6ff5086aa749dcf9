import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from segproc.geometry import Configuration, DiskWindow, Point2, RectWindow, Segment
from segproc.models import (
    DensityGrid,
    GibbsDirectionalModel,
    InhomogLengthModel,
    ScaledBeta,
    VonMisesAxial,
    conditional_intensity_gibbs,
    conditional_intensity_inhomog,
    gnz_residual,
    gnz_terms,
    hits_test_function,
    interaction_factor,
    j_integral,
    reference_direction_from_palm,
    reference_length_from_palm,
    scaled_beta_pdf,
    sufficient_stats,
    unit_test_function,
    von_mises_pdf,
)
from segproc.numerics import Grid1D, make_rng

from conftest import random_configuration


class TestVonMises:
    def test_uniform_limit(self):
        np.testing.assert_allclose(von_mises_pdf(np.linspace(0, 3, 7), VonMisesAxial(0, 0)), 1 / math.pi)

    def test_spot_value(self):
        # closed form e / (pi I0(1)) = 0.683421
        expected = math.e / (math.pi * 1.2660658777520082)
        assert von_mises_pdf(0.0, VonMisesAxial(0, 1)) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("mu, kappa", [(0, 1), (0.7, 3), (2.0, 0.2), (0, 20)])
    def test_normalized(self, mu, kappa):
        val, _ = integrate.quad(lambda p: von_mises_pdf(p, VonMisesAxial(mu, kappa)), 0, math.pi, epsabs=1e-13, limit=200)
        assert val == pytest.approx(1, abs=1e-8)

    def test_period_pi(self):
        g = VonMisesAxial(0.4, 2)
        x = np.linspace(0, 3, 11)
        np.testing.assert_allclose(g.pdf(x), g.pdf(x + math.pi))

    def test_sample_law(self, rng):
        g = VonMisesAxial(0.5, 2.0)
        s = g.sample(rng, 50_000)
        assert s.min() >= 0 and s.max() < math.pi
        counts, edges = np.histogram(s, bins=25, range=(0, math.pi))
        probs = [integrate.quad(g.pdf, a, b)[0] for a, b in zip(edges[:-1], edges[1:])]
        from scipy import stats

        assert stats.chisquare(counts, 50_000 * np.array(probs)).pvalue > 0.01


class TestScaledBeta:
    def test_uniform(self):
        np.testing.assert_allclose(scaled_beta_pdf(np.linspace(0, 2, 5), ScaledBeta(1, 1, 2)), 0.5)

    def test_mode_value(self):
        assert scaled_beta_pdf(0.25, ScaledBeta(2, 4, 1)) == pytest.approx(2.109375, abs=1e-12)
        assert ScaledBeta(2, 4).sup == pytest.approx(2.109375)

    def test_outside_support(self):
        assert scaled_beta_pdf(-0.1, ScaledBeta()) == 0 and scaled_beta_pdf(1.1, ScaledBeta()) == 0

    @pytest.mark.parametrize("a, b, L", [(2, 4, 1), (1, 1, 3), (0.7, 2, 1), (5, 5, 0.5)])
    def test_normalized(self, a, b, L):
        val, _ = integrate.quad(lambda r: scaled_beta_pdf(r, ScaledBeta(a, b, L)), 0, L, epsabs=1e-13, limit=200)
        assert val == pytest.approx(1, abs=1e-8)

    def test_unbounded_sup(self):
        assert ScaledBeta(0.5, 2).sup == math.inf


class TestDensityGrid:
    def test_normalize_and_interp(self):
        g = DensityGrid.from_function(lambda x: 1 + x, Grid1D(0, 1, 101))
        assert g.integral() == pytest.approx(1, abs=1e-12)
        assert g.pdf(0.5) == pytest.approx(1.5 / 1.5, rel=1e-3)

    def test_periodic_interp(self):
        g = DensityGrid.from_function(VonMisesAxial(0, 1).pdf, Grid1D.directions(100))
        assert g.pdf(math.pi - 1e-9) == pytest.approx(g.values[0], rel=1e-6)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            DensityGrid(Grid1D(0, 1, 3), [1, -1, 1])

    def test_csv_roundtrip(self, tmp_path):
        g = DensityGrid.from_function(VonMisesAxial(0, 1).pdf, Grid1D.directions(50))
        g.to_csv(tmp_path / "g.csv")
        h = DensityGrid.from_csv(tmp_path / "g.csv", periodic=True)
        np.testing.assert_array_equal(h.values, g.values)
        assert h.grid.step == pytest.approx(g.grid.step)


class TestConditionalIntensity:
    model = GibbsDirectionalModel(tau=100, a=-0.7, r=1.0, window=RectWindow(-2, -2, 4, 4))

    def test_empty(self):
        u = Segment(Point2(0, 0), 1, 0.3)
        assert conditional_intensity_gibbs(Configuration.empty(), u, self.model) == pytest.approx(100 * VonMisesAxial().pdf(0.3))

    def test_ratio_law(self):
        u = Segment(Point2(0, 0), 1, 0)
        hitters = [Segment(Point2(k * 0.2, 0), 1, math.pi / 2) for k in range(-2, 3)]
        x = Configuration.from_segments(hitters)
        full = conditional_intensity_gibbs(x, u, self.model)
        fewer = conditional_intensity_gibbs(x.without(0), u, self.model)
        assert full / fewer == pytest.approx(math.exp(-0.7))

    def test_poisson_reduction(self):
        m = GibbsDirectionalModel(tau=100, a=0.0, r=1.0)
        x = random_configuration(30, 1, length=0.5)
        u = Segment(Point2(0.5, 0.5), 1, 1.1)
        assert conditional_intensity_gibbs(x, u, m) == pytest.approx(100 * VonMisesAxial().pdf(1.1))

    def test_rejects_attraction(self):
        with pytest.raises(ValueError):
            GibbsDirectionalModel(a=0.5)

    def test_inhomog(self):
        m = InhomogLengthModel(tau=900, b=3)
        u = Segment(Point2(0, 0), 0.5, 1.0)
        expected = 900 * scaled_beta_pdf(0.5, ScaledBeta()) * math.exp(0.75)
        assert conditional_intensity_inhomog(Configuration.empty(), u, m) == pytest.approx(expected)
        out = Segment(Point2(0.45, 0), 0.2, 0)
        assert conditional_intensity_inhomog(Configuration.empty(), out, m) == 0
        x = Configuration.from_segments([out])
        assert conditional_intensity_inhomog(x, u, m) == 0

    def test_inhomog_b_zero(self):
        m = InhomogLengthModel(tau=5, b=0)
        u = Segment(Point2(0.1, 0.1), 0.3, 1.0)
        assert conditional_intensity_inhomog(Configuration.empty(), u, m) == pytest.approx(5 * scaled_beta_pdf(0.3, ScaledBeta()))

    def test_sufficient_stats(self):
        x = Configuration.from_segments([Segment(Point2(0, 0), 0.5, 0), Segment(Point2(0, 0), 0.5, 1.0)])
        s = sufficient_stats(x, DiskWindow())
        assert (s.n, s.N) == (2, 1) and s.D == pytest.approx(0.5)


class TestInteractionFactor:
    def test_limits(self):
        assert interaction_factor(0.0, 7.3) == 1.0
        assert interaction_factor(-50.0, 2.0) == pytest.approx(math.exp(-2.0))

    def test_rejects_negative_mass(self):
        with pytest.raises(ValueError):
            interaction_factor(-1, -0.1)

    @pytest.mark.parametrize("a, mass", [(-0.5, 1.0), (-3.0, 0.4), (-1.0, 3.0)])
    def test_poisson_mc(self, a, mass):
        counts = make_rng(7, int(10 * mass)).poisson(mass, 200_000)
        mc = np.mean(np.exp(a * counts))
        assert mc == pytest.approx(interaction_factor(a, mass), rel=0.01)


class TestJIntegral:
    def test_uniform(self):
        f = DensityGrid.from_function(lambda p: np.full_like(p, 1 / math.pi), Grid1D.directions(100))
        np.testing.assert_allclose(j_integral(np.linspace(0, 3, 13), f), 2 / math.pi, atol=1e-12)

    def test_von_mises_vs_trapezoid(self):
        g = VonMisesAxial(0, 1)
        f = DensityGrid.from_function(g.pdf, Grid1D.directions(100))
        beta = np.linspace(0, math.pi, 10_001)
        for phi in np.linspace(0, math.pi, 9):
            oracle = np.trapezoid(np.abs(np.sin(phi - beta)) * g.pdf(beta), beta)
            assert j_integral(phi, f) == pytest.approx(oracle, abs=1e-4)

    def test_delta_limit(self):
        f = DensityGrid.from_function(VonMisesAxial(0.6, 400).pdf, Grid1D.directions(512))
        for phi in (0.0, 0.6, 1.5, 2.5):
            assert j_integral(phi, f) == pytest.approx(abs(math.sin(phi - 0.6)), abs=0.03)

    def test_needs_periodic_grid(self):
        with pytest.raises(ValueError):
            j_integral(0.0, DensityGrid(Grid1D(0, 1, 3), [1, 1, 1]))


class TestRecovery:
    f_x = DensityGrid.from_function(VonMisesAxial(0.3, 2).pdf, Grid1D.directions(100))

    def test_direction_a_zero(self):
        g = reference_direction_from_palm(self.f_x, C=500, a=0.0, tau=700, r=0.1)
        np.testing.assert_allclose(g.values, self.f_x.values, rtol=1e-12)

    def test_direction_short_segments(self):
        g = reference_direction_from_palm(self.f_x, C=500, a=-2.0, tau=700, r=1e-6)
        np.testing.assert_allclose(g.values, self.f_x.values, rtol=1e-8)

    def test_direction_inverts_forward_map(self):
        # forward: f_x proportional to g * beta, then recovery removes beta
        g = VonMisesAxial(0, 1)
        grid = Grid1D.directions(200)
        gv = g.pdf(grid.points)
        C, a, r = 400.0, -1.0, 0.12
        fx = DensityGrid.from_function(g.pdf, grid)
        for _ in range(50):  # fixed point: f_x = g exp(...J(f_x)) / norm
            vals = gv * np.exp(math.expm1(a) * C * r**2 * j_integral(grid.points, fx))
            fx = DensityGrid(grid, vals).normalized()
        rec = reference_direction_from_palm(fx, C, a, 1.0, r)
        np.testing.assert_allclose(rec.values, gv, rtol=1e-8)

    def test_length_b_zero(self):
        palm = lambda r, phi: scaled_beta_pdf(r, ScaledBeta(2, 3))  # noqa: E731
        grid = Grid1D.interior(0, 1, 100)
        f1 = reference_length_from_palm(palm, 0.0, Point2(0, 0.01), DiskWindow(), grid)
        expected = DensityGrid.from_function(lambda r: palm(r, 0), grid)
        np.testing.assert_allclose(f1.values, expected.values, atol=1e-6)

    def test_length_removes_exponential_tilt(self):
        w = DiskWindow()
        y = Point2(0, 0.05)
        grid = Grid1D.interior(0, 0.9, 100)
        b = 3.0

        def palm(r, phi):
            d = np.sqrt(y.y**2 + np.asarray(r) ** 2 / 4)
            return scaled_beta_pdf(r, ScaledBeta()) * np.exp(b * d)

        f1 = reference_length_from_palm(palm, b, y, w, grid)
        expected = DensityGrid.from_function(lambda r: scaled_beta_pdf(r, ScaledBeta()), grid)
        np.testing.assert_allclose(f1.values, expected.values, rtol=1e-10)


class TestGnz:
    def test_empty_configuration(self, rng):
        m = GibbsDirectionalModel()
        t = gnz_terms(Configuration.empty(), unit_test_function, m.conditional_intensities, m.window, m.r, 2000, rng)
        assert t.observed == 0 and t.residual == -t.integral < 0
        # without segments the integral estimates tau |W| regardless of a
        assert abs(t.integral - m.tau) < 4 * t.integral_se

    def test_hits_observed_is_twice_pairs(self, rng):
        m = GibbsDirectionalModel()
        x = random_configuration(40, 2, length=0.12)
        t = gnz_terms(x, hits_test_function, m.conditional_intensities, m.window, m.r, 100, rng)
        assert t.observed == 2 * sufficient_stats(x).N

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 1000))
    def test_residual_matches_terms(self, seed):
        m = GibbsDirectionalModel()
        x = random_configuration(20, seed, length=0.12)
        r1 = gnz_residual(x, unit_test_function, m.conditional_intensities, m.window, m.r, 500, make_rng(seed))
        t = gnz_terms(x, unit_test_function, m.conditional_intensities, m.window, m.r, 500, make_rng(seed))
        assert r1 == t.residual
