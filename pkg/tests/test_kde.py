import math

import numpy as np
import pytest

from segproc.kde import (
    BetaKdeParams,
    CircularKdeParams,
    beta_kde,
    beta_kde_eval,
    beta_kernel,
    circular_bandwidth,
    circular_kde,
    circular_kde_eval,
    lcv_kappa,
    product_kde,
)
from segproc.models import ScaledBeta, VonMisesAxial
from segproc.numerics import Grid1D, make_rng


class TestCircularKde:
    def test_normalized_and_nonnegative(self, rng):
        f = circular_kde(VonMisesAxial(0.5, 2).sample(rng, 300))
        assert f.integral() == pytest.approx(1, abs=1e-12) and np.all(f.values >= 0)

    def test_axial_periodicity(self, rng):
        angles = VonMisesAxial(0.1, 1).sample(rng, 50)
        phi = np.linspace(0, 3, 7)
        np.testing.assert_allclose(circular_kde_eval(phi, angles, 4.0), circular_kde_eval(phi + math.pi, angles, 4.0))
        shifted = np.mod(angles + math.pi, math.pi)  # same axes
        np.testing.assert_allclose(circular_kde_eval(phi, angles, 4.0), circular_kde_eval(phi, shifted, 4.0))

    def test_single_kernel_is_von_mises(self):
        phi = np.linspace(0, math.pi, 9, endpoint=False)
        np.testing.assert_allclose(circular_kde_eval(phi, [0.7], 3.0), VonMisesAxial(0.7, 3.0).pdf(phi), rtol=1e-12)

    def test_uniform_data(self, rng):
        f = circular_kde(math.pi * rng.random(5000))
        assert np.max(np.abs(f.values - 1 / math.pi)) < 0.05

    def test_von_mises_data(self, rng):
        g = VonMisesAxial(0, 1)
        f = circular_kde(g.sample(rng, 5000))
        assert np.max(np.abs(f.values - g.pdf(f.grid.points))) < 0.05

    def test_rule_grows_with_n(self, rng):
        g = VonMisesAxial(0, 1)
        assert circular_bandwidth(g.sample(rng, 2000)) > circular_bandwidth(g.sample(rng, 50))

    def test_lcv_prefers_concentrated_kernel_for_concentrated_data(self, rng):
        wide = lcv_kappa(VonMisesAxial(0, 0.5).sample(rng, 300))
        tight = lcv_kappa(VonMisesAxial(0, 20).sample(rng, 300))
        assert tight > wide

    def test_lcv_selector(self, rng):
        angles = VonMisesAxial(0, 1).sample(rng, 200)
        assert CircularKdeParams(selector="lcv").resolve(angles) == pytest.approx(lcv_kappa(angles))
        assert CircularKdeParams(kappa=3.0).resolve(angles) == 3.0

    def test_mise_decreases_with_n(self):
        g = VonMisesAxial(0, 1)
        grid = Grid1D.directions(100)
        truth = g.pdf(grid.points)
        mise = []
        for n in (50, 500, 5000):
            ise = [grid.integrate((circular_kde(g.sample(make_rng(n, s), n), grid=grid).values - truth) ** 2)
                   for s in range(20)]
            mise.append(np.mean(ise))
        assert mise[0] > mise[1] > mise[2]

    def test_invalid(self):
        with pytest.raises(ValueError):
            CircularKdeParams(kappa=0)
        with pytest.raises(ValueError):
            CircularKdeParams(selector="silverman")
        with pytest.raises(ValueError):
            circular_kde([])


class TestBetaKde:
    def test_kernel_is_beta_density(self):
        # first estimator kernel integrates to one over the data variable
        t = np.linspace(0, 1, 20001)
        for x in (0.0, 0.3, 1.0):
            k = beta_kernel([x], t, 0.1)[0]
            assert np.trapezoid(k, t) == pytest.approx(1, abs=1e-6)

    def test_scaled_support(self):
        t = np.linspace(0, 2, 20001)
        k = beta_kernel([0.5], t, 0.1, upper=2.0)[0]
        assert np.trapezoid(k, t) == pytest.approx(1, abs=1e-6)

    def test_normalized(self, rng):
        f = beta_kde(ScaledBeta().sample(rng, 300))
        assert f.integral() == pytest.approx(1, abs=1e-12) and np.all(f.values >= 0)

    def test_beta_2_4_interior(self):
        # O(h) bias at the edges and, for the first estimator, near the mode;
        # the modified kernel meets the bound away from the edges
        law = ScaledBeta(2, 4)
        f = beta_kde(law.sample(make_rng(0), 10_000), BetaKdeParams(modified=True))
        interior = (f.grid.points >= 0.1) & (f.grid.points <= 0.9)
        assert np.abs(f.values - law.pdf(f.grid.points))[interior].max() < 0.1

    def test_first_estimator_bias_near_mode(self):
        # leading interior bias h * x (1 - x) f''(x) / 2, with f''(1/4) = -45
        law = ScaledBeta(2, 4)
        n = 10_000
        h = n**-0.4
        fits = [beta_kde_eval([0.25], law.sample(make_rng(1, s), n), h, 1.0)[0] for s in range(10)]
        bias = np.mean(fits) - law.pdf(0.25)
        assert bias == pytest.approx(h * 0.25 * 0.75 * -45 / 2, rel=0.3)

    def test_nonnegative_at_boundary(self, rng):
        f = beta_kde(0.01 * rng.random(200))
        assert np.all(np.isfinite(f.values)) and np.all(f.values >= 0) and f.values[0] > 0

    def test_bandwidth_rule(self):
        assert BetaKdeParams().resolve(32) == pytest.approx(32**-0.4)
        assert BetaKdeParams(scale=0.15).resolve(1) == pytest.approx(0.15)
        assert BetaKdeParams(h=0.2).resolve(1000) == 0.2

    def test_rejects_out_of_support(self):
        with pytest.raises(ValueError):
            beta_kde([0.5, 1.2])
        with pytest.raises(ValueError):
            BetaKdeParams(h=-1)


class TestProductKde:
    def sample(self, n=800, seed=0):
        rng = make_rng(seed, 1)
        return np.c_[ScaledBeta(2, 4).sample(rng, n), VonMisesAxial(0.3, 2).sample(rng, n)]

    def test_table_normalized(self):
        p = product_kde(self.sample(), grid_r=Grid1D(0, 1, 201), grid_phi=Grid1D.directions(128))
        total = p.grid_r.integrate(p.table.sum(axis=1) * p.grid_phi.step)
        assert total == pytest.approx(1, abs=1e-3)

    def test_marginal_matches_beta_kde(self):
        s = self.sample()
        bp = BetaKdeParams()
        p = product_kde(s, bp, grid_r=Grid1D(0, 1, 201))
        marg = p.marginal_r()
        direct = beta_kde(s[:, 0], bp, Grid1D(0, 1, 201))
        inner = slice(10, -10)
        np.testing.assert_allclose(marg.values[inner], direct.values[inner], rtol=0.02)

    def test_factorizes(self):
        # product kernel of independent-looking data: f(r, phi) / f(r, phi') does not depend on r for one datum
        p = product_kde([[0.4, 0.6]], BetaKdeParams(h=0.1), CircularKdeParams(kappa=4.0))
        r = np.array([0.2, 0.4, 0.7])
        ratio = p.evaluate(r, 0.1) / p.evaluate(r, 1.0)
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)

    def test_independent_marks_factorize(self):
        s = self.sample(10_000, seed=2)
        gr, gp = Grid1D(0, 1, 101), Grid1D.directions(64)
        bp, cp = BetaKdeParams(), CircularKdeParams(kappa=8.0)
        p = product_kde(s, bp, cp, gr, gp)
        fr = beta_kde(s[:, 0], bp, gr).values
        fp = circular_kde(s[:, 1], cp, gp).values
        inner = slice(5, -5)
        assert np.abs(p.table - np.outer(fr, fp))[inner].max() < 0.05

    def test_on_line_and_interpolate_agree_with_evaluate(self):
        p = product_kde(self.sample(300), grid_r=Grid1D(0, 1, 401), grid_phi=Grid1D.directions(256))
        r = np.linspace(0.05, 0.95, 11)
        exact = p.evaluate(r, np.full(r.size, 0.3))
        np.testing.assert_allclose(p.on_line(r, 0.3), exact, rtol=1e-12)
        np.testing.assert_allclose(p.interpolate(r, np.full(r.size, 0.3)), exact, rtol=0.02)

    def test_interpolate_periodic(self):
        p = product_kde(self.sample(100))
        assert p.interpolate(0.3, 0.2) == pytest.approx(p.interpolate(0.3, 0.2 + math.pi))

    def test_rows(self):
        p = product_kde(self.sample(50), grid_r=Grid1D(0, 1, 3), grid_phi=Grid1D.directions(4))
        rows = list(p.rows())
        assert len(rows) == 12 and rows[5][2] == p.table[1, 1]
