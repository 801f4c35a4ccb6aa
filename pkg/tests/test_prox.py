import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from hierdecomp import _prox
from hierdecomp.grid import Field, NormSpec, TorusGrid, compute_norm
from hierdecomp.jmin import DataTerm, prox_banach, prox_data_power

from conftest import random_field

TIGHT = dict(tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)


class TestL1Ball:
    """Projection onto the pointwise-magnitude l1 ball."""

    def test_inside_unchanged(self):
        a = np.array([0.1, -0.2, 0.3])
        assert np.array_equal(_prox.project_l1_ball(a, 1.0, 1), a)

    def test_scalar_soft_threshold(self):
        out = _prox.project_l1_ball(np.array([3.0, -1.0, 0.5]), 2.0, 1)
        # theta = 1: magnitudes (2, 0, 0)
        assert np.allclose(out, [2.0, 0.0, 0.0])

    def test_vector_directions_kept(self, rng):
        a = rng.standard_normal((2, 6, 6))
        out = _prox.project_l1_ball(a, 1.5, 2)
        mag = np.sqrt((out ** 2).sum(0))
        assert mag.sum() == pytest.approx(1.5, rel=1e-12)
        cross = a[0] * out[1] - a[1] * out[0]
        assert np.abs(cross).max() < 1e-12
        assert np.all((a * out).sum(0) >= -1e-15)

    def test_against_cvxpy(self, rng):
        import cvxpy as cp

        a = rng.standard_normal((2, 5))
        y = cp.Variable((2, 5))
        cp.Problem(cp.Minimize(cp.sum_squares(y - a)), [cp.sum(cp.norm(y, 2, axis=0)) <= 1.0]).solve(
            solver=cp.CLARABEL, **TIGHT)
        assert np.allclose(_prox.project_l1_ball(a, 1.0, 1), y.value, atol=1e-6)


class TestShrink:
    """Root of s + c s^(p-1) = d."""

    @pytest.mark.parametrize("p", [1.5, 2.0, 2.5, 3.0, 4.0, 1.2])
    def test_solves_equation(self, p, rng):
        d = np.abs(rng.standard_normal(50)) * 5
        c = np.abs(rng.standard_normal(50)) * 3
        s = _prox.shrink_power(d, c, p)
        assert np.all(s >= 0) and np.all(s <= d + 1e-15)
        assert np.allclose(s + c * s ** (p - 1), d, rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("p", [1.5, 3.0, 2.5])
    def test_zero_inputs(self, p):
        s = _prox.shrink_power(np.zeros(3), np.array([0.0, 1.0, 2.0]), p)
        assert np.array_equal(s, np.zeros(3))

    def test_no_shrink_when_c_zero(self):
        assert np.allclose(_prox.shrink_power(np.array([2.0]), 0.0, 3.0), [2.0])


class TestLqBall:
    """Projection onto a weighted Lq ball."""

    def test_against_cvxpy(self, rng):
        import cvxpy as cp

        a = rng.standard_normal((2, 4, 4))
        w, q, radius = 0.3, 1.5, 0.8
        proj = _prox.project_lq_ball(a, radius, q, w, 2)
        y = cp.Variable((2, 16))
        mags = cp.norm(y, 2, axis=0)
        cp.Problem(cp.Minimize(cp.sum_squares(y - a.reshape(2, 16))),
                   [w ** (1 / q) * cp.pnorm(mags, q) <= radius]).solve(solver=cp.CLARABEL, **TIGHT)
        assert np.allclose(proj.reshape(2, 16), y.value, atol=1e-6)
        mag = np.sqrt((proj ** 2).sum(0))
        assert (w * np.sum(mag ** q)) ** (1 / q) == pytest.approx(radius, rel=1e-10)


class TestDataProx:
    """Pointwise prox of tau lam |f - s|^p."""

    def grid(self):
        return TorusGrid.cube(4, 2)

    def test_quadratic_closed_form(self):
        # argmin |s|^2 + (s - 1)^2 / 2 = 1/3
        g = self.grid()
        v = Field(g, np.full(g.shape, 1.0))
        f = Field.zeros(g)
        out = prox_data_power(v, f, DataTerm(2.0, 1.0), 1.0)
        assert np.allclose(out.values, 1.0 / 3.0)

    @pytest.mark.parametrize("p", [1.5, 3.0, 2.5])
    def test_scalar_against_scan(self, p):
        g = self.grid()
        v0, f0, tau, lam = 1.7, -0.4, 0.6, 1.3
        out = prox_data_power(Field(g, np.full(g.shape, v0)), Field(g, np.full(g.shape, f0)),
                              DataTerm(p, lam), tau).values
        best = minimize_scalar(lambda s: tau * lam * abs(f0 - s) ** p + 0.5 * (s - v0) ** 2,
                               bounds=(-3, 3), method="bounded", options={"xatol": 1e-12})
        assert np.allclose(out, best.x, atol=1e-7)

    def test_vector_radial(self):
        g = TorusGrid.cube(4, 3)
        v = Field(g, np.stack([np.full(g.shape, 3.0), np.full(g.shape, 4.0), np.zeros(g.shape)]))
        out = prox_data_power(v, Field.zeros(g, 3), DataTerm(3.0, 1.0), 0.5).data
        # |s| solves s + 1.5 s^2 = 5
        s = (-1 + np.sqrt(1 + 30)) / 3
        assert np.allclose(np.sqrt((out ** 2).sum(0)), s)
        assert np.allclose(out[0] / out[1], 0.75)

    def test_negative_tau(self):
        g = self.grid()
        with pytest.raises(ValueError):
            prox_data_power(Field.zeros(g), Field.zeros(g), DataTerm(2.0, 1.0), -1.0)


class TestBanachProx:
    """Prox of tau ||.||_B."""

    def spike(self, *values):
        g = TorusGrid.cube(4, 2)
        a = np.zeros((len(values[0]),) + g.shape)
        for k, vals in enumerate(values):
            a[(slice(None), 0, k)] = vals
        return g, Field(g, a)

    def test_linf_scalar_example(self):
        # a single sample of 5 with tau / w = 2 comes down to 3
        g, v = self.spike([5.0])
        out = prox_banach(v, NormSpec.linf(), 2.0 * g.cell_volume).values
        assert out[0, 0] == pytest.approx(3.0)
        assert np.count_nonzero(out) == 1

    def test_linf_clips_peaks(self):
        g, v = self.spike([3.0], [1.0])
        out = prox_banach(v, NormSpec.linf(), g.cell_volume).values
        assert np.allclose(out[0, :2], [2.0, 1.0])

    def test_vector_linf(self):
        g, v = self.spike([3.0, 3.0])
        out = prox_banach(v, NormSpec.linf(), np.sqrt(2.0) * g.cell_volume).data
        assert np.allclose(out[:, 0, 0], [2.0, 2.0])

    @pytest.mark.parametrize("bspec", [NormSpec.bv(), NormSpec.w1p(2.0)], ids=str)
    def test_gradient_norms_against_cvxpy(self, bspec, rng):
        import cvxpy as cp

        from hierdecomp._oracle import forward_difference_matrix

        g = TorusGrid.cube(4, 2)
        w = g.cell_volume
        v = random_field(g, rng, zero_mean=False)
        tau = 0.3
        out = prox_banach(v, bspec, tau, inner_tol=1e-13).values.ravel()
        d = [forward_difference_matrix(g.shape, a, h) for a, h in enumerate(g.spacing)]
        x = cp.Variable(g.size)
        mags = cp.norm(cp.vstack([m @ x for m in d]), 2, axis=0)
        reg = w * cp.sum(mags) if bspec.kind == "BV" else np.sqrt(w) * cp.norm(mags, 2)
        cp.Problem(cp.Minimize(tau * reg + 0.5 * w * cp.sum_squares(x - v.values.ravel()))).solve(
            solver=cp.CLARABEL, **TIGHT)
        assert np.allclose(out, x.value, atol=1e-6)

    def test_zero_tau_identity(self, rng):
        g = TorusGrid.cube(4, 2)
        v = random_field(g, rng)
        assert prox_banach(v, NormSpec.bv(), 0.0) is v

    def test_moreau_decrease(self, rng):
        g = TorusGrid.cube(8, 2)
        v = random_field(g, rng)
        out = prox_banach(v, NormSpec.bv(), 0.05)
        assert compute_norm(out, NormSpec.bv()) < compute_norm(v, NormSpec.bv())
