import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierdecomp._oracle import operator_matrix
from hierdecomp.grid import ComponentMismatchError, Field, GridMismatchError, NormSpec, TorusGrid, inner_product
from hierdecomp.operators import (
    CompatibilityError,
    OperatorSpec,
    UnsupportedCombinationError,
    apply_dual,
    apply_forward,
    classical_solution,
    dual_norm,
    dual_norm_bounds,
    hodge_project,
    riesz_apply,
    spectral_curl,
    spectral_divergence,
)

from conftest import quad, random_field

G2 = TorusGrid.cube(16, 2)
G3 = TorusGrid.cube(8, 3)


def all_ops():
    return [OperatorSpec.divergence(G2), OperatorSpec.identity(G2),
            OperatorSpec.divergence(G3), OperatorSpec.curl(G3)]


class TestOperatorSpec:
    """Construction rules and component bookkeeping."""

    def test_curl_needs_3d(self):
        with pytest.raises(ValueError):
            OperatorSpec.curl(G2)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            OperatorSpec("grad", G2)

    def test_component_counts(self):
        assert OperatorSpec.divergence(G3).in_components == 3
        assert OperatorSpec.divergence(G3).out_components == 1
        assert OperatorSpec.curl(G3).in_components == 3
        assert OperatorSpec.curl(G3).out_components == 3
        assert OperatorSpec.identity(G2).in_components == 1

    def test_component_mismatch(self):
        with pytest.raises(ComponentMismatchError):
            apply_forward(OperatorSpec.divergence(G2), Field.zeros(G2, 1))

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatchError):
            apply_forward(OperatorSpec.identity(G2), Field.zeros(TorusGrid.cube(8, 2)))


class TestForward:
    """Difference operators against analytic samples."""

    def test_divergence_of_sine(self):
        x, _ = G2.coordinates()
        h = G2.spacing[0]
        u = Field(G2, np.stack([np.sin(x), 0 * x]))
        out = apply_forward(OperatorSpec.divergence(G2), u).values
        expected = (np.sin(x) - np.sin(x - h)) / h
        assert np.abs(out - expected).max() < 1e-12
        assert np.abs(out - np.cos(x)).max() < h

    def test_constant_maps_to_zero(self):
        u = Field(G2, np.ones((2,) + G2.shape) * 3.0)
        assert np.abs(apply_forward(OperatorSpec.divergence(G2), u).data).max() == 0.0

    def test_curl_of_sine(self):
        x, _, _ = G3.coordinates()
        h = G3.spacing[0]
        u = Field(G3, np.stack([0 * x, np.sin(x), 0 * x]))
        out = apply_forward(OperatorSpec.curl(G3), u).data
        assert np.abs(out[:2]).max() < 1e-14
        assert np.abs(out[2] - (np.sin(x + h) - np.sin(x)) / h).max() < 1e-12
        spec = spectral_curl(u).data
        assert np.abs(spec[2] - np.cos(x)).max() < 1e-12

    @pytest.mark.parametrize("op", all_ops(), ids=lambda o: f"{o.kind}{o.grid.dim}")
    def test_output_zero_mean(self, op, rng):
        u = random_field(op.grid, rng, op.in_components, zero_mean=False)
        out = apply_forward(op, u).data.reshape(op.out_components, -1)
        if op.kind != "identity":
            assert np.abs(out.mean(axis=1)).max() < 1e-13

    @pytest.mark.parametrize("op", all_ops(), ids=lambda o: f"{o.kind}{o.grid.dim}")
    def test_matches_independent_matrix(self, op, rng):
        u = random_field(op.grid, rng, op.in_components, zero_mean=False)
        mat = operator_matrix(op)
        expected = (mat @ u.data.ravel()).reshape((op.out_components,) + op.grid.shape)
        assert np.allclose(apply_forward(op, u).data, expected, atol=1e-12)


class TestAdjoint:
    """Exact discrete adjoint pairs."""

    @pytest.mark.parametrize("op", all_ops(), ids=lambda o: f"{o.kind}{o.grid.dim}")
    def test_pairing_identity(self, op, rng):
        for _ in range(5):
            u = random_field(op.grid, rng, op.in_components, zero_mean=False)
            g = random_field(op.grid, rng, op.out_components, zero_mean=False)
            lhs = inner_product(apply_forward(op, u), g)
            rhs = inner_product(u, apply_dual(op, g))
            assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0) * 10

    def test_divergence_dual_of_constant(self):
        g = Field(G2, np.full(G2.shape, 2.5))
        assert np.abs(apply_dual(OperatorSpec.divergence(G2), g).data).max() == 0.0

    def test_identity_dual(self, rng):
        g = random_field(G2, rng)
        assert np.array_equal(apply_dual(OperatorSpec.identity(G2), g).data, g.data)

    @pytest.mark.parametrize("op", all_ops(), ids=lambda o: f"{o.kind}{o.grid.dim}")
    def test_adjoint_is_matrix_transpose(self, op, rng):
        g = random_field(op.grid, rng, op.out_components, zero_mean=False)
        mat = operator_matrix(op)
        expected = (mat.T @ g.data.ravel()).reshape((op.in_components,) + op.grid.shape)
        assert np.allclose(apply_dual(op, g).data, expected, atol=1e-11)


class TestProjection:
    """Compatibility projections: idempotent, orthogonal, kill the range."""

    @pytest.mark.parametrize("op", all_ops(), ids=lambda o: f"{o.kind}{o.grid.dim}")
    def test_range_in_kernel(self, op, rng):
        u = random_field(op.grid, rng, op.in_components, zero_mean=False)
        tu = op.forward(u.data)
        if op.kind == "identity":
            tu = tu - tu.mean()
        pt = op.projection.apply_array(tu)
        assert np.abs(pt).max() <= 1e-12 * max(np.abs(tu).max(), 1.0)

    @pytest.mark.parametrize("op", all_ops(), ids=lambda o: f"{o.kind}{o.grid.dim}")
    def test_idempotent_and_symmetric(self, op, rng):
        proj = op.projection
        a = rng.standard_normal((op.out_components,) + op.grid.shape)
        b = rng.standard_normal((op.out_components,) + op.grid.shape)
        pa = proj.apply_array(a)
        assert np.allclose(proj.apply_array(pa), pa, atol=1e-12)
        assert abs(np.vdot(pa, b) - np.vdot(a, proj.apply_array(b))) < 1e-9

    def test_require_rejects_mean(self):
        proj = OperatorSpec.divergence(G2).projection
        with pytest.raises(CompatibilityError):
            proj.require(np.ones((1,) + G2.shape))

    def test_hodge_rejects_gradient(self, rng):
        op = OperatorSpec.curl(G3)
        grad = -OperatorSpec.divergence(G3).adjoint(rng.standard_normal((1,) + G3.shape))
        with pytest.raises(CompatibilityError):
            op.projection.require(grad)


class TestHodge:
    """Spectral irrotational projection."""

    def test_gradient_is_fixed(self):
        x, y, z = G3.coordinates()
        g = Field(G3, np.stack([-np.sin(x) * np.cos(y) * np.cos(z), -np.cos(x) * np.sin(y) * np.cos(z),
                                -np.cos(x) * np.cos(y) * np.sin(z)]))
        assert np.abs(hodge_project(g).data - g.data).max() < 1e-10

    def test_solenoidal_is_killed(self):
        x, _, _ = G3.coordinates()
        g = Field(G3, np.stack([0 * x, np.sin(x), 0 * x]))
        assert np.abs(hodge_project(g).data).max() < 1e-10

    def test_linear_split(self, rng):
        n = G3.shape[0]
        phi = rng.standard_normal(G3.shape)
        psi = rng.standard_normal((3,) + G3.shape)
        xi = G3.wavenumbers(odd=True)
        ph = np.fft.fftn(phi)
        grad = np.stack([np.fft.ifftn(1j * k * ph).real for k in xi])
        ps = np.fft.fftn(psi, axes=(1, 2, 3))
        d = lambda c, a: 1j * xi[a] * ps[c]
        sol = np.stack([np.fft.ifftn(d(2, 1) - d(1, 2)).real, np.fft.ifftn(d(0, 2) - d(2, 0)).real,
                        np.fft.ifftn(d(1, 0) - d(0, 1)).real])
        out = hodge_project(Field(G3, grad + sol)).data
        assert np.abs(out - grad).max() < 1e-10 * max(1.0, np.abs(grad).max()) * n

    def test_requires_3d(self):
        with pytest.raises(ComponentMismatchError):
            hodge_project(Field.zeros(G2, 2))


class TestRiesz:
    """Riesz multipliers."""

    def test_diagonal_mode(self):
        x, y = G2.coordinates()
        out = riesz_apply(Field(G2, np.cos(x + y)), 1, 2).values
        assert np.abs(out - 0.5 * np.cos(x + y)).max() < 1e-12

    def test_axis_mode(self):
        x, _ = G2.coordinates()
        assert np.abs(riesz_apply(Field(G2, np.cos(x)), 1, 2).values).max() < 1e-12

    def test_contraction_and_sum(self, rng):
        f = random_field(G2, rng)
        r11 = riesz_apply(f, 1, 1)
        r22 = riesz_apply(f, 2, 2)
        # the Nyquist rows and columns are dropped by the odd wavenumbers
        xi = G2.wavenumbers(odd=True)
        keep = ((xi[0] != 0) | (xi[1] != 0))
        expected = np.fft.ifft2(np.fft.fft2(f.values) * keep).real
        assert np.abs((r11 + r22).values - expected).max() < 1e-12
        for i, j in [(1, 1), (1, 2), (2, 2)]:
            out = riesz_apply(f, i, j)
            assert inner_product(out, out) <= inner_product(f, f) * (1 + 1e-12)
            assert abs(out.values.mean()) < 1e-13

    def test_mean_rejected(self):
        with pytest.raises(CompatibilityError):
            riesz_apply(Field(G2, np.ones(G2.shape)), 1, 1)


class TestClassicalSolution:
    """Spectral gradient of the inverse Laplacian."""

    def test_cosine(self):
        x, _ = G2.coordinates()
        u = classical_solution(Field(G2, np.cos(x))).data
        assert np.abs(u[0] - np.sin(x)).max() < 1e-12
        assert np.abs(u[1]).max() < 1e-12

    def test_zero(self):
        assert np.abs(classical_solution(Field.zeros(G2)).data).max() == 0.0

    def test_spectral_divergence_reproduces(self, rng):
        f = random_field(G2, rng)
        # remove the Nyquist content, which the odd derivative cannot represent
        mask = np.abs(np.fft.fftfreq(16) * 16) < 8
        f = Field(G2, np.fft.ifft2(np.fft.fft2(f.values) * mask[:, None] * mask[None, :]).real)
        div = spectral_divergence(classical_solution(f)).values
        assert np.linalg.norm(div - f.values) <= 1e-12 * np.linalg.norm(f.values)

    def test_mean_rejected(self):
        with pytest.raises(CompatibilityError):
            classical_solution(Field(G2, np.ones(G2.shape)))


class TestDualNorm:
    """Dual norms of T* g."""

    def test_constant_is_zero(self):
        g = Field(G2, np.ones(G2.shape))
        assert dual_norm(OperatorSpec.divergence(G2), NormSpec.linf(), g) == 0.0

    def test_cosine_div_linf(self):
        grid = TorusGrid.cube(128, 2)
        x, _ = grid.coordinates()
        value = dual_norm(OperatorSpec.divergence(grid), NormSpec.linf(), Field(grid, np.cos(x)))
        assert abs(value - 8 * np.pi) <= 0.01 * 8 * np.pi

    def test_linf_closed_form(self, rng):
        g = random_field(G2, rng)
        op = OperatorSpec.divergence(G2)
        grad = -op.adjoint(g.data)
        expected = quad(np.sqrt(np.sum(grad ** 2, axis=0)), G2)
        assert dual_norm(op, NormSpec.linf(), g) == pytest.approx(expected, rel=1e-12)

    def test_lp_closed_form(self, rng):
        g = random_field(G2, rng)
        op = OperatorSpec.identity(G2)
        expected = quad(np.abs(g.values) ** 3.0, G2) ** (1 / 3)
        assert dual_norm(op, NormSpec.lp(1.5), g) == pytest.approx(expected, rel=1e-12)

    def test_gnorm_bounds_bracket(self, rng):
        grid = TorusGrid.cube(8, 2)
        g = random_field(grid, rng)
        lo, hi = dual_norm_bounds(OperatorSpec.identity(grid), NormSpec.bv(), g, tol=1e-4)
        assert 0 < lo <= hi <= lo * (1 + 1.1e-4)

    def test_gnorm_infinite_for_mean(self):
        grid = TorusGrid.cube(8, 2)
        assert dual_norm(OperatorSpec.identity(grid), NormSpec.bv(), Field(grid, np.ones(grid.shape))) == np.inf

    @pytest.mark.parametrize("bspec", [NormSpec.linf(), NormSpec.bv(), NormSpec.linf_w1d(), NormSpec.w1p(1.5)],
                             ids=str)
    def test_homogeneous(self, bspec, rng):
        grid = TorusGrid.cube(8, 2)
        op = OperatorSpec.identity(grid) if bspec.kind != "Linf" else OperatorSpec.divergence(grid)
        g = random_field(grid, rng)
        a = dual_norm(op, bspec, g, tol=1e-6)
        b = dual_norm(op, bspec, g * -3.0, tol=1e-6)
        assert b == pytest.approx(3.0 * a, rel=1e-5)

    def test_unsupported_combination(self, rng):
        from hierdecomp.jmin import DataTerm, oracle_solve, prox_banach

        grid = TorusGrid.cube(4, 2)
        g = random_field(grid, rng)
        with pytest.raises(UnsupportedCombinationError):
            prox_banach(g, NormSpec.linf_w1d(), 1.0)
        with pytest.raises(UnsupportedCombinationError):
            oracle_solve(g, OperatorSpec.identity(grid), NormSpec.lp(2.0), DataTerm(2.0, 1.0))


class TestDualityBound:
    """<T* g, u> <= ||u||_B ||T* g||_* on random pairs."""

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1),
           kind=st.sampled_from(["Linf-div", "BV-id", "LinfPlusW1d-id", "W1p-id"]))
    def test_bound(self, seed, kind):
        from hierdecomp.grid import compute_norm

        grid = TorusGrid.cube(8, 2)
        rng = np.random.default_rng(seed)
        name, opname = kind.split("-")
        bspec = NormSpec.w1p(2.5) if name == "W1p" else NormSpec(name)
        op = OperatorSpec.divergence(grid) if opname == "div" else OperatorSpec.identity(grid)
        g = random_field(grid, rng, op.out_components)
        u = random_field(grid, rng, op.in_components)
        pairing = inner_product(apply_dual(op, g), u)
        bound = compute_norm(u, bspec) * dual_norm(op, bspec, g, tol=1e-4)
        assert pairing <= bound * (1 + 1e-9) + 1e-12
