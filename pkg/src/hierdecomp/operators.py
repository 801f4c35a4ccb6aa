"""Linear operators on the torus, their adjoints, compatibility projections,
spectral utilities and dual norms.

The operators used inside the minimizers are finite-difference ones with
exact discrete adjoints: divergence uses backward differences (the negative
adjoint of the forward gradient) and curl uses forward differences (its
adjoint is the backward-difference curl).  Spectral versions appear only in
the utilities (inverse Laplacian, Riesz transforms, Hodge projection and the
classical solution).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _stencil
from .grid import (
    ComponentMismatchError,
    Field,
    GridMismatchError,
    NormSpec,
    TorusGrid,
    array_norm,
    pointwise_magnitude,
)

OPERATOR_KINDS = ("div", "curl", "identity")


class UnsupportedCombinationError(ValueError):
    """Raised for operator/norm pairs without an implemented dual norm or solver."""


class CompatibilityError(ValueError):
    """Raised when a right-hand side is not in the kernel of the compatibility projection."""


@dataclass(frozen=True)
class OperatorSpec:
    """A linear operator ``T`` on a grid: ``div``, ``curl`` (3D only) or ``identity``."""

    kind: str
    grid: TorusGrid

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator {self.kind!r}")
        if self.kind == "curl" and self.grid.dim != 3:
            raise ValueError("curl requires a 3D grid")

    @classmethod
    def divergence(cls, grid: TorusGrid) -> "OperatorSpec":
        return cls("div", grid)

    @classmethod
    def curl(cls, grid: TorusGrid) -> "OperatorSpec":
        return cls("curl", grid)

    @classmethod
    def identity(cls, grid: TorusGrid) -> "OperatorSpec":
        return cls("identity", grid)

    @property
    def in_components(self) -> int:
        return {"div": self.grid.dim, "curl": 3, "identity": 1}[self.kind]

    @property
    def out_components(self) -> int:
        return 3 if self.kind == "curl" else 1

    @property
    def projection(self) -> "CompatibilityProjection":
        kind = "hodge" if self.kind == "curl" else "zero_mean"
        return CompatibilityProjection(kind, self.grid)

    def forward(self, a: np.ndarray) -> np.ndarray:
        """Apply ``T`` to a raw ``(in_components, *shape)`` array."""
        h = self.grid.spacing
        if self.kind == "div":
            return _stencil.divergence(a, h)[np.newaxis]
        if self.kind == "curl":
            return _stencil.curl_forward(a, h)
        return a.copy()

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        """Apply ``T*`` (weighted adjoint) to a raw ``(out_components, *shape)`` array."""
        h = self.grid.spacing
        if self.kind == "div":
            return -_stencil.gradient(g[0], h)
        if self.kind == "curl":
            return _stencil.curl_backward(g, h)
        return g.copy()

    def norm_bound(self) -> float:
        """Operator norm in the weighted L2 metric, from the stencil symbols."""
        if self.kind == "identity":
            return 1.0
        if self.kind == "div":
            return float(np.sqrt(sum(4.0 / h**2 for h in self.grid.spacing)))
        # curl symbol: |d x a| <= |d| |a| with |d|^2 <= sum 4/h^2
        return float(np.sqrt(sum(4.0 / h**2 for h in self.grid.spacing)))

    def _check_input(self, f: Field, comps: int):
        if f.grid != self.grid:
            raise GridMismatchError("field grid differs from operator grid")
        if f.components != comps:
            raise ComponentMismatchError(
                f"{self.kind} expects {comps} components, got {f.components}")


def apply_forward(op: OperatorSpec, u: Field) -> Field:
    op._check_input(u, op.in_components)
    return Field(op.grid, op.forward(u.data))


def apply_dual(op: OperatorSpec, g: Field) -> Field:
    op._check_input(g, op.out_components)
    return Field(op.grid, op.adjoint(g.data))


@dataclass(frozen=True)
class CompatibilityProjection:
    """Projection ``P`` whose kernel is the set of admissible right-hand sides.

    ``zero_mean`` keeps only the mean; ``hodge`` keeps the mean plus the
    discrete irrotational part ``grad_b L^{-1} div_f g`` where ``L`` is the
    difference Laplacian.  Both are orthogonal projections, and the range of
    the matching difference operator lies exactly in their kernel.
    """

    kind: str
    grid: TorusGrid

    def apply_array(self, g: np.ndarray) -> np.ndarray:
        mean = g.reshape(g.shape[0], -1).mean(axis=1)
        out = np.broadcast_to(mean.reshape((-1,) + (1,) * self.grid.dim), g.shape).copy()
        if self.kind == "hodge":
            h = self.grid.spacing
            q = _stencil.solve_poisson(_stencil.divergence_forward(g, h), h)
            out += _stencil.gradient_backward(q, h)
        return out

    def apply(self, g: Field) -> Field:
        return g.with_data(self.apply_array(g.data))

    def defect(self, g: np.ndarray) -> float:
        """Relative L2 size of ``P g``; zero exactly for admissible data."""
        total = float(np.sqrt(np.sum(g * g)))
        if total == 0.0:
            return 0.0
        pg = self.apply_array(g)
        return float(np.sqrt(np.sum(pg * pg))) / total

    def require(self, g: np.ndarray, tol: float = 1e-10):
        defect = self.defect(g)
        if defect > tol:
            what = "nonzero mean" if self.kind == "zero_mean" else "nonzero mean or irrotational part"
            raise CompatibilityError(
                f"incompatible right-hand side: {what} (relative size {defect:.3g} > {tol:g})")


def _fft(a: np.ndarray, dim: int) -> np.ndarray:
    return np.fft.fftn(a, axes=tuple(range(a.ndim - dim, a.ndim)))


def _ifft(c: np.ndarray, dim: int) -> np.ndarray:
    return np.fft.ifftn(c, axes=tuple(range(c.ndim - dim, c.ndim))).real


def _require_zero_mean(f: Field, what: str, tol: float = 1e-10):
    if not f.is_scalar:
        raise ComponentMismatchError(f"{what} expects a scalar field")
    scale = max(float(np.abs(f.data).max()), np.finfo(float).tiny)
    if abs(float(f.data.mean())) > tol * scale:
        raise CompatibilityError(f"{what} requires zero-mean input")


def hodge_project(g: Field) -> Field:
    """Spectral irrotational part minus the mean: ``grad inv(Lap) div g - mean(g)``."""
    grid = g.grid
    if grid.dim != 3 or g.components != 3:
        raise ComponentMismatchError("hodge_project expects a 3-vector field on a 3D grid")
    xi = grid.wavenumbers(odd=True)
    k2 = sum(k * k for k in xi)
    safe = np.where(k2 > 0, k2, 1.0)
    coef = _fft(g.data, 3)
    dot = sum(xi[i] * coef[i] for i in range(3))
    out = np.stack([np.where(k2 > 0, xi[i] * dot / safe, 0.0) for i in range(3)])
    out[(slice(None), 0, 0, 0)] = -coef[(slice(None), 0, 0, 0)]
    return Field(grid, _ifft(out, 3))


def riesz_apply(f: Field, i: int, j: int) -> Field:
    """Composition of Riesz transforms, multiplier ``xi_i xi_j / |xi|^2``.

    Axes are numbered from 1.  The multiplier vanishes at ``xi = 0`` and the
    Nyquist wavenumber is treated as zero, so real fields stay real.
    """
    _require_zero_mean(f, "riesz_apply")
    grid = f.grid
    if not (1 <= i <= grid.dim and 1 <= j <= grid.dim):
        raise ValueError(f"axes must lie in 1..{grid.dim}")
    xi = grid.wavenumbers(odd=True)
    k2 = sum(k * k for k in xi)
    mult = np.where(k2 > 0, xi[i - 1] * xi[j - 1] / np.where(k2 > 0, k2, 1.0), 0.0)
    return Field(grid, _ifft(_fft(f.data, grid.dim) * mult, grid.dim))


def classical_solution(f: Field) -> Field:
    """Spectral vector field ``grad inv(Lap) f`` whose spectral divergence is ``f``."""
    _require_zero_mean(f, "classical_solution")
    grid = f.grid
    xi = grid.wavenumbers(odd=True)
    k2 = sum(k * k for k in xi)
    safe = np.where(k2 > 0, k2, 1.0)
    coef = _fft(f.values, grid.dim)
    out = np.stack([np.where(k2 > 0, -1j * k * coef / safe, 0.0) for k in xi])
    return Field(grid, _ifft(out, grid.dim))


def spectral_divergence(v: Field) -> Field:
    """Divergence computed with the spectral derivative (Nyquist treated as zero)."""
    grid = v.grid
    if v.components != grid.dim:
        raise ComponentMismatchError("spectral_divergence expects dim components")
    xi = grid.wavenumbers(odd=True)
    coef = _fft(v.data, grid.dim)
    return Field(grid, _ifft(sum(1j * xi[i] * coef[i] for i in range(grid.dim)), grid.dim))


def spectral_curl(u: Field) -> Field:
    """Curl of a 3-vector field computed with spectral derivatives."""
    grid = u.grid
    if grid.dim != 3 or u.components != 3:
        raise ComponentMismatchError("spectral_curl expects a 3-vector field")
    xi = grid.wavenumbers(odd=True)
    c = _fft(u.data, 3)
    d = lambda comp, ax: 1j * xi[ax] * c[comp]
    out = np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)])
    return Field(grid, _ifft(out, 3))


def dual_norm(op: OperatorSpec, bspec: NormSpec, g: Field, tol: float = 1e-4) -> float:
    """Dual norm ``||T* g||_*`` of ``T* g`` with respect to ``bspec``.

    For the sup norm (and for ``Lp``) the dual norm has a closed form.  For
    norms built on the gradient (``BV``, ``W1p``, ``LinfPlusW1d``) it is the
    value of an auxiliary convex program; the certified upper bound from
    :func:`dual_norm_bounds` is returned, which is within relative ``tol`` of
    the lower bound.
    """
    return dual_norm_bounds(op, bspec, g, tol=tol)[1]


def dual_norm_bounds(op: OperatorSpec, bspec: NormSpec, g: Field, tol: float = 1e-4,
                     max_iters: int = 200_000) -> tuple[float, float]:
    """Certified ``(lower, upper)`` bounds on ``||T* g||_*``.

    Exact cases return equal bounds.
    """
    op._check_input(g, op.out_components)
    v = op.adjoint(g.data)
    return array_dual_norm_bounds(v, op.grid, bspec, tol=tol, max_iters=max_iters)


def array_dual_norm_bounds(v: np.ndarray, grid: TorusGrid, bspec: NormSpec, tol: float = 1e-4,
                           max_iters: int = 200_000) -> tuple[float, float]:
    """Dual-norm bounds of a raw array ``v`` (the already-applied ``T* g``)."""
    w = grid.cell_volume
    if bspec.kind == "Linf":
        value = w * float(pointwise_magnitude(v, grid.dim).sum())
        return value, value
    if bspec.kind == "Lp":
        q = bspec.p / (bspec.p - 1.0)
        value = array_norm(v, grid, NormSpec.lp(q))
        return value, value
    from ._dualsolve import dual_norm_program

    return dual_norm_program(v, grid, bspec, tol=tol, max_iters=max_iters)
