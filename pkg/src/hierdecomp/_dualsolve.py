"""Certified dual norms for gradient-based norms.

For ``B(u) = sum_k N_k(K_k u)`` with ``K_k`` the identity or the gradient,
the dual norm of ``v`` is ``1 / s*`` where

    s* = max { s : s v = sum_k K_k^* y_k,  N_k^*(y_k) <= 1 }.

The program is solved with a primal-dual iteration.  Every iterate yields
two certified bounds: the multiplier ``u`` gives the lower bound
``<v, u> / B(u)``, and repairing the split so that it holds exactly (through
the identity term if there is one, otherwise through an exact periodic
Poisson solve) gives an upper bound.
"""

from __future__ import annotations

import math

import numpy as np

from . import _prox, _stencil
from .grid import NormSpec, TorusGrid, array_norm, pointwise_magnitude


class _Term:
    """One summand ``N(K u)`` of the norm with its dual-ball machinery."""

    def __init__(self, kind: str, ball: str, grid: TorusGrid, q: float | None = None):
        self.kind = kind  # "id" or "grad"
        self.ball = ball  # "l1", "clip" or "lq"
        self.q = q
        self.grid = grid

    def apply(self, u: np.ndarray) -> np.ndarray:
        return u if self.kind == "id" else _stencil.gradient(u, self.grid.spacing)

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        return y if self.kind == "id" else -_stencil.divergence(y, self.grid.spacing)

    def norm_sq(self) -> float:
        if self.kind == "id":
            return 1.0
        return sum(4.0 / h**2 for h in self.grid.spacing)

    def project(self, y: np.ndarray) -> np.ndarray:
        w, dim = self.grid.cell_volume, self.grid.dim
        if self.ball == "l1":
            return _prox.project_l1_ball(y, 1.0 / w, dim)
        if self.ball == "clip":
            return _prox.clip_magnitude(y, 1.0, axes=(1,))
        return _prox.project_lq_ball(y, 1.0, self.q, w, dim)

    def dual_value(self, y: np.ndarray) -> float:
        """Dual norm ``N^*(y)`` in the weighted pairing."""
        w, dim = self.grid.cell_volume, self.grid.dim
        if self.ball == "l1":
            return w * float(pointwise_magnitude(y, dim).sum())
        if self.ball == "clip":
            return float(np.sqrt(np.sum(y * y, axis=1)).max())
        mag = pointwise_magnitude(y, dim)
        return float(w * np.sum(mag ** self.q)) ** (1.0 / self.q)


def norm_terms(bspec: NormSpec, grid: TorusGrid) -> list[_Term]:
    d = grid.dim
    if bspec.kind == "BV":
        return [_Term("grad", "clip", grid)]
    if bspec.kind == "W1p":
        return [_Term("grad", "lq", grid, q=bspec.p / (bspec.p - 1.0))]
    if bspec.kind == "LinfPlusW1d":
        return [_Term("id", "l1", grid), _Term("grad", "lq", grid, q=d / (d - 1.0))]
    from .operators import UnsupportedCombinationError

    raise UnsupportedCombinationError(f"no auxiliary dual-norm program for {bspec}")


def repair_upper_bound(target: np.ndarray, grad_duals: np.ndarray | None, terms: list[_Term]) -> float:
    """Upper bound on the dual norm of ``target`` from an approximate split.

    ``grad_duals`` approximates the dual variable of the gradient term.  The
    split ``target = y_id - div y_grad`` is made exact and the largest dual
    ball value is returned.
    """
    grid = terms[-1].grid
    grad = next((t for t in terms if t.kind == "grad"), None)
    ident = next((t for t in terms if t.kind == "id"), None)
    if grad is None:
        return ident.dual_value(target)
    y = np.zeros(target.shape[:1] + (grid.dim,) + target.shape[1:]) if grad_duals is None else grad_duals
    if ident is not None:
        y_id = target + _stencil.divergence(y, grid.spacing)
        return max(ident.dual_value(y_id), grad.dual_value(y))
    # no identity term: the mean of the target must vanish
    err = target + _stencil.divergence(y, grid.spacing)
    q = _stencil.solve_poisson(err, grid.spacing)
    fixed = y - _stencil.gradient(q, grid.spacing)
    return grad.dual_value(fixed)


def primal_norm(u: np.ndarray, grid: TorusGrid, bspec: NormSpec) -> float:
    return array_norm(u, grid, bspec)


def dual_norm_program(v: np.ndarray, grid: TorusGrid, bspec: NormSpec, tol: float = 1e-4,
                      max_iters: int = 200_000, check_every: int = 50) -> tuple[float, float]:
    """Certified ``(lower, upper)`` bounds on the dual norm of ``v``.

    Iterates until ``upper - lower <= tol * upper`` or ``max_iters``.
    """
    terms = norm_terms(bspec, grid)
    w = grid.cell_volume
    scale = math.sqrt(w * float(np.sum(v * v)))
    if scale == 0.0:
        return 0.0, 0.0
    vh = v / scale
    if all(t.kind == "grad" for t in terms):
        means = vh.reshape(vh.shape[0], -1).mean(axis=1)
        if np.max(np.abs(means)) > 1e-12 * np.abs(vh).max():
            # constants have zero norm but pair nontrivially with v
            return math.inf, math.inf

    lsq = 1.0 + sum(t.norm_sq() for t in terms)
    tau = 1.0 / math.sqrt(lsq)
    sigma = 1.0 / (tau * lsq)

    s = 0.0
    ys = [np.zeros_like(t.apply(vh)) for t in terms]
    u = np.zeros_like(vh)

    def constraint(s_val, y_list):
        out = s_val * vh
        for t, y in zip(terms, y_list):
            out = out - t.apply_adjoint(y)
        return out

    lower, upper = 0.0, math.inf
    for it in range(1, max_iters + 1):
        pair = w * float(np.vdot(u, vh))
        s_new = max(0.0, s - tau * (pair - 1.0))
        ys_new = [t.project(y + tau * t.apply(u)) for t, y in zip(terms, ys)]
        ext = constraint(2.0 * s_new - s, [2.0 * yn - y for yn, y in zip(ys_new, ys)])
        u = u + sigma * ext
        s, ys = s_new, ys_new
        if it % check_every == 0 or it == max_iters:
            bu = primal_norm(u, grid, bspec)
            if bu > 0:
                lower = max(lower, abs(w * float(np.vdot(u, vh))) / bu)
            if s > 0:
                grad_y = next((y for t, y in zip(terms, ys) if t.kind == "grad"), None)
                upper = min(upper, repair_upper_bound(vh, None if grad_y is None else grad_y / s, terms))
            if upper < math.inf and upper - lower <= tol * upper:
                break
    return lower * scale, upper * scale
