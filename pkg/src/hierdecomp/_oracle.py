"""Independent reference solver for tiny instances.

Difference operators are built here as sparse matrices from index
arithmetic (not from the stencil kernels), and the convex problem is solved
to high accuracy by an interior-point conic solver.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .grid import NormSpec
from .operators import OperatorSpec, UnsupportedCombinationError


def forward_difference_matrix(shape: tuple[int, ...], axis: int, h: float) -> sp.csr_matrix:
    """Sparse periodic forward difference on C-order flattened samples."""
    n = int(np.prod(shape))
    idx = np.arange(n).reshape(shape)
    nxt = np.roll(idx, -1, axis=axis).ravel()
    rows = np.concatenate([np.arange(n), np.arange(n)])
    cols = np.concatenate([nxt, np.arange(n)])
    vals = np.concatenate([np.full(n, 1.0 / h), np.full(n, -1.0 / h)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def operator_matrix(op: OperatorSpec) -> sp.csr_matrix:
    """Sparse matrix of ``T`` acting on component-major flattened fields."""
    grid = op.grid
    d = [forward_difference_matrix(grid.shape, a, h) for a, h in enumerate(grid.spacing)]
    n = grid.size
    if op.kind == "identity":
        return sp.identity(n, format="csr")
    if op.kind == "div":
        # backward divergence is minus the transpose of the forward gradient
        return sp.hstack([-m.T for m in d]).tocsr()
    z = sp.csr_matrix((n, n))
    return sp.bmat([[z, -d[2], d[1]], [d[2], z, -d[0]], [-d[1], d[0], z]]).tocsr()


def solve_conic(f: np.ndarray, op: OperatorSpec, bspec: NormSpec, dt) -> tuple[np.ndarray, float, sp.csr_matrix]:
    import cvxpy as cp

    grid = op.grid
    n, w = grid.size, grid.cell_volume
    m_in, m_out = op.in_components, op.out_components
    tmat = operator_matrix(op)
    d = [forward_difference_matrix(grid.shape, a, h) for a, h in enumerate(grid.spacing)]

    x = cp.Variable(m_in * n)
    comps = [x[c * n:(c + 1) * n] for c in range(m_in)]
    if bspec.kind == "Linf":
        reg = cp.max(cp.norm(cp.vstack(comps), 2, axis=0))
    elif bspec.kind == "BV":
        reg = 0
        for c in comps:
            reg = reg + w * cp.sum(cp.norm(cp.vstack([m @ c for m in d]), 2, axis=0))
    elif bspec.kind == "W1p":
        jac = cp.vstack([m @ c for c in comps for m in d])
        reg = w ** (1.0 / bspec.p) * cp.pnorm(cp.norm(jac, 2, axis=0), bspec.p)
    elif bspec.kind == "LinfPlusW1d":
        jac = cp.vstack([m @ c for c in comps for m in d])
        q = float(grid.dim)
        reg = cp.max(cp.norm(cp.vstack(comps), 2, axis=0)) + w ** (1.0 / q) * cp.pnorm(cp.norm(jac, 2, axis=0), q)
    else:
        raise UnsupportedCombinationError(f"oracle does not handle {bspec}")

    resid = f.ravel() - tmat @ x
    if dt.p == 2.0:
        data = w * cp.sum_squares(resid)
    elif m_out == 1:
        data = w * cp.sum(cp.power(cp.abs(resid), dt.p))
    else:
        mags = cp.norm(cp.vstack([resid[c * n:(c + 1) * n] for c in range(m_out)]), 2, axis=0)
        data = w * cp.sum(cp.power(mags, dt.p))
    problem = cp.Problem(cp.Minimize(reg + dt.lam * data))
    problem.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12,
                  max_iter=500)
    if x.value is None:
        raise RuntimeError(f"conic oracle failed: {problem.status}")
    return x.value.reshape((m_in,) + grid.shape), float(problem.value), tmat
