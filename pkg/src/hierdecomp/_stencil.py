"""Periodic finite-difference stencils on raw sample arrays.

All routines act on the trailing ``dim`` axes of an array (the spatial axes);
any leading axes are treated as a batch.  The forward gradient and backward
divergence are exact negative adjoints of each other in the plain Euclidean
pairing, and therefore also in the cell-volume weighted one.
"""

from __future__ import annotations

import numpy as np


def _slices(ndim: int, axis: int, lo, hi):
    index = [slice(None)] * ndim
    index[axis] = slice(lo, hi)
    return tuple(index)


def _component(i: int, dim: int):
    # selects entry i of the axis sitting just before the dim spatial axes
    return (Ellipsis, i) + (slice(None),) * dim


def forward_diff(a: np.ndarray, axis: int, h: float, out: np.ndarray | None = None) -> np.ndarray:
    """(a(x + e) - a(x)) / h with periodic wrap along ``axis``."""
    if out is None:
        out = np.empty_like(a)
    n = a.shape[axis]
    nd = a.ndim
    np.subtract(a[_slices(nd, axis, 1, n)], a[_slices(nd, axis, 0, n - 1)],
                out=out[_slices(nd, axis, 0, n - 1)])
    np.subtract(a[_slices(nd, axis, 0, 1)], a[_slices(nd, axis, n - 1, n)],
                out=out[_slices(nd, axis, n - 1, n)])
    out *= 1.0 / h
    return out


def backward_diff(a: np.ndarray, axis: int, h: float, out: np.ndarray | None = None) -> np.ndarray:
    """(a(x) - a(x - e)) / h with periodic wrap along ``axis``."""
    if out is None:
        out = np.empty_like(a)
    n = a.shape[axis]
    nd = a.ndim
    np.subtract(a[_slices(nd, axis, 1, n)], a[_slices(nd, axis, 0, n - 1)],
                out=out[_slices(nd, axis, 1, n)])
    np.subtract(a[_slices(nd, axis, 0, 1)], a[_slices(nd, axis, n - 1, n)],
                out=out[_slices(nd, axis, 0, 1)])
    out *= 1.0 / h
    return out


def gradient(a: np.ndarray, spacing: tuple[float, ...]) -> np.ndarray:
    """Forward-difference gradient.

    Parameters
    ----------
    a : ndarray, shape (..., *n)
    spacing : per-axis grid spacing, ``len(spacing) == dim``

    Returns
    -------
    ndarray, shape (..., dim, *n)
    """
    dim = len(spacing)
    lead = a.shape[: a.ndim - dim]
    out = np.empty(lead + (dim,) + a.shape[a.ndim - dim:])
    for i, h in enumerate(spacing):
        forward_diff(a, a.ndim - dim + i, h, out=out[_component(i, dim)])
    return out


def divergence(v: np.ndarray, spacing: tuple[float, ...]) -> np.ndarray:
    """Backward-difference divergence, the negative adjoint of :func:`gradient`.

    ``v`` has shape (..., dim, *n); the result has shape (..., *n).
    """
    dim = len(spacing)
    ax0 = v.ndim - dim
    out = backward_diff(v[_component(0, dim)], ax0 - 1, spacing[0])
    tmp = np.empty_like(out)
    for i in range(1, dim):
        out += backward_diff(v[_component(i, dim)], ax0 - 1 + i, spacing[i], out=tmp)
    return out


def curl_forward(u: np.ndarray, spacing: tuple[float, float, float]) -> np.ndarray:
    """Curl of a 3-vector array of shape (3, n1, n2, n3) built from forward differences."""
    d = lambda comp, ax: forward_diff(u[comp], ax, spacing[ax])
    return np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)])


def curl_backward(g: np.ndarray, spacing: tuple[float, float, float]) -> np.ndarray:
    """Curl built from backward differences; the exact adjoint of :func:`curl_forward`."""
    d = lambda comp, ax: backward_diff(g[comp], ax, spacing[ax])
    return np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)])


def divergence_forward(v: np.ndarray, spacing: tuple[float, ...]) -> np.ndarray:
    """Forward-difference divergence of a (dim, *n) array (annihilates forward curls)."""
    out = forward_diff(v[0], 0, spacing[0])
    for i in range(1, len(spacing)):
        out += forward_diff(v[i], i, spacing[i])
    return out


def gradient_backward(a: np.ndarray, spacing: tuple[float, ...]) -> np.ndarray:
    """Backward-difference gradient of a scalar array of shape ``*n``."""
    return np.stack([backward_diff(a, i, h) for i, h in enumerate(spacing)])


def laplacian_symbol(shape: tuple[int, ...], spacing: tuple[float, ...]) -> np.ndarray:
    """Fourier symbol of the five/seven-point Laplacian ``div_b grad_f`` (nonpositive)."""
    sym = np.zeros(shape)
    for i, (n, h) in enumerate(zip(shape, spacing)):
        k = np.fft.fftfreq(n, d=1.0 / n)
        part = -(2.0 - 2.0 * np.cos(k * h)) / h**2
        bshape = [1] * len(shape)
        bshape[i] = n
        sym = sym + part.reshape(bshape)
    return sym


def solve_poisson(rhs: np.ndarray, spacing: tuple[float, ...]) -> np.ndarray:
    """Zero-mean solution of the discrete Poisson equation ``div_b grad_f q = rhs``.

    The mean of ``rhs`` is discarded.  Leading batch axes are allowed.
    """
    dim = len(spacing)
    axes = tuple(range(rhs.ndim - dim, rhs.ndim))
    shape = rhs.shape[rhs.ndim - dim:]
    sym = laplacian_symbol(shape, spacing)
    sym.flat[0] = 1.0
    coef = np.fft.fftn(rhs, axes=axes) / sym
    coef[(Ellipsis,) + (0,) * dim] = 0.0
    return np.fft.ifftn(coef, axes=axes).real
