"""Projections onto dual unit balls and scalar shrinkage equations.

Arrays follow the ``(*lead, *spatial)`` convention of :mod:`._stencil`;
magnitudes are Euclidean over all leading axes unless stated otherwise.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq


class SolverFailure(RuntimeError):
    """An inner scalar solve failed to converge."""


def _magnitude(a: np.ndarray, dim: int) -> np.ndarray:
    lead = a.ndim - dim
    if lead == 0:
        return np.abs(a)
    return np.sqrt(np.sum(a * a, axis=tuple(range(lead))))


def _rescale(a: np.ndarray, mag: np.ndarray, new_mag: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(mag > 0, new_mag / mag, 0.0)
    return a * factor


def project_l1_ball(a: np.ndarray, radius: float, dim: int) -> np.ndarray:
    """Euclidean projection onto ``{y : sum_x |y(x)| <= radius}``.

    Pointwise magnitudes are projected onto the simplex-type ball with the
    exact sort-based algorithm; directions are kept.
    """
    mag = _magnitude(a, dim)
    flat = mag.ravel()
    if flat.sum() <= radius:
        return a.copy()
    if radius <= 0:
        return np.zeros_like(a)
    s = np.sort(flat)[::-1]
    cs = np.cumsum(s) - radius
    idx = np.arange(1, s.size + 1)
    k = np.flatnonzero(s - cs / idx > 0)[-1]
    theta = cs[k] / (k + 1)
    return _rescale(a, mag, np.maximum(mag - theta, 0.0))


def clip_magnitude(a: np.ndarray, radius: float, axes: tuple[int, ...]) -> np.ndarray:
    """Shrink vectors whose Euclidean norm over ``axes`` exceeds ``radius``."""
    mag = np.sqrt(np.sum(a * a, axis=axes, keepdims=True))
    return a / np.maximum(1.0, mag / radius)


def shrink_power(d: np.ndarray, c: float | np.ndarray, p: float) -> np.ndarray:
    """Solve ``s + c * s**(p - 1) = d`` for ``s >= 0`` elementwise (``d >= 0``).

    This is the optimality equation of ``min_s c/p * s**p + (s - d)**2 / 2``.
    Closed forms are used for p in {1.5, 2, 3}; otherwise a bracketed Newton
    iteration converges to a relative accuracy of about 1e-15.
    """
    d = np.asarray(d, dtype=np.float64)
    c = np.broadcast_to(np.asarray(c, dtype=np.float64), d.shape)
    if p == 2.0:
        return d / (1.0 + c)
    if p == 3.0:
        return 2.0 * d / (1.0 + np.sqrt(1.0 + 4.0 * c * d))
    if p == 1.5:
        den = c + np.sqrt(c * c + 4.0 * d)
        root = 2.0 * d / np.where(den > 0, den, 1.0)
        return root * root
    return _shrink_newton(d, c, p)


def _shrink_newton(d: np.ndarray, c: np.ndarray, p: float) -> np.ndarray:
    lo = np.zeros_like(d)
    hi = d.copy()
    # the linearised guess lies inside the bracket and is exact for tiny c
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        guess = np.minimum(d, np.where(c > 0, (d / np.where(c > 0, c, 1.0)) ** (1.0 / (p - 1.0)), d))
    s = np.clip(guess, 0.0, d)
    active = (d > 0) & (c > 0)
    for _ in range(100):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            g = s + c * s ** (p - 1.0) - d
            dg = 1.0 + c * (p - 1.0) * s ** (p - 2.0)
        lo = np.where(g <= 0, s, lo)
        hi = np.where(g >= 0, s, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(np.isfinite(dg) & (dg > 0), g / dg, 0.0)
        trial = s - step
        bad = ~np.isfinite(trial) | (trial <= lo) | (trial >= hi)
        new = np.where(bad, 0.5 * (lo + hi), trial)
        change = np.abs(new - s)
        s = np.where(active, new, s)
        if not np.any(active & (change > 1e-15 * d + 1e-300)):
            break
    else:
        raise SolverFailure("power shrinkage did not converge in 100 iterations")
    return np.where(active, s, np.where(c > 0, 0.0, d))


def project_lq_ball(a: np.ndarray, radius: float, q: float, weight: float, dim: int) -> np.ndarray:
    """Euclidean projection onto ``{y : sum_x weight |y(x)|**q <= radius**q}``."""
    mag = _magnitude(a, dim)
    total = weight * np.sum(mag ** q)
    if total <= radius ** q:
        return a.copy()
    if radius <= 0:
        return np.zeros_like(a)
    flat = mag.ravel()
    target = radius ** q

    def excess(c: float) -> float:
        return weight * np.sum(shrink_power(flat, c, q) ** q) - target

    # for large c, s ~ (d/c)^(1/(q-1)) gives a guaranteed upper bracket
    hi = (weight * np.sum(flat ** (q / (q - 1.0))) / target) ** ((q - 1.0) / q)
    hi = max(hi, 1e-300)
    while excess(hi) > 0:
        hi *= 2.0
    c = brentq(excess, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)
    new = shrink_power(flat, c, q).reshape(mag.shape)
    # guard against rounding pushing the result a hair outside the ball
    scaled = weight * np.sum(new ** q)
    if scaled > target:
        new *= (target / scaled) ** (1.0 / q)
    return _rescale(a, mag, new)
