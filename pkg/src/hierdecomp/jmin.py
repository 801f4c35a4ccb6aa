"""One refinement step: minimize ``||u||_B + lam * sum_x w |f - T u|^p``.

The minimizer is a first-order primal-dual (Chambolle-Pock) iteration on the
saddle-point form of the problem.  The nonsmooth pieces are handled by
proximal maps: the sup norm by the Moreau identity with an exact l1-ball
projection, gradient-based norms through dual variables in their unit
balls, and the data term either directly (when ``T`` is the identity) or
through its convex conjugate.

Stopping is certificate based.  A pair ``(u, r)`` with ``r = f - T u`` is a
minimizer exactly when

* ``<T* phi(r), u> = ||u||_B / lam`` (extremality), and
* ``lam * ||T* phi(r)||_* = 1`` (or ``<= 1`` when ``u = 0``),

with ``phi(r) = p |r|^(p-2) r``.  Both are evaluated from exact residuals; the
dual norm is bounded from above by repairing the iteration's own dual
variables into an exactly feasible split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _prox, _stencil
from ._dualsolve import norm_terms, repair_upper_bound
from .grid import (
    ComponentMismatchError,
    Field,
    NormSpec,
    array_norm,
    pointwise_magnitude,
)
from .operators import (
    OperatorSpec,
    UnsupportedCombinationError,
    array_dual_norm_bounds,
)


@dataclass(frozen=True)
class DataTerm:
    """Power data term ``lam * sum_x w |r(x)|^p`` with ``1 < p < inf``."""

    p: float
    lam: float

    def __post_init__(self):
        if not (1.0 < float(self.p) < math.inf):
            raise ValueError(f"data exponent must satisfy 1 < p < inf, got {self.p}")
        if not (float(self.lam) > 0.0 and math.isfinite(self.lam)):
            raise ValueError(f"scale lam must be positive, got {self.lam}")
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "lam", float(self.lam))

    def with_scale(self, lam: float) -> "DataTerm":
        return DataTerm(self.p, lam)


def power_energy(r: np.ndarray, p: float, w: float, dim: int) -> float:
    """``sum_x w |r(x)|^p`` with Euclidean pointwise magnitude."""
    return w * float(np.sum(pointwise_magnitude(r, dim) ** p))


def phi(r: np.ndarray, p: float, dim: int) -> np.ndarray:
    """Derivative of the power energy density: ``p |r|^(p-2) r``."""
    if p == 2.0:
        return 2.0 * r
    mag = pointwise_magnitude(r, dim)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(mag > 0, p * mag ** (p - 2.0), 0.0)
    return r * factor


def phi_field(r: Field, p: float) -> Field:
    return r.with_data(phi(r.data, p, r.grid.dim))


def conjugate_energy(g: np.ndarray, p: float, w: float, dim: int) -> float:
    """``sum_x w Phi*(g(x))`` for ``Phi(t) = |t|^p``: ``Phi*(s) = (p-1) (|s|/p)^(p/(p-1))``."""
    q = p / (p - 1.0)
    return w * (p - 1.0) * float(np.sum((pointwise_magnitude(g, dim) / p) ** q))


@dataclass(frozen=True)
class SolverParams:
    """Primal-dual iteration controls.

    Attributes
    ----------
    max_iters : iteration limit.
    tol : certificate tolerance; convergence requires both the extremality
        gap and ``|lam * dual norm - 1|`` to be at most ``tol``.
    step_ratio : primal/dual step balance (1 is the scale-matched default).
    op_norm : operator norm of ``T``; the stencil symbol bound when omitted.
    check_every : iterations between certificate evaluations.
    accelerate : use the accelerated variant when the strongly convex data
        conjugate is the only dual block.
    adapt : rebalance the primal and dual steps from the certificates at
        every check (non-accelerated variant).
    """

    max_iters: int = 100_000
    tol: float = 1e-6
    step_ratio: float = 1.0
    op_norm: float | None = None
    check_every: int = 25
    accelerate: bool = True
    adapt: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not (0.0 < self.tol < 1.0):
            raise ValueError(f"tol must lie in (0, 1), got {self.tol}")
        if not self.step_ratio > 0:
            raise ValueError("step_ratio must be positive")
        if self.op_norm is not None and not self.op_norm > 0:
            raise ValueError("op_norm must be positive")
        if self.check_every < 1:
            raise ValueError("check_every must be at least 1")


@dataclass(frozen=True, eq=False)
class JMinResult:
    """Minimizing pair with its certificates.

    ``r`` is recomputed as ``f - T u``.  ``dual_norm`` is a certified upper
    bound on ``||T* phi(r)||_*`` (exact for the sup norm).
    """

    u: Field
    r: Field
    objective: float
    iterations: int
    extremality_gap: float
    dual_norm_gap: float
    converged: bool
    lam: float = 0.0
    b_norm: float = 0.0
    dual_norm: float = 0.0
    duality_gap: float = math.nan
    diagnostics: dict = field(default_factory=dict)

    @property
    def is_zero(self) -> bool:
        return self.b_norm == 0.0


def prox_data_power_array(v: np.ndarray, f: np.ndarray, lam: float, p: float, tau: float, dim: int) -> np.ndarray:
    """Pointwise ``argmin_s tau*lam*|f - s|^p + |s - v|^2 / 2`` (vector samples radially)."""
    if tau == 0.0:
        return v.copy()
    d = v - f
    if p == 2.0:
        return f + d / (1.0 + 2.0 * tau * lam)
    mag = pointwise_magnitude(d, dim)
    new = _prox.shrink_power(mag, tau * lam * p, p)
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(mag > 0, new / mag, 0.0)
    return f + d * factor


def prox_data_power(v: Field, f: Field, dt: DataTerm, tau: float) -> Field:
    """Proximal map of ``s -> tau * lam * sum_x w |f - s|^p`` in the weighted metric.

    The cell weight cancels against the weighted metric, so the map acts
    sample by sample; ``p = 2`` has the closed form ``(v + 2 a f) / (1 + 2 a)``
    with ``a = tau * lam``.
    """
    v._check(f)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return v.with_data(prox_data_power_array(v.data, f.data, dt.lam, dt.p, tau, v.grid.dim))


def prox_linf_array(v: np.ndarray, tau: float, w: float, dim: int) -> np.ndarray:
    """Proximal map of ``tau * max_x |v(x)|`` in the weighted metric."""
    return v - _prox.project_l1_ball(v, tau / w, dim)


def prox_banach(v: Field, bspec: NormSpec, tau: float, inner_tol: float = 1e-10,
                max_inner: int = 200_000) -> Field:
    """Proximal map of ``tau * ||.||_B`` in the weighted metric.

    ``Linf`` is exact.  ``BV`` and ``W1p`` are solved through their dual
    (projected gradient with momentum on the dual ball variable) until the
    primal iterate moves less than ``inner_tol`` relative to ``max |v|``.
    ``LinfPlusW1d`` is not proximable as a whole; its terms are split inside
    :func:`minimize_j`.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    grid = v.grid
    if tau == 0.0:
        return v
    if bspec.kind == "Linf":
        return v.with_data(prox_linf_array(v.data, tau, grid.cell_volume, grid.dim))
    if bspec.kind not in ("BV", "W1p"):
        raise UnsupportedCombinationError(f"prox_banach does not support {bspec}; split its terms")
    (term,) = norm_terms(bspec, grid)
    h = grid.spacing
    lsq = sum(4.0 / s**2 for s in h)
    y = np.zeros((v.components, grid.dim) + grid.shape)
    z_acc = y.copy()
    t = 1.0
    scale = max(float(np.abs(v.data).max()), np.finfo(float).tiny)
    prev = v.data.copy()
    for _ in range(max_inner):
        primal = v.data + tau * _stencil.divergence(z_acc, h)
        y_new = term.project(z_acc + _stencil.gradient(primal, h) / (tau * lsq))
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z_acc = y_new + (t - 1.0) / t_new * (y_new - y)
        y, t = y_new, t_new
        current = v.data + tau * _stencil.divergence(y, h)
        if np.abs(current - prev).max() <= inner_tol * scale:
            break
        prev = current
    return v.with_data(v.data + tau * _stencil.divergence(y, h))


def estimate_operator_norm(op: OperatorSpec, iters: int = 50, seed: int = 0) -> float:
    """Power-iteration estimate of ``||T||`` from ``T* T`` (a lower estimate)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((op.in_components,) + op.grid.shape)
    x /= np.linalg.norm(x)
    value = 0.0
    for _ in range(iters):
        y = op.adjoint(op.forward(x))
        value = float(np.linalg.norm(y))
        if value == 0.0:
            return 0.0
        x = y / value
    return math.sqrt(value)


class _Block:
    """Dual block of the saddle problem: ``K``, its adjoint and ``prox_{sigma F*}``."""

    def __init__(self, name, forward, adjoint, norm, scale, prox_conj):
        self.name = name
        self.forward = forward
        self.adjoint = adjoint
        self.norm = norm
        self.scale = scale
        self.prox_conj = prox_conj


class _Problem:
    """Saddle-point assembly for one (T, B, p, lam) instance."""

    def __init__(self, f: np.ndarray, op: OperatorSpec, bspec: NormSpec, dt: DataTerm, params: SolverParams):
        grid = op.grid
        self.f, self.op, self.bspec, self.dt, self.params = f, op, bspec, dt, params
        self.grid = grid
        self.w = w = grid.cell_volume
        self.dim = dim = grid.dim
        self.lam, self.p = dt.lam, dt.p
        volume = grid.volume
        self.terms = _regularizer_terms(bspec, grid)
        self.identity_T = op.kind == "identity"
        lt = params.op_norm if params.op_norm is not None else op.norm_bound()
        lgrad = math.sqrt(sum(4.0 / s**2 for s in grid.spacing))

        # zero data is short-circuited later; any positive scale keeps the steps finite
        f_rms = math.sqrt(float(np.mean(pointwise_magnitude(f, dim) ** 2))) or 1.0
        self.u_scale = f_rms / lt
        lam, p = self.lam, self.p
        data_scale = lam * p * f_rms ** (p - 1.0)

        def ball_block(term):
            if term.kind == "id":
                fwd = lambda u: u
                adj = lambda y: y
                norm = 1.0
            else:
                fwd = lambda u: _stencil.gradient(u, grid.spacing)
                adj = lambda y: -_stencil.divergence(y, grid.spacing)
                norm = lgrad
            ball_scale = {"l1": 1.0 / volume, "clip": 1.0}.get(term.ball, volume ** (-1.0 / (term.q or 2.0)))
            return _Block(f"{term.kind}:{term.ball}", fwd, adj, norm, ball_scale,
                          lambda z, sigma, t=term: t.project(z))

        def data_prox_conj(z, sigma):
            return z - sigma * prox_data_power_array(z / sigma, f, lam, p, 1.0 / sigma, dim)

        data_block = _Block("data", op.forward, op.adjoint, lt, data_scale, data_prox_conj)

        self.blocks: list[_Block] = []
        if self.identity_T:
            self.primal = "data"
            self.blocks = [ball_block(t) for t in self.terms]
        else:
            linf_first = self.terms[0].kind == "id" and self.terms[0].ball == "l1"
            self.primal = "linf" if linf_first else "none"
            rest = self.terms[1:] if linf_first else self.terms
            self.blocks = [data_block] + [ball_block(t) for t in rest]

        # strong convexity available to the accelerated variants
        # accelerating the primal side (identity T) stalls the dual certificate
        self.mode = "plain"
        if self.identity_T and p == 2.0 and len(self.terms) == 1 and self.terms[0].kind == "grad":
            # a plain proximal problem: projected gradient on the dual ball
            self.mode = "fgp"
        elif params.accelerate and p == 2.0 and self.primal != "data" and len(self.blocks) == 1:
            self.mode, self.gamma = "dual", 1.0 / (2.0 * lam)

        ratio = params.step_ratio
        self.sigmas = [b.scale / (ratio * self.u_scale * b.norm) for b in self.blocks]
        self.tau = 1.0 / sum(s * b.norm**2 for s, b in zip(self.sigmas, self.blocks))

        self.grad_block = next((i for i, b in enumerate(self.blocks) if b.name.startswith("grad")), None)
        self.zero_energy = power_energy(f, p, w, dim)
        self.eps = 1e-14 * lam * self.zero_energy
        # constants are free for gradient-only norms when T is the identity
        self.shift_constants = self.identity_T and all(t.kind == "grad" for t in self.terms)

    def prox_primal(self, v: np.ndarray, tau: float) -> np.ndarray:
        if self.primal == "data":
            return prox_data_power_array(v, self.f, self.lam, self.p, tau, self.dim)
        if self.primal == "linf":
            return prox_linf_array(v, tau, self.w, self.dim)
        return v

    def bnorm(self, u: np.ndarray) -> float:
        return array_norm(u, self.grid, self.bspec)

    def objective(self, u: np.ndarray) -> float:
        r = self.f - self.op.forward(u)
        return self.bnorm(u) + self.lam * power_energy(r, self.p, self.w, self.dim)

    def best_shift(self, u: np.ndarray) -> np.ndarray:
        """Add the constant that minimizes the data term (keeps ``B(u)``)."""
        if not self.shift_constants:
            return u
        r = self.f - u
        if self.p == 2.0:
            return u + r.mean()
        p = self.p
        mean_phi = lambda c: float(np.mean(np.sign(r - c) * np.abs(r - c) ** (p - 1.0)))
        lo, hi = float(r.min()), float(r.max())
        if lo == hi:
            return u + lo
        return u + brentq(mean_phi, lo, hi, xtol=1e-15 * max(abs(lo), abs(hi)), rtol=1e-15)

    def dual_upper(self, r: np.ndarray, grad_dual: np.ndarray | None) -> float:
        """Certified upper bound on ``||T* phi(r)||_*``."""
        v = self.op.adjoint(phi(r, self.p, self.dim))
        if self.bspec.kind in ("Linf", "Lp"):
            return array_dual_norm_bounds(v, self.grid, self.bspec)[1]
        if self.shift_constants:
            mean = np.abs(v.reshape(v.shape[0], -1).mean(axis=1)).max()
            if mean > 1e-10 * max(float(np.abs(v).max()), np.finfo(float).tiny):
                return math.inf
        guess = None if grad_dual is None else grad_dual / self.lam
        return repair_upper_bound(v, guess, self.terms)

    def certify(self, u: np.ndarray, grad_dual: np.ndarray | None) -> dict:
        """Certificates of the candidate ``u`` (already shifted if applicable)."""
        lam, p, w, dim = self.lam, self.p, self.w, self.dim
        tu = self.op.forward(u)
        r = self.f - tu
        bu = self.bnorm(u)
        energy = power_energy(r, p, w, dim)
        obj = bu + lam * energy
        pair = w * float(np.vdot(phi(r, p, dim), tu))
        b = bu / lam
        ext = abs(pair - b) / max(b, self.eps) if bu > 0 else 0.0
        dn = self.dual_upper(r, grad_dual)
        dn_gap = abs(lam * dn - 1.0) if bu > 0 else max(0.0, lam * dn - 1.0)
        # dual point lam*phi(r), scaled into the dual feasible set
        g = lam * phi(r, p, dim)
        scale = max(1.0, lam * dn) if math.isfinite(dn) else math.inf
        if math.isfinite(scale):
            g = g / scale
            dual_obj = w * float(np.vdot(g, self.f)) - lam * conjugate_energy(g / lam, p, w, dim)
            gap = (obj - dual_obj) / max(obj, np.finfo(float).tiny)
        else:
            gap = math.inf
        return dict(u=u, r=r, b_norm=bu, objective=obj, extremality_gap=ext,
                    dual_norm=dn, dual_norm_gap=dn_gap, duality_gap=gap)

    def certify_zero(self, grad_dual: np.ndarray | None) -> dict:
        zero = np.zeros((self.op.in_components,) + self.grid.shape)
        return self.certify(zero, grad_dual)


def _regularizer_terms(bspec: NormSpec, grid):
    from ._dualsolve import _Term

    if bspec.kind == "Linf":
        return [_Term("id", "l1", grid)]
    if bspec.kind == "Lp":
        return [_Term("id", "lq", grid, q=bspec.p / (bspec.p - 1.0))]
    return norm_terms(bspec, grid)


def _passes(cert: dict, tol: float) -> bool:
    if cert["b_norm"] > 0:
        return cert["extremality_gap"] <= tol and cert["dual_norm_gap"] <= tol
    return cert["dual_norm_gap"] <= tol


def _result(problem: _Problem, cert: dict, iterations: int, converged: bool, diagnostics: dict) -> JMinResult:
    grid = problem.grid
    return JMinResult(
        u=Field(grid, cert["u"]), r=Field(grid, cert["r"]), objective=cert["objective"],
        iterations=iterations, extremality_gap=cert["extremality_gap"],
        dual_norm_gap=cert["dual_norm_gap"], converged=converged, lam=problem.lam,
        b_norm=cert["b_norm"], dual_norm=cert["dual_norm"], duality_gap=cert["duality_gap"],
        diagnostics=diagnostics)


def _validate(f: Field, op: OperatorSpec, bspec: NormSpec):
    if f.grid != op.grid:
        raise ComponentMismatchError("field grid differs from operator grid")
    if f.components != op.out_components:
        raise ComponentMismatchError(f"{op.kind} data needs {op.out_components} components")
    supported = {"Linf", "BV", "W1p", "LinfPlusW1d", "Lp"}
    if bspec.kind not in supported:
        raise UnsupportedCombinationError(f"unsupported norm {bspec}")


def minimize_j(f: Field, op: OperatorSpec, bspec: NormSpec, dt: DataTerm,
               params: SolverParams | None = None) -> JMinResult:
    """Minimize ``||u||_B + lam * sum_x w |f - T u|^p`` over fields ``u``.

    Parameters
    ----------
    f : right-hand side; must be compatible (``P f = 0`` to 1e-10 relative).
    op : the operator ``T``.
    bspec : the norm ``B``.
    dt : exponent ``p`` and scale ``lam``.
    params : iteration controls.

    Returns
    -------
    JMinResult
        With ``converged`` set only when both minimality certificates hold
        to ``params.tol``; unconverged results carry their diagnostics.
    """
    params = params or SolverParams()
    _validate(f, op, bspec)
    op.projection.require(f.data)
    problem = _Problem(f.data, op, bspec, dt, params)
    tol = params.tol

    if problem.zero_energy == 0.0:
        cert = problem.certify_zero(None)
        return _result(problem, cert, 0, True, {"reason": "zero data"})

    # below the vanishing threshold the zero field is a minimizer
    if bspec.kind in ("Linf", "Lp"):
        zero = problem.certify_zero(None)
        if problem.lam * zero["dual_norm"] <= 1.0:
            return _result(problem, zero, 0, True, {"reason": "below vanishing threshold"})

    state = _run_fgp(problem) if problem.mode == "fgp" else _run_pdhg(problem)
    cert = state["cert"]
    zero = None
    if cert["objective"] >= problem.lam * problem.zero_energy:
        zero = problem.certify_zero(state["grad_dual"])
        if cert["objective"] > zero["objective"] or _passes(zero, tol):
            cert = zero
    converged = _passes(cert, tol)
    diagnostics = {k: v for k, v in state.items() if k not in ("cert", "grad_dual")}
    diagnostics["mode"] = problem.mode
    return _result(problem, cert, state["iterations"], converged, diagnostics)


def _run_fgp(problem: _Problem) -> dict:
    """Accelerated projected gradient on the dual of the ``T = Id, p = 2`` problem.

    With ``tau = 1 / (2 lam)`` the minimizer is ``f + tau * div y`` for the
    dual ball variable ``y``, which also certifies the dual norm. Momentum is
    restarted whenever it points against the last step.
    """
    params = problem.params
    (term,) = problem.terms
    h = problem.grid.spacing
    lsq = sum(4.0 / s**2 for s in h)
    tau = 1.0 / (2.0 * problem.lam)
    f = problem.f
    y = np.zeros((f.shape[0], problem.grid.dim) + problem.grid.shape)
    z = y.copy()
    t = 1.0
    trace: list[float] = []
    best = None
    restarts = 0
    it = 0
    for it in range(1, params.max_iters + 1):
        primal = f + tau * _stencil.divergence(z, h)
        y_new = term.project(z + _stencil.gradient(primal, h) / (tau * lsq))
        if np.vdot(z - y_new, y_new - y) > 0.0:
            t_new, z = 1.0, y_new
            restarts += 1
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            z = y_new + (t - 1.0) / t_new * (y_new - y)
        y, t = y_new, t_new
        if it % params.check_every == 0 or it == params.max_iters:
            u = f + tau * _stencil.divergence(y, h)
            best, done, _ = _check(problem, u, [y], trace, best)
            if done:
                break
    return {"cert": best["cert"], "grad_dual": best["grad_dual"], "iterations": it,
            "restarts": restarts, "objective_trace": trace,
            "zero_objective": problem.lam * problem.zero_energy}


def _run_pdhg(problem: _Problem) -> dict:
    params = problem.params
    tol = params.tol
    blocks = problem.blocks
    shape_u = (problem.op.in_components,) + problem.grid.shape
    u = np.zeros(shape_u)
    ys = [np.zeros_like(b.forward(u)) for b in blocks]
    tau = problem.tau
    sigmas = list(problem.sigmas)
    mode = problem.mode
    zero_obj = problem.lam * problem.zero_energy

    trace: list[float] = []
    violations = 0
    best = None
    it = 0

    def adjoint_sum(ys_now):
        total = blocks[0].adjoint(ys_now[0])
        for b, y in zip(blocks[1:], ys_now[1:]):
            total = total + b.adjoint(y)
        return total

    if mode == "dual":
        (block,) = blocks
        (sigma,) = sigmas
        y = ys[0]
        ybar = y.copy()
        for it in range(1, params.max_iters + 1):
            u = problem.prox_primal(u - tau * block.adjoint(ybar), tau)
            y_new = block.prox_conj(y + sigma * block.forward(u), sigma)
            theta = 1.0 / math.sqrt(1.0 + 2.0 * problem.gamma * sigma)
            sigma *= theta
            tau /= theta
            ybar = y_new + theta * (y_new - y)
            y = y_new
            if it % params.check_every == 0 or it == params.max_iters:
                best, done, _ = _check(problem, u, [y], trace, best)
                if done:
                    break
        ys = [y]
    else:
        ku = [b.forward(u) for b in blocks]
        ku_prev = [k.copy() for k in ku]
        alpha = 0.3
        for it in range(1, params.max_iters + 1):
            # K applied to the extrapolated point, by linearity
            ys_new = [b.prox_conj(y + s * (2.0 * k - kp), s)
                      for b, y, s, k, kp in zip(blocks, ys, sigmas, ku, ku_prev)]
            u_new = problem.prox_primal(u - tau * adjoint_sum(ys_new), tau)
            ku_new = [b.forward(u_new) for b in blocks]
            ku_prev, ku = ku, ku_new
            u, ys = u_new, ys_new
            if it % params.check_every == 0 or it == params.max_iters:
                best, done, current = _check(problem, u, ys, trace, best)
                if done:
                    break
                if params.adapt:
                    shift = _balance(current)
                    if shift:
                        factor = (1.0 - alpha) ** shift
                        tau *= factor
                        sigmas = [s / factor for s in sigmas]
                        alpha = max(alpha * 0.97, 0.01)

    for a, b in zip(trace[len(trace) // 10 + 1:], trace[len(trace) // 10 + 2:]):
        if b > a * (1.0 + 1e-12):
            violations += 1
    cert = best["cert"]
    return {"cert": cert, "grad_dual": best["grad_dual"], "iterations": it,
            "step_change": tau / problem.tau,
            "objective_trace": trace, "objective_increases": violations,
            "zero_objective": zero_obj}


def _balance(cert: dict) -> int:
    """Step adaptation from the two certificates.

    A lagging extremality gap means the primal iterate is behind, so the
    primal step shrinks (and the dual step grows); a lagging dual-norm gap
    does the opposite.  Both gaps are scale free.
    """
    ext, dn = cert["extremality_gap"], cert["dual_norm_gap"]
    if cert["b_norm"] == 0.0 or not math.isfinite(dn):
        return 0
    if ext > 4.0 * dn:
        return 1
    if dn > 4.0 * ext:
        return -1
    return 0


def _check(problem: _Problem, u: np.ndarray, ys: list, trace: list, best: dict | None):
    """Evaluate certificates; keep the best-certified iterate so far."""
    tol = problem.params.tol
    grad_dual = None if problem.grad_block is None else ys[problem.grad_block]
    cand = problem.best_shift(u)
    cert = problem.certify(cand, grad_dual)
    trace.append(cert["objective"])
    score = max(cert["extremality_gap"], cert["dual_norm_gap"])
    if best is None or score <= best["score"]:
        best = {"cert": cert, "grad_dual": grad_dual, "score": score}
    done = _passes(cert, tol)
    if not done and cert["objective"] >= problem.lam * problem.zero_energy:
        zero = problem.certify_zero(grad_dual)
        if _passes(zero, tol):
            best = {"cert": zero, "grad_dual": grad_dual, "score": zero["dual_norm_gap"]}
            done = True
    return best, done, cert


def evaluate_candidate(f: Field, u: Field, op: OperatorSpec, bspec: NormSpec, dt: DataTerm,
                       dual_tol: float = 1e-5) -> JMinResult:
    """Certificates of an arbitrary candidate ``u`` (no minimization).

    The dual norm of ``T* phi(f - T u)`` comes from the standalone certified
    computation, so this also works for pairs that no solver produced.
    """
    _validate(f, op, bspec)
    params = SolverParams()
    problem = _Problem(f.data, op, bspec, dt, params)
    ua = u.data
    tu = op.forward(ua)
    r = f.data - tu
    bu = problem.bnorm(ua)
    lam, p, w, dim = dt.lam, dt.p, problem.w, problem.dim
    pair = w * float(np.vdot(phi(r, p, dim), tu))
    b = bu / lam
    ext = abs(pair - b) / max(b, problem.eps) if bu > 0 else 0.0
    dn = array_dual_norm_bounds(op.adjoint(phi(r, p, dim)), op.grid, bspec, tol=dual_tol)[1]
    dn_gap = abs(lam * dn - 1.0) if bu > 0 else max(0.0, lam * dn - 1.0)
    obj = bu + lam * power_energy(r, p, w, dim)
    return JMinResult(u=u, r=Field(op.grid, r), objective=obj, iterations=0,
                      extremality_gap=ext, dual_norm_gap=dn_gap, converged=False,
                      lam=lam, b_norm=bu, dual_norm=dn)


def oracle_solve(f: Field, op: OperatorSpec, bspec: NormSpec, dt: DataTerm,
                 max_unknowns: int = 64) -> JMinResult:
    """Solve the same problem with an interior-point conic solver (tiny grids only).

    The difference operators are assembled independently as sparse matrices
    from index arithmetic, and the problem is handed to CVXPY with Clarabel.
    """
    from ._oracle import solve_conic

    _validate(f, op, bspec)
    unknowns = op.in_components * op.grid.size
    if unknowns > max_unknowns:
        raise ValueError(f"oracle limited to {max_unknowns} unknowns, problem has {unknowns}")
    u, objective, tmat = solve_conic(f.data, op, bspec, dt)
    r = f.data - (tmat @ u.ravel()).reshape(f.data.shape)
    grid = op.grid
    return JMinResult(u=Field(grid, u), r=Field(grid, r), objective=objective, iterations=0,
                      extremality_gap=math.nan, dual_norm_gap=math.nan, converged=True,
                      lam=dt.lam, b_norm=array_norm(u, grid, bspec))
