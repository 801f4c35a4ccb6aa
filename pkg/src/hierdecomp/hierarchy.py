"""Hierarchical decomposition ``x = u_1 + u_2 + ...`` with ``T x ~ f``.

Level ``j`` minimizes ``||u||_B + lam_j [r_{j-1} - T u]_p`` with the
geometric ladder ``lam_j = lam_1 * zeta**(j - 1)``; the residual is
recomputed from scratch as ``r_j = f - T(u_1 + ... + u_j)`` after every level,
so the telescoping identity ``f = T x_k + r_k`` holds to rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Field, NormSpec, TorusGrid, array_norm, pointwise_magnitude
from .jmin import (
    DataTerm,
    JMinResult,
    SolverParams,
    minimize_j,
    phi,
    power_energy,
)
from .operators import OperatorSpec, array_dual_norm_bounds, dual_norm


class InadmissibleScaleError(ValueError):
    """Raised when the first scale leaves the first level identically zero."""


@dataclass(frozen=True)
class ProblemSpec:
    """The operator ``T``, the norm ``B`` of the pieces and the data exponent ``p``."""

    operator: OperatorSpec
    bnorm: NormSpec
    p: float
    name: str = "custom"

    def __post_init__(self):
        if not (1.0 < float(self.p) < math.inf):
            raise ValueError(f"data exponent must satisfy 1 < p < inf, got {self.p}")
        object.__setattr__(self, "p", float(self.p))

    @property
    def grid(self) -> TorusGrid:
        return self.operator.grid

    @property
    def projection(self):
        return self.operator.projection

    def data_term(self, lam: float) -> DataTerm:
        return DataTerm(self.p, lam)

    def describe(self) -> dict:
        return {"name": self.name, "operator": self.operator.kind, "norm": str(self.bnorm),
                "p": self.p, "grid": list(self.grid.shape)}


PRESETS = ("div2d", "div3d", "curl3d", "image-bvl2")


def make_problem(preset: str, grid: TorusGrid, p: float | None = None) -> ProblemSpec:
    """Problem presets.

    ``div2d``
        divergence on a 2D torus, sup norm, ``p = 2`` by default.
    ``div3d``
        divergence on a 3D torus, sup norm plus ``W^{1,3}``, ``p = 3``.
    ``curl3d``
        curl on a 3D torus, sup norm plus ``W^{1,3}``, ``p = 3``.
    ``image-bvl2``
        identity on a 2D grid, total variation, ``p = 2``.
    """
    if preset == "div2d":
        if grid.dim != 2:
            raise ValueError("div2d needs a 2D grid")
        return ProblemSpec(OperatorSpec.divergence(grid), NormSpec.linf(), p or 2.0, preset)
    if preset == "div3d":
        if grid.dim != 3:
            raise ValueError("div3d needs a 3D grid")
        return ProblemSpec(OperatorSpec.divergence(grid), NormSpec.linf_w1d(), p or 3.0, preset)
    if preset == "curl3d":
        if grid.dim != 3:
            raise ValueError("curl3d needs a 3D grid")
        return ProblemSpec(OperatorSpec.curl(grid), NormSpec.linf_w1d(), p or 3.0, preset)
    if preset == "image-bvl2":
        if grid.dim != 2:
            raise ValueError("image-bvl2 needs a 2D grid")
        return ProblemSpec(OperatorSpec.identity(grid), NormSpec.bv(), p or 2.0, preset)
    raise ValueError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")


@dataclass(frozen=True)
class ScaleLadder:
    """Geometric scales ``lam_j = lambda1 * zeta**(j - 1)`` for ``j = 1..k_max``."""

    lambda1: float
    zeta: float
    k_max: int

    def __post_init__(self):
        if not (self.lambda1 > 0 and math.isfinite(self.lambda1)):
            raise ValueError(f"lambda1 must be positive, got {self.lambda1}")
        if not self.zeta > 1.0:
            raise ValueError(f"zeta must exceed 1, got {self.zeta}")
        if self.k_max < 1:
            raise ValueError("the ladder needs at least one level")

    def scale(self, j: int) -> float:
        return self.lambda1 * self.zeta ** (j - 1)

    def scales(self) -> list[float]:
        return [self.scale(j) for j in range(1, self.k_max + 1)]

    @staticmethod
    def default_zeta(p: float) -> float:
        return 2.0 ** (p - 1.0)


def lp_norm(f: Field, p: float) -> float:
    return array_norm(f.data, f.grid, NormSpec.lp(p))


def residual_dual_norm(problem: ProblemSpec, r: Field, tol: float = 1e-4) -> float:
    """``||T* phi(r)||_*`` (certified upper bound for the gradient-based norms)."""
    g = r.with_data(phi(r.data, problem.p, r.grid.dim))
    return dual_norm(problem.operator, problem.bnorm, g, tol=tol)


def default_lambda1(f: Field, problem: ProblemSpec, beta: float | None) -> float:
    """``max(beta / ||f||_p^(p-1), 1.1 / ||T* phi(f)||_*)``.

    The second branch alone guarantees that the first level is nonzero;
    pass ``beta=None`` to use it alone.
    """
    problem.projection.require(f.data)
    nf = lp_norm(f, problem.p)
    if nf == 0.0:
        raise ValueError("the scale is undefined for f = 0")
    admissible = 1.1 / residual_dual_norm(problem, f)
    if beta is None:
        return admissible
    if not beta > 0:
        raise ValueError("beta must be positive")
    return max(beta / nf ** (problem.p - 1.0), admissible)


@dataclass(frozen=True, eq=False)
class HierLevel:
    """One level of the decomposition with its certificates."""

    j: int
    lam: float
    u: Field
    b_norm: float
    residual_p_norm: float
    residual_energy: float
    residual_dual_norm: float
    extremality_gap: float
    dual_norm_gap: float
    iterations: int
    converged: bool
    objective: float

    @property
    def is_zero(self) -> bool:
        return self.b_norm == 0.0


@dataclass(frozen=True, eq=False)
class Decomposition:
    f: Field
    problem: ProblemSpec
    ladder: ScaleLadder
    levels: list[HierLevel]
    residual: Field
    stop_reason: str = "ladder exhausted"
    params: SolverParams = field(default_factory=SolverParams)

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def converged(self) -> bool:
        return all(lv.converged for lv in self.levels)

    def partial_sum(self, k: int) -> Field:
        return reconstruct(self, k)[0]


def _zero_input(f: Field, problem: ProblemSpec) -> Field:
    return Field.zeros(f.grid, problem.operator.in_components)


def run_hierarchy(f: Field, problem: ProblemSpec, ladder: ScaleLadder,
                  params: SolverParams | None = None, stop_tol: float = 1e-6,
                  require_admissible: bool = True,
                  progress: Callable[[HierLevel], None] | None = None) -> Decomposition:
    """Build the decomposition level by level.

    Parameters
    ----------
    f : compatible right-hand side.
    problem, ladder : the functional and its scales.
    params : inner solver controls.
    stop_tol : stop once ``||r_j||_p < stop_tol * ||f||_p``.
    require_admissible : reject a first scale at which the first level
        would vanish (``lambda1 * ||T* phi(f)||_* <= 1``).
    progress : optional callback invoked after each level.
    """
    params = params or SolverParams()
    op, p = problem.operator, problem.p
    projection = problem.projection
    projection.require(f.data)
    grid = f.grid
    w, dim = grid.cell_volume, grid.dim

    norm_f = lp_norm(f, p)
    if norm_f == 0.0:
        return Decomposition(f, problem, ladder, [], f, "zero data", params)
    if require_admissible:
        dn = residual_dual_norm(problem, f)
        if ladder.lambda1 * dn <= 1.0:
            raise InadmissibleScaleError(
                f"lambda1 = {ladder.lambda1:.6g} is inadmissible: lambda1 * ||T* phi(f)||_* = "
                f"{ladder.lambda1 * dn:.6g} <= 1, the first level would vanish")

    x = np.zeros((op.in_components,) + grid.shape)
    r = f.data.copy()
    levels: list[HierLevel] = []
    reason = "ladder exhausted"
    exact_dual = problem.bnorm.kind in ("Linf", "Lp")
    for j in range(1, ladder.k_max + 1):
        lam = ladder.scale(j)
        # safety net: strip any inadmissible rounding residue before solving
        data = r - projection.apply_array(r)
        res = minimize_j(Field(grid, data), op, problem.bnorm, DataTerm(p, lam), params)
        x = x + res.u.data
        r = f.data - op.forward(x)
        if exact_dual:
            dn = array_dual_norm_bounds(op.adjoint(phi(r, p, dim)), grid, problem.bnorm)[1]
        else:
            dn = res.dual_norm
        level = HierLevel(
            j=j, lam=lam, u=res.u, b_norm=res.b_norm,
            residual_p_norm=array_norm(r, grid, NormSpec.lp(p)),
            residual_energy=power_energy(r, p, w, dim), residual_dual_norm=dn,
            extremality_gap=res.extremality_gap, dual_norm_gap=res.dual_norm_gap,
            iterations=res.iterations, converged=res.converged, objective=res.objective)
        levels.append(level)
        if progress is not None:
            progress(level)
        if level.residual_p_norm < stop_tol * norm_f:
            reason = "residual below stop tolerance"
            break
    return Decomposition(f, problem, ladder, levels, Field(grid, r), reason, params)


def reconstruct(d: Decomposition, k: int) -> tuple[Field, Field]:
    """Partial sum ``x_k`` and the recomputed residual ``r_k = f - T x_k``."""
    if not (0 <= k <= d.depth) or (k == 0 and d.depth > 0):
        raise IndexError(f"k must lie in 1..{d.depth}, got {k}")
    op = d.problem.operator
    x = np.zeros((op.in_components,) + d.f.grid.shape)
    for lv in d.levels[:k]:
        x = x + lv.u.data
    return Field(d.f.grid, x), Field(d.f.grid, d.f.data - op.forward(x))


def telescoping_errors(d: Decomposition) -> list[float]:
    """``||f - T x_k - r_k|| / ||f||`` in L2 for every prefix ``k``."""
    op = d.problem.operator
    nf = math.sqrt(float(np.sum(d.f.data ** 2)))
    out = []
    for k in range(1, d.depth + 1):
        x, r = reconstruct(d, k)
        err = d.f.data - op.forward(x.data) - r.data
        out.append(math.sqrt(float(np.sum(err ** 2))) / nf)
    return out


def _segment_distance(a: np.ndarray, b: np.ndarray, dim: int) -> np.ndarray:
    """Pointwise distance from the origin to the segment ``[a(x), b(x)]``."""
    diff = b - a
    lead = tuple(range(a.ndim - dim))
    dd = np.sum(diff * diff, axis=lead)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(dd > 0, -np.sum(a * diff, axis=lead) / np.where(dd > 0, dd, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    return pointwise_magnitude(a + t * diff, dim)


def energy_ledger(d: Decomposition) -> dict:
    """Per-level energy bookkeeping and the global energy identities.

    Always reported: the trivial-pair inequality
    ``sum_j ||u_j||_B / lam_j + [r_k]_p <= [f]_p``.  For ``p = 2``: the equality
    ``sum_j ||u_j||_B / lam_j + sum_j ||T u_j||^2 + ||r_k||^2 = ||f||^2``, and
    ``series_gap``, the same identity without ``||r_k||^2`` (its infinite-depth form).
    For ``p > 2``: the strict-convexity refinement in which each level also
    releases ``(1/2) sum_x w kappa_j(x) |T u_j(x)|^2``, with ``kappa_j(x)`` the
    smallest curvature of ``|.|^p`` on the segment between ``r_j(x)`` and
    ``r_{j-1}(x)``.
    """
    problem = d.problem
    op, p = problem.operator, problem.p
    grid = d.f.grid
    w, dim = grid.cell_volume, grid.dim
    rhs = power_energy(d.f.data, p, w, dim)
    scalar = op.out_components == 1
    curvature = p * (p - 1.0) if scalar else p

    rows = []
    cum_b = cum_t = cum_kappa = 0.0
    r_prev = d.f.data
    x = np.zeros((op.in_components,) + grid.shape)
    for lv in d.levels:
        x = x + lv.u.data
        r = d.f.data - op.forward(x)
        tu = op.forward(lv.u.data)
        scaled_b = lv.b_norm / lv.lam
        tu_sq = w * float(np.sum(tu * tu))
        if p >= 2.0:
            kappa = curvature * _segment_distance(r, r_prev, dim) ** (p - 2.0)
            release = 0.5 * w * float(np.sum(kappa * np.sum(tu * tu, axis=0)))
        else:
            release = math.nan
        cum_b += scaled_b
        cum_t += tu_sq
        cum_kappa += release
        rows.append({"j": lv.j, "lambda": lv.lam, "scaled_b_norm": scaled_b, "tu_sq": tu_sq,
                     "cum_scaled_b_norm": cum_b, "cum_tu_sq": cum_t,
                     "convexity_release": release, "residual_energy": lv.residual_energy})
        r_prev = r

    final = power_energy(d.residual.data, p, w, dim) if d.depth else rhs
    inequality_lhs = cum_b + final
    out = {
        "levels": rows,
        "rhs": rhs,
        "residual_energy": final,
        "inequality_lhs": inequality_lhs,
        "inequality_violation": max(0.0, inequality_lhs - rhs) / rhs if rhs else 0.0,
        "partial": not d.converged,
    }
    if p == 2.0:
        lhs = cum_b + cum_t + final
        out["lhs_terms"] = [cum_b, cum_t, final]
        out["equality_gap"] = abs(lhs - rhs) / rhs if rhs else 0.0
        # the infinite-depth form drops the final residual, which tends to zero
        out["series_gap"] = abs(cum_b + cum_t - rhs) / rhs if rhs else 0.0
    else:
        out["lhs_terms"] = [cum_b, final]
        out["equality_gap"] = None
        out["series_gap"] = None
        if p >= 2.0:
            strict_lhs = cum_b + cum_kappa + final
            out["convexity_lhs"] = strict_lhs
            out["convexity_violation"] = max(0.0, strict_lhs - rhs) / rhs if rhs else 0.0
    return out


def ledger_record(d: Decomposition) -> dict:
    """JSON-ready summary of a decomposition."""
    energy = energy_ledger(d)
    return {
        "problem": d.problem.describe(),
        "ladder": {"lambda1": d.ladder.lambda1, "zeta": d.ladder.zeta, "k": d.ladder.k_max},
        "levels": [
            {"j": lv.j, "lambda": lv.lam, "b_norm": lv.b_norm, "res_p": lv.residual_p_norm,
             "res_dual": lv.residual_dual_norm, "extremality_gap": lv.extremality_gap,
             "dual_norm_gap": lv.dual_norm_gap, "iters": lv.iterations, "converged": lv.converged}
            for lv in d.levels
        ],
        "energy": {"lhs_terms": energy["lhs_terms"], "rhs": energy["rhs"],
                   "equality_gap": energy["equality_gap"], "series_gap": energy["series_gap"],
                   "inequality_violation": energy["inequality_violation"],
                   "partial": energy["partial"]},
        "stop_reason": d.stop_reason,
        "solver": {"tol": d.params.tol, "max_iters": d.params.max_iters},
    }
