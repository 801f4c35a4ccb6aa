"""Certificate checks and constant experiments.

Every check returns a :class:`CertificateReport`; suites are lists of
reports and serialize to JSON or CSV.  Negative controls are reports that
pass when the underlying certificate correctly *fails*.
"""

from __future__ import annotations

import csv
import functools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf, gamma

from .grid import Field, NormSpec, TorusGrid, array_norm, fft_forward
from .hierarchy import ProblemSpec, ScaleLadder, default_lambda1, make_problem, run_hierarchy
from .jmin import DataTerm, JMinResult, SolverParams, evaluate_candidate, minimize_j, phi, power_energy
from .operators import CompatibilityError, OperatorSpec, array_dual_norm_bounds, riesz_apply


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of one check.

    ``passed`` is ``|measured - target| <= tolerance`` (times ``|target|``
    when ``relative``), unless the check is one-sided, in which case
    ``comparison`` names the inequality that was tested instead.
    """

    name: str
    measured: float
    target: float
    tolerance: float
    passed: bool
    note: str = ""
    relative: bool = False
    comparison: str = "abs"
    details: dict = field(default_factory=dict)

    @classmethod
    def compare(cls, name: str, measured: float, target: float, tolerance: float,
                relative: bool = False, note: str = "", **details) -> "CertificateReport":
        bound = tolerance * abs(target) if relative else tolerance
        ok = bool(abs(measured - target) <= bound)
        return cls(name, float(measured), float(target), float(tolerance), ok, note, relative,
                   "rel" if relative else "abs", details)

    @classmethod
    def at_most(cls, name: str, measured: float, bound: float, note: str = "", **details) -> "CertificateReport":
        """One-sided check ``measured <= bound`` (target is the bound)."""
        return cls(name, float(measured), float(bound), 0.0, bool(measured <= bound), note,
                   False, "le", details)

    @classmethod
    def at_least(cls, name: str, measured: float, bound: float, note: str = "", **details) -> "CertificateReport":
        """One-sided check ``measured >= bound``."""
        return cls(name, float(measured), float(bound), 0.0, bool(measured >= bound), note,
                   False, "ge", details)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["details"] = _jsonable(self.details)
        for key in ("measured", "target", "tolerance"):
            out[key] = _jsonable(out[key])
        return out


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


# ---------------------------------------------------------------------------
# minimizer characterizations


def check_extremality(res: JMinResult, op: OperatorSpec, bspec: NormSpec, p: float = 2.0,
                      lam: float | None = None, solver_tol: float = 1e-6,
                      dual_tol: float | None = None, name: str = "extremality") -> CertificateReport:
    """Both extremal-pair equalities for a candidate ``u`` with residual ``r``.

    Checks ``<T* phi(r), u> = ||u||_B / lam`` and ``lam ||T* phi(r)||_* = 1``
    (relative gaps), recomputed here from ``res.u`` and ``res.r`` with the
    standalone dual norm.  For ``u = 0`` the condition is ``lam ||T* phi(r)||_* <= 1``.
    Passes when the larger gap is at most ``10 * solver_tol``.
    """
    lam = res.lam if lam is None else lam
    grid = op.grid
    w, dim = grid.cell_volume, grid.dim
    u, r = res.u.data, res.r.data
    dual_tol = solver_tol if dual_tol is None else dual_tol
    g = phi(r, p, dim)
    _, dn = array_dual_norm_bounds(op.adjoint(g), grid, bspec, tol=dual_tol)
    bu = array_norm(u, grid, bspec)
    tol = 10.0 * solver_tol
    if bu == 0.0:
        excess = max(0.0, lam * dn - 1.0)
        return CertificateReport.at_most(name, excess, tol, "zero candidate: lam * dual norm <= 1",
                                         lam_dual_norm=lam * dn)
    pair = w * float(np.vdot(g, op.forward(u)))
    pairing_gap = abs(pair - bu / lam) / (bu / lam)
    norm_gap = abs(lam * dn - 1.0)
    measured = max(pairing_gap, norm_gap)
    return CertificateReport.at_most(name, measured, tol, "max of pairing and dual-norm gaps",
                                     pairing_gap=pairing_gap, dual_norm_gap=norm_gap,
                                     pairing=pair, b_norm_over_lam=bu / lam, lam_dual_norm=lam * dn)


def perturbation_control(f: Field, res: JMinResult, op: OperatorSpec, bspec: NormSpec, dt: DataTerm,
                         size: float = 0.2, seed: int = 0, min_gap: float = 0.1,
                         dual_tol: float = 1e-5) -> CertificateReport:
    """Negative control: a perturbed minimizer must fail extremality by ``min_gap``.

    The minimizer is perturbed by a smooth random field of relative size
    ``size`` (in the sup norm); passes when the recomputed gap exceeds ``min_gap``.
    """
    grid = op.grid
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(res.u.data.shape)
    k2 = sum(k * k for k in grid.wavenumbers())
    axes = tuple(range(1, grid.dim + 1))
    noise = np.fft.ifftn(np.fft.fftn(noise, axes=axes) * np.exp(-k2 / 16.0), axes=axes).real
    scale = max(float(np.abs(res.u.data).max()), float(np.abs(f.data).max()))
    noise *= size * scale / float(np.abs(noise).max())
    cand = evaluate_candidate(f, res.u.with_data(res.u.data + noise), op, bspec, dt, dual_tol=dual_tol)
    gap = max(cand.extremality_gap, cand.dual_norm_gap)
    return CertificateReport.at_least("perturbed minimizer fails extremality", gap, min_gap,
                                      "negative control", extremality_gap=cand.extremality_gap,
                                      dual_norm_gap=cand.dual_norm_gap)


def vanishing_threshold(f: Field, op: OperatorSpec, bspec: NormSpec, p: float = 2.0,
                        tol: float = 1e-8) -> float:
    """``1 / ||T* phi(f)||_*``: the largest scale with ``u = 0`` optimal.

    For the gradient-based norms the certified upper bound of the dual norm
    is used, so the returned value never exceeds the true threshold.
    """
    if not np.any(f.data):
        raise ValueError("the vanishing threshold is undefined for f = 0")
    op.projection.require(f.data)
    v = op.adjoint(phi(f.data, p, f.grid.dim))
    _, up = array_dual_norm_bounds(v, f.grid, bspec, tol=tol)
    return 1.0 / up


def threshold_reports(f: Field, op: OperatorSpec, bspec: NormSpec, p: float = 2.0,
                      reference: float | None = None, params: SolverParams | None = None,
                      below: float = 0.99, above: float = 1.01) -> list[CertificateReport]:
    """Both directions of the vanishing lemma around ``reference`` (default: measured).

    Below: ``||u||_B <= 1e-6 * lam * [f]_p``.  Above: ``||u||_B > 1e-3 * lam * [f]_p``.
    """
    params = params or SolverParams()
    measured = vanishing_threshold(f, op, bspec, p)
    ref = measured if reference is None else reference
    energy = power_energy(f.data, p, f.grid.cell_volume, f.grid.dim)
    out = []
    if reference is not None:
        out.append(CertificateReport.compare("threshold value", measured, reference, 1e-3, relative=True,
                                             note="measured 1/dual norm vs reference"))
    for factor, limit, sense in ((below, 1e-6, "le"), (above, 1e-3, "gt")):
        lam = factor * ref
        res = minimize_j(f, op, bspec, DataTerm(p, lam), params)
        scaled = res.b_norm / (lam * energy)
        label = f"||u||_B / (lam [f]) at {factor:g} x threshold"
        if sense == "le":
            out.append(CertificateReport.at_most(label, scaled, limit, "vanishes below the threshold",
                                                 converged=res.converged))
        else:
            out.append(CertificateReport.at_least(label, scaled, limit, "active above the threshold",
                                                  converged=res.converged))
    return out


# ---------------------------------------------------------------------------
# sharp constant experiments


def isoperimetric_cap(dim: int) -> float:
    """``1 / (d * omega_d^(1/d))`` with ``omega_d`` the unit-ball volume."""
    omega = math.pi ** (dim / 2.0) / gamma(dim / 2.0 + 1.0)
    return 1.0 / (dim * omega ** (1.0 / dim))


def shape_field(shape: str, grid: TorusGrid, size: float | None = None, edge_cells: float = 2.0) -> np.ndarray:
    """Indicator-like test functions centred in the torus.

    ``square``: sharp cell-aligned cube of side ``size`` (default pi/2).
    ``disc``: ball of radius ``size`` (default pi/2) with an erf edge about
    ``edge_cells`` cells wide, which keeps the grid anisotropy of the
    discrete total variation out of the measurement.
    ``bump``: ``cos^2`` profile of support radius ``size`` (default pi/2).
    """
    period = 2.0 * math.pi
    if size is None:
        size = math.pi / 2.0
    extent = size if shape == "square" else 2.0 * size
    if not 0.0 < extent <= period / 2.0:
        raise ValueError(f"{shape} of size {size:g} exceeds half the period and would wrap")
    coords = grid.coordinates()
    h = min(grid.spacing)
    if shape == "square":
        cells = max(1, int(round(size / h)))
        out = np.ones(grid.shape)
        for axis, n in enumerate(grid.shape):
            idx = np.arange(n)
            start = n // 2 - cells // 2
            inside = (idx >= start) & (idx < start + cells)
            bshape = [1] * grid.dim
            bshape[axis] = n
            out = out * inside.reshape(bshape)
        return out
    rho = np.sqrt(sum((c - math.pi) ** 2 for c in coords))
    if shape == "disc":
        return 0.5 * (1.0 - erf((rho - size) / (edge_cells * h)))
    if shape == "bump":
        return np.where(rho < size, np.cos(0.5 * math.pi * rho / size) ** 2, 0.0)
    raise ValueError(f"unknown shape {shape!r}; expected square, disc or bump")


def gn_ratio(a: np.ndarray, grid: TorusGrid) -> float:
    """``||g||_{L^d'} / ||g||_BV`` for a scalar array."""
    d = grid.dim
    g = a.reshape((1,) + grid.shape)
    return array_norm(g, grid, NormSpec.lp(d / (d - 1.0))) / array_norm(g, grid, NormSpec.bv())


def gn_constant_experiment(shape: str, grid: TorusGrid, size: float | None = None) -> CertificateReport:
    """Measured ratio against ``|Omega|^(1/d') / |dOmega|`` and the isoperimetric cap.

    Squares are checked to 1e-3 absolute, discs to 2% relative of the cap;
    the bump only has to stay strictly below the cap.
    """
    d = grid.dim
    ratio = gn_ratio(shape_field(shape, grid, size), grid)
    cap = isoperimetric_cap(d)
    size = math.pi / 2.0 if size is None else size
    if shape == "square":
        # a cube of side a: a^(d-1) / (2d a^(d-1))
        analytic = 1.0 / (2.0 * d)
        return CertificateReport.compare(f"GN ratio, square {grid.shape}", ratio, analytic, 1e-3,
                                         note="volume^(1/d') / perimeter", cap=cap)
    if shape == "disc":
        return CertificateReport.compare(f"GN ratio, disc {grid.shape}", ratio, cap, 0.02, relative=True,
                                         note="balls attain the isoperimetric cap", cap=cap)
    return CertificateReport.at_most(f"GN ratio, bump {grid.shape}", ratio, cap * (1.0 - 1e-9),
                                     "strictly below the cap", cap=cap)


def _random_smooth(grid: TorusGrid, rng: np.random.Generator, cutoff: float) -> np.ndarray:
    axes = tuple(range(grid.dim))
    k2 = sum(k * k for k in grid.wavenumbers())
    a = np.fft.ifftn(np.fft.fftn(rng.standard_normal(grid.shape), axes=axes) * np.exp(-k2 / cutoff**2),
                     axes=axes).real
    return a


def gn_family(grid: TorusGrid, random_fields: int = 8, seed: int = 0) -> dict[str, float]:
    """GN ratios over the shape family (several sizes) plus random smooth fields."""
    out = {}
    for shape in ("square", "disc", "bump"):
        for size in (math.pi / 4.0, math.pi / 2.0):
            try:
                out[f"{shape}({size:.3f})"] = gn_ratio(shape_field(shape, grid, size), grid)
            except ValueError:
                continue
    rng = np.random.default_rng(seed)
    for i in range(random_fields):
        a = _random_smooth(grid, rng, cutoff=2.0 + 2.0 * i)
        out[f"random{i}"] = gn_ratio(a - a.mean() if i % 2 else a, grid)
    return out


@functools.lru_cache(maxsize=16)
def _measured_beta(shape: tuple[int, ...]) -> float:
    return max(gn_family(TorusGrid(shape)).values())


def measure_beta(grid: TorusGrid) -> float:
    """Discrete GN constant of ``grid``: the largest ratio over :func:`gn_family` (cached)."""
    return _measured_beta(tuple(grid.shape))


# ---------------------------------------------------------------------------
# H^-1 bound through the Riesz transforms


def hminus1_norm(f: Field) -> float:
    """Spectral ``||f||_{H^-1}`` with the integer wavenumbers of the torus."""
    coeffs = fft_forward(f)
    k2 = sum(k * k for k in f.grid.wavenumbers())
    inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    grid = f.grid
    return math.sqrt(grid.cell_volume / grid.size * float(np.sum(np.abs(coeffs) ** 2 * inv)))


def hminus1_bound_check(f: Field, constant: float = 1.0, name: str | None = None) -> CertificateReport:
    """``||f||_{H^-1} / (||f||_1 + ||R1 R2 f||_1)`` against ``constant``.

    Raises
    ------
    CompatibilityError
        If ``f`` does not have zero mean.
    """
    if f.grid.dim != 2 or not f.is_scalar:
        raise ValueError("hminus1_bound_check expects a scalar field on the 2-torus")
    mean = float(f.data.mean())
    if abs(mean) > 1e-10 * max(float(np.abs(f.data).max()), np.finfo(float).tiny):
        raise CompatibilityError(f"incompatible right-hand side: mean {mean:.3e} is not zero")
    name = name or "H^-1 bound"
    lhs = hminus1_norm(f)
    w = f.grid.cell_volume
    rhs = w * float(np.abs(f.data).sum() + np.abs(riesz_apply(f, 1, 2).data).sum())
    if rhs == 0.0:
        return CertificateReport.at_most(name, 0.0, constant, "zero field, trivially bounded", lhs=lhs, rhs=rhs)
    return CertificateReport.at_most(name, lhs / rhs, constant, "ratio to the Riesz L1 bound",
                                     lhs=lhs, rhs=rhs)


def hminus1_family(grid: TorusGrid, seed: int = 0) -> dict[str, Field]:
    x, y = grid.coordinates()
    rng = np.random.default_rng(seed)
    fields = {
        "cos x": np.cos(x),
        "sin x sin 2y": np.sin(x) * np.sin(2 * y),
        "cos(x + y)": np.cos(x + y),
    }
    for i in range(3):
        a = _random_smooth(grid, rng, cutoff=4.0 * (i + 1))
        fields[f"band-limited {i}"] = a - a.mean()
    disc = shape_field("disc", grid)
    fields["disc - mean"] = disc - disc.mean()
    return {k: Field(grid, v) for k, v in fields.items()}


# ---------------------------------------------------------------------------
# homogeneity


@dataclass(frozen=True)
class LadderPolicy:
    """How a hierarchy run chooses its scales from the data.

    ``lam_1 = beta / ||f||_p^(p-1)`` (and at least the admissible value),
    ``lam_j = lam_1 * zeta^(j-1)``; ``zeta`` defaults to ``2^(p-1)``.
    """

    levels: int = 4
    beta: float | None = 0.25
    zeta: float | None = None

    def ladder(self, f: Field, problem: ProblemSpec) -> ScaleLadder:
        zeta = self.zeta or ScaleLadder.default_zeta(problem.p)
        return ScaleLadder(default_lambda1(f, problem, self.beta), zeta, self.levels)


def check_homogeneity(f: Field, alpha: float, problem: ProblemSpec, policy: LadderPolicy | None = None,
                      params: SolverParams | None = None, tolerance: float | None = None) -> CertificateReport:
    """Largest per-level deviation ``||u_j[alpha f] - alpha u_j[f]|| / ||alpha u_j[f]||``.

    Levels whose ``u_j`` vanishes are skipped.  The tolerance defaults to
    ``20 * params.tol``.
    """
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    policy = policy or LadderPolicy()
    params = params or SolverParams()
    tolerance = 20.0 * params.tol if tolerance is None else tolerance
    base = run_hierarchy(f, problem, policy.ladder(f, problem), params)
    g = f * alpha
    scaled = run_hierarchy(g, problem, policy.ladder(g, problem), params)
    deviations = []
    for a, b in zip(base.levels, scaled.levels):
        ref = alpha * a.u.data
        nref = float(np.linalg.norm(ref))
        if nref <= 1e-12 * float(np.linalg.norm(f.data)) * abs(alpha):
            continue
        deviations.append(float(np.linalg.norm(b.u.data - ref)) / nref)
    worst = max(deviations) if deviations else 0.0
    ok_depth = base.depth == scaled.depth
    report = CertificateReport.at_most(f"homogeneity, alpha = {alpha:g}", worst, tolerance,
                                       "per-level relative deviation", deviations=deviations,
                                       levels=[base.depth, scaled.depth])
    if not ok_depth:
        return CertificateReport(report.name, report.measured, report.target, report.tolerance, False,
                                 "level counts differ", details=report.details, comparison="le")
    return report


# ---------------------------------------------------------------------------
# suites


def extremality_suite(n: int = 32, params: SolverParams | None = None, seed: int = 0) -> list[CertificateReport]:
    """Extremality of converged solves plus the perturbation negative control."""
    params = params or SolverParams()
    grid = TorusGrid.cube(n)
    rng = np.random.default_rng(seed)
    a = _random_smooth(grid, rng, cutoff=6.0)
    f = Field(grid, a - a.mean())
    out = []
    for preset in ("div2d", "image-bvl2"):
        problem = make_problem(preset, grid)
        op, bspec = problem.operator, problem.bnorm
        lam = 2.0 * vanishing_threshold(f, op, bspec, problem.p, tol=1e-6)
        dt = DataTerm(problem.p, lam)
        res = minimize_j(f, op, bspec, dt, params)
        out.append(CertificateReport.at_least(f"{preset}: solver converged", float(res.converged), 1.0,
                                              iterations=res.iterations))
        out.append(check_extremality(res, op, bspec, problem.p, solver_tol=params.tol,
                                     name=f"{preset}: extremality"))
        out.append(perturbation_control(f, res, op, bspec, dt, seed=seed))
    return out


def threshold_suite(n: int = 64, params: SolverParams | None = None) -> list[CertificateReport]:
    """``f = cos x`` for div/L-infinity at p = 2, reference scale ``1/(16 pi)``."""
    grid = TorusGrid.cube(n)
    f = Field.from_function(grid, lambda x, y: np.cos(x))
    op = OperatorSpec.divergence(grid)
    return threshold_reports(f, op, NormSpec.linf(), 2.0, reference=1.0 / (16.0 * math.pi), params=params)


def homogeneity_suite(n: int = 32, params: SolverParams | None = None, seed: int = 0,
                      alphas: Sequence[float] = (2.0, -1.0, 0.5)) -> list[CertificateReport]:
    params = params or SolverParams()
    grid = TorusGrid.cube(n)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(grid.shape)
    f = Field(grid, a - a.mean())
    problem = make_problem("div2d", grid)
    return [check_homogeneity(f, alpha, problem, LadderPolicy(levels=4), params) for alpha in alphas]


def gn_suite(n: int = 512) -> list[CertificateReport]:
    """Square, disc and bump on an ``n x n`` grid, plus the family maximum."""
    grid = TorusGrid.cube(n)
    out = [gn_constant_experiment(shape, grid) for shape in ("square", "disc", "bump")]
    ratios = gn_family(grid)
    disc = gn_ratio(shape_field("disc", grid), grid)
    worst = max(ratios, key=ratios.get)
    out.append(CertificateReport.at_most("GN family maximum over disc ratio", ratios[worst] / disc, 1.005,
                                         f"largest: {worst}", ratios=ratios))
    return out


def hminus1_suite(n: int = 64, constant: float = 1.0) -> list[CertificateReport]:
    grid = TorusGrid.cube(n)
    return [hminus1_bound_check(f, constant, name=f"H^-1 bound, {label}")
            for label, f in hminus1_family(grid).items()]


SUITES: dict[str, Callable[..., list[CertificateReport]]] = {
    "extremality": extremality_suite,
    "threshold": threshold_suite,
    "homogeneity": homogeneity_suite,
    "gn": gn_suite,
    "hminus1": hminus1_suite,
}


def run_suite(name: str, grid: int | None = None, params: SolverParams | None = None) -> list[CertificateReport]:
    """Run a named suite (or ``"all"``); ``grid`` overrides the default resolution."""
    if name != "all" and name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; expected one of {', '.join(['all', *SUITES])}")
    names = list(SUITES) if name == "all" else [name]
    out: list[CertificateReport] = []
    for key in names:
        kwargs = {}
        if grid is not None:
            kwargs["n"] = grid
        if key in ("extremality", "threshold", "homogeneity") and params is not None:
            kwargs["params"] = params
        out.extend(SUITES[key](**kwargs))
    return out


def write_reports_json(reports: Sequence[CertificateReport], path) -> None:
    with open(path, "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2)


def write_reports_csv(reports: Sequence[CertificateReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "measured", "target", "tolerance", "comparison", "passed", "note"])
        for r in reports:
            writer.writerow([r.name, repr(r.measured), repr(r.target), repr(r.tolerance), r.comparison,
                             int(r.passed), r.note])
