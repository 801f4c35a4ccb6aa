"""Command-line entry point.

Subcommands: ``solve`` (hierarchy on an HSF1 field), ``image`` (BV/L2
hierarchy on a PGM image), ``verify`` (certificate suites), ``oracle``
(tiny-instance cross-check against the conic solver) and ``synth`` (write
test inputs).

Exit codes: 0 success, 2 bad input, 3 non-convergence, 4 certificate
failure, 5 I/O failure, 6 inadmissible first scale.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from . import io as hio
from .grid import Field, TorusGrid
from .hierarchy import (
    PRESETS,
    Decomposition,
    InadmissibleScaleError,
    ScaleLadder,
    default_lambda1,
    energy_ledger,
    ledger_record,
    make_problem,
    reconstruct,
    run_hierarchy,
    telescoping_errors,
)
from .jmin import DataTerm, SolverParams, minimize_j, oracle_solve
from .operators import CompatibilityError

log = logging.getLogger("hierdecomp")

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_NOT_CONVERGED = 3
EXIT_CERTIFICATE = 4
EXIT_IO = 5
EXIT_INADMISSIBLE = 6

TELESCOPING_TOL = 1e-12
INEQUALITY_TOL = 1e-9
DUAL_LAW_TOL = 0.02
ORACLE_TOL = 1e-5


class ConfigError(ValueError):
    """A command-line value violates a precondition."""


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    input: Path | None = None
    output: Path | None = None
    preset: str = "div2d"
    p: float | None = None
    zeta: float | None = None
    lambda1: float | None = None  # None means "auto"
    levels: int = 8
    tol: float = 1e-6
    max_iters: int = 100_000
    beta: float | None = None
    stop_tol: float = 1e-6
    suite: str = "all"
    grid: int | None = None

    def validate(self) -> "RunConfig":
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.p is not None and not (1.0 < self.p < math.inf):
            raise ConfigError(f"p must satisfy 1 < p < inf, got {self.p}")
        if self.zeta is not None and not self.zeta > 1.0:
            raise ConfigError(f"zeta must exceed 1, got {self.zeta}")
        if self.lambda1 is not None and not (self.lambda1 > 0 and math.isfinite(self.lambda1)):
            raise ConfigError(f"lambda1 must be positive, got {self.lambda1}")
        if self.levels < 1:
            raise ConfigError(f"levels must be at least 1, got {self.levels}")
        if not (0.0 < self.tol < 1.0):
            raise ConfigError(f"tol must lie in (0, 1), got {self.tol}")
        if self.max_iters < 1:
            raise ConfigError(f"max-iters must be at least 1, got {self.max_iters}")
        if self.beta is not None and not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if not self.stop_tol >= 0:
            raise ConfigError(f"stop-tol must be nonnegative, got {self.stop_tol}")
        if self.grid is not None and (self.grid < 4 or self.grid % 2):
            raise ConfigError(f"grid must be an even size of at least 4, got {self.grid}")
        if self.subcommand in ("solve", "image", "oracle") and self.input is None:
            raise ConfigError("--input is required")
        return self

    @property
    def params(self) -> SolverParams:
        return SolverParams(max_iters=self.max_iters, tol=self.tol)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        lam = getattr(args, "lambda1", "auto")
        try:
            lam = None if lam in (None, "auto") else float(lam)
        except ValueError:
            raise ConfigError(f"lambda1 must be a number or 'auto', got {lam!r}") from None
        fields = {k: getattr(args, k) for k in ("preset", "p", "zeta", "levels", "tol", "max_iters",
                                                 "beta", "stop_tol", "suite", "grid") if hasattr(args, k)}
        inp = getattr(args, "input", None)
        out = getattr(args, "output", None)
        return cls(subcommand=args.command, input=Path(inp) if inp else None,
                   output=Path(out) if out else None, lambda1=lam, **fields).validate()


class _Failure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# artifacts


def _levels_csv(d: Decomposition, path: Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "lambda", "b_norm", "residual_p_norm", "residual_energy", "residual_dual_norm",
                         "lambda_dual_norm", "extremality_gap", "dual_norm_gap", "iterations", "converged"])
        for lv in d.levels:
            writer.writerow([lv.j, repr(lv.lam), repr(lv.b_norm), repr(lv.residual_p_norm),
                             repr(lv.residual_energy), repr(lv.residual_dual_norm),
                             repr(lv.lam * lv.residual_dual_norm), repr(lv.extremality_gap),
                             repr(lv.dual_norm_gap), lv.iterations, int(lv.converged)])


PLOT_SCRIPT = '''"""Plot residual decay and the energy ledger of a hierarchy run.

Usage: python plot_ledger.py [run directory]   (needs matplotlib)
"""
import csv
import json
import sys
from pathlib import Path

import matplotlib.pyplot as plt

run = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
rows = list(csv.DictReader(open(run / "levels.csv")))
ledger = json.load(open(run / "ledger.json"))
j = [int(r["j"]) for r in rows]
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.semilogy(j, [float(r["residual_p_norm"]) for r in rows], "o-", label="||r_j||_p")
ax1.semilogy(j, [1.0 / float(r["lambda"]) for r in rows], "s--", label="1/lambda_j")
ax1.set_xlabel("level j")
ax1.legend()
terms = ledger["energy"]["lhs_terms"]
ax2.bar(range(len(terms)), terms)
ax2.axhline(ledger["energy"]["rhs"], color="k", ls="--", label="[f]")
ax2.set_title("energy ledger")
ax2.legend()
fig.tight_layout()
fig.savefig(run / "ledger.png", dpi=120)
'''


def _certificates(d: Decomposition, params: SolverParams) -> dict:
    tele = telescoping_errors(d)
    energy = energy_ledger(d)
    law = [abs(lv.lam * lv.residual_dual_norm - 1.0) for lv in d.levels if lv.converged and not lv.is_zero]
    checks = {
        "telescoping": {"value": max(tele, default=0.0), "bound": TELESCOPING_TOL},
        "energy_inequality": {"value": energy["inequality_violation"], "bound": INEQUALITY_TOL},
        "dual_norm_law": {"value": max(law, default=0.0), "bound": DUAL_LAW_TOL},
    }
    if energy.get("convexity_violation") is not None:
        checks["convexity_inequality"] = {"value": energy["convexity_violation"], "bound": INEQUALITY_TOL}
    for c in checks.values():
        c["passed"] = bool(c["value"] <= c["bound"])
    return checks


def _write_run(d: Decomposition, out: Path, extra: dict | None = None) -> dict:
    hio.write_hsf(out / "f.hsf", d.f)
    for lv in d.levels:
        hio.write_hsf(out / f"level_{lv.j:02d}.hsf", lv.u)
        hio.write_hsf(out / f"partial_{lv.j:02d}.hsf", reconstruct(d, lv.j)[0])
    hio.write_hsf(out / "residual.hsf", d.residual)
    record = ledger_record(d)
    record["certificates"] = _certificates(d, d.params)
    record["telescoping"] = telescoping_errors(d)
    if extra:
        record.update(extra)
    with open(out / "ledger.json", "w") as fh:
        json.dump(record, fh, indent=2, default=float)
    _levels_csv(d, out / "levels.csv")
    (out / "plot_ledger.py").write_text(PLOT_SCRIPT)
    return record


def _status(d: Decomposition, record: dict) -> int:
    if not d.converged:
        bad = [lv.j for lv in d.levels if not lv.converged]
        print(f"warning: levels {bad} did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    failed = [k for k, c in record["certificates"].items() if not c["passed"]]
    if failed:
        print(f"certificate failure: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CERTIFICATE
    return EXIT_OK


def _ladder(cfg: RunConfig, f: Field, problem) -> ScaleLadder:
    zeta = cfg.zeta or ScaleLadder.default_zeta(problem.p)
    lam1 = cfg.lambda1 if cfg.lambda1 is not None else default_lambda1(f, problem, cfg.beta)
    return ScaleLadder(lam1, zeta, cfg.levels)


def _read_input(path: Path, reader):
    try:
        return reader(path)
    except hio.FormatError as exc:
        raise _Failure(EXIT_BAD_INPUT, f"malformed input {path}: {exc}") from None
    except OSError as exc:
        raise _Failure(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None


def _output_dir(cfg: RunConfig) -> Path:
    out = cfg.output or Path("hierdecomp-out")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _Failure(EXIT_IO, f"cannot create {out}: {exc.strerror or exc}") from None
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(cfg: RunConfig) -> int:
    f = _read_input(cfg.input, hio.read_hsf)
    try:
        problem = make_problem(cfg.preset, f.grid, cfg.p)
        if f.components != problem.operator.out_components:
            raise _Failure(EXIT_BAD_INPUT, f"preset {cfg.preset} needs {problem.operator.out_components} "
                                           f"components, input has {f.components}")
        problem.projection.require(f.data)
    except CompatibilityError as exc:
        raise _Failure(EXIT_BAD_INPUT, str(exc)) from None
    except ValueError as exc:
        raise _Failure(EXIT_BAD_INPUT, f"input does not fit preset {cfg.preset}: {exc}") from None
    out = _output_dir(cfg)
    if not np.any(f.data):
        print("warning: zero input field, empty decomposition", file=sys.stderr)
        d = run_hierarchy(f, problem, ScaleLadder(1.0, cfg.zeta or 2.0, cfg.levels), cfg.params)
        _write_run(d, out)
        return EXIT_OK
    try:
        ladder = _ladder(cfg, f, problem)
        d = run_hierarchy(f, problem, ladder, cfg.params, stop_tol=cfg.stop_tol,
                          progress=lambda lv: log.info("level %d lambda %.4g |u|_B %.4g ext %.1e dn %.1e",
                                                        lv.j, lv.lam, lv.b_norm, lv.extremality_gap,
                                                        lv.dual_norm_gap))
    except InadmissibleScaleError as exc:
        raise _Failure(EXIT_INADMISSIBLE, str(exc)) from None
    record = _write_run(d, out)
    return _status(d, record)


def cmd_image(cfg: RunConfig) -> int:
    img = _read_input(cfg.input, hio.read_pgm)
    grid = img.grid
    mean = float(img.data.mean())
    f = Field(grid, img.data - mean)
    out = _output_dir(cfg)
    problem = make_problem("image-bvl2", grid, cfg.p or 2.0)
    if not np.any(f.data):
        print("warning: constant image, all levels are zero", file=sys.stderr)
        d = run_hierarchy(f, problem, ScaleLadder(1.0, 2.0, cfg.levels), cfg.params)
    else:
        ladder = _ladder(cfg, f, problem)
        d = run_hierarchy(f, problem, ladder, cfg.params, stop_tol=cfg.stop_tol, require_admissible=False)
    record = _write_run(d, out, {"image_mean": mean})
    null = np.zeros((1,) + grid.shape)
    for j in range(1, cfg.levels + 1):
        if j <= d.depth:
            u = d.levels[j - 1].u.data
            x = reconstruct(d, j)[0].data
        else:
            u, x = null, (reconstruct(d, d.depth)[0].data if d.depth else null)
        span = max(float(np.abs(u).max()), 1e-300)
        hio.write_pgm(out / f"level_{j:02d}.pgm", Field(grid, u), value_range=(-span, span))
        hio.write_pgm(out / f"partial_{j:02d}.pgm", Field(grid, x + mean), value_range=(0.0, 1.0))
    with open(out / "scale_energy.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "inverse_lambda", "b_norm", "residual_l2"])
        for lv in d.levels:
            writer.writerow([lv.j, repr(1.0 / lv.lam), repr(lv.b_norm), repr(lv.residual_p_norm)])
    return _status(d, record)


def cmd_verify(cfg: RunConfig) -> int:
    from .verify import SUITES, run_suite, write_reports_csv, write_reports_json

    if cfg.suite != "all" and cfg.suite not in SUITES:
        raise _Failure(EXIT_BAD_INPUT, f"unknown suite {cfg.suite!r}; expected one of all, {', '.join(SUITES)}")
    reports = run_suite(cfg.suite, grid=cfg.grid, params=cfg.params)
    out = _output_dir(cfg)
    write_reports_json(reports, out / "reports.json")
    write_reports_csv(reports, out / "reports.csv")
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.measured:.6g} ({r.comparison} {r.target:.6g})")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CERTIFICATE


def cmd_oracle(cfg: RunConfig) -> int:
    f = _read_input(cfg.input, hio.read_hsf)
    try:
        problem = make_problem(cfg.preset, f.grid, cfg.p)
        problem.projection.require(f.data)
        lam = cfg.lambda1 if cfg.lambda1 is not None else default_lambda1(f, problem, cfg.beta)
        dt = DataTerm(problem.p, lam)
        ours = minimize_j(f, problem.operator, problem.bnorm, dt, cfg.params)
        ref = oracle_solve(f, problem.operator, problem.bnorm, dt)
    except (CompatibilityError, ValueError) as exc:
        raise _Failure(EXIT_BAD_INPUT, str(exc)) from None
    diff = abs(ours.objective - ref.objective)
    report = {"lambda": lam, "objective": ours.objective, "oracle_objective": ref.objective,
              "difference": diff, "bound": ORACLE_TOL, "converged": ours.converged,
              "extremality_gap": ours.extremality_gap, "dual_norm_gap": ours.dual_norm_gap}
    out = _output_dir(cfg)
    with open(out / "oracle.json", "w") as fh:
        json.dump(report, fh, indent=2)
    print(f"objective {ours.objective:.12g} oracle {ref.objective:.12g} difference {diff:.3e}")
    if not ours.converged:
        return EXIT_NOT_CONVERGED
    return EXIT_OK if diff <= ORACLE_TOL else EXIT_CERTIFICATE


def cmd_synth(args: argparse.Namespace) -> int:
    grid = TorusGrid.cube(args.n, args.dim)
    coords = grid.coordinates()
    rng = np.random.default_rng(args.seed)
    comps = args.components
    if args.kind == "random":
        a = rng.standard_normal((comps,) + grid.shape)
        a -= a.reshape(comps, -1).mean(axis=1).reshape((comps,) + (1,) * grid.dim)
    elif args.kind == "cos":
        a = np.zeros((comps,) + grid.shape)
        a[-1] = np.cos(coords[0])
    elif args.kind == "disc":
        rho = np.sqrt(sum((c - math.pi) ** 2 for c in coords))
        a = np.repeat((rho <= args.radius).astype(float)[None], comps, axis=0)
    else:
        a = np.zeros((comps,) + grid.shape)
    field = Field(grid, a)
    try:
        if args.output.endswith(".pgm"):
            hio.write_pgm(Path(args.output), field, value_range=(float(a.min()), float(a.max()) or 1.0))
        else:
            hio.write_hsf(Path(args.output), field)
    except OSError as exc:
        print(f"error: cannot write {args.output}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hierdecomp", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log every level")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, preset=True):
        p.add_argument("--output", "-o", help="output directory")
        if preset:
            p.add_argument("--preset", default="div2d", choices=sorted(PRESETS))
        p.add_argument("--p", type=float, default=None, help="data exponent (preset default)")
        p.add_argument("--zeta", type=float, default=None, help="scale ratio (default 2^(p-1))")
        p.add_argument("--lambda1", default="auto", help="first scale or 'auto'")
        p.add_argument("--levels", type=int, default=8)
        p.add_argument("--tol", type=float, default=1e-6, help="inner certificate tolerance")
        p.add_argument("--max-iters", type=int, default=100_000)
        p.add_argument("--beta", type=float, default=None, help="GN constant for the auto first scale")
        p.add_argument("--stop-tol", type=float, default=1e-6)

    solve = sub.add_parser("solve", help="hierarchical decomposition of an HSF1 field")
    solve.add_argument("--input", "-i")
    common(solve)
    image = sub.add_parser("image", help="BV/L2 hierarchy of a PGM image")
    image.add_argument("--input", "-i")
    common(image, preset=False)
    oracle = sub.add_parser("oracle", help="cross-check one level against the conic solver")
    oracle.add_argument("--input", "-i")
    common(oracle)
    verify = sub.add_parser("verify", help="run certificate suites")
    verify.add_argument("--suite", default="all")
    verify.add_argument("--grid", type=int, default=None, help="grid size override")
    verify.add_argument("--output", "-o")
    verify.add_argument("--tol", type=float, default=1e-6)
    verify.add_argument("--max-iters", type=int, default=100_000)
    synth = sub.add_parser("synth", help="write a synthetic input field")
    synth.add_argument("kind", choices=["random", "cos", "disc", "zero"])
    synth.add_argument("output")
    synth.add_argument("--n", type=int, default=64)
    synth.add_argument("--dim", type=int, default=2)
    synth.add_argument("--components", type=int, default=1)
    synth.add_argument("--radius", type=float, default=math.pi / 4)
    synth.add_argument("--seed", type=int, default=0)
    return parser


COMMANDS = {"solve": cmd_solve, "image": cmd_image, "verify": cmd_verify, "oracle": cmd_oracle}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.command == "synth":
        return cmd_synth(args)
    try:
        cfg = RunConfig.from_args(args)
        out = _output_dir(cfg)
        with FileLock(str(out / ".hierdecomp.lock"), timeout=0):
            return COMMANDS[cfg.subcommand](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except Timeout:
        print(f"error: another run holds the lock on {cfg.output}", file=sys.stderr)
        return EXIT_IO
    except _Failure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
