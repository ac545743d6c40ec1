"""Command-line entry point: ``hjhomog <subcommand> [options]``.

Component indices on the command line are 1-based.  Every subcommand exits
with status 0 only when everything it checked passed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import efftable, evolve, harness
from .cell import CellSolveError, effective_hamiltonian, residual
from .checks import _plain
from .config import ConfigError, load_json, load_system
from .grids import TorusGrid, write_csv


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _load_system_arg(path):
    if path is None:
        raise ConfigError("--config is required")
    return load_system(Path(path))


def _emit(obj) -> None:
    print(json.dumps(_plain(obj), indent=2, sort_keys=True))


def cmd_cell(args) -> int:
    system = _load_system_arg(args.config)
    i = args.component - 1
    params = efftable.CellParams(
        n=args.n,
        alphas=tuple(_floats(args.alphas)) if args.alphas else efftable.DEFAULT_ALPHAS,
        residual_tol=args.tol,
    )
    x = _floats(args.x) if args.x else [0.0] * system.N
    r = _floats(args.r) if args.r else [0.0] * system.M
    p = _floats(args.p) if args.p else [0.0] * system.N
    spec = params.spec(system, i, x, r, p)
    sol = effective_hamiltonian(spec)
    out = {
        "component": args.component,
        "x": x,
        "r": r,
        "p": p,
        "lambda": sol.lam,
        "lambda_alpha": [d["lambda_alpha"] for d in sol.diagnostics["per_alpha"]],
        "alphas": list(spec.alphas),
        "iterations": [d["iterations"] for d in sol.diagnostics["per_alpha"]],
        "residual": residual(spec, sol.lam, sol.corrector),
        "discount_residual": sol.diagnostics["residual"],
        "n": spec.grid.n,
    }
    if args.corrector_out:
        write_csv(sol.corrector, args.corrector_out)
    _emit(out)
    return 0


def cmd_table(args) -> int:
    system = _load_system_arg(args.config)
    components = [c - 1 for c in _int_list(args.components)] if args.components else list(range(system.M))
    params = efftable.CellParams(
        n=args.n,
        alphas=tuple(_floats(args.alphas)) if args.alphas else efftable.DEFAULT_ALPHAS,
    )
    try:
        table = efftable.build_table(system, components, args.axes, params, args.workers)
    except efftable.TableBuildError as exc:
        _emit({"error": str(exc), "failures": exc.failures})
        return 1
    out = Path(args.out)
    efftable.save(table, out)
    if args.csv:
        table.to_csv(out.with_suffix(".csv"))
    _emit({"table": str(out), "shape": list(table.values.shape), "axes": table.header()["axes"]})
    return 0


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_evolve(args) -> int:
    system = _load_system_arg(args.config)
    L = harness._fraction(args.L)
    grid = TorusGrid(system.N, args.n, L)
    sources = args.u0 or ["sin(2*pi*x1)"] * system.M
    if len(sources) == 1 and ";" in sources[0]:
        sources = sources[0].split(";")
    u0 = harness.initial_field(grid, sources)
    if args.eps.lower() == "none":
        if args.hbar_table:
            hbar = efftable.load(args.hbar_table)
        elif harness._is_abs_p_base(system):
            hbar = efftable.WeaklyCoupledEikonalHBar(system.coupling_matrix())
        else:
            raise ConfigError("homogenized runs need --hbar-table for this system")
        source = evolve.Homogenized(hbar)
    else:
        source = evolve.Oscillating(system, float(harness._fraction(args.eps)))
    snaps = tuple(_floats(args.snapshots)) if args.snapshots else ()
    problem = evolve.EvolutionProblem(source, u0, args.T, args.cfl, snaps)
    result = evolve.solve(problem)
    out = Path(args.out) if args.out else Path(args.out_dir) / "final.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(result.final, out)
    snap_files = {}
    for t, field in sorted(result.snapshots.items()):
        path = out.with_name(f"{out.stem}_t{t:g}{out.suffix}")
        write_csv(field, path)
        snap_files[repr(t)] = str(path)
    diagnostics = dict(result.diagnostics, final=str(out), snapshots=snap_files)
    _emit(diagnostics)
    return 0 if diagnostics["linf_ok"] else 1


def _experiment(args) -> harness.ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = harness.ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out_dir(args, cfg=None) -> Path:
    if args.out_dir:
        return Path(args.out_dir)
    if cfg is not None:
        return cfg.base_dir / cfg.out_dir
    return Path("out")


def cmd_converge(args) -> int:
    cfg = _experiment(args)
    report = harness.run_convergence(cfg, args.workers)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    checks = report.checks()
    data = {"report": report.to_dict(), "checks": [c.to_dict() for c in checks]}
    (out / "convergence.json").write_text(json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")
    harness.emit_plot_data(report, out)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}")
    print(f"errors: {report.errors}")
    return 0 if all(c.passed for c in checks) else 1


def cmd_verify(args) -> int:
    cfg = _experiment(args)
    suite = harness.run_property_suite(cfg, args.workers, convergence=not args.skip_convergence)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "verify.json").write_text(suite.to_json())
    print(suite.summary())
    return 0 if suite.passed else 1


def cmd_plotdata(args) -> int:
    data = load_json(args.report)
    report = harness.ConvergenceReport.from_dict(data.get("report", data))
    paths = harness.emit_plot_data(report, _out_dir(args))
    for p in paths:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hjhomog", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="system or experiment JSON")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", default=None)
    common.add_argument("--workers", type=int, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cell", parents=[common], help="solve one cell problem")
    p.add_argument("--component", type=int, default=1)
    p.add_argument("--x")
    p.add_argument("--r")
    p.add_argument("--p")
    p.add_argument("--n", type=int)
    p.add_argument("--alphas")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--corrector-out")
    p.set_defaults(func=cmd_cell)

    p = sub.add_parser("table", parents=[common], help="tabulate the effective Hamiltonian")
    p.add_argument("--axes", required=True, help="name:min:max:count items, e.g. 'p1:-4:4:81 r1:1:1:1'")
    p.add_argument("--out", required=True)
    p.add_argument("--components", help="comma-separated, 1-based (default: all)")
    p.add_argument("--n", type=int)
    p.add_argument("--alphas")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("evolve", parents=[common], help="run one evolution")
    p.add_argument("--eps", default="none", help="period of the fast variable, or 'none' for the homogenized problem")
    p.add_argument("--L", default="1")
    p.add_argument("--n", type=int, default=160)
    p.add_argument("--T", type=float, default=0.5)
    p.add_argument("--cfl", type=float, default=0.5)
    p.add_argument("--u0", action="append", help="initial data expression, once per component")
    p.add_argument("--snapshots")
    p.add_argument("--out")
    p.add_argument("--hbar-table")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("converge", parents=[common], help="epsilon-sweep convergence study")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("verify", parents=[common], help="run the property suite")
    p.add_argument("--skip-convergence", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plotdata", parents=[common], help="write plot CSVs from a convergence report")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CellSolveError, ValueError, IndexError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

