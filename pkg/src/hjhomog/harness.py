"""Experiment orchestration: the epsilon-sweep convergence study, the property
suite and plot-data output.

An experiment config is JSON::

    {"system": {...} or "path/to/system.json",
     "L": 1, "T": 0.5, "eps": ["1/5", "1/10", "1/20", "1/40"],
     "points_per_eps": 32, "u0": ["sin(2*pi*x1)"],
     "hbar": {"source": "closed_form"},
     "seed": 0, "budgets": {...}, "out_dir": "out"}

``hbar.source`` is ``closed_form`` (1-D weakly coupled |p| systems),
``table`` with a ``path`` to a saved table, or ``build`` with ``axes`` and
optional ``cell`` parameters.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import catalog
from . import expr as _expr
from .cell import effective_hamiltonian
from .checks import CheckReport
from .config import ConfigError, load_json, load_system
from .efftable import (
    CellParams,
    WeaklyCoupledEikonalHBar,
    build_table,
    closed_form_constant_coupling,
    closed_form_eikonal_weakly_coupled,
    closed_form_piecewise_r1,
    coefficient_stats,
    flat_part_width,
    load as load_table,
)
from .evolve import (
    EvolutionProblem,
    Homogenized,
    Oscillating,
    check_comparison,
    lipschitz_radius,
    solve,
)
from .grids import GridField, TorusGrid, restrict, sup_diff
from .hamiltonians import (
    HamiltonianSystem,
    WeaklyCoupled,
    check_A1_coefficients,
    check_A3,
    check_lip_bounds,
    check_periodicity,
)

DEFAULT_EPS = ("1/5", "1/10", "1/20", "1/40")
DEFAULT_BUDGETS = {
    "structural": 256,
    "oracle": 20,
    "trivial": 10,
    "constant_coupling": 20,
    "piecewise": 10,
    "a3_pairs": 50,
    "convexity": 50,
    "comparison": 5,
}
HBAR_TOL = 2e-2
TRIVIAL_TOL = 1e-6
A3_TOL = 1e-3
COMPARISON_TOL = 1e-6
REDUCTION = 0.6
SLOPE_SPREAD = 0.10


def _fraction(value) -> Fraction:
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True)
class ExperimentConfig:
    system: dict
    L: Fraction = Fraction(1)
    T: float = 0.5
    eps: tuple = tuple(Fraction(e) for e in DEFAULT_EPS)
    points_per_eps: int = 32
    coarse_n: int | None = None
    homogenized_n: int | None = None
    cfl: float = 0.5
    u0: tuple = ("sin(2*pi*x1)",)
    hbar: dict = field(default_factory=lambda: {"source": "closed_form"})
    slice: dict = field(default_factory=dict)
    seed: int = 0
    budgets: dict = field(default_factory=lambda: dict(DEFAULT_BUDGETS))
    out_dir: str = "out"
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ExperimentConfig":
        base_dir = Path(base_dir)
        known = {
            "system", "L", "T", "eps", "points_per_eps", "coarse_n", "homogenized_n", "cfl",
            "u0", "hbar", "slice", "seed", "budgets", "out_dir",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        if "system" not in data:
            raise ConfigError("experiment config needs a 'system'")
        system = data["system"]
        if isinstance(system, str):
            path = base_dir / system
            if not path.exists():
                raise ConfigError(f"system file {path} does not exist")
            system = load_json(path)
        budgets = dict(DEFAULT_BUDGETS)
        budgets.update(data.get("budgets", {}))
        if any(int(v) < 1 for v in budgets.values()):
            raise ConfigError("every budget must be >= 1")
        hbar = dict(data.get("hbar", {"source": "closed_form"}))
        if hbar.get("source") == "table":
            path = base_dir / hbar.get("path", "")
            if not path.is_file():
                raise ConfigError(f"table file {path} does not exist")
            hbar["path"] = str(path)
        elif hbar.get("source") not in ("closed_form", "build"):
            raise ConfigError(f"unknown hbar source {hbar.get('source')!r}")
        u0 = data.get("u0", ["sin(2*pi*x1)"])
        if isinstance(u0, str):
            u0 = [u0]
        cfg = cls(
            system=system,
            L=_fraction(data.get("L", 1)),
            T=float(data.get("T", 0.5)),
            eps=tuple(_fraction(e) for e in data.get("eps", DEFAULT_EPS)),
            points_per_eps=int(data.get("points_per_eps", 32)),
            coarse_n=data.get("coarse_n"),
            homogenized_n=data.get("homogenized_n"),
            cfl=float(data.get("cfl", 0.5)),
            u0=tuple(u0),
            hbar=hbar,
            slice=dict(data.get("slice", {})),
            seed=int(data.get("seed", 0)),
            budgets={k: int(v) for k, v in budgets.items()},
            out_dir=str(data.get("out_dir", "out")),
            base_dir=base_dir,
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(load_json(path), path.parent)

    def validate(self) -> None:
        if not self.eps:
            raise ConfigError("the eps schedule is empty")
        if any(e <= 0 for e in self.eps):
            raise ConfigError("eps values must be positive")
        if list(self.eps) != sorted(self.eps, reverse=True) or len(set(self.eps)) != len(self.eps):
            raise ConfigError("eps values must be strictly decreasing")
        for e in self.eps:
            if (self.L / e).denominator != 1:
                raise ConfigError(f"eps = {e} does not divide L = {self.L}")
        if self.points_per_eps < 32:
            raise ConfigError("points_per_eps must be >= 32 (h <= eps/32)")
        if not self.T >= 0:
            raise ConfigError("T must be >= 0")

    def system_obj(self) -> HamiltonianSystem:
        return load_system(self.system)

    def grid_sizes(self) -> list[int]:
        sizes = []
        for e in self.eps:
            n = self.points_per_eps * self.L / e
            if n.denominator != 1:
                raise ConfigError(f"points_per_eps * L / eps is not an integer for eps = {e}")
            sizes.append(int(n))
        return sizes

    def initial_data(self, grid: TorusGrid, M: int) -> GridField:
        if len(self.u0) != M:
            raise ConfigError(f"need {M} initial-data expressions, got {len(self.u0)}")
        return initial_field(grid, self.u0)


def initial_field(grid: TorusGrid, sources) -> GridField:
    """Sample one expression in x1 (x2) per component on the grid."""
    pts = grid.points()
    values = []
    for src in sources:
        e = _expr.parse(src)
        bad = [v for v in e.variables if v[0] != "x" or int(v[1:]) > grid.N]
        if bad:
            raise ConfigError(f"initial data may only use x1..x{grid.N}, got {bad}")
        values.append(np.broadcast_to(e(x=pts), grid.shape))
    return GridField(grid, np.stack(values))


def _is_abs_p_base(system: HamiltonianSystem) -> bool:
    """Numerically confirm every component is |p| + sum_j c_ji r_j (N = 1)."""
    if system.N != 1 or not all(isinstance(c, WeaklyCoupled) for c in system.components):
        return False
    rng = np.random.default_rng(12345)
    x = rng.uniform(0, 1, (64, 1))
    y = rng.uniform(0, 1, (64, 1))
    p = rng.uniform(-5, 5, (64, 1))
    for comp in system.components:
        base = np.broadcast_to(comp.base(x=x, y=y, p=p), (64,))
        if not np.allclose(base, np.abs(p[:, 0]), rtol=0, atol=1e-12):
            return False
    return True


def make_hbar(config: ExperimentConfig, system: HamiltonianSystem, workers: int | None = None):
    source = config.hbar.get("source", "closed_form")
    if source == "closed_form":
        if not _is_abs_p_base(system):
            raise ConfigError("closed-form H-bar needs a 1-D weakly coupled system with base |p|")
        return WeaklyCoupledEikonalHBar(system.coupling_matrix())
    if source == "table":
        table = load_table(config.hbar["path"])
        if table.M != system.M or table.N != system.N:
            raise ConfigError("table dimensions do not match the system")
        return table
    cell = dict(config.hbar.get("cell", {}))
    if "alphas" in cell:
        cell["alphas"] = tuple(cell["alphas"])
    return build_table(system, range(system.M), config.hbar["axes"], CellParams(**cell), workers)


# --- convergence study -------------------------------------------------------------


@dataclass
class ConvergenceReport:
    eps_list: list = field(default_factory=list)
    n_list: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    runtimes: list = field(default_factory=list)
    dt: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    final_slopes: list = field(default_factory=list)
    lipschitz_radii: list = field(default_factory=list)
    linf: list = field(default_factory=list)
    n_coarse: int = 0
    n_homogenized: int = 0
    T: float = 0.0
    L: float = 1.0
    hbar_slice: dict = field(default_factory=dict)
    profiles: dict = field(default_factory=dict)

    @property
    def slope_spread(self) -> float:
        """(max - min) / max of the final-state slopes across the sweep."""
        if not self.final_slopes:
            return 0.0
        hi = max(self.final_slopes)
        return (hi - min(self.final_slopes)) / hi if hi > 0 else 0.0

    def checks(self) -> list[CheckReport]:
        mono = CheckReport("convergence_monotone", True, n_checked=max(len(self.errors) - 1, 0))
        for k, (a, b) in enumerate(zip(self.errors, self.errors[1:])):
            if not b < a:
                mono.add_violation(eps=self.eps_list[k + 1], error=b, previous=a)
        mono.details = {"errors": self.errors, "ratios": self.ratios}

        reduction = CheckReport("convergence_reduction", True, n_checked=1)
        if self.errors:
            factor = self.errors[-1] / self.errors[0] if self.errors[0] > 0 else 0.0
            reduction.details = {"last_over_first": factor, "limit": REDUCTION}
            if factor > REDUCTION:
                reduction.add_violation(last_over_first=factor)

        linf = CheckReport("apriori_linf_sweep", True, n_checked=len(self.linf))
        for run in self.linf:
            if not run["ok"]:
                linf.add_violation(**run)

        slope = CheckReport("slope_persistence", True, n_checked=len(self.final_slopes))
        slope.details = {"slopes": self.final_slopes, "spread": self.slope_spread, "limit": SLOPE_SPREAD,
                         "lipschitz_radii": self.lipschitz_radii}
        if self.slope_spread > SLOPE_SPREAD:
            slope.add_violation(spread=self.slope_spread)
        for e, s, bound in zip(self.eps_list, self.final_slopes, self.lipschitz_radii):
            if s > bound:
                slope.add_violation(eps=e, slope=s, bound=bound)
        return [mono, reduction, linf, slope]

    def to_dict(self, timings: bool = True) -> dict:
        d = {k: v for k, v in self.__dict__.items()}
        d["slope_spread"] = self.slope_spread
        if not timings:
            d.pop("runtimes")
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ConvergenceReport":
        data = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**data)


def _default_slice(system_M: int, spec: dict) -> dict:
    return {
        "component": int(spec.get("component", 1)),
        "x": [float(v) for v in spec.get("x", [0.0])],
        "r": [float(v) for v in spec.get("r", [1.0] * system_M)],
        "p_min": float(spec.get("p_min", -4.0)),
        "p_max": float(spec.get("p_max", 4.0)),
        "count": int(spec.get("count", 81)),
    }


def run_convergence(config: ExperimentConfig, workers: int | None = None) -> ConvergenceReport:
    """Solve the homogenized problem once and the oscillating one per eps; compare at T."""
    system = config.system_obj()
    sizes = config.grid_sizes()
    n_coarse = config.coarse_n or min(sizes)
    # the homogenized run defaults to the coarse comparison grid; homogenized_n refines it
    n_hom = config.homogenized_n or n_coarse
    for n in sizes + [n_hom]:
        if n % n_coarse:
            raise ConfigError(f"grid n={n} is not nested over the coarse grid n={n_coarse}")
    hbar = make_hbar(config, system, workers)
    L = config.L
    coarse = TorusGrid(system.N, n_coarse, L)

    def homogenized():
        g = TorusGrid(system.N, n_hom, L)
        return solve(EvolutionProblem(Homogenized(hbar), config.initial_data(g, system.M), config.T, config.cfl))

    def oscillating(k):
        g = TorusGrid(system.N, sizes[k], L)
        problem = EvolutionProblem(
            Oscillating(system, float(config.eps[k])), config.initial_data(g, system.M), config.T, config.cfl
        )
        return solve(problem), lipschitz_radius(problem)

    with ThreadPoolExecutor(max_workers=workers or len(sizes) + 1) as pool:
        hom_future = pool.submit(homogenized)
        runs = list(pool.map(oscillating, range(len(sizes))))
        hom = hom_future.result()

    hom_coarse = restrict(hom.final, coarse)
    report = ConvergenceReport(
        eps_list=[float(e) for e in config.eps],
        n_list=sizes,
        n_coarse=n_coarse,
        n_homogenized=n_hom,
        T=config.T,
        L=float(L),
    )
    report.linf.append(_linf_entry("homogenized", hom))
    profiles = {"x": coarse.nodes().tolist(), "hom": hom_coarse.values.reshape(system.M, -1).tolist(), "eps": {}}
    for e, (res, radius) in zip(config.eps, runs):
        u = restrict(res.final, coarse)
        report.errors.append(sup_diff(u, hom_coarse))
        report.runtimes.append(res.diagnostics["runtime"])
        report.dt.append(res.diagnostics["dt_min"])
        report.theta.append(res.diagnostics["theta_max"])
        report.steps.append(res.diagnostics["steps"])
        report.final_slopes.append(res.diagnostics["final_slope"])
        report.lipschitz_radii.append(radius)
        report.linf.append(_linf_entry(f"eps={e}", res))
        profiles["eps"][str(float(e))] = u.values.reshape(system.M, -1).tolist()
    report.ratios = [a / b if b > 0 else math.inf for a, b in zip(report.errors, report.errors[1:])]
    report.profiles = profiles
    report.hbar_slice = hbar_slice(hbar, _default_slice(system.M, config.slice))
    return report


def _linf_entry(name: str, result) -> dict:
    d = result.diagnostics
    return {"run": name, "max_abs_u": d["max_abs_u"], "bound": d["linf_bound"], "ok": bool(d["linf_ok"])}


def hbar_slice(hbar, spec: dict) -> dict:
    p = np.linspace(spec["p_min"], spec["p_max"], spec["count"])
    x = np.broadcast_to(np.array(spec["x"]), (len(p), len(spec["x"])))
    r = np.broadcast_to(np.array(spec["r"]), (len(p), len(spec["r"])))
    values = hbar.evaluate(spec["component"] - 1, x, r, p[:, None])
    return dict(spec, p=p.tolist(), hbar=np.asarray(values, dtype=float).tolist())


# --- plot data ---------------------------------------------------------------------------


def emit_plot_data(report: ConvergenceReport | None, out_dir) -> list[Path]:
    """Write eps_error.csv, hbar_slice.csv and solution_profiles.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = report or ConvergenceReport()
    paths = [out / "eps_error.csv", out / "hbar_slice.csv", out / "solution_profiles.csv"]

    with paths[0].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "error", "ratio"])
        for k, (e, err) in enumerate(zip(report.eps_list, report.errors)):
            ratio = report.ratios[k] if k < len(report.ratios) else ""
            w.writerow([repr(e), repr(err), repr(ratio) if ratio != "" else ""])

    with paths[1].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p", "hbar"])
        sl = report.hbar_slice
        for p, h in zip(sl.get("p", []), sl.get("hbar", [])):
            w.writerow([repr(p), repr(h)])

    with paths[2].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        prof = report.profiles
        hom = prof.get("hom", [])
        # largest eps first, whatever order a JSON round trip left the keys in
        eps_cols = dict(sorted(prof.get("eps", {}).items(), key=lambda kv: -float(kv[0])))
        header = ["x"] + [f"hom_{j + 1}" for j in range(len(hom))]
        for e, comps in eps_cols.items():
            header += [f"eps_{e}_{j + 1}" for j in range(len(comps))]
        w.writerow(header)
        columns = [prof.get("x", [])] + list(hom) + [c for comps in eps_cols.values() for c in comps]
        for row in zip(*columns):
            w.writerow([repr(v) for v in row])
    return paths


def read_plot_csv(path) -> tuple[list[str], list[list[float]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(v) if v else math.nan for v in row] for row in rows[1:]]


# --- property suite -------------------------------------------------------------------------


@dataclass
class SuiteReport:
    seed: int
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "passed": self.passed, "checks": [c.to_dict() for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"{status}  {c.name}  ({c.n_checked} checked, {c.n_violations} violations)")
        lines.append(f"{'ALL PASS' if self.passed else 'FAILURES'}: {sum(c.passed for c in self.checks)}/{len(self.checks)}")
        return "\n".join(lines)


def _lambdas(specs, workers):
    def one(spec):
        return effective_hamiltonian(spec)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, specs))
    return [one(s) for s in specs]


def _spec(system, i, x, r, p):
    return CellParams().spec(system, i, x, r, p)


def suite_oracle(seed: int, count: int, workers=None) -> CheckReport:
    """Cell solver against the closed form on Example A."""
    system = catalog.system("example_a")
    c = system.coupling_matrix()
    rng = np.random.default_rng(seed)
    samples = [(rng.uniform(-3, 3), rng.uniform(-4, 4)) for _ in range(count)]
    sols = _lambdas([_spec(system, 0, [0.0], [r], [p]) for r, p in samples], workers)
    report = CheckReport("oracle_closed_form", True, n_checked=count)
    worst = 0.0
    for (r, p), sol in zip(samples, sols):
        exact = closed_form_eikonal_weakly_coupled(c, 0, [r], p)
        err = abs(sol.lam - exact)
        worst = max(worst, err)
        if err > HBAR_TOL:
            report.add_violation(r=r, p=p, lam=sol.lam, exact=exact)
    report.details = {"max_error": worst, "tol": HBAR_TOL}
    return report


def suite_trivial_corrector(seed: int, count: int, workers=None) -> CheckReport:
    """y-independent Hamiltonians: lambda = H(x, r, p) and a zero corrector."""
    system = catalog.system("y_independent")
    rng = np.random.default_rng(seed)
    samples = [
        (int(rng.integers(0, system.M)), [rng.uniform(0, 1)], rng.uniform(-2, 2, system.M).tolist(), [rng.uniform(-3, 3)])
        for _ in range(count)
    ]
    sols = _lambdas([_spec(system, *s) for s in samples], workers)
    report = CheckReport("trivial_corrector", True, n_checked=count)
    worst = 0.0
    for (i, x, r, p), sol in zip(samples, sols):
        exact = system.eval(i, x, [0.0], r, p)
        err = abs(sol.lam - exact)
        size = float(np.abs(sol.corrector.values).max())
        worst = max(worst, err, size)
        if err > TRIVIAL_TOL or size > TRIVIAL_TOL:
            report.add_violation(i=i, x=x, r=r, p=p, lam=sol.lam, exact=exact, corrector_sup=size)
    report.details = {"max_error": worst, "tol": TRIVIAL_TOL}
    return report


def suite_constant_coupling(seed: int, count: int, workers=None) -> CheckReport:
    system = catalog.system("constant_coupling")
    c = system.coupling_matrix()
    rng = np.random.default_rng(seed)
    samples = [(int(rng.integers(0, 2)), rng.uniform(-3, 3, 2).tolist(), rng.uniform(-4, 4)) for _ in range(count)]
    sols = _lambdas([_spec(system, i, [0.0], r, [p]) for i, r, p in samples], workers)
    report = CheckReport("constant_coupling", True, n_checked=count)
    worst = 0.0
    for (i, r, p), sol in zip(samples, sols):
        exact = closed_form_constant_coupling(lambda _i, q: float(np.abs(q).max()), c, i, r, p)
        err = abs(sol.lam - exact)
        worst = max(worst, err)
        if err > HBAR_TOL:
            report.add_violation(i=i, r=r, p=p, lam=sol.lam, exact=exact)
    report.details = {"max_error": worst, "tol": HBAR_TOL}
    return report


def suite_piecewise(seed: int, count: int, workers=None) -> CheckReport:
    """Three branches in r1 at p = 1, then random r1 against the piecewise formula."""
    system = catalog.system("piecewise")
    c = system.coupling_matrix()
    c11 = c.column(0)[0]
    rng = np.random.default_rng(seed)
    fixed = [(-4.0, -2.0, "bottom"), (0.0, 1.0, "middle"), (4.0, 6.0, "top")]
    random_r = rng.uniform(-6, 6, count).tolist()
    r_all = [r for r, _, _ in fixed] + random_r
    sols = _lambdas([_spec(system, 0, [0.0], [r], [1.0]) for r in r_all], workers)
    report = CheckReport("piecewise_r1", True, n_checked=len(r_all))
    worst = 0.0
    for k, (r, sol) in enumerate(zip(r_all, sols)):
        formula = closed_form_piecewise_r1(c11, r, 1.0)
        general = closed_form_eikonal_weakly_coupled(c, 0, [r], 1.0)
        expected = fixed[k][1] if k < len(fixed) else formula
        err = abs(sol.lam - expected)
        worst = max(worst, err)
        if err > HBAR_TOL or abs(formula - general) > 1e-9:
            report.add_violation(r1=r, lam=sol.lam, expected=expected, formula=formula, general=general)
    top, bottom, mean = coefficient_stats(c11)
    report.details = {"max_error": worst, "tol": HBAR_TOL, "max_c11": top, "min_c11": bottom, "mean_c11": mean}
    return report


def _p_table(system, i, r, p_max, count, workers):
    axes = f"p1:{-p_max}:{p_max}:{count} " + " ".join(f"r{j + 1}:{v!r}:{v!r}:1" for j, v in enumerate(r))
    return build_table(system, [i], axes, CellParams(), workers)


def suite_flat_part(workers=None) -> tuple[CheckReport, CheckReport]:
    """Example A at r = 1: flat at 3 for |p| <= 0.9, rising by |p| = 1.5; and coercivity rays."""
    system = catalog.system("example_a")
    table = _p_table(system, 0, [1.0], 4.0, 81, workers)
    p = table.axes[-1].nodes()
    vals = table.values[0].reshape(-1)
    flat = CheckReport("flat_part", True, n_checked=len(p))
    inner = np.abs(p) <= 0.9 + 1e-9
    dev = float(np.abs(vals[inner] - 3.0).max())
    for pk, v in zip(p[inner], vals[inner]):
        if abs(v - 3.0) > HBAR_TOL:
            flat.add_violation(p=pk, hbar=v)
    rise = [table.query(0, [0.0], [1.0], [s * 1.5]) for s in (-1, 1)]
    for s, v in zip((-1, 1), rise):
        if v < 3.05:
            flat.add_violation(p=s * 1.5, hbar=v, required=3.05)
    flat.details = {"max_flat_deviation": dev, "hbar_at_1.5": rise}
    return flat, table


def suite_coercivity(flat_table, seed: int, workers=None) -> CheckReport:
    """Along each p-ray, the hull boundary exceeds the centre when beyond the flat width."""
    report = CheckReport("hbar_coercivity", True)
    cases = [("example_a", catalog.system("example_a"), 0, [1.0], flat_table)]
    system_b = catalog.system("example_b")
    rng = np.random.default_rng(seed)
    for k in range(3):
        i = k % 2
        r = rng.uniform(-2, 2, 2).tolist()
        cases.append(("example_b", system_b, i, r, None))
    widths = []
    for name, system, i, r, table in cases:
        width = flat_part_width(system.coupling_matrix(), i, r)
        p_max = max(4.0, math.ceil(width) + 2.0)
        if table is None:
            table = _p_table(system, i, r, p_max, 5, workers)
        lo, hi = table.axes[-1].min, table.axes[-1].max
        centre = table.query(i, [0.0], r, [0.0])
        widths.append(width)
        for end in (lo, hi):
            if abs(end) <= width:
                continue
            report.n_checked += 1
            v = table.query(i, [0.0], r, [end])
            if not v > centre:
                report.add_violation(system=name, i=i, r=r, p=end, boundary=v, centre=centre, width=width)
    report.details = {"flat_widths": widths}
    return report


def suite_a3(seed: int, count: int, workers=None) -> CheckReport:
    """lambda_j(r) - lambda_j(s) >= -1e-3 when r_j - s_j = max_k (r_k - s_k) >= 0 (Example B)."""
    system = catalog.system("example_b")
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        j = int(rng.integers(0, 2))
        s = rng.uniform(-2, 2, 2)
        d = rng.uniform(-1, 0, 2)
        d[j] = rng.uniform(0, 1)
        d = np.minimum(d, d[j])
        p = rng.uniform(-3, 3)
        pairs.append((j, (s + d).tolist(), s.tolist(), p))
    specs = []
    for j, r, s, p in pairs:
        specs += [_spec(system, j, [0.0], r, [p]), _spec(system, j, [0.0], s, [p])]
    sols = _lambdas(specs, workers)
    report = CheckReport("hbar_A3", True, n_checked=count)
    worst = math.inf
    for k, (j, r, s, p) in enumerate(pairs):
        margin = sols[2 * k].lam - sols[2 * k + 1].lam
        worst = min(worst, margin)
        if margin < -A3_TOL:
            report.add_violation(j=j, r=r, s=s, p=p, margin=margin)
    report.details = {"min_margin": worst, "tol": -A3_TOL}
    return report


def suite_convexity(seed: int, count: int, workers=None) -> CheckReport:
    """Midpoint convexity in p on Examples A and B (both convex in p)."""
    systems = [catalog.system("example_a"), catalog.system("example_b")]
    rng = np.random.default_rng(seed)
    triples = []
    for k in range(count):
        system = systems[k % 2]
        i = int(rng.integers(0, system.M))
        r = rng.uniform(-2, 2, system.M).tolist()
        p, q = rng.uniform(-4, 4, 2)
        triples.append((system, i, r, float(p), float(q)))
    specs = []
    for system, i, r, p, q in triples:
        specs += [_spec(system, i, [0.0], r, [v]) for v in (p, q, 0.5 * (p + q))]
    sols = _lambdas(specs, workers)
    report = CheckReport("hbar_convexity", True, n_checked=count)
    worst = -math.inf
    for k, (system, i, r, p, q) in enumerate(triples):
        lp, lq, lm = (sols[3 * k + m].lam for m in range(3))
        slack = lm - 0.5 * (lp + lq)
        worst = max(worst, slack)
        if slack > HBAR_TOL:
            report.add_violation(M=system.M, i=i, r=r, p=p, q=q, slack=slack)
    report.details = {"max_slack": worst, "tol": HBAR_TOL}
    return report


def comparison_data(seed: int, count: int, grid: TorusGrid) -> list[tuple[GridField, GridField]]:
    """Seeded pairs (lower, upper) of smooth 2-component data; some pairs cross."""
    rng = np.random.default_rng(seed)
    x = grid.nodes()
    pairs = []
    for k in range(count):
        def smooth():
            out = np.zeros((2, len(x)))
            for j in range(2):
                for m in (1, 2, 3):
                    a, b = rng.normal(0, 0.5 / m, 2)
                    out[j] += a * np.sin(2 * np.pi * m * x) + b * np.cos(2 * np.pi * m * x)
            return out
        upper = smooth()
        # even pairs ordered, odd pairs crossing
        shift = rng.uniform(-0.5, -0.05) if k % 2 == 0 else rng.uniform(-0.1, 0.1)
        wiggle = 0.0 if k % 2 == 0 else rng.uniform(0.1, 0.3) * np.sin(2 * np.pi * x + rng.uniform(0, 6.3))
        lower = upper + shift + wiggle
        pairs.append((GridField(grid, lower), GridField(grid, upper)))
    return pairs


def comparison_problem(u0: GridField, T: float = 0.5) -> EvolutionProblem:
    return EvolutionProblem(Oscillating(catalog.system("comparison"), 0.2), u0, T)


def suite_comparison(seed: int, count: int, workers=None) -> tuple[CheckReport, list]:
    grid = TorusGrid(1, 160)
    pairs = comparison_data(seed, count, grid)
    report = CheckReport("comparison", True, n_checked=count)
    worst = -math.inf

    def one(pair):
        lower, upper = pair
        return check_comparison(comparison_problem(lower), lower, upper, COMPARISON_TOL)

    with ThreadPoolExecutor(max_workers=workers or 1) as pool:
        results = list(pool.map(one, pairs))
    for k, sub in enumerate(results):
        worst = max(worst, sub.details["worst_margin"])
        if not sub.passed:
            report.add_violation(pair=k, worst_margin=sub.details["worst_margin"])
    report.details = {"worst_margin": worst, "tol": COMPARISON_TOL}
    return report, pairs


def suite_linf(pairs, workers=None) -> CheckReport:
    """Every run obeys |u| <= |u0| + C T; includes the constant-coupling case to T = 1."""
    problems = [comparison_problem(u) for pair in pairs for u in pair]
    grid = TorusGrid(1, 160)
    x = grid.nodes()
    u0 = GridField(grid, np.stack([np.sin(2 * np.pi * x), np.cos(2 * np.pi * x)]))
    problems.append(EvolutionProblem(Oscillating(catalog.system("constant_coupling"), 0.2), u0, 1.0))
    with ThreadPoolExecutor(max_workers=workers or 1) as pool:
        results = list(pool.map(solve, problems))
    report = CheckReport("apriori_linf", True, n_checked=len(results))
    entries = []
    for k, res in enumerate(results):
        entry = _linf_entry(f"run {k}", res)
        entries.append(entry)
        if not entry["ok"]:
            report.add_violation(**entry)
    report.details = {"runs": entries}
    return report


def structural_checks(system: HamiltonianSystem, seed: int, count: int) -> list[CheckReport]:
    """A1 (weakly coupled systems only), A3, periodicity and Lipschitz bounds of a system."""
    out = []
    if all(isinstance(c, WeaklyCoupled) for c in system.components):
        out.append(_renamed(check_A1_coefficients(system.coupling_matrix(), count, seed), "system_A1"))
    out.append(_renamed(check_A3(system, count, seed), "system_A3"))
    out.append(_renamed(check_periodicity(system, count, seed), "system_periodicity"))
    out.append(_renamed(check_lip_bounds(system, 2.0), "system_lip_bounds"))
    return out


def _renamed(report: CheckReport, name: str) -> CheckReport:
    report.name = name
    return report


def run_property_suite(config: ExperimentConfig, workers: int | None = None, convergence: bool = True) -> SuiteReport:
    """All suite-owned properties with seeds derived from ``config.seed``."""
    b = config.budgets
    seed = config.seed
    sub = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(8)]
    checks = structural_checks(config.system_obj(), sub[0], b["structural"])
    checks.append(suite_oracle(sub[1], b["oracle"], workers))
    checks.append(suite_trivial_corrector(sub[2], b["trivial"], workers))
    checks.append(suite_constant_coupling(sub[3], b["constant_coupling"], workers))
    checks.append(suite_piecewise(sub[4], b["piecewise"], workers))
    flat, table = suite_flat_part(workers)
    checks.append(flat)
    checks.append(suite_coercivity(table, sub[5], workers))
    checks.append(suite_a3(sub[6], b["a3_pairs"], workers))
    checks.append(suite_convexity(sub[7], b["convexity"], workers))
    comparison, pairs = suite_comparison(seed, b["comparison"], workers)
    checks.append(comparison)
    checks.append(suite_linf(pairs, workers))
    if convergence:
        report = run_convergence(config, workers)
        checks.extend(report.checks())
    return SuiteReport(seed, checks)


__all__ = [
    "ConvergenceReport",
    "ExperimentConfig",
    "SuiteReport",
    "emit_plot_data",
    "initial_field",
    "make_hbar",
    "read_plot_csv",
    "run_convergence",
    "run_property_suite",
]
