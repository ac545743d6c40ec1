"""Lattices of effective-Hamiltonian values and closed-form oracles.

A :class:`HBarTable` stores H-bar_i on a tensor lattice over the coordinates
``x1..xN, r1..rM, p1..pN``.  Axes with a single node are *frozen*: the table
asserts nothing about other values of that coordinate and queries ignore it.
Free axes are interpolated multilinearly, without extrapolation.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cell import DEFAULT_ALPHAS, DEFAULT_N, CellProblemSpec, effective_hamiltonian
from .grids import TorusGrid
from .hamiltonians import LIP_SAFETY, CouplingMatrix, HamiltonianSystem

MAGIC = b"HBAR"
VERSION = b"1"
AUDIT_N = 4096


class OutOfHullError(ValueError):
    pass


class TableBuildError(RuntimeError):
    def __init__(self, message: str, failures: list):
        super().__init__(message)
        self.failures = failures


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"axis {self.name}: count must be >= 1")
        if self.count == 1 and self.min != self.max:
            raise ValueError(f"axis {self.name}: a frozen axis needs min == max")
        if self.count > 1 and not self.max > self.min:
            raise ValueError(f"axis {self.name}: max must exceed min")

    @property
    def frozen(self) -> bool:
        return self.count == 1

    def nodes(self) -> np.ndarray:
        if self.frozen:
            return np.array([float(self.min)])
        return np.linspace(self.min, self.max, self.count)


_AXIS = re.compile(r"^([xrp])(\d+)$")


def parse_axes(text: str) -> list[Axis]:
    """Parse ``name:min:max:count`` items separated by spaces or commas."""
    axes = []
    for item in re.split(r"[\s,;]+", text.strip()):
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 4 or not _AXIS.match(parts[0]):
            raise ValueError(f"bad axis spec {item!r}; expected name:min:max:count")
        axes.append(Axis(parts[0], float(parts[1]), float(parts[2]), int(parts[3])))
    return axes


def coordinate_names(M: int, N: int) -> list[str]:
    return [f"x{k + 1}" for k in range(N)] + [f"r{k + 1}" for k in range(M)] + [f"p{k + 1}" for k in range(N)]


def _complete_axes(axes, M: int, N: int) -> tuple:
    given = {}
    for a in axes:
        if a.name in given:
            raise ValueError(f"axis {a.name} given twice")
        given[a.name] = a
    names = coordinate_names(M, N)
    unknown = set(given) - set(names)
    if unknown:
        raise ValueError(f"unknown axes for M={M}, N={N}: {sorted(unknown)}")
    return tuple(given.get(n, Axis(n, 0.0, 0.0, 1)) for n in names)


@dataclass(frozen=True)
class CellParams:
    n: int | None = None
    alphas: tuple = DEFAULT_ALPHAS
    residual_tol: float = 1e-8
    max_iters: int = 500
    method: str = "implicit"

    def spec(self, system: HamiltonianSystem, i: int, x, r, p) -> CellProblemSpec:
        n = DEFAULT_N[system.N] if self.n is None else self.n
        return CellProblemSpec(
            system, i, x, r, p, TorusGrid(system.N, n), tuple(self.alphas),
            self.residual_tol, self.max_iters, self.method,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alphas"] = list(self.alphas)
        return d


@dataclass(frozen=True, eq=False)
class HBarTable:
    """Effective Hamiltonian values on a lattice; ``values[c]`` is component ``components[c]``."""

    M: int
    N: int
    axes: tuple
    components: tuple
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        axes = tuple(self.axes)
        if [a.name for a in axes] != coordinate_names(self.M, self.N):
            raise ValueError("table axes must cover x, r, p in canonical order")
        vals = np.asarray(self.values, dtype=float)
        expected = (len(self.components),) + tuple(a.count for a in axes)
        if vals.shape != expected:
            raise ValueError(f"values shape {vals.shape} != {expected}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("table values must be finite")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "components", tuple(int(c) for c in self.components))
        object.__setattr__(self, "values", vals)

    # -- queries ------------------------------------------------------------------

    def _slot(self, i: int) -> int:
        try:
            return self.components.index(i)
        except ValueError:
            raise KeyError(f"component {i} is not tabulated") from None

    def evaluate(self, i: int, x, r, p) -> np.ndarray:
        """Vectorized multilinear query; x, p of shape (..., N), r of shape (..., M)."""
        table = self.values[self._slot(i)]
        coords = [np.asarray(x, dtype=float), np.asarray(r, dtype=float), np.asarray(p, dtype=float)]
        columns = []
        for arr, dim in zip(coords, (self.N, self.M, self.N)):
            if arr.shape[-1] != dim:
                raise ValueError(f"expected trailing dimension {dim}, got {arr.shape}")
            columns += [arr[..., k] for k in range(dim)]
        shape = np.broadcast_shapes(*(c.shape for c in columns))
        free = []
        for axis_no, (axis, col) in enumerate(zip(self.axes, columns)):
            if axis.frozen:
                continue
            col = np.broadcast_to(col, shape)
            span = axis.max - axis.min
            tol = 1e-12 * max(span, abs(axis.min), abs(axis.max), 1.0)
            if np.any(col < axis.min - tol) or np.any(col > axis.max + tol) or np.any(np.isnan(col)):
                bad = col[(col < axis.min - tol) | (col > axis.max + tol) | np.isnan(col)].flat[0]
                raise OutOfHullError(
                    f"query {axis.name}={bad} outside table hull [{axis.min}, {axis.max}]"
                )
            nodes = axis.nodes()
            idx = np.clip(np.searchsorted(nodes, col, side="right") - 1, 0, axis.count - 2)
            t = np.clip((col - nodes[idx]) / (nodes[idx + 1] - nodes[idx]), 0.0, 1.0)
            free.append((axis_no, idx, t))
        base_index = [0] * len(self.axes)
        out = np.zeros(shape)
        for corner in range(2 ** len(free)):
            weight = np.ones(shape)
            index = list(base_index)
            for bit_no, (axis_no, idx, t) in enumerate(free):
                bit = (corner >> bit_no) & 1
                weight = weight * (t if bit else 1.0 - t)
                index[axis_no] = idx + bit
            out = out + weight * table[tuple(index)]
        return out

    def query(self, i: int, x, r, p) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        r = np.atleast_1d(np.asarray(r, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return float(self.evaluate(i, x, r, p))

    def _axis_slopes(self, prefix: str):
        out = []
        for k, axis in enumerate(self.axes):
            if axis.name[0] != prefix or axis.frozen:
                continue
            d = np.diff(self.values, axis=1 + k) / np.diff(axis.nodes()).reshape(
                (-1,) + (1,) * (len(self.axes) - k - 1)
            )
            out.append(float(np.abs(d).max()))
        return out

    def lip_p(self, radius: float = 0.0) -> float:
        """Largest p-slope of the interpolant (exact for multilinear), times 1.1."""
        return LIP_SAFETY * max(self._axis_slopes("p"), default=0.0)

    def lip_r(self, radius: float = 0.0) -> float:
        return LIP_SAFETY * sum(self._axis_slopes("r"))

    def hull(self, prefix: str) -> list:
        return [(a.min, a.max) for a in self.axes if a.name[0] == prefix]

    # -- persistence ----------------------------------------------------------------

    def header(self) -> dict:
        return {
            "M": self.M,
            "N": self.N,
            "axes": [[a.name, a.min, a.max, a.count] for a in self.axes],
            "components": list(self.components),
            "shape": list(self.values.shape),
            "dtype": "<f8",
            "provenance": self.provenance,
        }

    def to_csv(self, path) -> None:
        names = [a.name for a in self.axes]
        with Path(path).open("w", newline="") as fh:
            fh.write(f"# HBAR1 M={self.M} N={self.N} components={','.join(str(c + 1) for c in self.components)}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(names + [f"hbar{c + 1}" for c in self.components])
            node_lists = [a.nodes() for a in self.axes]
            for idx in np.ndindex(*self.values.shape[1:]):
                coords = [repr(float(node_lists[k][j])) for k, j in enumerate(idx)]
                vals = [repr(float(self.values[(c,) + idx])) for c in range(len(self.components))]
                writer.writerow(coords + vals)


def save(table: HBarTable, path) -> None:
    """Write ``HBAR1`` | u64 header length | JSON header | float64 LE values."""
    header = json.dumps(table.header(), sort_keys=True).encode()
    payload = np.ascontiguousarray(table.values, dtype="<f8").tobytes()
    with Path(path).open("wb") as fh:
        fh.write(MAGIC + VERSION)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(payload)


def load(path) -> HBarTable:
    data = Path(path).read_bytes()
    if len(data) < 5 or data[:4] != MAGIC:
        raise ValueError(f"{path}: not an HBAR table file")
    if data[4:5] != VERSION:
        raise ValueError(f"{path}: unsupported table version {data[4:5]!r}, expected {VERSION!r}")
    if len(data) < 13:
        raise ValueError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<Q", data[5:13])
    if len(data) < 13 + hlen:
        raise ValueError(f"{path}: truncated header")
    try:
        header = json.loads(data[13 : 13 + hlen])
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed header ({exc})") from None
    shape = tuple(header["shape"])
    body = data[13 + hlen :]
    if len(body) != 8 * math.prod(shape):
        raise ValueError(f"{path}: value block has {len(body)} bytes, expected {8 * math.prod(shape)}")
    values = np.frombuffer(body, dtype="<f8").reshape(shape)
    axes = tuple(Axis(n, float(lo), float(hi), int(c)) for n, lo, hi, c in header["axes"])
    return HBarTable(header["M"], header["N"], axes, tuple(header["components"]), values, header["provenance"])


# --- building ---------------------------------------------------------------------


def build_table(
    system: HamiltonianSystem,
    i_list,
    axes,
    cell_params: CellParams | None = None,
    workers: int | None = None,
) -> HBarTable:
    """Run the cell solver at every lattice node for each component in ``i_list``."""
    i_list = [int(i) for i in i_list]
    if not i_list:
        raise ValueError("need at least one component to tabulate")
    for i in i_list:
        if not 0 <= i < system.M:
            raise IndexError(f"component {i} out of range for M={system.M}")
    if isinstance(axes, str):
        axes = parse_axes(axes)
    axes = _complete_axes(axes, system.M, system.N)
    params = cell_params or CellParams()
    counts = tuple(a.count for a in axes)
    node_lists = [a.nodes() for a in axes]
    N, M = system.N, system.M

    jobs = []
    for c, i in enumerate(i_list):
        for idx in np.ndindex(*counts):
            coords = np.array([node_lists[k][j] for k, j in enumerate(idx)])
            jobs.append((c, i, idx, coords[:N], coords[N : N + M], coords[N + M :]))

    def solve(job):
        c, i, idx, x, r, p = job
        try:
            return effective_hamiltonian(params.spec(system, i, x, r, p)).lam, None
        except Exception as exc:  # collected and reported below
            return math.nan, f"{type(exc).__name__}: {exc}"

    workers = workers or os.cpu_count() or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve, jobs))
    else:
        results = [solve(job) for job in jobs]

    values = np.empty((len(i_list),) + counts)
    failures = []
    for job, (lam, err) in zip(jobs, results):
        c, i, idx, x, r, p = job
        if err is not None:
            failures.append({"component": i, "x": x.tolist(), "r": r.tolist(), "p": p.tolist(), "error": err})
        values[(c,) + idx] = lam
    if failures:
        raise TableBuildError(f"{len(failures)} cell solves failed", failures)
    provenance = {
        "cell": params.to_dict(),
        "axes": " ".join(f"{a.name}:{a.min!r}:{a.max!r}:{a.count}" for a in axes),
    }
    if system.description is not None:
        provenance["system"] = system.description
    return HBarTable(M, N, axes, tuple(i_list), values, provenance)


# --- closed forms -------------------------------------------------------------------


def _audit_grid(n: int = AUDIT_N) -> np.ndarray:
    """Closed audit grid 0, 1/n, ..., 1 for trapezoid integration in y."""
    return np.linspace(0.0, 1.0, n + 1)


def _column_samples(c: CouplingMatrix, i: int, x=0.0, n: int = AUDIT_N) -> np.ndarray:
    """c_ji(x, y) on the audit grid, shape (n + 1, M)."""
    if c.N != 1:
        raise ValueError("closed forms are one-dimensional")
    y = _audit_grid(n)[:, None]
    xs = np.full_like(y, float(np.atleast_1d(x)[0]))
    return np.stack(
        [np.broadcast_to(coef(x=xs, y=y), (n + 1,)) for coef in c.column(i)], axis=-1
    )


def closed_form_eikonal_weakly_coupled(c: CouplingMatrix, i: int, r, p, x=0.0, audit_n: int = AUDIT_N) -> float:
    """H-bar_i(r, p) of |p + v'| + sum_j c_ji(y) r_j = lambda in one dimension.

    With f(y) = -sum_j c_ji(y) r_j the value is max{-min f, |p| - int f},
    using the nodal minimum and the trapezoid rule on an audit grid.
    """
    if audit_n < 4096:
        raise ValueError("the audit grid needs n >= 4096")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    p = float(np.atleast_1d(p)[0])
    f = -(_column_samples(c, i, x, audit_n) @ r)
    integral = float(np.trapezoid(f, _audit_grid(audit_n)))
    return max(-float(f.min()), abs(p) - integral)


def closed_form_constant_coupling(hbar_base, c: CouplingMatrix, i: int, r, p) -> float:
    """H-bar_i(r, p) = H-bar_i(p) + sum_j c_ji r_j for constant coefficients.

    ``hbar_base`` is either a callable ``(i, p) -> float`` or an
    :class:`HBarTable` of the uncoupled base Hamiltonians (queried at its
    frozen x and r).
    """
    if not c.is_constant:
        raise ValueError("closed_form_constant_coupling needs constant coefficients")
    values = c.constant_values()
    r = np.atleast_1d(np.asarray(r, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if isinstance(hbar_base, HBarTable):
        x0 = np.array([a.min for a in hbar_base.axes[: hbar_base.N]])
        r0 = np.array([a.min for a in hbar_base.axes[hbar_base.N : hbar_base.N + hbar_base.M]])
        base = hbar_base.query(i, x0, r0, p)
    else:
        base = float(hbar_base(i, p))
    return base + float(values[:, i] @ r)


def coefficient_stats(c11, audit_n: int = AUDIT_N) -> tuple[float, float, float]:
    """(max, min, mean) of a 1-D coefficient c(y) on the audit grid."""
    y = _audit_grid(audit_n)
    vals = np.broadcast_to(np.asarray(c11(x=np.zeros((audit_n + 1, 1)), y=y[:, None]), dtype=float), y.shape)
    return float(vals.max()), float(vals.min()), float(np.trapezoid(vals, y))


def closed_form_piecewise_r1(c11, r1: float, p: float, audit_n: int = AUDIT_N) -> float:
    """Three-branch formula for H-bar_1 at r = (r1, 0, ..., 0).

    With a = max c11, b = min c11, g = mean c11 (a > g > b):
    b r1 below |p|/(b-g), g r1 + |p| in between, a r1 above |p|/(a-g).
    """
    top, bottom, mean = coefficient_stats(c11, audit_n)
    if abs(top - mean) <= 1e-12 * max(1.0, abs(mean)) or abs(bottom - mean) <= 1e-12 * max(1.0, abs(mean)):
        raise ValueError("degenerate coefficient: max or min equals the mean")
    p = abs(float(np.atleast_1d(p)[0]))
    lower = p / (bottom - mean)
    upper = p / (top - mean)
    if r1 <= lower:
        return bottom * r1
    if r1 >= upper:
        return top * r1
    return mean * r1 + p


def flat_part_width(c: CouplingMatrix, i: int, r, x=0.0, audit_n: int = AUDIT_N) -> float:
    """Half-width of the flat part {|p| <= int f - min f} of the closed form."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    f = -(_column_samples(c, i, x, audit_n) @ r)
    return float(np.trapezoid(f, _audit_grid(audit_n)) - f.min())


# --- providers for the homogenized evolution ---------------------------------------------


class WeaklyCoupledEikonalHBar:
    """Closed-form H-bar for 1-D systems |p| + sum_j c_ji(y) u_j, vectorized.

    max_y sum_j c_ji(y) r_j only depends on the convex hull of the sampled
    coefficient curve, so that maximum is taken over the hull vertices.
    """

    def __init__(self, c: CouplingMatrix, x=0.0, audit_n: int = AUDIT_N):
        self.M = c.M
        self.N = 1
        self.coupling = c
        self._vertices = []
        self._means = []
        grid = _audit_grid(audit_n)
        for i in range(c.M):
            samples = _column_samples(c, i, x, audit_n)
            self._means.append(np.trapezoid(samples, grid, axis=0))
            self._vertices.append(_hull_vertices(samples))
        sums = [np.abs(v).sum(axis=1).max() for v in self._vertices]
        self._lip_r = LIP_SAFETY * float(max(sums))

    def evaluate(self, i: int, x, r, p) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        p = np.asarray(p, dtype=float)
        peak = np.max(r @ self._vertices[i].T, axis=-1)
        return np.maximum(peak, np.abs(p[..., 0]) + r @ self._means[i])

    def query(self, i: int, x, r, p) -> float:
        return float(self.evaluate(i, None, np.atleast_1d(r), np.atleast_1d(p)))

    def lip_p(self, radius: float = 0.0) -> float:
        return LIP_SAFETY

    def lip_r(self, radius: float = 0.0) -> float:
        return self._lip_r


def _hull_vertices(points: np.ndarray) -> np.ndarray:
    pts = np.unique(points, axis=0)
    if pts.shape[1] == 1:
        return np.array([[pts.min()], [pts.max()]])
    try:
        from scipy.spatial import ConvexHull

        return pts[ConvexHull(pts).vertices]
    except Exception:  # degenerate (collinear or flat) point sets: keep them all
        return pts


class ConstantCouplingHBar:
    """H-bar_i(r, p) = base_i(p) + sum_j c_ji r_j with a vectorized base(i, p)."""

    def __init__(self, base, c: CouplingMatrix, N: int = 1, lip_p: float = LIP_SAFETY):
        self.M = c.M
        self.N = N
        self._base = base
        self._c = c.constant_values()
        self._lip_p = lip_p

    def evaluate(self, i: int, x, r, p) -> np.ndarray:
        return self._base(i, np.asarray(p, dtype=float)) + np.asarray(r, dtype=float) @ self._c[:, i]

    def query(self, i: int, x, r, p) -> float:
        return float(self.evaluate(i, None, np.atleast_1d(r), np.atleast_1d(p)))

    def lip_p(self, radius: float = 0.0) -> float:
        return self._lip_p

    def lip_r(self, radius: float = 0.0) -> float:
        return LIP_SAFETY * float(np.abs(self._c).sum(axis=0).max())


__all__ = [
    "Axis",
    "CellParams",
    "HBarTable",
    "OutOfHullError",
    "TableBuildError",
    "build_table",
    "closed_form_constant_coupling",
    "closed_form_eikonal_weakly_coupled",
    "closed_form_piecewise_r1",
    "flat_part_width",
    "load",
    "parse_axes",
    "save",
    "WeaklyCoupledEikonalHBar",
    "ConstantCouplingHBar",
]

