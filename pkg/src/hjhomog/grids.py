"""Uniform periodic grids on a torus of side L and fields sampled on them.

Field values are stored with a leading component axis: shape ``(M, n)`` in
1-D and ``(M, n, n)`` in 2-D, so a scalar field is simply ``M == 1``.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from functools import cached_property
from fractions import Fraction
from pathlib import Path

import numpy as np


def _fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True)
class TorusGrid:
    """n points per axis on [0, L)^N with spacing h = L/n (kept as a Fraction)."""

    N: int
    n: int
    L: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "L", _fraction(self.L))
        if self.N not in (1, 2):
            raise ValueError("grids support N = 1 or N = 2")
        if self.n < 4:
            raise ValueError("a torus grid needs n >= 4 points per axis")
        if self.L <= 0:
            raise ValueError("side length must be positive")

    @property
    def h(self) -> Fraction:
        return self.L / self.n

    @cached_property
    def spacing(self) -> float:
        return float(self.h)

    @property
    def length(self) -> float:
        return float(self.L)

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.N

    @property
    def size(self) -> int:
        return self.n**self.N

    def nodes(self) -> np.ndarray:
        """1-D node coordinates k*h, k = 0..n-1 (exact multiples, rounded once)."""
        return self._nodes.copy()

    @cached_property
    def _nodes(self) -> np.ndarray:
        # integer quotients are correctly rounded, matching float(k * h)
        num = np.arange(self.n, dtype=np.int64) * self.L.numerator
        return num / (self.n * self.L.denominator)

    def coords(self) -> tuple:
        """Meshgrid (ij indexing) of node coordinates, one array per axis."""
        axis = self._nodes
        return tuple(np.meshgrid(*([axis] * self.N), indexing="ij"))

    def points(self) -> np.ndarray:
        """Read-only node coordinates of shape grid.shape + (N,)."""
        return self._points

    @cached_property
    def _points(self) -> np.ndarray:
        pts = np.stack(self.coords(), axis=-1)
        pts.flags.writeable = False
        return pts


@dataclass(frozen=True, eq=False)
class GridField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape == self.grid.shape:
            vals = vals[None, ...]
        if vals.ndim != self.grid.N + 1 or vals.shape[1:] != self.grid.shape:
            raise ValueError(
                f"values of shape {vals.shape} do not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid field has non-finite values")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def M(self) -> int:
        return self.values.shape[0]

    def component(self, i: int) -> "GridField":
        return GridField(self.grid, self.values[i])

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def stack(fields) -> GridField:
    fields = list(fields)
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise ValueError("cannot stack fields on different grids")
    return GridField(grid, np.concatenate([f.values for f in fields], axis=0))


def sample(grid: TorusGrid, f) -> GridField:
    """Evaluate ``f(*coords)`` at every node (``f(x)`` in 1-D, ``f(x1, x2)`` in 2-D)."""
    vals = np.broadcast_to(np.asarray(f(*grid.coords()), dtype=float), grid.shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite sample")
    return GridField(grid, vals)


# --- differences ---------------------------------------------------------------


def diff_minus(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """(u_k - u_{k-1}) / h along spatial ``axis`` counted from the trailing N axes."""
    return (values - np.roll(values, 1, axis=axis)) / h


def diff_plus(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(values, -1, axis=axis) - values) / h


def upwind_diffs(field: GridField, axis: int) -> tuple[GridField, GridField]:
    """Periodic one-sided differences (D_minus, D_plus) along ``axis``."""
    if not 0 <= axis < field.grid.N:
        raise ValueError(f"axis {axis} out of range")
    ax = 1 + axis
    h = field.grid.spacing
    return (
        GridField(field.grid, diff_minus(field.values, ax, h)),
        GridField(field.grid, diff_plus(field.values, ax, h)),
    )


def max_upwind_slope(values: np.ndarray, N: int, h: float) -> float:
    """Largest |D_plus| over every component and axis (equals max |D_minus|)."""
    vals = np.asarray(values, dtype=float)
    best = 0.0
    for k in range(N):
        best = max(best, float(np.abs(diff_plus(vals, vals.ndim - N + k, h)).max()))
    return best


# --- norms -------------------------------------------------------------------------


def sup_norm(field: GridField) -> float:
    return float(np.abs(field.values).max())


def sup_diff(a: GridField, b: GridField) -> float:
    if a.grid != b.grid:
        raise ValueError("sup_diff needs fields on the same grid")
    if a.values.shape != b.values.shape:
        raise ValueError("sup_diff needs fields with the same number of components")
    return float(np.abs(a.values - b.values).max())


# --- interpolation ------------------------------------------------------------------


def interpolate_periodic(values: np.ndarray, L: float, points) -> np.ndarray:
    """Multilinear periodic interpolation of a spatial array at ``points`` (..., N).

    ``values`` has shape ``(n,)*N``.  Coordinates within 1e-12 cells of a node
    snap to it, so nodal values are reproduced exactly.
    """
    values = np.asarray(values, dtype=float)
    N = values.ndim
    n = values.shape[0]
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] != N:
        raise ValueError(f"points must have trailing dimension {N}")
    t = np.mod(pts, L) * (n / L)
    snapped = np.rint(t)
    t = np.where(np.abs(t - snapped) < 1e-12 * max(n, 1), snapped, t)
    base = np.floor(t)
    frac = t - base
    base = base.astype(np.int64) % n
    out = np.zeros(pts.shape[:-1])
    for corner in range(2**N):
        weight = np.ones(pts.shape[:-1])
        idx = []
        for k in range(N):
            bit = (corner >> k) & 1
            weight = weight * (frac[..., k] if bit else 1.0 - frac[..., k])
            idx.append((base[..., k] + bit) % n)
        out = out + weight * values[tuple(idx)]
    return out


def interpolate(field: GridField, x, component: int = 0) -> float:
    """Value of the multilinear periodic interpolant of one component at x."""
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    return float(interpolate_periodic(field.values[component], field.grid.length, pt))


def restrict(fine: GridField, coarse: TorusGrid) -> GridField:
    """Injection onto a nested coarse grid (shared nodes only)."""
    g = fine.grid
    if g.N != coarse.N or g.L != coarse.L or g.n % coarse.n != 0:
        raise ValueError(
            f"grid n={coarse.n} is not nested in n={g.n} (same N and L required)"
        )
    s = g.n // coarse.n
    sl = (slice(None),) + (slice(None, None, s),) * g.N
    return GridField(coarse, fine.values[sl])


# --- CSV persistence ------------------------------------------------------------------

_HEADER = re.compile(r"^#\s*grid\s+n=(\d+)\s+N=(\d+)\s+L=(\S+)\s+M=(\d+)\s*$")


def write_csv(field: GridField, path) -> None:
    g = field.grid
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# grid n={g.n} N={g.N} L={g.L} M={field.M}\n")
        writer = csv.writer(fh, lineterminator="\n")
        for idx in np.ndindex(*g.shape):
            row = [str(i) for i in idx]
            row += [repr(float(field.values[(c,) + idx])) for c in range(field.M)]
            writer.writerow(row)


def read_csv(path) -> GridField:
    path = Path(path)
    with path.open(newline="") as fh:
        header = fh.readline()
        m = _HEADER.match(header.strip())
        if not m:
            raise ValueError(f"{path}: missing or malformed grid header")
        n, N, L, M = int(m.group(1)), int(m.group(2)), Fraction(m.group(3)), int(m.group(4))
        grid = TorusGrid(N, n, L)
        values = np.full((M,) + grid.shape, np.nan)
        count = 0
        for row in csv.reader(fh):
            if not row:
                continue
            if len(row) != N + M:
                raise ValueError(f"{path}: row has {len(row)} columns, expected {N + M}")
            idx = tuple(int(v) for v in row[:N])
            values[(slice(None),) + idx] = [float(v) for v in row[N:]]
            count += 1
    if count != grid.size or not np.all(np.isfinite(values)):
        raise ValueError(f"{path}: expected {grid.size} complete rows")
    return GridField(grid, values)
