"""Hamiltonian systems H_i(x, y, r, p), i = 0..M-1, and structural checks.

All component callables are vectorized: ``x``, ``y`` and ``p`` are arrays of
shape ``(..., N)``, ``r`` has shape ``(..., M)``, and they broadcast against
each other.  Coefficient callables are invoked with keyword arguments
(``x=``, ``y=``, ``r=``, ``p=``) so both plain lambdas and parsed
:class:`~hjhomog.expr.Expression` objects work.

Component indices are 0-based in the Python API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .checks import CheckReport

LIP_SAFETY = 1.1


def _as_coefficient(c):
    if callable(c):
        return c
    value = float(c)
    return _Constant(value)


@dataclass(frozen=True)
class _Constant:
    value: float

    def __call__(self, x=None, y=None, r=None, p=None):
        return np.float64(self.value)


def _norm(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] == 1:
        return np.abs(p[..., 0])
    return np.sqrt(np.sum(p * p, axis=-1))


@dataclass(frozen=True)
class EikonalCoupled:
    """H(x, y, r, p) = a(x, y) |p| + F(r) with speed a >= delta > 0."""

    speed: Callable
    coupling: Callable
    delta: float
    kind = "EikonalCoupled"
    convex_in_p = True

    def __post_init__(self):
        object.__setattr__(self, "speed", _as_coefficient(self.speed))
        object.__setattr__(self, "coupling", _as_coefficient(self.coupling))
        if not self.delta > 0:
            raise ValueError("EikonalCoupled needs a coercivity witness delta > 0")

    def __call__(self, x, y, r, p):
        return self.speed(x=x, y=y) * _norm(p) + self.coupling(r=r)


def _abs_p(x=None, y=None, p=None):
    return _norm(p)


@dataclass(frozen=True)
class WeaklyCoupled:
    """H_i(x, y, r, p) = G_i(x, y, p) + sum_j c_ji(x, y) r_j.

    ``coefficients[j]`` is c_ji, the weight of state component j in equation i.
    """

    coefficients: tuple
    base: Callable = _abs_p
    convex_in_p: bool = True
    kind = "WeaklyCoupled"

    def __post_init__(self):
        object.__setattr__(
            self, "coefficients", tuple(_as_coefficient(c) for c in self.coefficients)
        )

    def __call__(self, x, y, r, p):
        r = np.asarray(r, dtype=float)
        out = self.base(x=x, y=y, p=p)
        for j, c in enumerate(self.coefficients):
            out = out + c(x=x, y=y) * r[..., j]
        return out


@dataclass(frozen=True)
class Custom:
    """Opaque callback ``fn(x=, y=, r=, p=)``; bounds are declared on the system."""

    fn: Callable
    convex_in_p: bool = False
    kind = "Custom"

    def __call__(self, x, y, r, p):
        return self.fn(x=x, y=y, r=r, p=p)


@dataclass(frozen=True)
class CouplingMatrix:
    """Coefficients c_ji(x, y); ``entries[j][i]`` multiplies r_j in equation i."""

    entries: tuple
    N: int = 1

    def __post_init__(self):
        rows = tuple(tuple(_as_coefficient(c) for c in row) for row in self.entries)
        if any(len(row) != len(rows) for row in rows):
            raise ValueError("coupling matrix must be square")
        object.__setattr__(self, "entries", rows)

    @property
    def M(self) -> int:
        return len(self.entries)

    @property
    def is_constant(self) -> bool:
        return all(isinstance(c, _Constant) for row in self.entries for c in row)

    def column(self, i: int) -> tuple:
        return tuple(self.entries[j][i] for j in range(self.M))

    def constant_values(self) -> np.ndarray:
        if not self.is_constant:
            raise ValueError("coupling coefficients are not constant")
        return np.array([[c.value for c in row] for row in self.entries])

    def evaluate(self, x, y) -> np.ndarray:
        """Array of shape (..., M, M) with [..., j, i] = c_ji(x, y)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
        out = np.empty(shape + (self.M, self.M))
        for j, row in enumerate(self.entries):
            for i, c in enumerate(row):
                out[..., j, i] = c(x=x, y=y)
        return out

    @classmethod
    def from_constants(cls, values) -> "CouplingMatrix":
        values = np.asarray(values, dtype=float)
        return cls(tuple(tuple(float(v) for v in row) for row in values))


@dataclass(frozen=True, eq=False)
class HamiltonianSystem:
    """M coupled Hamiltonians on R^N x T^N x R^M x R^N (N = 1 or 2).

    ``lip_p`` and ``lip_r`` are the declared Lipschitz bounds as functions of
    the radius R (|r|, |p| <= R).  When omitted they fall back to sampled
    estimates, see :func:`estimate_lip_p` and :func:`estimate_lip_r`.
    """

    components: tuple
    N: int = 1
    lip_p: Callable[[float], float] | None = None
    lip_r: Callable[[float], float] | None = None
    description: dict | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("a system needs at least one component")
        if self.N not in (1, 2):
            raise ValueError("only dimensions N = 1 and N = 2 are supported")
        for comp in self.components:
            if isinstance(comp, WeaklyCoupled) and len(comp.coefficients) != self.M:
                raise ValueError("WeaklyCoupled component needs M coupling coefficients")

    @property
    def M(self) -> int:
        return len(self.components)

    @property
    def convex_in_p(self) -> tuple:
        return tuple(bool(c.convex_in_p) for c in self.components)

    def evaluate(self, i: int, x, y, r, p) -> np.ndarray:
        """Vectorized H_i; y is reduced modulo 1 componentwise first."""
        y = np.asarray(y, dtype=float)
        y = y - np.floor(y)
        return np.asarray(self.components[i](x, y, r, p), dtype=float)

    def eval(self, i: int, x, y, r, p) -> float:
        """Checked scalar evaluation of H_i(x, y, r, p)."""
        if not 0 <= i < self.M:
            raise IndexError(f"component index {i} out of range for M={self.M}")
        x = _point(x, self.N, "x")
        y = _point(y, self.N, "y")
        p = _point(p, self.N, "p")
        r = _point(r, self.M, "r")
        value = float(self.evaluate(i, x, y, r, p))
        if not math.isfinite(value):
            raise ValueError("non-finite Hamiltonian value")
        return value

    def lip_p_bound(self, radius: float) -> float:
        if self.lip_p is not None:
            return float(self.lip_p(radius))
        return max(estimate_lip_p(self, i, radius) for i in range(self.M))

    def lip_r_bound(self, radius: float) -> float:
        if self.lip_r is not None:
            return float(self.lip_r(radius))
        return max(estimate_lip_r(self, i, radius) for i in range(self.M))

    def coupling_matrix(self) -> CouplingMatrix:
        if not all(isinstance(c, WeaklyCoupled) for c in self.components):
            raise ValueError("coupling matrix is only defined for weakly coupled systems")
        entries = tuple(
            tuple(self.components[i].coefficients[j] for i in range(self.M))
            for j in range(self.M)
        )
        return CouplingMatrix(entries, N=self.N)


def _point(v, dim: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.shape != (dim,):
        raise ValueError(f"{name} must have {dim} entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def weakly_coupled_system(coupling, base=None, N: int = 1, **kwargs) -> HamiltonianSystem:
    """Build H_i = G_i(x, y, p) + sum_j c_ji r_j from a coupling matrix.

    ``coupling`` is a :class:`CouplingMatrix` or a nested list with
    ``coupling[j][i] = c_ji``; ``base`` is a single G or a list of M of them
    (default |p|).
    """
    if not isinstance(coupling, CouplingMatrix):
        coupling = CouplingMatrix(tuple(tuple(row) for row in coupling), N=N)
    M = coupling.M
    if base is None:
        bases = [_abs_p] * M
    elif callable(base):
        bases = [base] * M
    else:
        bases = list(base)
    comps = tuple(WeaklyCoupled(coupling.column(i), bases[i]) for i in range(M))
    return HamiltonianSystem(comps, N=N, **kwargs)


# --- sampling lattices -------------------------------------------------------


def _sample_lattice(sys: HamiltonianSystem, radius: float, resolution: int):
    """Deterministic (x, y, r) base points and a p-lattice over [-R, R]^N."""
    N, M = sys.N, sys.M
    nx = 4 if N == 1 else 2
    ny = max(resolution, 8) if N == 1 else min(max(resolution // 2, 8), 12)
    nr = 5 if M <= 2 else 3
    npp = resolution if N == 1 else min(resolution, 17)
    if npp % 2 == 0:
        npp += 1
    xs = np.arange(nx) / nx
    ys = np.arange(ny) / ny
    rs = np.linspace(-radius, radius, nr)
    ps = np.linspace(-radius, radius, npp)
    x = np.stack(np.meshgrid(*([xs] * N), indexing="ij"), -1).reshape(-1, N)
    y = np.stack(np.meshgrid(*([ys] * N), indexing="ij"), -1).reshape(-1, N)
    r = np.stack(np.meshgrid(*([rs] * M), indexing="ij"), -1).reshape(-1, M)
    p = np.stack(np.meshgrid(*([ps] * N), indexing="ij"), -1)
    return x, y, r, p, ps[1] - ps[0]


def estimate_lip_p(sys: HamiltonianSystem, i: int, radius: float, resolution: int = 33) -> float:
    """Sampled bound on max_k |dH_i/dp_k| over |r|, |p| <= radius, times 1.1.

    Difference quotients are taken between neighbouring points of a uniform
    p-lattice that contains p = 0, at a fixed lattice of (x, y, r) in the unit
    cell.  Results are memoized per (i, radius, resolution).
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    key = ("lip_p", i, float(radius), resolution)
    if key in sys._cache:
        return sys._cache[key]
    x, y, r, p, dp = _sample_lattice(sys, radius, resolution)
    N = sys.N
    best = 0.0
    for xi in x:
        # base points (y, r) flattened, p-lattice appended as trailing axes
        yy = np.repeat(y, len(r), axis=0)
        rr = np.tile(r, (len(y), 1))
        expand = (slice(None),) + (None,) * N
        vals = sys.evaluate(
            i, xi, yy[expand], rr[expand], p[None, ...]
        )
        vals = np.broadcast_to(vals, (len(yy),) + p.shape[:-1])
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite Hamiltonian value while estimating lip_p")
        for k in range(N):
            slopes = np.abs(np.diff(vals, axis=1 + k)) / dp
            best = max(best, float(slopes.max(initial=0.0)))
    value = LIP_SAFETY * best
    sys._cache[key] = value
    return value


def estimate_lip_r(sys: HamiltonianSystem, i: int, radius: float, resolution: int = 9) -> float:
    """Sampled bound on sum_j |dH_i/dr_j| over |r|, |p| <= radius, times 1.1."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    key = ("lip_r", i, float(radius), resolution)
    if key in sys._cache:
        return sys._cache[key]
    x, y, r, p, _ = _sample_lattice(sys, radius, resolution)
    p = p.reshape(-1, sys.N)
    step = 2.0 * radius / max(resolution - 1, 1)
    best = 0.0
    for xi in x:
        yy = np.repeat(y, len(p), axis=0)
        pp = np.tile(p, (len(y), 1))
        total = np.zeros(len(yy))
        for rv in r:
            h0 = sys.evaluate(i, xi, yy, rv, pp)
            acc = np.zeros(len(yy))
            for j in range(sys.M):
                shifted = rv.copy()
                shifted[j] += step
                acc += np.abs(sys.evaluate(i, xi, yy, shifted, pp) - h0) / step
            total = np.maximum(total, acc)
        if not np.all(np.isfinite(total)):
            raise ValueError("non-finite Hamiltonian value while estimating lip_r")
        best = max(best, float(total.max(initial=0.0)))
    value = LIP_SAFETY * best
    sys._cache[key] = value
    return value


# --- structural checks -------------------------------------------------------


def check_A3(sys: HamiltonianSystem, sample_count: int, seed: int, radius: float = 2.0) -> CheckReport:
    """Sampled check of the monotonicity condition on the state argument.

    For random (x, y, p) and state pairs (r, s) with max_k (r_k - s_k) >= 0,
    every maximizing index j must satisfy H_j(x,y,r,p) >= H_j(x,y,s,p).
    Differences down to -1e-12 (1 + |H|) are treated as rounding.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    N, M = sys.N, sys.M
    x = rng.uniform(0.0, 1.0, (sample_count, N))
    y = rng.uniform(0.0, 1.0, (sample_count, N))
    p = rng.uniform(-radius, radius, (sample_count, N))
    r = rng.uniform(-radius, radius, (sample_count, M))
    s = rng.uniform(-radius, radius, (sample_count, M))
    d = r - s
    flip = d.max(axis=1) < 0
    r[flip], s[flip] = s[flip].copy(), r[flip].copy()
    d = r - s
    dmax = d.max(axis=1, keepdims=True)
    report = CheckReport("A3", passed=True, n_checked=sample_count)
    worst = math.inf
    for j in range(M):
        mask = d[:, j] >= dmax[:, 0]
        if not mask.any():
            continue
        hr = sys.evaluate(j, x[mask], y[mask], r[mask], p[mask])
        hs = sys.evaluate(j, x[mask], y[mask], s[mask], p[mask])
        diff = np.broadcast_to(hr - hs, (int(mask.sum()),))
        tol = 1e-12 * (1.0 + np.abs(hr))
        worst = min(worst, float(diff.min()))
        for k in np.flatnonzero(diff < -tol):
            idx = np.flatnonzero(mask)[k]
            report.add_violation(
                j=j, x=x[idx], y=y[idx], p=p[idx], r=r[idx], s=s[idx], difference=diff[k]
            )
    report.details["min_difference"] = worst
    return report


def check_A1_coefficients(c: CouplingMatrix, sample_count: int, seed: int) -> CheckReport:
    """Sign pattern c_ii >= 0, c_ji <= 0 (j != i) and column sums sum_j c_ji >= 0."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, (sample_count, c.N))
    y = rng.uniform(0.0, 1.0, (sample_count, c.N))
    vals = c.evaluate(x, y)
    report = CheckReport("A1", passed=True, n_checked=sample_count)
    tol = 1e-12
    M = c.M
    for i in range(M):
        for j in range(M):
            col = vals[:, j, i]
            bad = col < -tol if i == j else col > tol
            for k in np.flatnonzero(bad):
                rule = "c_ii >= 0" if i == j else "c_ji <= 0"
                report.add_violation(rule=rule, j=j, i=i, x=x[k], y=y[k], value=col[k])
        sums = vals[:, :, i].sum(axis=1)
        for k in np.flatnonzero(sums < -tol):
            report.add_violation(rule="column sum >= 0", i=i, x=x[k], y=y[k], value=sums[k])
    report.details["min_column_sum"] = float(vals.sum(axis=1).min())
    return report


def check_periodicity(sys: HamiltonianSystem, sample_count: int, seed: int, radius: float = 2.0) -> CheckReport:
    """H_i(x, y, r, p) == H_i(x, y + k, r, p) exactly on dyadic y samples."""
    rng = np.random.default_rng(seed)
    N, M = sys.N, sys.M
    report = CheckReport("periodicity", passed=True, n_checked=sample_count * M)
    x = rng.uniform(0, 1, (sample_count, N))
    y = rng.integers(0, 1024, (sample_count, N)) / 1024.0
    shift = rng.integers(-3, 4, (sample_count, N)).astype(float)
    r = rng.uniform(-radius, radius, (sample_count, M))
    p = rng.uniform(-radius, radius, (sample_count, N))
    for i in range(M):
        a = sys.evaluate(i, x, y, r, p)
        b = sys.evaluate(i, x, y + shift, r, p)
        for k in np.flatnonzero(np.broadcast_to(a != b, (sample_count,))):
            report.add_violation(i=i, y=y[k], shift=shift[k], a=np.broadcast_to(a, (sample_count,))[k])
    return report


def check_coercivity(
    sys: HamiltonianSystem, sample_count: int, seed: int, radius: float = 2.0, p_max: float = 50.0
) -> CheckReport:
    """For EikonalCoupled components: H(|p| = P) >= delta * P - sup|F| on samples."""
    rng = np.random.default_rng(seed)
    N, M = sys.N, sys.M
    report = CheckReport("coercivity", passed=True)
    for i, comp in enumerate(sys.components):
        if not isinstance(comp, EikonalCoupled):
            continue
        x = rng.uniform(0, 1, (sample_count, N))
        y = rng.uniform(0, 1, (sample_count, N))
        r = rng.uniform(-radius, radius, (sample_count, M))
        big = np.broadcast_to(np.abs(comp.coupling(r=r)), (sample_count,))
        sup_f = float(big.max())
        P = rng.uniform(0, p_max, sample_count)
        direction = rng.normal(size=(sample_count, N))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        p = direction * P[:, None]
        h = np.broadcast_to(sys.evaluate(i, x, y, r, p), (sample_count,))
        lower = comp.delta * P - sup_f
        report.n_checked += sample_count
        for k in np.flatnonzero(h < lower - 1e-12 * (1 + np.abs(lower))):
            report.add_violation(i=i, P=P[k], value=h[k], lower=lower[k])
    return report


def check_lip_bounds(sys: HamiltonianSystem, radius: float, resolution: int = 33) -> CheckReport:
    """Declared lip_p / lip_r bounds must dominate sampled slopes."""
    report = CheckReport("lip_bounds", passed=True, n_checked=2 * sys.M)
    lp = sys.lip_p_bound(radius)
    lr = sys.lip_r_bound(radius)
    for i in range(sys.M):
        sampled_p = estimate_lip_p(sys, i, radius, resolution) / LIP_SAFETY
        sampled_r = estimate_lip_r(sys, i, radius) / LIP_SAFETY
        if sampled_p > lp * (1 + 1e-12):
            report.add_violation(i=i, which="lip_p", declared=lp, sampled=sampled_p)
        if sampled_r > lr * (1 + 1e-12):
            report.add_violation(i=i, which="lip_r", declared=lr, sampled=sampled_r)
    report.details.update(lip_p=lp, lip_r=lr)
    return report

