"""Explicit monotone time stepping for u_t + H_i(x, x/eps, u, Du_i) = 0 on a torus.

The scheme is forward Euler on the local Lax-Friedrichs Hamiltonian

    H_i(x, x/eps, u, (D+ + D-)/2) - theta * sum_k (D+_k - D-_k) / 2,

with theta a bound on |dH/dp| over the current state.  The update is
monotone when theta dominates |dH/dp|, the coupling satisfies the sign
conditions, and dt * (N theta / h + lip_r) <= 1, so every step uses

    dt <= min(cfl * h / (2 N theta), 1 / (lip_r + N theta / h)).

The same code runs the homogenized problem, with an effective Hamiltonian
provider (table or closed form) in place of the oscillating system.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .checks import CheckReport
from .grids import GridField, TorusGrid, max_upwind_slope
from .hamiltonians import HamiltonianSystem, estimate_lip_p, estimate_lip_r

DT_SAFETY = 1e-12


class CFLViolation(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Oscillating:
    system: HamiltonianSystem
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def M(self) -> int:
        return self.system.M

    @property
    def N(self) -> int:
        return self.system.N

    def hamiltonian(self, i, x, r, p):
        return self.system.evaluate(i, x, x / self.eps, r, p)

    def lip_p(self, radius: float) -> float:
        if self.system.lip_p is not None:
            return float(self.system.lip_p(radius))
        return self._monotone(estimate_lip_p, radius)

    def lip_r(self, radius: float) -> float:
        if self.system.lip_r is not None:
            return float(self.system.lip_r(radius))
        return self._monotone(estimate_lip_r, radius)

    def _monotone(self, estimate, radius: float) -> float:
        # sampled estimates use a radius-dependent lattice and can dip as the
        # radius grows; a running max over integer radii keeps them nondecreasing
        radii = [float(k) for k in range(1, math.ceil(radius) + 1)]
        if radius not in radii:
            radii.append(float(radius))
        return max(estimate(self.system, i, R) for R in radii for i in range(self.M))


@dataclass(frozen=True, eq=False)
class Homogenized:
    """Wraps an effective Hamiltonian provider with ``evaluate(i, x, r, p)``,
    ``lip_p(R)``, ``lip_r(R)`` and attributes ``M``, ``N``."""

    hbar: object

    @property
    def M(self) -> int:
        return self.hbar.M

    @property
    def N(self) -> int:
        return self.hbar.N

    def hamiltonian(self, i, x, r, p):
        return np.broadcast_to(self.hbar.evaluate(i, x, r, p), p.shape[:-1])

    def lip_p(self, radius: float) -> float:
        return float(self.hbar.lip_p(radius))

    def lip_r(self, radius: float) -> float:
        return float(self.hbar.lip_r(radius))


@dataclass(frozen=True, eq=False)
class EvolutionProblem:
    source: Oscillating | Homogenized
    u0: GridField
    T: float
    cfl: float = 0.5
    snapshots: tuple = ()

    def __post_init__(self):
        g = self.u0.grid
        src = self.source
        if src.N != g.N:
            raise ValueError(f"source has N={src.N} but the grid has N={g.N}")
        if src.M != self.u0.M:
            raise ValueError(f"source has M={src.M} but u0 has {self.u0.M} components")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if not (math.isfinite(self.T) and self.T >= 0):
            raise ValueError("final time must be finite and >= 0")
        snaps = tuple(sorted(float(t) for t in self.snapshots))
        if any(t < 0 or t > self.T for t in snaps):
            raise ValueError("snapshot times must lie in [0, T]")
        object.__setattr__(self, "snapshots", snaps)
        if isinstance(src, Oscillating):
            ratio = g.L / Fraction(repr(float(src.eps)))
            if abs(float(ratio) - round(float(ratio))) > 1e-9 * max(1.0, float(ratio)) or round(float(ratio)) < 1:
                raise ValueError(f"L/eps = {float(ratio)} must be a positive integer")
            if g.spacing > src.eps / 32 * (1 + 1e-12):
                raise ValueError(f"grid spacing {g.spacing} exceeds eps/32 = {src.eps / 32}")

    @property
    def grid(self) -> TorusGrid:
        return self.u0.grid


@dataclass(frozen=True)
class StepBounds:
    theta: float
    lip_r: float
    dt_max: float


def _radius(values: np.ndarray, N: int, h: float) -> float:
    R = max(float(np.abs(values).max()), max_upwind_slope(values, N, h), 1.0)
    return float(math.ceil(R))


def step_bounds(problem: EvolutionProblem, *states: GridField) -> StepBounds:
    """theta, lip_r and the largest admissible dt over the given states."""
    g = problem.grid
    h = g.spacing
    R = max(_radius(s.values, g.N, h) for s in states)
    theta = problem.source.lip_p(R)
    lip_r = problem.source.lip_r(R)
    if not theta > 0:
        raise ValueError("Lipschitz bound in p must be positive")
    N = g.N
    dt_max = min(problem.cfl * h / (2 * N * theta), 1.0 / (lip_r + N * theta / h))
    return StepBounds(theta, lip_r, dt_max)


def _lf_rate(problem: EvolutionProblem, u: np.ndarray, theta: float) -> np.ndarray:
    """H_LF evaluated at every node and component, shape (M, *grid.shape)."""
    g = problem.grid
    N, h = g.N, g.spacing
    x = g.points()
    r = np.moveaxis(u, 0, -1)
    out = np.empty_like(u)
    for i in range(u.shape[0]):
        ui = u[i]
        q = np.empty(ui.shape + (N,))
        lap = np.zeros_like(ui)
        for k in range(N):
            up = np.roll(ui, -1, axis=k)
            um = np.roll(ui, 1, axis=k)
            q[..., k] = (up - um) / (2 * h)
            lap += (up - 2 * ui + um) / (2 * h)
        out[i] = problem.source.hamiltonian(i, x, r, q) - theta * lap
    return out


def step(problem: EvolutionProblem, state: GridField, dt: float, theta: float | None = None) -> GridField:
    """One explicit step; raises :class:`CFLViolation` when dt is too large."""
    if state.grid != problem.grid or state.M != problem.u0.M:
        raise ValueError("state does not live on the problem grid")
    bounds = step_bounds(problem, state)
    if theta is None:
        theta = bounds.theta
    elif theta < bounds.theta:
        raise ValueError("theta below the Lipschitz bound of this state")
    h, N = problem.grid.spacing, problem.grid.N
    dt_max = min(problem.cfl * h / (2 * N * theta), 1.0 / (bounds.lip_r + N * theta / h))
    if not 0 < dt <= dt_max * (1 + DT_SAFETY):
        raise CFLViolation(f"dt={dt} violates the monotonicity bound {dt_max}")
    new = state.values - dt * _lf_rate(problem, state.values, theta)
    if not np.all(np.isfinite(new)):
        raise FloatingPointError("non-finite values after a time step")
    return GridField(problem.grid, new)


@dataclass(frozen=True, eq=False)
class EvolutionResult:
    final: GridField
    snapshots: dict
    diagnostics: dict = field(default_factory=dict)


def _next_dt(dt_prev: float, dt_max: float, remaining: float) -> float:
    dt = min(dt_prev, dt_max)
    steps = math.ceil(remaining / dt * (1 - 1e-14))
    return remaining / max(steps, 1)


def solve(problem: EvolutionProblem) -> EvolutionResult:
    """March to T, hitting every snapshot time exactly."""
    start = time.perf_counter()
    u = problem.u0
    t = 0.0
    targets = [s for s in problem.snapshots if s > 0] + [problem.T]
    snaps = {0.0: u} if 0.0 in problem.snapshots else {}
    dt = math.inf
    steps = 0
    max_abs = float(np.abs(u.values).max())
    max_slope = max_upwind_slope(u.values, problem.grid.N, problem.grid.spacing)
    theta_max = 0.0
    dt_min = math.inf
    for target in targets:
        while target - t > 1e-14 * max(1.0, problem.T):
            bounds = step_bounds(problem, u)
            dt = _next_dt(dt, bounds.dt_max, target - t)
            u = step(problem, u, dt, bounds.theta)
            t = target if target - (t + dt) <= 1e-14 * max(1.0, problem.T) else t + dt
            steps += 1
            theta_max = max(theta_max, bounds.theta)
            dt_min = min(dt_min, dt)
            max_abs = max(max_abs, float(np.abs(u.values).max()))
            max_slope = max(max_slope, max_upwind_slope(u.values, problem.grid.N, problem.grid.spacing))
        t = target
        if target in problem.snapshots:
            snaps[target] = u
    bound = linf_bound(problem)
    diagnostics = {
        "steps": steps,
        "dt_min": dt_min if steps else 0.0,
        "dt_last": dt if steps else 0.0,
        "theta_max": theta_max,
        "max_abs_u": max_abs,
        "max_slope": max_slope,
        "final_slope": max_upwind_slope(u.values, problem.grid.N, problem.grid.spacing),
        "linf_bound": bound,
        "linf_ok": max_abs <= bound * (1 + 1e-9) + 1e-12,
        "runtime": time.perf_counter() - start,
    }
    return EvolutionResult(u, snaps, diagnostics)


# --- a-priori bounds ---------------------------------------------------------------


def _sample_points(problem: EvolutionProblem):
    """Subsampled grid nodes x with their fast variable y = x / eps (or None)."""
    g = problem.grid
    stride = max(1, g.n // 64) if g.N == 1 else max(1, g.n // 16)
    x = g.points()[(slice(None, None, stride),) * g.N].reshape(-1, g.N)
    if isinstance(problem.source, Oscillating):
        # all phases of the cell, not only the ones hit by subsampled nodes
        k = 64 if g.N == 1 else 16
        ys = np.stack(np.meshgrid(*([np.arange(k) / k] * g.N), indexing="ij"), -1).reshape(-1, g.N)
        return x, ys
    return x, None


def _state_lattice(M: int, radius: float) -> np.ndarray:
    ax = np.linspace(-radius, radius, 5 if M <= 2 else 3)
    return np.stack(np.meshgrid(*([ax] * M), indexing="ij"), -1).reshape(-1, M)


def _directions(N: int) -> np.ndarray:
    if N == 1:
        return np.array([[1.0], [-1.0]])
    a = np.arange(32) * (2 * np.pi / 32)
    return np.stack([np.cos(a), np.sin(a)], -1)


def _h_values(problem: EvolutionProblem, i: int, x, y, r, p) -> np.ndarray:
    """H_i over all combinations of the sample sets; shape (nx, ny, nr, np)."""
    src = problem.source
    X = x[:, None, None, None, :]
    R = r[None, None, :, None, :]
    P = p[None, None, None, :, :]
    if isinstance(src, Oscillating):
        Y = y[None, :, None, None, :]
        vals = src.system.evaluate(i, X, Y, R, P)
    else:
        vals = src.hbar.evaluate(i, X, R, P)
    return np.broadcast_to(vals, (len(x), 1 if y is None else len(y), len(r), len(p)))


def apriori_constant(problem: EvolutionProblem, r_radius: float | None = None, p_radius: float = 0.0) -> float:
    """Sampled sup |H_i(x, y, r, p)| over |r| <= r_radius, |p| <= p_radius.

    With the defaults this is C = sup |H(x, y, r, 0)| over |r| <= |u0|, the
    constant in the bound |u(t)| <= |u0| + C t.
    """
    if r_radius is None:
        r_radius = float(np.abs(problem.u0.values).max())
    x, y = _sample_points(problem)
    r = _state_lattice(problem.source.M, r_radius)
    if p_radius > 0:
        radii = np.linspace(0.0, p_radius, 9)
        p = np.concatenate([np.zeros((1, problem.grid.N))] + [d * radii[1:, None] for d in _directions(problem.grid.N)])
    else:
        p = np.zeros((1, problem.grid.N))
    return max(float(np.abs(_h_values(problem, i, x, y, r, p)).max()) for i in range(problem.source.M))


def linf_bound(problem: EvolutionProblem) -> float:
    """|u0|_inf + C T."""
    return float(np.abs(problem.u0.values).max()) + apriori_constant(problem) * problem.T


def lipschitz_radius(problem: EvolutionProblem, max_radius: float = 1e6) -> float:
    """A gradient bound from coercivity.

    C' = sup |H| over |r| <= |u0| + C T and |p| <= |Du0|; the result is the
    smallest sampled rho >= |Du0| with H_i >= C' whenever |p| = rho.
    """
    g = problem.grid
    R_T = linf_bound(problem)
    slope0 = max_upwind_slope(problem.u0.values, g.N, g.spacing)
    level = apriori_constant(problem, R_T, slope0)
    x, y = _sample_points(problem)
    r = _state_lattice(problem.source.M, R_T)
    dirs = _directions(g.N)

    def coercive(rho: float) -> bool:
        return all(
            float(_h_values(problem, i, x, y, r, rho * dirs).min()) >= level
            for i in range(problem.source.M)
        )

    hi = max(slope0, 1.0)
    while not coercive(hi):
        hi *= 2
        if hi > max_radius:
            raise ValueError("Hamiltonian does not look coercive on the sampled set")
    lo = slope0 if slope0 < hi else 0.0
    if coercive(lo):
        return lo
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if coercive(mid):
            hi = mid
        else:
            lo = mid
    return max(hi, slope0)


# --- discrete comparison -----------------------------------------------------------------


def check_comparison(problem: EvolutionProblem, lower: GridField, upper: GridField, tol: float = 1e-6) -> CheckReport:
    """Evolve two initial states in lockstep with a shared dt and theta.

    Reports the largest value over all steps of
    max_j sup(u_j - v_j) - max(0, max_j sup(u0_j - v0_j)).
    """
    report = CheckReport("comparison", True)
    initial_gap = max(0.0, float((lower.values - upper.values).max()))
    u, v = lower, upper
    t, dt = 0.0, math.inf
    worst = -math.inf
    while problem.T - t > 1e-14 * max(1.0, problem.T):
        bounds = step_bounds(problem, u, v)
        dt = _next_dt(dt, bounds.dt_max, problem.T - t)
        u = step(problem, u, dt, bounds.theta)
        v = step(problem, v, dt, bounds.theta)
        t += dt
        margin = float((u.values - v.values).max()) - initial_gap
        worst = max(worst, margin)
        report.n_checked += 1
        if margin > tol:
            report.add_violation(t=t, margin=margin)
    report.passed = report.n_violations == 0
    report.details = {"worst_margin": worst if report.n_checked else 0.0, "initial_gap": initial_gap, "steps": report.n_checked}
    return report
