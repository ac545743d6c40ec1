"""Ergodic (vanishing-discount) approximation of the cell problem.

For frozen (x, r, p) the discounted problem

    alpha * w(y) + H_i(x, y, r, p + Dw(y)) = 0,   y in the unit torus,

is discretized with a local Lax-Friedrichs numerical Hamiltonian

    H_i(x, y, r, p + (D_minus w + D_plus w)/2) - theta * sum_k (D_plus w - D_minus w)/2,

which is monotone once theta >= max |dH_i/dp_k|.  The ergodic constant is
recovered as lambda = -lim alpha * w, extrapolated linearly in alpha from the
last two discount rates of the schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as sparse_linalg

from .grids import GridField, TorusGrid, max_upwind_slope
from .hamiltonians import HamiltonianSystem, estimate_lip_p

DEFAULT_ALPHAS = (0.02, 0.01)
DEFAULT_N = {1: 256, 2: 64}


class CellSolveError(RuntimeError):
    """Raised when the discounted iteration fails to reach its tolerance."""

    def __init__(self, message: str, residual: float = math.nan, iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class CellProblemSpec:
    """Frozen (i, x, r, p) together with the discretization parameters.

    ``method`` selects the pseudo-time iteration: ``"implicit"`` (default)
    takes backward-Euler pseudo-time steps linearized once per step, with the
    pseudo-time step grown as the residual falls; ``"explicit"`` is the plain
    damped iteration w <- w - tau * (alpha w + H_LF(w)).
    """

    system: HamiltonianSystem
    i: int
    x: np.ndarray
    r: np.ndarray
    p: np.ndarray
    grid: TorusGrid
    alphas: tuple = DEFAULT_ALPHAS
    residual_tol: float = 1e-8
    max_iters: int = 500
    method: str = "implicit"
    _bounds: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        sys = self.system
        if not 0 <= self.i < sys.M:
            raise IndexError(f"component index {self.i} out of range for M={sys.M}")
        for name, dim in (("x", sys.N), ("r", sys.M), ("p", sys.N)):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if arr.shape != (dim,) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be a finite vector of length {dim}")
            object.__setattr__(self, name, arr)
        if self.grid.N != sys.N or self.grid.L != 1:
            raise ValueError("cell grid must be the unit torus of the system dimension")
        alphas = tuple(float(a) for a in self.alphas)
        if not alphas:
            raise ValueError("the discount schedule needs at least one alpha")
        if any(a <= 0 for a in alphas):
            raise ValueError("discount rates must be positive")
        if any(b >= a for a, b in zip(alphas, alphas[1:])):
            raise ValueError("discount rates must be strictly decreasing")
        object.__setattr__(self, "alphas", alphas)
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.method not in ("implicit", "explicit"):
            raise ValueError(f"unknown method {self.method!r}")

    # -- derived quantities, cached per spec ----------------------------------

    def y_points(self) -> np.ndarray:
        return self.grid.points()

    def hamiltonian(self, q: np.ndarray) -> np.ndarray:
        """H_i(x, y_k, r, q_k) at every node, q of shape grid.shape + (N,)."""
        return self.system.evaluate(self.i, self.x, self.y_points(), self.r, q)

    @property
    def sup_h(self) -> float:
        """C_R: max over nodes of |H_i(x, y, r, p)| (constant sub/supersolution level)."""
        if "C_R" not in self._bounds:
            q = np.broadcast_to(self.p, self.grid.shape + (self.system.N,))
            self._bounds["C_R"] = float(np.abs(self.hamiltonian(q)).max())
        return self._bounds["C_R"]

    @property
    def gradient_bound(self) -> float:
        """L_R: smallest sampled radius with min_y H_i(x, y, r, p + q) > C_R for |q| = L_R."""
        if "L_R" not in self._bounds:
            self._bounds["L_R"] = _coercivity_radius(self)
        return self._bounds["L_R"]

    @property
    def theta(self) -> float:
        """Lax-Friedrichs dissipation: sampled p-Lipschitz bound near the frozen data."""
        if "theta" not in self._bounds:
            radius = max(float(np.abs(self.p).max()) + self.gradient_bound + 1.0,
                         float(np.abs(self.r).max()), 1.0)
            radius = float(math.ceil(radius))
            theta = estimate_lip_p(self.system, self.i, radius)
            self._bounds["theta"] = max(theta, 1e-12)
        return self._bounds["theta"]


def cell_spec(system: HamiltonianSystem, i: int, x, r, p, n: int | None = None, **kwargs) -> CellProblemSpec:
    """Convenience constructor with the default resolution for the dimension."""
    n = DEFAULT_N[system.N] if n is None else n
    return CellProblemSpec(system, i, x, r, p, TorusGrid(system.N, n), **kwargs)


def _directions(N: int) -> np.ndarray:
    if N == 1:
        return np.array([[1.0], [-1.0]])
    angles = np.arange(32) * (2 * np.pi / 32)
    return np.stack([np.cos(angles), np.sin(angles)], axis=-1)


def _coercivity_radius(spec: CellProblemSpec) -> float:
    C = spec.sup_h
    dirs = _directions(spec.system.N)
    y = spec.y_points().reshape(-1, spec.system.N)

    def above(rho: float) -> bool:
        q = spec.p[None, None, :] + rho * dirs[:, None, :]
        vals = spec.system.evaluate(spec.i, spec.x, y[None, :, :], spec.r, q)
        return bool(np.min(vals) > C)

    lo, hi = 0.0, 1.0 / 64
    while not above(hi):
        lo, hi = hi, 2 * hi
        if hi > 1e8:
            raise CellSolveError("Hamiltonian does not look coercive in p at the frozen data")
    for _ in range(30):
        if hi - lo <= 1e-3 * max(hi, 1e-3):
            break
        mid = 0.5 * (lo + hi)
        if above(mid):
            hi = mid
        else:
            lo = mid
    return hi


# --- the monotone discretization --------------------------------------------------


def _lf_hamiltonian(spec: CellProblemSpec, w: np.ndarray):
    """Return (H_LF(w), q) on the nodes; q is the central gradient p + Dw."""
    N = spec.system.N
    h = spec.grid.spacing
    q = np.empty(w.shape + (N,))
    dissipation = np.zeros_like(w)
    for k in range(N):
        wp = np.roll(w, -1, axis=k)
        wm = np.roll(w, 1, axis=k)
        q[..., k] = spec.p[k] + (wp - wm) / (2 * h)
        dissipation += (wp - 2 * w + wm) / (2 * h)
    return spec.hamiltonian(q) - spec.theta * dissipation, q


def _dh_dq(spec: CellProblemSpec, q: np.ndarray) -> np.ndarray:
    """Central finite-difference dH/dq_k at every node, shape q.shape."""
    out = np.empty_like(q)
    for k in range(q.shape[-1]):
        delta = 1e-6 * (1.0 + np.abs(q[..., k]))
        qp = q.copy()
        qm = q.copy()
        qp[..., k] += delta
        qm[..., k] -= delta
        out[..., k] = (spec.hamiltonian(qp) - spec.hamiltonian(qm)) / (2 * delta)
    return out


def _neighbour_index(shape: tuple, axis: int, shift: int) -> np.ndarray:
    idx = np.indices(shape)
    idx[axis] = (idx[axis] + shift) % shape[axis]
    return np.ravel_multi_index(tuple(idx), shape).ravel()


def _jacobian(spec: CellProblemSpec, alpha: float, q: np.ndarray, shift: float):
    """Sparse Jacobian of alpha w + H_LF(w) (generalized at kinks) plus shift * I."""
    shape = spec.grid.shape
    size = spec.grid.size
    N = spec.system.N
    h = spec.grid.spacing
    theta = spec.theta
    g = _dh_dq(spec, q)
    rows = [np.arange(size)]
    cols = [np.arange(size)]
    data = [np.full(size, alpha + N * theta / h + shift)]
    for k in range(N):
        gk = g[..., k].ravel()
        rows += [np.arange(size), np.arange(size)]
        cols += [_neighbour_index(shape, k, 1), _neighbour_index(shape, k, -1)]
        data += [(gk - theta) / (2 * h), (-gk - theta) / (2 * h)]
    return sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )


@dataclass
class DiscountedSolution:
    w: GridField
    lambda_alpha: float
    alpha: float
    iterations: int
    residual: float


def solve_discounted(spec: CellProblemSpec, alpha: float, w0=None) -> DiscountedSolution:
    """Solve alpha w + H_LF(w) = 0 to ``spec.residual_tol`` in the sup norm."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    N = spec.system.N
    h = spec.grid.spacing
    theta = spec.theta
    tau0 = h / (2 * N * theta + alpha * h)
    if w0 is None:
        q0 = np.broadcast_to(spec.p, spec.grid.shape + (N,))
        w = np.full(spec.grid.shape, -float(np.mean(spec.hamiltonian(q0))) / alpha)
    else:
        w = np.array(w0, dtype=float).reshape(spec.grid.shape)

    def residual_of(w):
        lf, q = _lf_hamiltonian(spec, w)
        F = alpha * w + lf
        return F, q, float(np.abs(F).max())

    F, q, res = residual_of(w)
    if not math.isfinite(res):
        raise CellSolveError("non-finite residual at the initial guess")
    tau = tau0
    it = 0
    while res > spec.residual_tol and it < spec.max_iters:
        it += 1
        if spec.method == "explicit":
            w = w - tau0 * F
            F, q, res = residual_of(w)
            if not math.isfinite(res):
                raise CellSolveError("non-finite update", res, it)
            continue
        J = _jacobian(spec, alpha, q, 1.0 / tau)
        dw = sparse_linalg.spsolve(J.tocsc(), -F.ravel()).reshape(w.shape)
        w_new = w + dw
        F_new, q_new, res_new = residual_of(w_new)
        if not math.isfinite(res_new):
            if tau <= tau0 * (1 + 1e-12):
                raise CellSolveError("non-finite update", res_new, it)
            tau = max(tau / 4.0, tau0)
            continue
        # non-monotone acceptance: Newton on the kinked system may overshoot once
        if res_new < res:
            tau = min(2.0 * tau * res / max(res_new, 1e-300), 1e15)
        else:
            tau = max(tau / 4.0, tau0)
        w, F, q, res = w_new, F_new, q_new, res_new
    if res > spec.residual_tol:
        raise CellSolveError(
            f"discounted iteration did not converge (alpha={alpha}, residual={res:.3e})", res, it
        )
    return DiscountedSolution(
        GridField(spec.grid, w), -alpha * float(np.mean(w)), alpha, it, res
    )


@dataclass
class CellSolution:
    lam: float
    corrector: GridField
    w_alpha: GridField
    diagnostics: dict


def extrapolate(alphas, lambdas) -> float:
    """Linear extrapolation to alpha = 0 from the last two (alpha, lambda_alpha)."""
    if len(alphas) == 1:
        return float(lambdas[0])
    a1, a2 = alphas[-2], alphas[-1]
    l1, l2 = lambdas[-2], lambdas[-1]
    # the line through both points, evaluated at alpha = 0
    return float(l2 - a2 * (l1 - l2) / (a1 - a2))


def effective_hamiltonian(spec: CellProblemSpec) -> CellSolution:
    """Approximate H-bar_i(x, r, p) and a corrector normalized to vanish at the origin."""
    w0 = None
    per_alpha = []
    prev_alpha = None
    last = None
    for alpha in spec.alphas:
        if last is not None:
            w0 = last.w.values[0] * (prev_alpha / alpha)
        last = solve_discounted(spec, alpha, w0)
        aw = alpha * last.w.values[0]
        per_alpha.append(
            {
                "alpha": alpha,
                "lambda_alpha": last.lambda_alpha,
                "iterations": last.iterations,
                "residual": last.residual,
                "sup_alpha_w": float(np.abs(aw).max()),
                "osc_alpha_w": float(aw.max() - aw.min()),
                "lambda_anchor": float(-aw.flat[0]),
            }
        )
        prev_alpha = alpha
    w = last.w.values[0]
    corrector = w - w.flat[0]
    lam = extrapolate([d["alpha"] for d in per_alpha], [d["lambda_alpha"] for d in per_alpha])
    diagnostics = {
        "per_alpha": per_alpha,
        "iterations": sum(d["iterations"] for d in per_alpha),
        "residual": per_alpha[-1]["residual"],
        "C_R": spec.sup_h,
        "L_R": spec.gradient_bound,
        "theta": spec.theta,
        "corrector_slope": max_upwind_slope(corrector, spec.system.N, spec.grid.spacing),
        "n": spec.grid.n,
    }
    return CellSolution(lam, GridField(spec.grid, corrector), last.w, diagnostics)


def residual(spec: CellProblemSpec, lam: float, v) -> float:
    """A posteriori sup over nodes of |H_LF(p + Dv) - lambda|."""
    v = np.asarray(v.values[0] if isinstance(v, GridField) else v, dtype=float)
    v = v.reshape(spec.grid.shape)
    lf, _ = _lf_hamiltonian(spec, v)
    return float(np.abs(lf - lam).max())
