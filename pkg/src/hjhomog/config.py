"""JSON descriptions of Hamiltonian systems.

Example::

    {"M": 1, "N": 1,
     "components": [{"kind": "WeaklyCoupled", "base": "abs(p1)",
                     "coupling": ["2+cos(2*pi*y1)"]}]}

Component kinds:

* ``EikonalCoupled``: ``speed`` (in x, y), ``coupling`` F (in r), ``delta``.
* ``WeaklyCoupled``: ``base`` G (in x, y, p; default |p|), ``coupling``: list
  of the M coefficients c_ji (in x, y) for j = 1..M.
* ``Custom``: ``expr`` (in x, y, r, p).

A coefficient is an expression string, a number, or ``{"table": [...]}``
holding values on a uniform periodic grid of the unit cell in y.  Optional
system fields ``lip_p`` / ``lip_r`` declare constant Lipschitz bounds; each
component may set ``convex_in_p`` and, for WeaklyCoupled, ``monotone``
(validated on load).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import expr as _expr
from .grids import interpolate_periodic
from .hamiltonians import (
    Custom,
    EikonalCoupled,
    HamiltonianSystem,
    WeaklyCoupled,
    check_A1_coefficients,
)

_KINDS = {
    "eikonalcoupled": "EikonalCoupled",
    "eikonal": "EikonalCoupled",
    "weaklycoupled": "WeaklyCoupled",
    "weakly": "WeaklyCoupled",
    "custom": "Custom",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TableCoefficient:
    """Periodic multilinear interpolant of tabulated values in y."""

    values: np.ndarray

    def __call__(self, x=None, y=None, r=None, p=None):
        return interpolate_periodic(self.values, 1.0, y)


def _check_vars(e: _expr.Expression, allowed: str, M: int, N: int, where: str):
    for v in e.variables:
        if v[0] not in allowed:
            raise ConfigError(f"{where}: variable {v} not allowed here (allowed: {allowed})")
        limit = M if v[0] == "r" else N
        if int(v[1:]) > limit:
            raise ConfigError(f"{where}: variable {v} exceeds dimension {limit}")


def _coefficient(spec, allowed: str, M: int, N: int, where: str):
    if isinstance(spec, dict):
        if "table" not in spec:
            raise ConfigError(f"{where}: coefficient object needs a 'table' entry")
        table = np.asarray(spec["table"], dtype=float)
        if table.ndim != N or any(s < 2 for s in table.shape):
            raise ConfigError(f"{where}: table must be an {N}-D array with >= 2 points per axis")
        return TableCoefficient(table)
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return float(spec)
    try:
        e = _expr.parse(spec)
    except _expr.ExpressionError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    _check_vars(e, allowed, M, N, where)
    return e


def system_from_dict(data: dict) -> HamiltonianSystem:
    try:
        M = int(data["M"])
        N = int(data.get("N", 1))
        comps_data = data["components"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"system description is missing {exc}") from None
    if len(comps_data) != M:
        raise ConfigError(f"expected {M} components, got {len(comps_data)}")
    comps = []
    for i, c in enumerate(comps_data):
        where = f"component {i + 1}"
        kind = _KINDS.get(str(c.get("kind", "")).replace("_", "").lower())
        if kind is None:
            raise ConfigError(f"{where}: unknown kind {c.get('kind')!r}")
        if kind == "EikonalCoupled":
            speed = _coefficient(c["speed"], "xy", M, N, where + " speed")
            coupling = _coefficient(c.get("coupling", 0.0), "r", M, N, where + " coupling")
            delta = c.get("delta")
            if delta is None:
                delta = _sampled_min(speed, N)
            comps.append(EikonalCoupled(speed, coupling, float(delta)))
        elif kind == "WeaklyCoupled":
            base = _coefficient(c.get("base", "abs(p1)" if N == 1 else "sqrt(p1*p1+p2*p2)"),
                                "xyp", M, N, where + " base")
            if isinstance(base, float):
                raise ConfigError(f"{where}: base Hamiltonian must depend on p")
            coefs = c.get("coupling")
            if not isinstance(coefs, list) or len(coefs) != M:
                raise ConfigError(f"{where}: 'coupling' must list {M} coefficients c_ji")
            coefs = [_coefficient(v, "xy", M, N, f"{where} c_{j + 1}{i + 1}") for j, v in enumerate(coefs)]
            comps.append(WeaklyCoupled(tuple(coefs), base, bool(c.get("convex_in_p", True))))
        else:
            fn = _coefficient(c["expr"], "xyrp", M, N, where + " expr")
            if isinstance(fn, float):
                raise ConfigError(f"{where}: custom expression must not be a bare constant")
            comps.append(Custom(fn, bool(c.get("convex_in_p", False))))
    lip_p = data.get("lip_p")
    lip_r = data.get("lip_r")
    sys = HamiltonianSystem(
        tuple(comps),
        N=N,
        lip_p=None if lip_p is None else _ConstantBound(float(lip_p)),
        lip_r=None if lip_r is None else _ConstantBound(float(lip_r)),
        description=data,
    )
    if any(c.get("monotone") for c in comps_data):
        report = check_A1_coefficients(sys.coupling_matrix(), 256, 0)
        if not report.passed:
            raise ConfigError(f"coupling flagged monotone violates the sign conditions: {report.violations[:1]}")
    return sys


@dataclass(frozen=True)
class _ConstantBound:
    value: float

    def __call__(self, radius):
        return self.value


def _sampled_min(coef, N: int) -> float:
    if isinstance(coef, float):
        return coef
    y = np.stack(np.meshgrid(*([np.arange(256) / 256] * N), indexing="ij"), -1)
    x = np.zeros_like(y)
    return float(np.min(coef(x=x, y=y)))


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def load_system(path_or_dict) -> HamiltonianSystem:
    if isinstance(path_or_dict, dict):
        data = path_or_dict
    else:
        data = load_json(path_or_dict)
    if "system" in data and "components" not in data:
        data = data["system"]
    return system_from_dict(data)
