"""Example systems used by the property suite, the tests and the shipped configs.

All are 1-D weakly coupled eikonal systems with base |p| unless stated, so
their effective Hamiltonians have closed forms.
"""

from __future__ import annotations

from .config import system_from_dict
from .hamiltonians import HamiltonianSystem

COS = "cos(2*pi*y1)"
SIN = "sin(2*pi*y1)"

EXAMPLE_A = {
    "M": 1,
    "N": 1,
    "components": [{"kind": "WeaklyCoupled", "base": "abs(p1)", "coupling": [f"2+{COS}"], "monotone": True}],
}

# c11 with max 1.5, min 0.5 and mean 1: the three-branch example in r1
PIECEWISE = {
    "M": 1,
    "N": 1,
    "components": [{"kind": "WeaklyCoupled", "base": "abs(p1)", "coupling": [f"1+{COS}/2"], "monotone": True}],
}

EXAMPLE_B = {
    "M": 2,
    "N": 1,
    "components": [
        {"kind": "WeaklyCoupled", "coupling": [f"2+{COS}", f"-(1+0.5*{COS})"], "monotone": True},
        {"kind": "WeaklyCoupled", "coupling": [f"-(1+0.5*{SIN})", f"2+{SIN}"], "monotone": True},
    ],
}

CONSTANT_COUPLING = {
    "M": 2,
    "N": 1,
    "components": [
        {"kind": "WeaklyCoupled", "coupling": [1, -1], "monotone": True},
        {"kind": "WeaklyCoupled", "coupling": [-1, 1], "monotone": True},
    ],
}

# different speeds per component with the constant coupling above
COMPARISON = {
    "M": 2,
    "N": 1,
    "components": [
        {"kind": "WeaklyCoupled", "base": "abs(p1)", "coupling": [1, -1], "monotone": True},
        {"kind": "WeaklyCoupled", "base": f"(1.5+0.5*{COS})*abs(p1)", "coupling": [-1, 1], "monotone": True},
    ],
}

# x-dependent but y-independent: the cell problem has a zero corrector
Y_INDEPENDENT = {
    "M": 2,
    "N": 1,
    "components": [
        {"kind": "Custom", "expr": "(1+0.5*sin(2*pi*x1))*abs(p1) + 0.5*p1*p1 + 2*r1 - r2"},
        {"kind": "Custom", "expr": "max(abs(p1), 2*abs(p1)-1) + cos(2*pi*x1) - r1 + 3*r2"},
    ],
}

# satisfies the monotonicity condition on the state but not the sign conditions
EXPONENTIAL_COUPLING = {
    "M": 2,
    "N": 1,
    "components": [
        {"kind": "Custom", "expr": "abs(p1) + exp(r1-r2) + 2*r1 - r2", "convex_in_p": True},
        {"kind": "Custom", "expr": "abs(p1) + exp(r2-r1) + 2*r2 - r1", "convex_in_p": True},
    ],
}

SYSTEMS = {
    "example_a": EXAMPLE_A,
    "piecewise": PIECEWISE,
    "example_b": EXAMPLE_B,
    "constant_coupling": CONSTANT_COUPLING,
    "comparison": COMPARISON,
    "y_independent": Y_INDEPENDENT,
    "exponential_coupling": EXPONENTIAL_COUPLING,
}


def system(name: str) -> HamiltonianSystem:
    try:
        return system_from_dict(SYSTEMS[name])
    except KeyError:
        raise KeyError(f"unknown example system {name!r}; known: {sorted(SYSTEMS)}") from None
