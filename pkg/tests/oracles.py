"""Reference values computed without the package's own closed-form code.

The 1-D eikonal value max{max_y sum_j c_j(y) r_j, |p| + sum_j r_j int c_j}
is evaluated with adaptive quadrature and a bounded scalar optimizer seeded
from a coarse scan, so it shares nothing with the audit-grid implementation.
"""

import numpy as np
from scipy import integrate, optimize


def weighted_max(coefs, r):
    """max over y in [0, 1] of sum_j coefs[j](y) * r[j]."""
    def g(y):
        return sum(c(y) * rj for c, rj in zip(coefs, r))

    scan = np.linspace(0.0, 1.0, 201)
    values = [g(y) for y in scan]
    k = int(np.argmax(values))
    lo, hi = scan[max(k - 1, 0)], scan[min(k + 1, len(scan) - 1)]
    res = optimize.minimize_scalar(lambda y: -g(y), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    return max(max(values), -res.fun)


def mean(c):
    value, _ = integrate.quad(c, 0.0, 1.0, epsabs=1e-13, limit=200)
    return value


def hbar_weakly_coupled(coefs, r, p):
    """Effective Hamiltonian of |p + v'| + sum_j c_j(y) r_j in one dimension."""
    flat = weighted_max(coefs, r)
    slope = abs(p) + sum(mean(c) * rj for c, rj in zip(coefs, r))
    return max(flat, slope)


def c_example_a(y):
    return 2.0 + np.cos(2 * np.pi * y)


def c_piecewise(y):
    return 1.0 + np.cos(2 * np.pi * y) / 2


def euler_product(rate, dt, steps, u0=1.0):
    """Forward Euler for u' = -rate * u."""
    return u0 * (1.0 - rate * dt) ** steps
