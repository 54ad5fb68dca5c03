"""Independent reference values used by the tests.

Nothing here shares code with the solvers under test except weight
evaluation.
"""

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import gamma, kv


def power_symbol(s, lam):
    """Closed form of ``m(lambda)`` for ``a(t) = t**(1 - 2 s)``."""
    return 2.0 ** (1.0 - 2.0 * s) * gamma(1.0 - s) / gamma(s) * np.asarray(lam, dtype=float) ** s


def power_profile(s, lam, t):
    """``g(lambda, t) = 2**(1-s)/Gamma(s) z**s K_s(z)`` with ``z = sqrt(lambda) t``."""
    z = math.sqrt(lam) * np.asarray(t, dtype=float)
    with np.errstate(all="ignore"):
        g = 2.0 ** (1.0 - s) / gamma(s) * z**s * kv(s, z)
    return np.where(z == 0.0, 1.0, g)


def shooting_symbol(a, lam, eps=1e-7, decay=40.0, alpha=None):
    """``m(lambda)`` by backward shooting of ``(a g')' = lambda a g``.

    Integrates from ``T = decay / sqrt(lambda)`` (decaying WKB data) down
    to ``eps`` in the variable ``u = log t``, then corrects the last
    stretch ``[0, eps]`` assuming ``a ~ t**alpha`` there.
    """
    sq = math.sqrt(lam)
    T = decay / sq

    def rhs(u, y):
        t = math.exp(u)
        at = float(a(t))
        return [t * y[1] / at, lam * t * at * y[0]]

    h = 1e-6 * T
    aT = float(a(T))
    dlog_a = (math.log(float(a(T + h))) - math.log(float(a(T - h)))) / (2 * h)
    y0 = [1.0, aT * (-sq - 0.5 * dlog_a)]
    sol = solve_ivp(rhs, (math.log(T), math.log(eps)), y0, method="DOP853", rtol=1e-13, atol=1e-300)
    g, F = sol.y[0, -1], sol.y[1, -1]
    ae = float(a(eps))
    if alpha is None:
        alpha = math.log(ae / float(a(eps / 2))) / math.log(2.0)
    g0 = g - F * eps / (ae * (1.0 - alpha))
    F0 = F - lam * g * eps * ae / (1.0 + alpha)
    return -F0 / g0
