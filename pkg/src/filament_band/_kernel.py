"""Compiled right-hand side for long time integrations.

Same arithmetic as the array version in ``discretization._rhs_core``; the
test suite checks that the two agree.
"""

import math

import numpy as np
from numba import njit

from .model import SERIES_SWITCH, SQRT12, _P0_SERIES, _P1_SERIES

MIN_STRETCH = 1e-12


@njit(cache=True)
def _horner(coef, x2):
    total = 0.0
    for a in coef:
        total = total * x2 + a
    return total


@njit(cache=True)
def rhs_flat(y, beta, gamma, p0_coef, p1_coef, out):
    """Fill ``out`` with the time derivative of flat state ``y``.

    Returns 0 on success, otherwise the index of the first invalid edge.
    """
    n = y.shape[0] // 3
    h = 1.0 / n
    fx = np.empty(n + 1)
    fy = np.empty(n + 1)
    g = np.zeros(n + 1)
    src = np.zeros(n + 1)
    for i in range(1, n):
        phl = y[2 * n + i - 1]
        phr = y[2 * n + i]
        pe = 0.5 * (phl + phr)
        dph = (phr - phl) / h
        dzx = (y[2 * i] - y[2 * i - 2]) / h
        dzy = (y[2 * i + 1] - y[2 * i - 1]) / h
        ce = math.cos(pe)
        se = math.sin(pe)
        c = dzx * se - dzy * ce
        stretch = math.sqrt(dzx * dzx + dzy * dzy)
        if not c > 0 or stretch < MIN_STRETCH:
            return i
        x = SQRT12 * beta * dph / (2.0 * c)
        if not abs(x) < 1.0:
            return i
        if abs(x) < SERIES_SWITCH:
            x2 = x * x
            g0 = _horner(p0_coef, x2)
            g1 = _horner(p1_coef, x2)
        else:
            at = math.atanh(x)
            g0 = at / x
            g1 = (at - x) / (x * x * x)
        p0 = g0 / c
        p1 = 3.0 * dph * g1 / (c * c)
        fx[i] = -p0 * se + gamma * dzx / stretch
        fy[i] = p0 * ce + gamma * dzy / stretch
        g[i] = p1
        src[i] = p0 * (dzx * ce + dzy * se) / (beta * beta)
    left = 9.0 / 8.0 * y[2 * n] - 1.0 / 8.0 * y[2 * n + 1]
    right = 9.0 / 8.0 * y[3 * n - 1] - 1.0 / 8.0 * y[3 * n - 2]
    fx[0] = -(1 - gamma) * math.sin(left)
    fy[0] = (1 - gamma) * math.cos(left)
    fx[n] = -(1 - gamma) * math.sin(right)
    fy[n] = (1 - gamma) * math.cos(right)
    for i in range(n):
        out[2 * i] = (fx[i + 1] - fx[i]) / h
        out[2 * i + 1] = (fy[i + 1] - fy[i]) / h
        out[2 * n + i] = (g[i + 1] - g[i]) / h + 0.5 * (src[i] + src[i + 1])
    return 0


def evaluate(y, beta, gamma):
    out = np.empty(y.shape[0])
    bad = rhs_flat(y, beta, gamma, _P0_SERIES, _P1_SERIES, out)
    return out, int(bad)
