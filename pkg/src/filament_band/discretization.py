"""Finite-volume semi-discretization of the filament band equations.

Unknowns live at cell centers ``alpha_{i+1/2}``. Fluxes are evaluated at the
cell edges ``alpha_i = i / n``: interior edges use averages and centered
differences, the two boundary edges use the prescribed inward forces and a
quadratic extrapolation of the angle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernel
from .model import BandState, DensityError, ModelParams, SQRT12, kernel_arrays

# below this |dz/dalpha| the tension direction u/|u| is undefined
MIN_STRETCH = 1e-12


@dataclass(frozen=True)
class Grid:
    n: int

    @property
    def dalpha(self) -> float:
        return 1.0 / self.n

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) / self.n


@dataclass(frozen=True, eq=False)
class EdgeValues:
    """Reconstructed values at the ``n - 1`` interior edges plus boundary angles."""

    phi: np.ndarray
    dphi: np.ndarray
    dz: np.ndarray
    phi_left: float
    phi_right: float


@dataclass(frozen=True, eq=False)
class RhsEval:
    dz_dt: np.ndarray
    dphi_dt: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.dz_dt.ravel(), self.dphi_dt])

    def max_norm(self) -> float:
        return float(max(np.abs(self.dz_dt).max(), np.abs(self.dphi_dt).max()))


def boundary_angles(phi):
    """Angle at alpha = 0 and 1 from the quadratic with zero end slope."""
    left = 9.0 / 8.0 * phi[0] - 1.0 / 8.0 * phi[1]
    right = 9.0 / 8.0 * phi[-1] - 1.0 / 8.0 * phi[-2]
    return left, right


def ordering_values(dz, phi_edge):
    """``dz_perp . omega(phi)`` per edge."""
    return dz[:, 0] * np.sin(phi_edge) - dz[:, 1] * np.cos(phi_edge)


def reconstruct_edges(state: BandState, params: ModelParams) -> EdgeValues:
    n = state.n
    h = 1.0 / n
    phi = state.phi
    phi_e = 0.5 * (phi[1:] + phi[:-1])
    dphi = (phi[1:] - phi[:-1]) / h
    dz = (state.z[1:] - state.z[:-1]) / h
    c = ordering_values(dz, phi_e)
    slack = c - 0.5 * SQRT12 * params.beta * np.abs(dphi)
    bad = np.flatnonzero(~(slack > 0))
    if bad.size:
        i = int(bad[0]) + 1
        raise DensityError(f"density positivity violated at edge {i}", edge=i)
    left, right = boundary_angles(phi)
    return EdgeValues(phi=phi_e, dphi=dphi, dz=dz, phi_left=left, phi_right=right)


def _rhs_core(z, phi, beta, gamma):
    # Returns (dz_dt, dphi_dt); NaN propagates when an edge is invalid.
    n = phi.shape[0]
    h = 1.0 / n
    phi_e = 0.5 * (phi[1:] + phi[:-1])
    dphi = (phi[1:] - phi[:-1]) / h
    dz = (z[1:] - z[:-1]) / h
    cos_e, sin_e = np.cos(phi_e), np.sin(phi_e)
    c = dz[:, 0] * sin_e - dz[:, 1] * cos_e
    p0, p1 = kernel_arrays(c, dphi, beta)
    stretch = np.hypot(dz[:, 0], dz[:, 1])

    left, right = boundary_angles(phi)
    fx = np.empty(n + 1)
    fy = np.empty(n + 1)
    fx[1:-1] = -p0 * sin_e + gamma * dz[:, 0] / stretch
    fy[1:-1] = p0 * cos_e + gamma * dz[:, 1] / stretch
    fx[0], fy[0] = -(1 - gamma) * np.sin(left), (1 - gamma) * np.cos(left)
    fx[-1], fy[-1] = -(1 - gamma) * np.sin(right), (1 - gamma) * np.cos(right)

    g = np.zeros(n + 1)
    g[1:-1] = p1
    src = np.zeros(n + 1)
    src[1:-1] = p0 * (dz[:, 0] * cos_e + dz[:, 1] * sin_e) / beta**2

    dz_dt = np.column_stack([np.diff(fx), np.diff(fy)]) / h
    dphi_dt = np.diff(g) / h + 0.5 * (src[1:] + src[:-1])
    return dz_dt, dphi_dt, c, dphi, stretch


def rhs(state: BandState, params: ModelParams) -> RhsEval:
    """Semi-discrete time derivatives of all cell values."""
    edges = reconstruct_edges(state, params)
    stretch = np.hypot(edges.dz[:, 0], edges.dz[:, 1])
    small = np.flatnonzero(stretch < MIN_STRETCH)
    if small.size:
        raise ZeroDivisionError(f"|dz/dalpha| vanishes at edge {int(small[0]) + 1}")
    dz_dt, dphi_dt, *_ = _rhs_core(state.z, state.phi, params.beta, params.gamma)
    return RhsEval(dz_dt=dz_dt, dphi_dt=dphi_dt)


def rhs_vector(y, params: ModelParams, *, strict: bool = True) -> np.ndarray:
    """Flat-vector right-hand side for the method of lines (compiled).

    With ``strict=False`` an invalid state yields NaNs instead of raising, so
    a stiff solver can reject the trial step.
    """
    out, bad = _kernel.evaluate(np.ascontiguousarray(y, dtype=float), params.beta, params.gamma)
    if bad:
        if strict:
            raise DensityError(f"density positivity violated at edge {bad}", edge=bad)
        out.fill(np.nan)
    return out


def rhs_vector_reference(y, params: ModelParams) -> np.ndarray:
    """Array-based evaluation of :func:`rhs_vector`, kept as a cross-check."""
    state = BandState.from_vector(y)
    return rhs(state, params).to_vector()


def jacobian_sparsity(n: int) -> np.ndarray:
    """Boolean dependency pattern of :func:`rhs_vector` in the flat layout."""
    cell_dep = np.zeros((n, n), dtype=bool)
    for i in range(n):
        cell_dep[i, max(i - 1, 0) : min(i + 2, n)] = True
    idx_z = lambda i: [2 * i, 2 * i + 1]
    pattern = np.zeros((3 * n, 3 * n), dtype=bool)
    for i in range(n):
        rows = idx_z(i) + [2 * n + i]
        for j in np.flatnonzero(cell_dep[i]):
            cols = idx_z(j) + [2 * n + j]
            pattern[np.ix_(rows, cols)] = True
    return pattern


def numerical_jacobian(fun, y, *, central: bool = False, rel_step: float | None = None) -> np.ndarray:
    """Dense finite-difference Jacobian of ``fun`` at ``y``."""
    y = np.asarray(y, dtype=float)
    f0 = None if central else fun(y)
    if rel_step is None:
        rel_step = np.finfo(float).eps ** (1 / 3 if central else 1 / 2)
    steps = rel_step * np.maximum(1.0, np.abs(y))
    cols = []
    for k in range(y.shape[0]):
        e = np.zeros_like(y)
        e[k] = steps[k]
        if central:
            cols.append((fun(y + e) - fun(y - e)) / (2 * steps[k]))
        else:
            cols.append((fun(y + e) - f0) / steps[k])
    return np.column_stack(cols)


class BandedJacobian:
    """Dense finite-difference Jacobian of :func:`rhs_vector` using column coloring.

    Columns of cells at least three apart never share a row, so 9 extra
    right-hand side evaluations give the whole matrix.
    """

    def __init__(self, n: int):
        self.n = n
        pattern = jacobian_sparsity(n)
        cell = np.concatenate([np.repeat(np.arange(n), 2), np.arange(n)])
        var = np.concatenate([np.tile([0, 1], n), np.full(n, 2)])
        color = 3 * (cell % 3) + var
        self.groups = []
        for k in range(9):
            cols = np.flatnonzero(color == k)
            rows, owners = [], []
            for col in cols:
                r = np.flatnonzero(pattern[:, col])
                rows.append(r)
                owners.append(np.full(r.size, col))
            self.groups.append((cols, np.concatenate(rows), np.concatenate(owners)))

    def __call__(self, fun, y, f0=None, *, central: bool = False) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if f0 is None and not central:
            f0 = fun(y)
        eps = np.finfo(float).eps
        steps = eps ** (1 / 3 if central else 1 / 2) * np.maximum(1.0, np.abs(y))
        jac = np.zeros((y.size, y.size))
        for cols, rows, owners in self.groups:
            yp = y.copy()
            yp[cols] += steps[cols]
            if central:
                ym = y.copy()
                ym[cols] -= steps[cols]
                df = (fun(yp) - fun(ym)) / 2
            else:
                df = fun(yp) - f0
            jac[rows, owners] = df[rows] / steps[owners]
        return jac
