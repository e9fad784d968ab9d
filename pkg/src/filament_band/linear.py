"""Linearization about the trivial steady state.

Around ``u = (1, 0)``, ``phi = pi/2`` the longitudinal stretch ``a`` obeys a
Dirichlet heat equation, while the transversal tilt ``b`` and the angle
perturbation ``psi`` form the cross-diffusion system

    b_t = (gamma b - psi)_aa,    beta^2 psi_t = beta^2 psi_aa + b - psi,

with ``b - psi = psi_a = 0`` at both ends. Everything here is discretized on
cell centers with the same boundary closures as the nonlinear scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import brentq

from .model import DomainError, ModelParams, beta0, cell_centers


@dataclass(frozen=True, eq=False)
class LinearizedSystem:
    beta: float
    gamma: float
    n: int
    operator: np.ndarray  # acts on [b (n), psi (n)]

    def apply(self, b, psi) -> tuple[np.ndarray, np.ndarray]:
        out = self.operator @ np.concatenate([b, psi])
        return out[: self.n], out[self.n :]


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rotation_index: int
    leading_nontrivial: complex


@dataclass(frozen=True, eq=False)
class AdjointNullVector:
    kappa: float
    gamma: float
    u: np.ndarray
    v: np.ndarray

    def integral(self) -> float:
        """Closed form of the integral of ``u + v`` over [0, 1]."""
        k = self.kappa
        return 2 * (2 - self.gamma - k * math.sin(k) / (2 * (1 - math.cos(k))))


def steady_state_matrix(params: ModelParams) -> np.ndarray:
    """Coefficient matrix of the steady problem written as ``X'' = M X``."""
    g = params.gamma
    return np.array([[-1 / g, 1 / g], [-1.0, 1.0]]) / params.beta**2


def _second_difference_dirichlet(n: int) -> np.ndarray:
    # cell-centered, value prescribed as 0 on both edges via odd ghost cells
    h = 1.0 / n
    lap = np.diag(np.full(n, -2.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    lap[0, 0] = lap[-1, -1] = -3.0
    return lap / h**2


def heat_operator(n: int) -> np.ndarray:
    """Discrete Dirichlet Laplacian for the decoupled stretch mode."""
    return _second_difference_dirichlet(n)


def assemble_linearized(params: ModelParams, n: int) -> LinearizedSystem:
    """Finite-volume matrix of the cross-diffusion system.

    The flux of ``w = gamma b - psi`` is a centered difference inside; on
    the boundary edges ``w`` takes the value ``-(1 - gamma) psi`` fixed by
    the inward forces, with the edge angle from the quadratic extrapolation
    of the nonlinear scheme, and the edge slope is one-sided second order.
    The angle flux vanishes on the boundary and the source is averaged from
    interior edges, zero on the boundary edges.
    """
    if n < 8:
        raise ValueError("n must be at least 8")
    g, beta = params.gamma, params.beta
    h = 1.0 / n
    eye = np.eye(n)
    # w and psi as linear maps of the stacked vector
    W = np.hstack([g * eye, -eye])
    Psi = np.hstack([np.zeros((n, n)), eye])
    B = np.hstack([eye, np.zeros((n, n))])

    psi_left = 9 / 8 * Psi[0] - 1 / 8 * Psi[1]
    psi_right = 9 / 8 * Psi[-1] - 1 / 8 * Psi[-2]
    w_left = -(1 - g) * psi_left
    w_right = -(1 - g) * psi_right

    flux_w = np.zeros((n + 1, 2 * n))
    flux_w[1:-1] = (W[1:] - W[:-1]) / h
    flux_w[0] = (-8 * w_left + 9 * W[0] - W[1]) / (3 * h)
    flux_w[-1] = (8 * w_right - 9 * W[-1] + W[-2]) / (3 * h)
    db = np.diff(flux_w, axis=0) / h

    flux_psi = np.zeros((n + 1, 2 * n))
    flux_psi[1:-1] = (Psi[1:] - Psi[:-1]) / h
    src = np.zeros((n + 1, 2 * n))
    src[1:-1] = 0.5 * ((B[1:] + B[:-1]) - (Psi[1:] + Psi[:-1])) / beta**2
    dpsi = np.diff(flux_psi, axis=0) / h + 0.5 * (src[1:] + src[:-1])

    return LinearizedSystem(beta=beta, gamma=g, n=n, operator=np.vstack([db, dpsi]))


def spectrum(sys: LinearizedSystem) -> SpectrumReport:
    """All eigenvalues, sorted by descending real part, with the rotation mode tagged.

    The rotation mode is the eigenvector most parallel to the constant
    vector ``(1, ..., 1; 1, ..., 1)``.
    """
    vals, vecs = scipy.linalg.eig(sys.operator)
    if not np.all(np.isfinite(vals)):
        raise np.linalg.LinAlgError("eigenvalue computation failed")
    order = np.argsort(-vals.real, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    ones = np.ones(2 * sys.n) / math.sqrt(2 * sys.n)
    overlap = np.abs(ones @ vecs) / np.linalg.norm(vecs, axis=0)
    rot = int(np.argmax(overlap))
    others = np.delete(np.arange(vals.size), rot)
    return SpectrumReport(vals, vecs, rot, complex(vals[others[0]]))


def leading_growth_rate(params: ModelParams, n: int) -> float:
    return spectrum(assemble_linearized(params, n)).leading_nontrivial.real


def discrete_beta0(gamma: float, n: int, bracket=(0.9, 1.1), xtol: float = 1e-10) -> float:
    """Aspect parameter where the leading nontrivial eigenvalue crosses zero."""
    b0 = beta0(gamma)
    f = lambda b: leading_growth_rate(ModelParams(b, gamma), n)
    return brentq(f, bracket[0] * b0, bracket[1] * b0, xtol=xtol * b0)


def adjoint_kappa(params: ModelParams) -> float:
    return math.sqrt((1 - params.gamma) / params.gamma) / params.beta


def adjoint_null_functions(kappa: float, gamma: float):
    """Callables ``(u, v)`` spanning the adjoint nullspace for wavenumber ``kappa``."""
    if not 0 < kappa < 2 * math.pi:
        raise DomainError(f"kappa must lie in (0, 2 pi), got {kappa}")
    ratio = math.sin(kappa) / (1 - math.cos(kappa))

    def u(alpha):
        alpha = np.asarray(alpha, dtype=float)
        return kappa * (np.sin(kappa * alpha) - (1 - np.cos(kappa * alpha)) * ratio)

    def v(alpha):
        alpha = np.asarray(alpha, dtype=float)
        return kappa * (1 - gamma) * (np.sin(kappa * alpha) + np.cos(kappa * alpha) * ratio)

    return u, v


def adjoint_null(params: ModelParams, n: int = 200) -> AdjointNullVector:
    """Adjoint null vector sampled at the ``n`` cell centers."""
    kappa = adjoint_kappa(params)
    u, v = adjoint_null_functions(kappa, params.gamma)
    alpha = cell_centers(n)
    return AdjointNullVector(kappa=kappa, gamma=params.gamma, u=u(alpha), v=v(alpha))


def midpoint(f) -> float:
    f = np.asarray(f, dtype=float)
    return float(f.sum() / f.shape[-1])


def conserved_pairing(b, psi, adj: AdjointNullVector) -> float:
    if np.shape(b) != adj.u.shape or np.shape(psi) != adj.v.shape:
        raise ValueError("fields and adjoint vector must share the grid")
    return midpoint(np.asarray(b) * adj.u + np.asarray(psi) * adj.v)


def asymptotic_constant(b_init, psi_init, adj: AdjointNullVector) -> float:
    """Constant ``c`` of the limit state ``c (1, 1)`` predicted by the conservation law."""
    return conserved_pairing(b_init, psi_init, adj) / midpoint(adj.u + adj.v)


def energy(b, psi, gamma: float) -> float:
    b = np.asarray(b, dtype=float)
    psi = np.asarray(psi, dtype=float)
    return 0.5 * midpoint(gamma * (b - psi) ** 2 + psi**2)


def dissipation_margin(gamma):
    """``4 gamma^2 (2 gamma + 1) - gamma^2 (2 + gamma)^2``; positive means the
    gradient part of the energy dissipation is positive definite."""
    gamma = np.asarray(gamma, dtype=float)
    return 4 * gamma**2 * (2 * gamma + 1) - gamma**2 * (2 + gamma) ** 2
