"""Model parameters, pressure kernels and closed-form results for the filament band.

The band is a continuum of rigid rods of unit length indexed by ``alpha`` in
[0, 1]. Rod ``alpha`` has center ``z(alpha)`` and direction angle
``phi(alpha)``. All quantities here are dimensionless; the model is fully
determined by the aspect parameter ``beta`` and the tension fraction ``gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT12 = math.sqrt(12.0)

# |q| / (2c) below which the kernels are evaluated from their power series.
SERIES_SWITCH = 0.02
_SERIES_TERMS = 9


class DomainError(ValueError):
    """Raised when an input lies outside the domain of a formula."""


class DensityError(DomainError):
    """Filament ordering lost: the transversal density is not finite and positive.

    ``edge`` is the index of the offending cell edge when known.
    """

    def __init__(self, message: str, edge: int | None = None):
        super().__init__(message)
        self.edge = edge


def omega(phi):
    """Unit direction ``(cos phi, sin phi)``; stacks along the last axis."""
    phi = np.asarray(phi, dtype=float)
    return np.stack([np.cos(phi), np.sin(phi)], axis=-1)


def perp(v):
    """Rotate by +90 degrees: ``(a, b) -> (-b, a)``."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


@dataclass(frozen=True)
class ModelParams:
    beta: float
    gamma: float

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"beta must be positive, got {self.beta}")
        if not 0 < self.gamma < 1:
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma}")

    @property
    def beta0(self) -> float:
        return beta0(self.gamma)

    @classmethod
    def relative(cls, gamma: float, ratio: float) -> ModelParams:
        """Parameters with ``beta = ratio * beta0(gamma)``."""
        return cls(beta=ratio * beta0(gamma), gamma=gamma)


@dataclass(frozen=True, eq=False)
class BandState:
    """Cell-centered filament centers ``z`` (shape ``(n, 2)``) and angles ``phi``.

    Angles are stored unwrapped.
    """

    z: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        phi = np.array(self.phi, dtype=float)
        if z.ndim != 2 or z.shape[1] != 2:
            raise ValueError(f"z must have shape (n, 2), got {z.shape}")
        if phi.shape != (z.shape[0],):
            raise ValueError("z and phi must describe the same number of cells")
        if z.shape[0] < 4:
            raise ValueError("at least 4 cells are required")
        z.flags.writeable = False
        phi.flags.writeable = False
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "phi", phi)

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    def to_vector(self) -> np.ndarray:
        """Flat layout ``[z1x, z1y, ..., znx, zny, phi1, ..., phin]``."""
        return np.concatenate([self.z.ravel(), self.phi])

    @classmethod
    def from_vector(cls, y) -> BandState:
        y = np.asarray(y, dtype=float)
        n = y.shape[0] // 3
        return cls(z=y[: 2 * n].reshape(n, 2), phi=y[2 * n :])

    def translated(self, shift) -> BandState:
        return BandState(self.z + np.asarray(shift, dtype=float), self.phi)

    def rotated(self, theta: float) -> BandState:
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        return BandState(self.z @ rot.T, self.phi + theta)

    def mirrored(self) -> BandState:
        """Reverse the filament order and negate positions (the flip symmetry)."""
        return BandState(-self.z[::-1], self.phi[::-1])

    def center_of_mass(self) -> np.ndarray:
        return self.z.mean(axis=0)


@dataclass(frozen=True)
class PressurePair:
    p0: float | np.ndarray
    p1: float | np.ndarray


@dataclass(frozen=True)
class NormalFormCoeffs:
    kappa1: float
    kappa2: float
    sigma: int
    epsilon: float
    gamma: float = field(default=float("nan"))

    @property
    def supercritical(self) -> bool:
        return self.kappa2 > 0


# sum_m x^(2m) / (2m + 1) and sum_m x^(2m) / (2m + 3), highest power first
_P0_SERIES = np.array([1.0 / (2 * m + 1) for m in reversed(range(_SERIES_TERMS))])
_P1_SERIES = np.array([1.0 / (2 * m + 3) for m in reversed(range(_SERIES_TERMS))])


def _shape_factors(x):
    # atanh(x)/x and (atanh(x) - x)/x^3, switching to the series near x = 0
    g0 = np.empty_like(x)
    g1 = np.empty_like(x)
    small = np.abs(x) < SERIES_SWITCH
    if small.all():
        x2 = x * x
        return np.polyval(_P0_SERIES, x2), np.polyval(_P1_SERIES, x2)
    big = ~small
    xb = x[big]
    at = np.arctanh(xb)
    g0[big] = at / xb
    g1[big] = (at - xb) / (xb * xb * xb)
    if small.any():
        x2 = x[small] ** 2
        g0[small] = np.polyval(_P0_SERIES, x2)
        g1[small] = np.polyval(_P1_SERIES, x2)
    return g0, g1


def kernel_arrays(c, dphi, beta):
    """Vectorized ``(P0, P1)`` with no validation; invalid entries give NaN."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    dphi = np.atleast_1d(np.asarray(dphi, dtype=float))
    x = SQRT12 * beta * dphi / (2.0 * c)
    valid = (c > 0) & (np.abs(x) < 1)
    if valid.all():
        g0, g1 = _shape_factors(x)
    else:
        g0 = np.full_like(x, np.nan)
        g1 = np.full_like(x, np.nan)
        if valid.any():
            g0[valid], g1[valid] = _shape_factors(x[valid])
    p0 = g0 / c
    p1 = 3.0 * dphi * g1 / (c * c)
    return p0, p1


def pressure_kernels(c, dphi, beta) -> PressurePair:
    """Zeroth and first moments of the transversal filament density.

    ``c`` is the ordering value ``u_perp . omega(phi)``, ``dphi`` the angle
    gradient and ``beta`` the aspect parameter. The density along a rod is
    ``1 / (c - sqrt(12) beta s dphi)`` for ``s`` in [-1/2, 1/2], so the inputs
    must satisfy ``c > sqrt(12) beta |dphi| / 2``.
    """
    c_arr = np.asarray(c, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = SQRT12 * beta * np.asarray(dphi, dtype=float) / (2.0 * c_arr)
    bad = ~((c_arr > 0) & (np.abs(x) < 1))
    if np.any(bad):
        raise DensityError("density blow-up: need c > 0 and |q| < 2c")
    p0, p1 = kernel_arrays(c_arr, dphi, beta)
    if c_arr.ndim == 0 and np.ndim(dphi) == 0:
        return PressurePair(float(p0[0]), float(p1[0]))
    return PressurePair(p0, p1)


def beta0(gamma: float) -> float:
    """First steady-state bifurcation point of the aspect parameter."""
    if not 0 < gamma < 1:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")
    return math.sqrt((1 - gamma) / gamma) / (2 * math.pi)


def kappa1(gamma: float) -> float:
    return 16 * math.pi**4 * gamma**2 / (1 + 5 * gamma - 3 * gamma**2)


def kappa2(gamma: float) -> float:
    pi2 = math.pi**2
    poly = 9 + 54 * gamma + (42 + 8 * pi2) * gamma**2
    return -pi2 * gamma * poly * (1 - gamma) * (1 - 2 * gamma) / (6 * (1 + 5 * gamma - 3 * gamma**2))


def normal_form_coeffs(params: ModelParams) -> NormalFormCoeffs:
    b0 = beta0(params.gamma)
    gap = b0**2 - params.beta**2
    sigma = int(np.sign(gap))
    return NormalFormCoeffs(
        kappa1=kappa1(params.gamma),
        kappa2=kappa2(params.gamma),
        sigma=sigma,
        epsilon=math.sqrt(abs(gap)),
        gamma=params.gamma,
    )


def cell_centers(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def trivial_state(phi0: float, n: int, z0=None) -> BandState:
    """Rectangle configuration with constant angle ``phi0``.

    With ``z0=None`` the band is centered at the origin.
    """
    if n < 4:
        raise ValueError("at least 4 cells are required")
    alpha = cell_centers(n)
    u = -perp(omega(phi0))
    z = alpha[:, None] * u[None, :]
    z -= z.mean(axis=0)
    if z0 is not None:
        z = z + np.asarray(z0, dtype=float)
    return BandState(z=z, phi=np.full(n, float(phi0)))


def branch_amplitude(params: ModelParams) -> float:
    """Normal-form coefficient ``sqrt(+-kappa1/kappa2)`` of the steady branch at ``params``.

    Raises DomainError when no nontrivial branch exists there.
    """
    nf = normal_form_coeffs(params)
    if nf.sigma == 0:
        return 0.0
    ratio = nf.sigma * nf.kappa1 / nf.kappa2 if nf.kappa2 != 0 else -1.0
    if ratio <= 0:
        raise DomainError(
            f"no bifurcating steady state for gamma={params.gamma}, beta={params.beta} "
            f"(sigma={nf.sigma}, kappa2={nf.kappa2:.4g})"
        )
    return math.sqrt(ratio)


def bifurcation_mode(alpha, gamma: float):
    """Shape functions of the first steady mode: ``(b, psi)`` for unit amplitude."""
    alpha = np.asarray(alpha, dtype=float)
    two_pi = 2 * math.pi
    b = np.sin(two_pi * alpha) - two_pi * gamma * alpha
    psi = gamma * (np.sin(two_pi * alpha) - two_pi * alpha)
    return b, psi


def bifurcating_branch_prediction(params: ModelParams, sign: int, n: int):
    """Leading-order steady state on the bifurcating branch.

    Returns ``(state, A)`` where ``A = sign * eps * sqrt(+-kappa1/kappa2)`` is
    the amplitude multiplying the mode shapes of :func:`bifurcation_mode`.
    The rotation constant is zero and the band is centered at the origin.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    nf = normal_form_coeffs(params)
    amp = sign * nf.epsilon * branch_amplitude(params)
    g = params.gamma
    alpha = cell_centers(n)
    two_pi = 2 * math.pi
    # antiderivative of the b-mode
    zy = amp * (-np.cos(two_pi * alpha) / two_pi - math.pi * g * alpha**2)
    z = np.column_stack([alpha, zy])
    z -= z.mean(axis=0)
    _, psi = bifurcation_mode(alpha, g)
    phi = math.pi / 2 + amp * psi
    return BandState(z=z, phi=phi), amp


def mode_amplitude(state: BandState, gamma: float) -> float:
    """Least-squares coefficient of the first steady mode in the angle profile.

    Both the angle and the mode shape are taken relative to their means, so
    the result ignores the rotation constant.
    """
    _, psi = bifurcation_mode(cell_centers(state.n), gamma)
    psi = psi - psi.mean()
    dev = state.phi - state.phi.mean()
    return float(dev @ psi / (psi @ psi))
