"""Traveling waves: Newton solution, linear stability and continuation in beta.

A traveling wave is a band configuration whose every cell moves with the same
constant velocity ``V`` and whose angles do not change. In the co-moving frame
it is a steady state of the semi-discrete system.

The steady equations are invariant under translation and rotation. The mean
position condition removes translation and leaves a square system. Rotation
can leave one direction of its Jacobian degenerate; when the seed shows that,
the solver also pins the mean angle and solves the resulting consistent
overdetermined system by Gauss-Newton least squares. Each wave records which
path produced it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.optimize import brentq

from .discretization import BandedJacobian, rhs_vector
from .model import BandState, DensityError, DomainError, ModelParams, trivial_state

DEFAULT_TOL = 1e-10
SYMMETRY_TOL = 1e-6
# smallest-to-largest singular value ratio below which the square system is
# treated as rank deficient
RANK_TOL = 1e-8


class ConvergenceError(RuntimeError):
    """Newton iteration failed; ``residual_norm`` is the last value reached."""

    def __init__(self, message: str, residual_norm: float = float("nan")):
        super().__init__(message)
        self.residual_norm = residual_norm


class SingularJacobianError(ConvergenceError):
    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3g})")
        self.condition = condition


class StabilityAmbiguityError(RuntimeError):
    """A non-symmetry eigenvalue is indistinguishable from the symmetry zero modes."""


@dataclass(frozen=True, eq=False)
class TravelingWave:
    state: BandState
    velocity: np.ndarray
    beta: float
    stable: bool | None = None
    residual_norm: float = float("nan")
    eigenvalues: np.ndarray | None = field(default=None, repr=False)
    gamma: float = float("nan")
    path: str = ""  # "square" or "least-squares"

    @property
    def speed(self) -> float:
        return float(np.hypot(*self.velocity))

    @property
    def amplitude(self) -> float:
        """Export measure ``max |phi - mean(phi)|``."""
        phi = self.state.phi
        return float(np.abs(phi - phi.mean()).max())


@dataclass
class Branch:
    points: list[TravelingWave]
    fold_locations: list[float]
    termination_reason: str = ""

    @property
    def betas(self) -> np.ndarray:
        return np.array([p.beta for p in self.points])

    def to_csv(self, path) -> None:
        write_branch_csv(self.points, path)


def write_branch_csv(points: Sequence[TravelingWave], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["beta", "Vx", "Vy", "amplitude", "stable", "residual"])
        for p in points:
            w.writerow(
                [repr(float(p.beta)), repr(float(p.velocity[0])), repr(float(p.velocity[1])),
                 repr(float(p.amplitude)), int(bool(p.stable)), repr(float(p.residual_norm))]
            )


# -- residual ---------------------------------------------------------------


def _residual_flat(y, V, params):
    n = y.size // 3
    f = rhs_vector(y, params, strict=True)
    out = np.empty(3 * n + 2)
    out[: 2 * n] = f[: 2 * n] - np.tile(V, n)
    out[2 * n : 3 * n] = f[2 * n :]
    out[3 * n :] = y[: 2 * n].reshape(n, 2).mean(axis=0)
    return out


def residual(state: BandState, V, params: ModelParams) -> np.ndarray:
    """Steady equations in the frame moving with velocity ``V``.

    Layout: ``dz/dt - V`` per cell (2n), ``dphi/dt`` per cell (n), then the
    mean position (2).
    """
    V = np.asarray(V, dtype=float)
    return _residual_flat(state.to_vector(), V, params)


def residual_norm(state: BandState, V, params: ModelParams) -> float:
    return float(np.abs(residual(state, V, params)).max())


def _system(x, params, phi_mean, n):
    # residual of the square system plus the mean-angle row
    y, V = x[: 3 * n], x[3 * n :]
    r = _residual_flat(y, V, params)
    return np.append(r, y[2 * n :].mean() - phi_mean)


def _system_jacobian(x, params, n, colored):
    y = x[: 3 * n]
    fun = lambda v: rhs_vector(v, params, strict=False)
    J = np.zeros((3 * n + 3, 3 * n + 2))
    J[: 3 * n, : 3 * n] = colored(fun, y)
    J[0 : 2 * n : 2, 3 * n] = -1.0
    J[1 : 2 * n : 2, 3 * n + 1] = -1.0
    J[3 * n, 0 : 2 * n : 2] = 1.0 / n
    J[3 * n + 1, 1 : 2 * n : 2] = 1.0 / n
    J[3 * n + 2, 2 * n : 3 * n] = 1.0 / n
    return J


def _gauss_newton(fun, jac, x0, *, tol, max_iter, max_step=None):
    """Damped Gauss-Newton for a consistent system. Returns ``(x, norm, iterations)``."""
    x = np.array(x0, dtype=float)
    try:
        r = fun(x)
    except DensityError as exc:
        raise ConvergenceError(f"seed is not admissible: {exc}") from exc
    norm = np.abs(r).max()
    for it in range(max_iter):
        if norm < tol:
            return x, norm, it
        J = jac(x)
        dx, _, rank, sv = linalg.lstsq(J, -r, lapack_driver="gelsd")
        if rank < J.shape[1]:
            raise SingularJacobianError("rank-deficient Newton matrix", sv[0] / max(sv[-1], 1e-300))
        if max_step is not None:
            size = np.abs(dx).max()
            if size > max_step:
                dx *= max_step / size
        lam = 1.0
        while lam > 1e-4:
            trial = x + lam * dx
            try:
                r_new = fun(trial)
                norm_new = np.abs(r_new).max()
            except DensityError:
                norm_new = np.inf
            if norm_new < (1 - 1e-4 * lam) * norm or norm_new < tol:
                break
            lam *= 0.5
        else:
            raise ConvergenceError("line search failed", norm)
        x, r, norm = trial, r_new, norm_new
    if norm < tol:
        return x, norm, max_iter
    raise ConvergenceError(f"no convergence after {max_iter} iterations", norm)


def newton_solve(
    guess: tuple[BandState, Sequence[float] | None],
    params: ModelParams,
    tol: float = DEFAULT_TOL,
    *,
    max_iter: int = 30,
    with_stability: bool = True,
) -> TravelingWave:
    """Refine a guess ``(state, V)`` to a traveling wave.

    ``V=None`` seeds the velocity from the mean cell velocity of the guess.
    The guess is first shifted to zero mean position. The square system is
    solved directly when its Jacobian at the seed is well conditioned;
    otherwise, or if that iteration fails, the mean angle of the seed is
    pinned and the least-squares path is used.
    """
    state, V = guess
    n = state.n
    state = state.translated(-state.center_of_mass())
    y0 = state.to_vector()
    if V is None:
        f = rhs_vector(y0, params, strict=True)
        V = f[: 2 * n].reshape(n, 2).mean(axis=0)
    x0 = np.concatenate([y0, np.asarray(V, dtype=float)])
    phi_mean = float(state.phi.mean())
    colored = BandedJacobian(n)
    system = lambda v: _system(v, params, phi_mean, n)
    jacobian = lambda v: _system_jacobian(v, params, n, colored)
    x = None
    sv = linalg.svdvals(jacobian(x0)[:-1])
    if sv[-1] > RANK_TOL * sv[0]:
        try:
            x, _, _ = _gauss_newton(
                lambda v: system(v)[:-1], lambda v: jacobian(v)[:-1], x0, tol=tol, max_iter=max_iter
            )
            path = "square"
        except ConvergenceError:
            x = None
    if x is None:
        x, _, _ = _gauss_newton(system, jacobian, x0, tol=tol, max_iter=max_iter)
        path = "least-squares"
    wave = TravelingWave(
        state=BandState.from_vector(x[: 3 * n]),
        velocity=x[3 * n :].copy(),
        beta=params.beta,
        residual_norm=residual_norm(BandState.from_vector(x[: 3 * n]), x[3 * n :], params),
        gamma=params.gamma,
        path=path,
    )
    if with_stability:
        stable, eigs = stability(wave, params)
        wave = replace(wave, stable=stable, eigenvalues=eigs)
    return wave


# -- stability --------------------------------------------------------------


def symmetry_basis(state: BandState) -> np.ndarray:
    """Orthonormal basis of the translation and rotation directions at ``state``."""
    n = state.n
    tx = np.zeros(3 * n)
    ty = np.zeros(3 * n)
    tx[0 : 2 * n : 2] = 1.0
    ty[1 : 2 * n : 2] = 1.0
    rot = np.concatenate([np.column_stack([-state.z[:, 1], state.z[:, 0]]).ravel(), np.ones(n)])
    q, _ = np.linalg.qr(np.column_stack([tx, ty, rot]))
    return q


def rhs_jacobian(state: BandState, params: ModelParams) -> np.ndarray:
    """Central-difference Jacobian of the semi-discrete right-hand side."""
    fun = lambda v: rhs_vector(v, params, strict=False)
    return BandedJacobian(state.n)(fun, state.to_vector(), central=True)


def reduced_spectrum(state: BandState, params: ModelParams) -> np.ndarray:
    """Eigenvalues of the linearization with the symmetry directions factored out.

    The span of the two translations and the rotation generator is invariant
    under the Jacobian at a traveling wave, so the Jacobian is block
    triangular with respect to it and its orthogonal complement. The
    eigenvalues of the complement block are the nontrivial ones. Sorted by
    descending real part.
    """
    J = rhs_jacobian(state, params)
    q = symmetry_basis(state)
    full, _ = np.linalg.qr(np.column_stack([q, np.eye(J.shape[0])]))
    comp = full[:, 3:]
    eigs = linalg.eigvals(comp.T @ J @ comp)
    return eigs[np.argsort(-eigs.real, kind="stable")]


def stability(tw: TravelingWave, params: ModelParams, *, tol: float = SYMMETRY_TOL):
    """Return ``(stable, eigenvalues)`` for a converged wave.

    Raises StabilityAmbiguityError when a remaining eigenvalue lies within
    ``tol`` of zero and so cannot be told apart from a symmetry mode.
    """
    eigs = reduced_spectrum(tw.state, params)
    close = np.abs(eigs) < tol
    if np.any(close):
        raise StabilityAmbiguityError(
            f"eigenvalue {eigs[close][0]:.3g} inside the symmetry tolerance band"
        )
    return bool(np.all(eigs.real < 0)), eigs


def leading_eigenvalue(state: BandState, params: ModelParams) -> complex:
    return complex(reduced_spectrum(state, params)[0])


def bifurcation_point(gamma: float, n: int = 40, bracket=(0.95, 1.05)) -> float:
    """Beta at which the trivial state of the discrete scheme loses stability."""
    base = trivial_state(math.pi / 2, n)

    def lead(ratio):
        params = ModelParams.relative(gamma, ratio)
        return leading_eigenvalue(base, params).real

    ratio = brentq(lead, *bracket, xtol=1e-13)
    return ratio * ModelParams.relative(gamma, 1.0).beta


# -- continuation -----------------------------------------------------------


@dataclass(frozen=True)
class ContinuationConfig:
    step: float = 1e-3
    min_step: float = 1e-7
    max_step: float = 5e-3
    grow: float = 1.3
    fast_iterations: int = 4
    max_points: int = 400
    max_state_jump: float = 0.25
    tol: float = DEFAULT_TOL
    with_stability: bool = True


def _pack(w: TravelingWave) -> np.ndarray:
    return np.concatenate([w.state.to_vector(), w.velocity, [w.beta]])


def _wave_from(x, gamma, n, params, cfg, norm):
    state = BandState.from_vector(x[: 3 * n])
    wave = TravelingWave(state, x[3 * n : 3 * n + 2].copy(), float(x[-1]), residual_norm=norm, gamma=gamma)
    if cfg.with_stability:
        try:
            stable, eigs = stability(wave, params)
        except StabilityAmbiguityError:
            eigs = reduced_spectrum(state, params)
            stable = bool(np.all(eigs.real < 0))
        wave = replace(wave, stable=stable, eigenvalues=eigs)
    return wave


def continue_branch(
    start: TravelingWave,
    beta_range: tuple[float, float],
    params: ModelParams,
    config: ContinuationConfig = ContinuationConfig(),
    *,
    direction: int | None = None,
) -> Branch:
    """Trace the traveling-wave branch through ``start`` while beta stays in range.

    Natural-parameter steps in beta are tried first; their size is halved on
    failure and grown on fast convergence. Once the step collapses below
    ``config.min_step`` (a fold), the run switches to pseudo-arclength steps
    for the rest of the branch. ``direction`` sets the initial sign of the
    beta step; by default it points toward the farther end of the range.
    """
    gamma = params.gamma
    n = start.state.n
    lo, hi = beta_range
    if direction is None:
        direction = 1 if hi - start.beta >= start.beta - lo else -1
    colored = BandedJacobian(n)
    phi_mean = float(start.state.phi.mean())
    points = [start]
    folds: list[float] = []
    step = direction * config.step
    reason = "max points reached"
    arclength = False
    ds = None
    tangent = None

    def natural_try(prev, prev2, beta):
        p = ModelParams(beta, gamma)
        x_prev = _pack(prev)[:-1]
        guess = x_prev
        if prev2 is not None:
            # secant predictor in beta
            slope = (x_prev - _pack(prev2)[:-1]) / (prev.beta - prev2.beta)
            guess = x_prev + slope * (beta - prev.beta)
        x, norm, its = _gauss_newton(
            lambda v: _system(v, p, phi_mean, n),
            lambda v: _system_jacobian(v, p, n, colored),
            guess,
            tol=config.tol,
            max_iter=12,
        )
        return np.append(x, beta), norm, its

    def arc_try(x_prev, tan, ds_):
        pred = x_prev + ds_ * tan

        def fun(v):
            p = ModelParams(v[-1], gamma)
            r = _system(v[:-1], p, phi_mean, n)
            return np.append(r, tan @ (v - x_prev) - ds_)

        def jac(v):
            p = ModelParams(v[-1], gamma)
            J = _system_jacobian(v[:-1], p, n, colored)
            h = 1e-7 * max(1.0, abs(v[-1]))
            dfb = (_system(v[:-1], ModelParams(v[-1] + h, gamma), phi_mean, n)
                   - _system(v[:-1], ModelParams(v[-1] - h, gamma), phi_mean, n)) / (2 * h)
            top = np.column_stack([J, dfb])
            return np.vstack([top, tan])

        x, norm, its = _gauss_newton(fun, jac, pred, tol=config.tol, max_iter=12)
        return x, norm, its

    while len(points) < config.max_points:
        prev = points[-1]
        x_prev = _pack(prev)
        if not arclength:
            beta = prev.beta + step
            if beta < lo or beta > hi:
                reason = "left beta range"
                break
            try:
                x, norm, its = natural_try(prev, points[-2] if len(points) > 1 else None, beta)
                if np.abs(x[: 3 * n] - x_prev[: 3 * n]).max() > config.max_state_jump:
                    raise ConvergenceError("state jump exceeds continuation bound")
            except (ConvergenceError, DensityError, DomainError):
                step *= 0.5
                if abs(step) < config.min_step:
                    if len(points) < 2:
                        reason = "step underflow"
                        break
                    arclength = True
                    tangent = x_prev - _pack(points[-2])
                    ds = float(np.linalg.norm(tangent))
                    tangent /= ds
                continue
            points.append(_wave_from(x, gamma, n, ModelParams(beta, gamma), config, norm))
            if its <= config.fast_iterations:
                step = math.copysign(min(abs(step) * config.grow, config.max_step), step)
        else:
            try:
                x, norm, its = arc_try(x_prev, tangent, ds)
                if np.abs(x[: 3 * n] - x_prev[: 3 * n]).max() > config.max_state_jump:
                    raise ConvergenceError("state jump exceeds continuation bound")
            except (ConvergenceError, DensityError, DomainError) as exc:
                ds *= 0.5
                if ds < 1e-9:
                    reason = "density positivity failure" if isinstance(exc, DensityError) else "step underflow"
                    break
                continue
            if x[-1] < lo or x[-1] > hi:
                reason = "left beta range"
                break
            new_tan = x - x_prev
            new_tan /= np.linalg.norm(new_tan)
            if new_tan[-1] * tangent[-1] < 0:
                folds.append(_fold_beta(points, x))
            tangent = new_tan
            points.append(_wave_from(x, gamma, n, ModelParams(x[-1], gamma), config, norm))
            if its <= config.fast_iterations:
                ds = min(ds * config.grow, 0.5)
    return Branch(points=points, fold_locations=folds, termination_reason=reason)


def _fold_beta(points, x_new):
    # extremum of the parabola through the last three beta values
    b0 = points[-2].beta if len(points) > 1 else points[-1].beta
    b1, b2 = points[-1].beta, float(x_new[-1])
    curv = b0 - 2 * b1 + b2
    if curv == 0:
        return b1
    return float(b1 - (b2 - b0) ** 2 / (8 * curv))


def follow_branch(
    start: TravelingWave,
    betas: Sequence[float],
    params: ModelParams,
    config: ContinuationConfig = ContinuationConfig(),
) -> Branch:
    """Natural continuation through a prescribed sequence of beta values.

    Each solve is seeded by secant extrapolation from the two previous points.
    Stops at the first failure and records why.
    """
    gamma = params.gamma
    n = start.state.n
    colored = BandedJacobian(n)
    phi_mean = float(start.state.phi.mean())
    points = [start]
    reason = "completed"
    for beta in betas:
        prev = points[-1]
        guess = _pack(prev)[:-1]
        if len(points) > 1:
            prev2 = points[-2]
            guess = guess + (guess - _pack(prev2)[:-1]) * (beta - prev.beta) / (prev.beta - prev2.beta)
        p = ModelParams(beta, gamma)
        try:
            x, norm, _ = _gauss_newton(
                lambda v: _system(v, p, phi_mean, n),
                lambda v: _system_jacobian(v, p, n, colored),
                guess,
                tol=config.tol,
                max_iter=30,
            )
        except (ConvergenceError, DensityError) as exc:
            reason = f"failed at beta={beta:.8g}: {exc}"
            break
        points.append(_wave_from(np.append(x, beta), gamma, n, p, config, norm))
    return Branch(points=points, fold_locations=[], termination_reason=reason)
