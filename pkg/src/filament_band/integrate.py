"""Adaptive stiff time integration of the semi-discrete band equations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import BDF

from .discretization import BandedJacobian, rhs_vector
from .model import BandState, DensityError, ModelParams


class IntegrationError(RuntimeError):
    """The integrator could not reach the final time; ``t`` is where it stopped."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t = {t:.6g})")
        self.t = t


class BlowUpError(IntegrationError):
    """Filament ordering was lost during the run."""


@dataclass(frozen=True)
class IntegratorConfig:
    t_span: tuple[float, float]
    sample_times: Sequence[float] | None = None
    abs_tol: float = 1e-6
    rel_tol: float = 1e-6
    max_step: float | None = None

    def __post_init__(self):
        if not (0 < self.abs_tol <= 1e-3 and 0 < self.rel_tol <= 1e-3):
            raise ValueError("tolerances must lie in (0, 1e-3]")
        t0, tf = self.t_span
        if not tf > t0:
            raise ValueError("t_span must be increasing")
        if self.sample_times is not None:
            ts = np.asarray(self.sample_times, dtype=float)
            if ts.size and (np.any(np.diff(ts) <= 0) or ts[0] < t0 or ts[-1] > tf):
                raise ValueError("sample_times must be strictly increasing inside t_span")

    def samples(self) -> np.ndarray:
        if self.sample_times is None:
            return np.array([self.t_span[1]])
        return np.asarray(self.sample_times, dtype=float)


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray  # one flat state vector per row
    step_stats: dict = field(default_factory=dict)

    @property
    def states(self) -> list[BandState]:
        return [BandState.from_vector(y) for y in self.values]

    def state(self, k: int = -1) -> BandState:
        return BandState.from_vector(self.values[k])

    @property
    def n(self) -> int:
        return self.values.shape[1] // 3

    def window(self, t_a: float, t_b: float = np.inf) -> Trajectory:
        mask = (self.times >= t_a) & (self.times <= t_b)
        return Trajectory(self.times[mask], self.values[mask], dict(self.step_stats))


def integrate_ode(
    fun: Callable[[np.ndarray], np.ndarray],
    y0,
    config: IntegratorConfig,
    *,
    jac=None,
    jac_sparsity=None,
    is_valid: Callable[[np.ndarray], bool] | None = None,
):
    """Integrate ``y' = fun(y)`` with variable-order BDF and error control.

    Returns ``(times, values, stats)`` at ``config.samples()``. Sampling uses
    the solver's dense output, so it does not influence the step sequence.
    """
    t0, tf = config.t_span
    ts = config.samples()
    solver = BDF(
        lambda t, y: fun(y),
        t0,
        np.asarray(y0, dtype=float),
        tf,
        rtol=config.rel_tol,
        atol=config.abs_tol,
        max_step=np.inf if config.max_step is None else config.max_step,
        jac=jac,
        jac_sparsity=jac_sparsity,
    )
    out = np.empty((ts.size, solver.n))
    k = 0
    while k < ts.size and ts[k] <= t0:
        out[k] = y0
        k += 1
    accepted = 0
    while solver.status == "running":
        t_old = solver.t
        message = solver.step()
        if solver.status == "failed":
            if is_valid is not None and not is_valid(solver.y):
                raise BlowUpError("density positivity lost", t_old)
            raise IntegrationError(message or "step failed", t_old)
        accepted += 1
        if not np.all(np.isfinite(solver.y)):
            raise BlowUpError("non-finite state", solver.t)
        if k < ts.size and ts[k] <= solver.t:
            dense = solver.dense_output()
            while k < ts.size and ts[k] <= solver.t:
                out[k] = dense(ts[k])
                k += 1
    stats = {"accepted_steps": accepted, "nfev": solver.nfev, "njev": solver.njev, "nlu": solver.nlu}
    return ts.copy(), out, stats


def _valid(params):
    def check(y):
        try:
            rhs_vector(y, params, strict=True)
        except DensityError:
            return False
        return True

    return check


def _band_jacobian(params, n):
    colored = BandedJacobian(n)
    fun = lambda y: rhs_vector(y, params, strict=False)
    return lambda t, y: colored(fun, y)


def integrate(state0: BandState, params: ModelParams, config: IntegratorConfig) -> Trajectory:
    """Method-of-lines solution of the band equations from ``state0``.

    The Jacobian is formed by finite differences over the banded sparsity
    pattern of the scheme. Raises BlowUpError with the failure time when the
    filament ordering breaks down.
    """
    rhs_vector(state0.to_vector(), params, strict=True)
    times, values, stats = integrate_ode(
        lambda y: rhs_vector(y, params, strict=False),
        state0.to_vector(),
        config,
        jac=_band_jacobian(params, state0.n),
        is_valid=_valid(params),
    )
    return Trajectory(times, values, stats)
