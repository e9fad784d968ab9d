"""Scenario library, long-run motion classification and beta sweeps."""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .discretization import rhs_vector
from .integrate import IntegrationError, IntegratorConfig, Trajectory, integrate
from .model import (
    BandState,
    DomainError,
    ModelParams,
    beta0,
    branch_amplitude,
    cell_centers,
    mode_amplitude,
    normal_form_coeffs,
)
from .steady import ConvergenceError, StabilityAmbiguityError, newton_solve

SNAPSHOT_TIMES = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0)


# -- initial conditions -----------------------------------------------------


def bump(alpha):
    """Smooth bump supported on (1/7, 6/7) with peak value 1 at alpha = 1/2."""
    alpha = np.asarray(alpha, dtype=float)
    out = np.zeros_like(alpha)
    inside = (alpha > 1 / 7) & (alpha < 6 / 7)
    a = alpha[inside]
    out[inside] = np.exp(-1.0 / ((a - 1 / 7) * (6 / 7 - a)) + 196 / 25)
    return out


def ic_bump(n: int = 40) -> BandState:
    """Trivial state at angle pi/2 with a localized bump in position and angle."""
    if n < 4:
        raise ValueError("at least 4 cells are required")
    alpha = cell_centers(n)
    h = bump(alpha)
    z = np.column_stack([alpha + 0.1 * h, 0.1 * h])
    return BandState(z, np.pi / 2 + 0.01 * h)


def ic_cosine(k: float, n: int = 40) -> BandState:
    """Vertical displacement ``-cos(k pi alpha)`` of the horizontal band."""
    alpha = cell_centers(n)
    z = np.column_stack([alpha, -np.cos(k * np.pi * alpha)])
    return BandState(z, np.full(n, np.pi / 2))


def make_ic(name: str, n: int, k: float | None = None) -> BandState:
    if name == "bump":
        return ic_bump(n)
    if name == "cosine":
        if k is None:
            raise ValueError("the cosine initial condition needs k")
        return ic_cosine(k, n)
    raise ValueError(f"unknown initial condition {name!r}")


# -- motion classification --------------------------------------------------


@dataclass(frozen=True)
class MotionThresholds:
    stationary_speed: float = 1e-4
    traveling_spread: float = 0.05
    traveling_drift_deg: float = 1.0
    spinning_com_range: float = 0.1
    periodic_peak: float = 0.9
    whirl_radius_ratio: float = 1.0
    whirl_fit_tol: float = 0.05
    min_periods: int = 3


@dataclass
class MotionClass:
    label: str  # Stationary | Traveling | Spinning | Whirling | Chaotic
    mean_speed: float
    speed_spread: float
    rotation_rate: float
    period: float | None
    sense: str | None = None
    velocity: tuple[float, float] | None = None
    heading: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


_COMPASS = ["east", "northeast", "north", "northwest", "west", "southwest", "south", "southeast"]


def compass(v) -> str:
    angle = math.degrees(math.atan2(v[1], v[0])) % 360
    return _COMPASS[int(((angle + 22.5) % 360) // 45)]


def _period(signal, dt):
    """Lag and height of the first autocorrelation peak after the first zero crossing."""
    s = signal - signal.mean()
    m = s.size
    if m < 8 or not np.any(s):
        return None, 0.0
    fourier = np.fft.rfft(s, 2 * m)
    ac = np.fft.irfft(fourier * np.conj(fourier))[:m]
    ac /= np.arange(m, 0, -1)  # unbiased
    ac /= ac[0]
    half = ac[: m // 2]
    neg = np.flatnonzero(half < 0)
    if not neg.size:
        return None, 0.0
    start = neg[0]
    rest = half[start:]
    peaks = np.flatnonzero((rest[1:-1] >= rest[:-2]) & (rest[1:-1] >= rest[2:])) + 1
    if not peaks.size:
        return None, 0.0
    best = peaks[np.argmax(rest[peaks])]
    first = peaks[0]
    # prefer the first peak when it is essentially as high as the best one
    k = first if rest[first] >= rest[best] - 0.05 else best
    return (start + k) * dt, float(rest[k])


def _fit_circle(points):
    A = np.column_stack([2 * points, np.ones(len(points))])
    rhs = (points**2).sum(axis=1)
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    center = sol[:2]
    r2 = sol[2] + center @ center
    if r2 <= 0:
        return center, 0.0, np.inf
    radius = math.sqrt(r2)
    misfit = np.abs(np.hypot(*(points - center).T) - radius).max() / radius
    return center, radius, float(misfit)


def window_diagnostics(traj: Trajectory, params: ModelParams) -> dict:
    """Per-node velocities and shape statistics over the sampled window."""
    n = traj.n
    F = np.array([rhs_vector(y, params, strict=True) for y in traj.values])
    vel = F[:, : 2 * n].reshape(-1, n, 2)
    speed = np.hypot(vel[..., 0], vel[..., 1])
    z = traj.values[:, : 2 * n].reshape(-1, n, 2)
    com = z.mean(axis=1)
    spin = F[:, 2 * n :].mean(axis=1)
    return {"velocity": vel, "speed": speed, "com": com, "z": z, "spin": spin}


def classify_motion(
    traj: Trajectory,
    params: ModelParams,
    thresholds: MotionThresholds = MotionThresholds(),
) -> MotionClass:
    """Assign one motion class to a sampled window of a trajectory.

    Samples must be uniformly spaced. Rotation sense is taken from the mean
    angular velocity of the filaments.
    """
    th = thresholds
    times = traj.times
    if times.size < 16:
        raise ValueError("window needs at least 16 samples")
    dt = float(np.median(np.diff(times)))
    d = window_diagnostics(traj, params)
    speed, vel, com, spin = d["speed"], d["velocity"], d["com"], d["spin"]
    mean_speed = float(speed.mean())
    spread = float((speed.max() - speed.min()) / mean_speed) if mean_speed > 0 else 0.0
    rate = float(spin.mean())
    mean_vel = vel.mean(axis=1)
    diag = {
        "max_speed": float(speed.max()),
        "min_speed": float(speed.min()),
        "spin_min": float(spin.min()),
        "spin_max": float(spin.max()),
    }

    def result(label, period=None, sense=None, velocity=None, heading=None):
        return MotionClass(label, mean_speed, spread, rate, period, sense, velocity, heading, diag)

    if speed.max() < th.stationary_speed:
        return result("Stationary")

    heading = np.unwrap(np.arctan2(mean_vel[:, 1], mean_vel[:, 0]))
    drift = math.degrees(float(np.ptp(heading)))
    diag["direction_drift_deg"] = drift
    if spread < th.traveling_spread and drift < th.traveling_drift_deg:
        v = mean_vel.mean(axis=0)
        return result("Traveling", velocity=(float(v[0]), float(v[1])), heading=compass(v))

    sense = None
    if spin.min() > 0:
        sense = "counterclockwise"
    elif spin.max() < 0:
        sense = "clockwise"
    diag["sign_changing_rotation"] = sense is None

    rel_end = d["z"][:, 0, :] - com
    period, peak = _period(rel_end[:, 1], dt)
    diag["autocorrelation_peak"] = peak
    periodic = period is not None and peak > th.periodic_peak
    if period is not None:
        periods = (times[-1] - times[0]) / period
        diag["periods_in_window"] = periods
        if periods < th.min_periods:
            warnings.warn(f"window covers only {periods:.1f} oscillation periods", RuntimeWarning)

    com_range = float(np.ptp(com, axis=0).max())
    diag["com_range"] = com_range
    if com_range < th.spinning_com_range and periodic and sense is not None:
        return result("Spinning", period=period, sense=sense)

    center, radius, misfit = _fit_circle(com)
    size = float(np.hypot(*(d["z"] - com[:, None, :]).transpose(2, 0, 1)).max(axis=1).mean())
    angle = np.unwrap(np.arctan2(com[:, 1] - center[1], com[:, 0] - center[0]))
    orbit_rate = np.diff(angle) / np.diff(times)
    diag.update(
        circle_radius=radius,
        circle_misfit=misfit,
        band_size=size,
        orbit_rate_min=float(orbit_rate.min()),
        orbit_rate_max=float(orbit_rate.max()),
    )
    arc = (
        misfit < th.whirl_fit_tol
        and radius / size > th.whirl_radius_ratio
        and (orbit_rate.min() > 0 or orbit_rate.max() < 0)
    )
    if arc and periodic and sense is not None:
        return result("Whirling", period=period, sense=sense)
    return result("Chaotic", sense=sense)


# -- settling ---------------------------------------------------------------


def crossing_time(times, signal, fraction: float = 0.99) -> float:
    """First time ``|signal - signal[0]|`` reaches ``fraction`` of its final value.

    Linear interpolation between samples.
    """
    disp = np.asarray(signal, dtype=float) - signal[0]
    target = fraction * abs(disp[-1])
    idx = np.flatnonzero(np.abs(disp) >= target)
    if not idx.size:
        return float(times[-1])
    i = int(idx[0])
    if i == 0:
        return float(times[0])
    a, b = abs(disp[i - 1]), abs(disp[i])
    return float(times[i - 1] + (target - a) / (b - a) * (times[i] - times[i - 1]))


def settling_time(
    state0: BandState,
    params: ModelParams,
    *,
    horizon: float = 200.0,
    dt: float = 0.25,
    fraction: float = 0.99,
    max_horizon: float = 1e4,
):
    """Time to reach ``fraction`` of the terminal vertical center-of-mass shift.

    The terminal value is read at ten times the measured settling time; the
    horizon is extended until that holds. Returns ``(time, trajectory)``.
    """
    while True:
        ts = np.arange(0.0, horizon + dt / 2, dt)
        traj = integrate(state0, params, IntegratorConfig((0.0, ts[-1]), sample_times=ts))
        com_y = traj.values[:, 1 : 2 * traj.n : 2].mean(axis=1)
        t_settle = crossing_time(ts, com_y, fraction)
        if 10 * t_settle <= horizon or horizon >= max_horizon:
            k = min(int(round(10 * t_settle / dt)), ts.size - 1)
            return crossing_time(ts[: k + 1], com_y[: k + 1], fraction), traj
        horizon = min(max_horizon, 10 * t_settle * 1.05)


# -- scenarios --------------------------------------------------------------

_NAMED = {
    "example-1-1": dict(gamma=0.75, beta_ratio=1.01, ic="bump", k=None),
    "example-1-2": dict(gamma=0.75, beta_ratio=0.99, ic="bump", k=None),
    "example-1-3": dict(gamma=0.25, beta_ratio=0.99, ic="bump", k=None),
    "example-2a": dict(gamma=0.25, beta_ratio=1.01, ic="cosine", k=1.134),
    "example-2b": dict(gamma=0.25, beta_ratio=1.01, ic="cosine", k=1.135),
}
SCENARIO_IDS = tuple(_NAMED) + ("custom",)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "custom"
    gamma: float = 0.75
    beta: float | None = None
    beta_ratio: float | None = None
    n: int = 40
    t_final: float = 1000.0
    sample_dt: float = 1.0
    window: tuple[float, float] = (900.0, 1000.0)
    window_dt: float = 0.1
    ic: str = "bump"
    k: float | None = None
    snapshot_times: tuple[float, ...] = SNAPSHOT_TIMES
    out_dir: str | None = None
    abs_tol: float = 1e-6
    rel_tol: float = 1e-6

    def __post_init__(self):
        if self.scenario not in SCENARIO_IDS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if (self.beta is None) == (self.beta_ratio is None):
            raise ValueError("give exactly one of beta and beta_ratio")
        if not 0 <= self.window[0] < self.window[1] <= self.t_final:
            raise ValueError("classification window must lie inside [0, t_final]")
        self.params  # validates beta and gamma

    @classmethod
    def named(cls, scenario: str, **overrides) -> ScenarioConfig:
        if scenario not in _NAMED:
            raise ValueError(f"unknown scenario {scenario!r}")
        base = dict(_NAMED[scenario], scenario=scenario)
        base.update(overrides)
        if overrides.get("beta") is not None:
            base["beta_ratio"] = None
        return cls(**base)

    @property
    def params(self) -> ModelParams:
        if self.beta is not None:
            return ModelParams(self.beta, self.gamma)
        return ModelParams.relative(self.gamma, self.beta_ratio)

    def sample_times(self) -> np.ndarray:
        coarse = np.arange(0.0, self.window[0], self.sample_dt)
        steps = int(round((self.window[1] - self.window[0]) / self.window_dt))
        fine = self.window[0] + self.window_dt * np.arange(steps + 1)
        extra = [t for t in self.snapshot_times if t <= self.t_final]
        tail = [self.t_final] if self.t_final > fine[-1] else []
        return np.unique(np.concatenate([coarse, fine, extra, tail]))

    def initial_state(self) -> BandState:
        return make_ic(self.ic, self.n, self.k)


def simulate(config: ScenarioConfig) -> Trajectory:
    ts = config.sample_times()
    icfg = IntegratorConfig(
        (0.0, config.t_final), sample_times=ts, abs_tol=config.abs_tol, rel_tol=config.rel_tol, max_step=1.0
    )
    return integrate(config.initial_state(), config.params, icfg)


def steady_check(state: BandState, params: ModelParams, observed_velocity) -> dict:
    """Refine a terminal traveling state with the Newton solver and compare velocities."""
    try:
        wave = newton_solve((state, observed_velocity), params, with_stability=False)
    except (ConvergenceError, DomainError) as exc:
        return {"status": f"failed: {exc}"}
    v_obs = np.asarray(observed_velocity)
    rel = float(np.hypot(*(wave.velocity - v_obs)) / max(np.hypot(*v_obs), 1e-300))
    return {
        "status": "ok",
        "residual": wave.residual_norm,
        "velocity": [float(v) for v in wave.velocity],
        "relative_velocity_gap": rel,
    }


def summarize(config: ScenarioConfig, traj: Trajectory) -> dict:
    params = config.params
    window = traj.window(*config.window)
    motion = classify_motion(window, params)
    terminal = traj.state(-1)
    summary = {
        "scenario": config.scenario,
        "params": {"beta": params.beta, "gamma": params.gamma, "beta0": beta0(params.gamma), "n": config.n},
        "ic": {"kind": config.ic, "k": config.k},
        "status": "ok",
        "terminal_class": motion.label,
        "motion": motion.to_dict(),
        "terminal_velocity": list(motion.velocity) if motion.velocity else None,
        "mode_amplitude": mode_amplitude(terminal, params.gamma),
        "step_stats": traj.step_stats,
    }
    try:
        summary["predicted_amplitude"] = normal_form_coeffs(params).epsilon * branch_amplitude(params)
    except DomainError:
        summary["predicted_amplitude"] = None
    if config.t_final >= 10:
        com_y = traj.values[:, 1 : 2 * traj.n : 2].mean(axis=1)
        summary["settling_time_99"] = crossing_time(traj.times, com_y)
    if motion.label == "Traveling":
        summary["steady_check"] = steady_check(terminal, params, motion.velocity)
    elif motion.label == "Stationary":
        summary["steady_check"] = {"max_rhs": float(np.abs(rhs_vector(terminal.to_vector(), params)).max())}
    return summary


def trajectory_header(n: int) -> list[str]:
    cols = ["t"]
    for i in range(1, n + 1):
        cols += [f"z{i}x", f"z{i}y"]
    return cols + [f"phi{i}" for i in range(1, n + 1)]


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trajectory_header(traj.n))
        for t, y in zip(traj.times, traj.values):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in y])


def run_scenario(config: ScenarioConfig) -> dict:
    """Simulate, classify and, when ``out_dir`` is set, write all outputs.

    Files: ``trajectory.csv``, ``snapshots.csv`` (the sample rows at the
    snapshot times), ``summary.json`` (deterministic) and ``timing.json``.
    """
    start = time.perf_counter()
    try:
        traj = simulate(config)
        summary = summarize(config, traj)
    except (IntegrationError, DomainError) as exc:
        traj = None
        summary = {
            "scenario": config.scenario,
            "params": {"beta": config.params.beta, "gamma": config.gamma, "n": config.n},
            "status": f"failed: {exc}",
            "failure_time": getattr(exc, "t", None),
        }
    wall = time.perf_counter() - start
    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if traj is not None:
            write_trajectory_csv(traj, out / "trajectory.csv")
            snaps = [t for t in config.snapshot_times if t <= config.t_final]
            idx = np.searchsorted(traj.times, snaps)
            write_trajectory_csv(Trajectory(traj.times[idx], traj.values[idx]), out / "snapshots.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        (out / "timing.json").write_text(json.dumps({"wall_time": wall}) + "\n")
    summary = dict(summary, wall_time=wall)
    return summary


# -- sweeps -----------------------------------------------------------------


@dataclass
class SweepRow:
    beta: float
    max_speed: float
    min_speed: float
    label: str
    stable: bool | None = None
    status: str = "ok"


def _sweep_one(beta, gamma, ic, t_final, ts) -> SweepRow:
    params = ModelParams(float(beta), gamma)
    cfg = IntegratorConfig((0.0, t_final), sample_times=ts, max_step=1.0)
    try:
        traj = integrate(ic, params, cfg)
        motion = classify_motion(traj, params)
    except (IntegrationError, DomainError) as exc:
        return SweepRow(float(beta), math.nan, math.nan, "failed", status=str(exc))
    return SweepRow(float(beta), motion.diagnostics["max_speed"], motion.diagnostics["min_speed"], motion.label)


def sweep_uniform(
    betas: Sequence[float],
    gamma: float,
    ic: BandState,
    *,
    t_final: float = 1000.0,
    window: tuple[float, float] = (900.0, 1000.0),
    window_dt: float = 0.1,
    workers: int = 1,
) -> list[SweepRow]:
    """Long runs per beta; per-node maximum and minimum speed over the window.

    With ``workers > 1`` the runs are spread over processes; rows come back
    in the order of ``betas`` either way.
    """
    steps = int(round((window[1] - window[0]) / window_dt))
    ts = window[0] + window_dt * np.arange(steps + 1)
    args = [(b, gamma, ic, t_final, ts) for b in betas]
    if workers <= 1:
        return [_sweep_one(*a) for a in args]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_one, *zip(*args)))


def sweep_continuation(branch) -> list[SweepRow]:
    """Diagram rows (speed |V| and stability) from a continued branch."""
    return [SweepRow(p.beta, p.speed, p.speed, "Traveling" if p.speed > 0 else "Stationary", p.stable) for p in branch.points]


def sweep_beta(betas, sampling: str, ic, gamma: float, **kwargs) -> list[SweepRow]:
    """Diagram data by direct simulation (``uniform``) or from a steady branch (``continuation``).

    For ``continuation`` the ``ic`` argument is the starting traveling wave
    and ``betas`` the beta interval.
    """
    if sampling == "uniform":
        return sweep_uniform(betas, gamma, ic, **kwargs)
    if sampling == "continuation":
        from .steady import continue_branch

        lo, hi = min(betas), max(betas)
        branch = continue_branch(ic, (lo, hi), ModelParams(ic.beta, gamma), **kwargs)
        return sweep_continuation(branch)
    raise ValueError(f"unknown sampling {sampling!r}")


def regime_boundaries(rows: Sequence[SweepRow]) -> list[dict]:
    """Midpoints between consecutive sweep samples whose labels differ."""
    ordered = sorted((r for r in rows if r.status == "ok"), key=lambda r: r.beta)
    out = []
    for a, b in zip(ordered, ordered[1:]):
        if a.label != b.label:
            out.append({"beta": 0.5 * (a.beta + b.beta), "below": a.label, "above": b.label,
                        "bracket": (a.beta, b.beta)})
    return out


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["beta", "max_speed", "min_speed", "class", "stable", "status"])
        for r in rows:
            stable = "" if r.stable is None else int(r.stable)
            w.writerow([repr(r.beta), repr(r.max_speed), repr(r.min_speed), r.label, stable, r.status])
