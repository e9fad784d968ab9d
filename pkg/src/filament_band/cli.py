"""Simulate the filament band model, trace its traveling waves and analyze its linearization.

Every subcommand accepts ``--config FILE`` with flat ``key = value`` lines
whose keys are the long flag names (``gamma``, ``t-final``, ...). Flags given
on the command line override the file.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from .experiments import (
    SCENARIO_IDS,
    ScenarioConfig,
    classify_motion,
    make_ic,
    regime_boundaries,
    run_scenario,
    sweep_uniform,
    write_sweep_csv,
)
from .integrate import Trajectory
from .model import (
    BandState,
    DomainError,
    ModelParams,
    beta0,
    bifurcating_branch_prediction,
    branch_amplitude,
    normal_form_coeffs,
    trivial_state,
)

_RATIO = re.compile(r"^x([0-9.eE+-]+)b0$")

# flag -> (type, default); None defaults are resolved per subcommand
COMMON = {
    "gamma": (float, None),
    "beta": (str, None),
    "n": (int, 40),
    "t-final": (float, None),
    "scenario": (str, None),
    "ic": (str, None),
    "k": (float, None),
    "out": (str, None),
    "seed-file": (str, None),
}


def parse_beta(text: str, gamma: float) -> float:
    """Literal value or a multiple of the bifurcation point written ``x1.01b0``."""
    m = _RATIO.match(text.strip())
    if m:
        return float(m.group(1)) * beta0(gamma)
    return float(text)


def read_config(path) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.lstrip("-")] = value
    return values


def read_state_csv(path, row: int = -1) -> BandState:
    """Band state from a trajectory CSV (default: its last row)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    if header[0] != "t":
        raise ValueError("seed file must use the trajectory CSV layout")
    return BandState.from_vector(np.array([float(v) for v in data[row][1:]]))


def read_trajectory_csv(path) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trajectory(data[:, 0], data[:, 1:])


HELP = {
    "gamma": "tension parameter in (0, 1)",
    "beta": "aspect parameter, literal or a multiple of the bifurcation point such as x1.01b0",
    "n": "number of cells (default 40)",
    "t-final": "end time of the run",
    "scenario": "named scenario: " + ", ".join(SCENARIO_IDS),
    "ic": "initial condition: bump or cosine",
    "k": "wavenumber factor of the cosine initial condition",
    "out": "output directory (simulate) or CSV path (sweep, branch)",
    "seed-file": "trajectory CSV whose last row is used as the initial or seed state",
    "beta-min": "lower end of the beta range",
    "beta-max": "upper end of the beta range",
    "beta-step": "beta spacing for uniform sampling",
    "sampling": "uniform (long runs) or continuation (steady branch)",
    "workers": "processes for uniform sweeps",
    "sign": "branch side, +1 or -1",
    "input": "trajectory CSV to classify",
    "window-start": "start of the classification window",
    "window-end": "end of the classification window",
}


def _add_common(p: argparse.ArgumentParser, extra: dict | None = None):
    p.add_argument("--config", help="flat key = value file; flags override it")
    for name, (typ, _) in {**COMMON, **(extra or {})}.items():
        p.add_argument(f"--{name}", type=typ, default=None, help=HELP.get(name))


def _merge(args, extra: dict | None = None) -> dict:
    flags = {**COMMON, **(extra or {})}
    file_values = read_config(args.config) if args.config else {}
    unknown = set(file_values) - set(flags)
    if unknown:
        raise SystemExit(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = {}
    for name, (typ, default) in flags.items():
        value = getattr(args, name.replace("-", "_"))
        if value is None and name in file_values:
            value = typ(file_values[name])
        merged[name] = default if value is None else value
    return merged


def _params(opts, default_gamma=0.75, default_beta="x1.01b0") -> ModelParams:
    gamma = opts["gamma"] if opts["gamma"] is not None else default_gamma
    beta = parse_beta(opts["beta"] or default_beta, gamma)
    return ModelParams(beta, gamma)


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o))


# -- subcommands ------------------------------------------------------------


def cmd_simulate(opts):
    scenario = opts["scenario"] or "custom"
    overrides = {"n": opts["n"], "out_dir": opts["out"]}
    if opts["t-final"] is not None:
        tf = opts["t-final"]
        overrides.update(t_final=tf, window=(max(0.0, tf - 100.0), tf) if tf > 100 else (0.0, tf))
    if scenario == "custom":
        gamma = opts["gamma"] if opts["gamma"] is not None else 0.75
        beta = parse_beta(opts["beta"] or "x1.01b0", gamma)
        cfg = ScenarioConfig(
            scenario="custom", gamma=gamma, beta=beta, ic=opts["ic"] or "bump", k=opts["k"], **overrides
        )
    else:
        if opts["gamma"] is not None:
            overrides["gamma"] = opts["gamma"]
        if opts["beta"] is not None:
            overrides["beta"] = parse_beta(opts["beta"], overrides.get("gamma", ScenarioConfig.named(scenario).gamma))
        if opts["ic"] is not None:
            overrides["ic"] = opts["ic"]
        if opts["k"] is not None:
            overrides["k"] = opts["k"]
        cfg = ScenarioConfig.named(scenario, **overrides)
    summary = run_scenario(cfg)
    _emit(summary)
    return 0 if summary["status"] == "ok" else 1


SWEEP_EXTRA = {
    "beta-min": (float, None),
    "beta-max": (float, None),
    "beta-step": (float, None),
    "sampling": (str, "uniform"),
    "workers": (int, 1),
}


def cmd_sweep(opts):
    gamma = opts["gamma"] if opts["gamma"] is not None else 0.25
    if opts["beta-min"] is None or opts["beta-max"] is None or opts["beta-step"] is None:
        raise SystemExit("sweep needs --beta-min, --beta-max and --beta-step")
    betas = np.arange(opts["beta-min"], opts["beta-max"] + 0.5 * opts["beta-step"], opts["beta-step"])
    if opts["sampling"] == "continuation":
        return cmd_branch(dict(opts, gamma=gamma))
    if opts["sampling"] != "uniform":
        raise SystemExit(f"unknown sampling {opts['sampling']!r}")
    n = opts["n"]
    ic = read_state_csv(opts["seed-file"]) if opts["seed-file"] else make_ic(opts["ic"] or "cosine", n, opts["k"] if opts["k"] is not None else 1.135)
    t_final = opts["t-final"] or 1000.0
    rows = sweep_uniform(betas, gamma, ic, t_final=t_final, window=(max(0.0, t_final - 100.0), t_final), workers=opts["workers"])
    if opts["out"]:
        write_sweep_csv(rows, opts["out"])
    _emit({"rows": [r.__dict__ for r in rows], "boundaries": regime_boundaries(rows)})
    return 0


BRANCH_EXTRA = {**SWEEP_EXTRA, "sign": (int, 1)}
BRANCH_EXTRA.pop("workers")


def cmd_branch(opts):
    from .steady import continue_branch, newton_solve

    params = _params(opts, default_beta="x0.99b0")
    n = opts["n"]
    if opts["seed-file"]:
        seed = read_state_csv(opts["seed-file"])
    else:
        try:
            seed, _ = bifurcating_branch_prediction(params, opts.get("sign") or 1, n)
        except DomainError:
            seed = trivial_state(math.pi / 2, n)
    wave = newton_solve((seed, None), params)
    lo = opts.get("beta-min") or 0.5 * params.beta
    hi = opts.get("beta-max") or 1.5 * params.beta
    branch = continue_branch(wave, (lo, hi), params)
    if opts["out"]:
        branch.to_csv(opts["out"])
    _emit(
        {
            "points": len(branch.points),
            "folds": branch.fold_locations,
            "termination": branch.termination_reason,
            "beta_range": [float(branch.betas.min()), float(branch.betas.max())],
        }
    )
    return 0


def cmd_linearize(opts):
    from .linear import adjoint_null, assemble_linearized, discrete_beta0, spectrum

    params = _params(opts)
    n = opts["n"]
    rep = spectrum(assemble_linearized(params, n))
    out = {
        "beta": params.beta,
        "gamma": params.gamma,
        "n": n,
        "beta0": beta0(params.gamma),
        "discrete_beta0": discrete_beta0(params.gamma, n),
        "leading_growth_rate": rep.leading_nontrivial.real,
        "leading_nontrivial": rep.leading_nontrivial,
        "rotation_eigenvalue": rep.eigenvalues[rep.rotation_index],
        "eigenvalues_top": rep.eigenvalues[:6],
    }
    try:
        adj = adjoint_null(params)
        out["adjoint_kappa"] = adj.kappa
        out["adjoint_integral"] = adj.integral()
    except ValueError as exc:
        out["adjoint"] = str(exc)
    _emit(out)
    return 0


def cmd_normalform(opts):
    params = _params(opts)
    nf = normal_form_coeffs(params)
    out = {
        "gamma": params.gamma,
        "beta": params.beta,
        "beta0": beta0(params.gamma),
        "kappa1": nf.kappa1,
        "kappa2": nf.kappa2,
        "sigma": nf.sigma,
        "epsilon": nf.epsilon,
        "supercritical": nf.supercritical,
    }
    try:
        out["amplitude"] = nf.epsilon * branch_amplitude(params)
    except ValueError:
        out["amplitude"] = None
    _emit(out)
    return 0


CLASSIFY_EXTRA = {"input": (str, None), "window-start": (float, None), "window-end": (float, None)}


def cmd_classify(opts):
    path = opts["input"] or opts["seed-file"]
    if not path:
        raise SystemExit("classify needs --input (a trajectory CSV)")
    params = _params(opts, default_gamma=0.25)
    traj = read_trajectory_csv(path)
    t_a = opts["window-start"] if opts["window-start"] is not None else traj.times[0]
    t_b = opts["window-end"] if opts["window-end"] is not None else traj.times[-1]
    motion = classify_motion(traj.window(t_a, t_b), params)
    _emit(motion.to_dict())
    return 0


COMMANDS = {
    "simulate": (cmd_simulate, None, "run a scenario and write trajectory, snapshots and summary"),
    "sweep": (cmd_sweep, SWEEP_EXTRA, "long-run speed statistics over a range of beta"),
    "branch": (cmd_branch, BRANCH_EXTRA, "continue a traveling-wave branch in beta"),
    "linearize": (cmd_linearize, None, "spectrum of the linearized system"),
    "normalform": (cmd_normalform, None, "pitchfork normal-form coefficients"),
    "classify": (cmd_classify, CLASSIFY_EXTRA, "classify the motion in a trajectory CSV"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="filament-band", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, extra, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        _add_common(p, extra)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn, extra, _ = COMMANDS[args.command]
    opts = _merge(args, extra)
    if opts["scenario"] is not None and opts["scenario"] not in SCENARIO_IDS:
        raise SystemExit(f"unknown scenario {opts['scenario']!r}; choose from {', '.join(SCENARIO_IDS)}")
    return fn(opts)


if __name__ == "__main__":
    sys.exit(main())
