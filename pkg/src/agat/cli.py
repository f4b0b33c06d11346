"""Command-line front end.

    agat run PRESET|FILE --out DIR [--dt DT] [--duration T] [--strict-ic]
                                   [--controller agat|pdff] [--seed N]
    agat compare-so3 --out DIR [--dt DT] [--duration T]
    agat export PRESET [--out FILE]
    agat list

Exit codes: 0 success, 1 bad input (nothing written), 2 controller or
integration abort (partial outputs kept).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AgatError, InfeasibleInitialCondition, UnknownPreset
from .integrator import TrajectoryLog, simulate
from .scenarios import (PRESETS, ScenarioConfig, load_config, prepare, preset,
                        random_sphere, save_config)
from .so3 import RigidBodyClosedLoop

EXIT_OK = 0
EXIT_BAD_INPUT = 1
EXIT_ABORTED = 2

BAND = 0.05
RANDOM_PREFIX = "random_"


# -- outputs -----------------------------------------------------------------------

def write_csv(log: TrajectoryLog, path: Path) -> None:
    """Header plus one row per step, 17 significant digits, newline-terminated."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(log.columns) + "\n")
        if len(log):
            np.savetxt(fh, log.data, fmt="%.17g", delimiter=",")


def tracking_error(log: TrajectoryLog) -> np.ndarray:
    """``|q - q_r|`` per row (Frobenius ``|R - R_r|`` on SO(3))."""
    if "R0" in log.columns:
        return np.linalg.norm(log.block("R") - log.block("Rr"), axis=1)
    return np.linalg.norm(log.block("q") - log.block("qr"), axis=1)


def time_to_band(t: np.ndarray, err: np.ndarray, band: float = BAND) -> float | None:
    """First time after which the error stays below ``band`` until the end of the log."""
    if len(err) == 0 or err[-1] >= band:
        return None
    outside = np.nonzero(err >= band)[0]
    return float(t[0]) if len(outside) == 0 else float(t[outside[-1] + 1])


def summarize(config: ScenarioConfig, log: TrajectoryLog, repairs: list[str]) -> dict:
    err = tracking_error(log)
    t = log.t
    summary = {
        "scenario": config.name,
        "system": config.system,
        "controller": config.controller,
        "status": log.status,
        "message": log.message,
        "steps": max(len(log) - 1, 0),
        "final_time": float(t[-1]) if len(t) else None,
        "final_tracking_error": float(err[-1]) if len(err) else None,
        "time_to_band": time_to_band(t, err),
        "band": BAND,
        "lyapunov_violations": log.lyapunov_violations,
        "max_lyapunov_increase": (log.max_lyapunov_increase if len(log) > 1 else None),
        "max_constraint_residual": float(log.column("residual").max()) if len(log) else None,
        "final_psi_e": float(log.column("psi_e")[-1]) if len(log) else None,
        "max_control_norm": float(log.column("u_norm").max()) if len(log) else None,
        "repairs_applied": repairs,
    }
    if config.system != "rigid_body" and len(log):
        q, qr = log.block("q"), log.block("qr")
        cos = np.sum(q * qr, axis=1) / (np.linalg.norm(q, axis=1) * np.linalg.norm(qr, axis=1))
        # distance of the pair to the antipodal branch of the singular set
        summary["min_antipodal_margin"] = float(np.min(1.0 + cos))
    return summary


def write_json(data: dict, path: Path) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _prefix(log: TrajectoryLog) -> tuple[str, int]:
    if "R0" in log.columns:
        return "rigid", 9
    return "embedded", sum(1 for c in log.columns if c.startswith("qr"))


def plot_script(log: TrajectoryLog, csv_name: str = "trajectory.csv") -> str:
    """gnuplot script: each coordinate against its reference, then psi(E) and E_cl."""
    kind, m = _prefix(log)
    col = {c: i + 1 for i, c in enumerate(log.columns)}
    a, b = ("R", "Rr") if kind == "rigid" else ("q", "qr")
    lines = ["set datafile separator ','", "set terminal pngcairo size 900,600",
             "set xlabel 't [s]'", "set grid"]
    for i in range(m):
        lines += [f"set output 'coord_{i}.png'",
                  f"plot '{csv_name}' using 1:{col[f'{a}{i}']} with lines title '{a}{i}', \\",
                  f"     '{csv_name}' using 1:{col[f'{b}{i}']} with lines dt 2 title '{b}{i}'"]
    lines += ["set output 'psi_e.png'",
              f"plot '{csv_name}' using 1:{col['psi_e']} with lines title 'psi(E)'",
              "set output 'e_cl.png'",
              f"plot '{csv_name}' using 1:{col['e_cl']} with lines title 'E_cl'"]
    return "\n".join(lines) + "\n"


# -- commands ------------------------------------------------------------------------

class BadInput(Exception):
    pass


def _resolve(target: str, seed: int | None) -> ScenarioConfig:
    if target.startswith(RANDOM_PREFIX):
        base = target[len(RANDOM_PREFIX):]
        try:
            return random_sphere(0 if seed is None else seed, base=base)
        except (UnknownPreset, ValueError) as exc:
            raise BadInput(str(exc)) from None
    if target in PRESETS:
        return preset(target)
    path = Path(target)
    if not path.is_file():
        raise BadInput(f"{target!r} is neither a preset nor a readable scenario file")
    try:
        return load_config(path)
    except (OSError, ValueError) as exc:
        raise BadInput(str(exc)) from None


def _configure(args: argparse.Namespace, config: ScenarioConfig) -> ScenarioConfig:
    changes = {}
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.duration is not None:
        changes["duration"] = args.duration
    if getattr(args, "strict_ic", False):
        changes["ic_repair"] = "strict"
    if getattr(args, "controller", None) is not None:
        changes["controller"] = args.controller
    config = replace(config, **changes)
    try:
        config.validate()
    except ValueError as exc:
        raise BadInput(str(exc)) from None
    return config


def _prepare(config: ScenarioConfig):
    try:
        return prepare(config)
    except (InfeasibleInitialCondition, ValueError) as exc:
        raise BadInput(str(exc)) from None
    except AgatError as exc:
        raise BadInput(f"{type(exc).__name__}: {exc}") from None


def _make_out(out: str) -> Path:
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise BadInput(f"cannot create output directory: {exc}") from None
    return path


def cmd_run(args: argparse.Namespace) -> int:
    config = _configure(args, _resolve(args.target, args.seed))
    run = _prepare(config)
    out = _make_out(args.out)
    log = simulate(run.system, run.y0, config.duration, config.dt)
    write_csv(log, out / "trajectory.csv")
    write_json(summarize(config, log, run.report.describe()), out / "summary.json")
    (out / "plot.gp").write_text(plot_script(log))
    save_config(config, out / "scenario.json")
    if log.status != "ok":
        print(f"aborted: {log.message}", file=sys.stderr)
        return EXIT_ABORTED
    return EXIT_OK


def cmd_compare_so3(args: argparse.Namespace) -> int:
    """Both laws on both initial-condition sets, plus per-set effort tables."""
    runs = []
    for label, name in (("i", "so3_compare"), ("ii", "so3_compare_ii")):
        for law in ("agat", "pdff"):
            config = _configure(args, replace(preset(name), controller=law))
            runs.append((label, law, config, _prepare(config)))
    out = _make_out(args.out)
    status = EXIT_OK
    summaries = {}
    logs: dict[tuple[str, str], TrajectoryLog] = {}
    for label, law, config, run in runs:
        assert isinstance(run.system, RigidBodyClosedLoop)
        log = simulate(run.system, run.y0, config.duration, config.dt)
        logs[label, law] = log
        write_csv(log, out / f"{law}_{label}.csv")
        summaries[f"{law}_{label}"] = summarize(config, log, run.report.describe())
        if log.status != "ok":
            status = EXIT_ABORTED
    for label in ("i", "ii"):
        a, p = logs[label, "agat"], logs[label, "pdff"]
        n = min(len(a), len(p))
        table = np.column_stack((a.t[:n], a.column("u_norm")[:n], p.column("u_norm")[:n]))
        with open(out / f"effort_{label}.csv", "w") as fh:
            fh.write("t,u_agat,u_pdff\n")
            np.savetxt(fh, table, fmt="%.17g", delimiter=",")
    write_json(summaries, out / "summary.json")
    lines = ["set datafile separator ','", "set terminal pngcairo size 900,600",
             "set xlabel 't [s]'", "set grid"]
    for label in ("i", "ii"):
        lines += [f"set output 'effort_{label}.png'",
                  f"plot 'effort_{label}.csv' using 1:2 with lines title 'AGAT', \\",
                  f"     'effort_{label}.csv' using 1:3 with lines title 'PD+FF'"]
        for entry in (0, 1):
            c = 2 + entry
            lines += [f"set output 'R{entry}_{label}.png'",
                      f"plot 'agat_{label}.csv' using 1:{c} with lines title 'AGAT R{entry}', \\",
                      f"     'pdff_{label}.csv' using 1:{c} with lines title 'PD+FF R{entry}', \\",
                      f"     'agat_{label}.csv' using 1:{c + 9} with lines dt 2 title 'reference'"]
    (out / "plot.gp").write_text("\n".join(lines) + "\n")
    return status


def cmd_export(args: argparse.Namespace) -> int:
    try:
        config = preset(args.name)
    except UnknownPreset as exc:
        raise BadInput(str(exc.args[0])) from None
    text = json.dumps(config.to_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_list(args: argparse.Namespace) -> int:
    for name in PRESETS:
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agat", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def timing(p):
        p.add_argument("--dt", type=float, default=None, help="step size [s]")
        p.add_argument("--duration", type=float, default=None, help="simulated time [s]")

    run = sub.add_parser("run", help="run a preset or scenario file")
    run.add_argument("target", help="preset name, random_<preset>, or JSON scenario path")
    run.add_argument("--out", required=True, help="output directory")
    timing(run)
    run.add_argument("--strict-ic", action="store_true",
                     help="reject initial data that violate constraints instead of repairing")
    run.add_argument("--controller", choices=("agat", "pdff"), default=None,
                     help="pdff is available for rigid_body only")
    run.add_argument("--seed", type=int, default=None,
                     help="seed for random_<preset> initial conditions")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare-so3", help="AGAT versus PD+FF on SO(3)")
    cmp_.add_argument("--out", required=True)
    timing(cmp_)
    cmp_.set_defaults(func=cmd_compare_so3)

    exp = sub.add_parser("export", help="write a preset as a scenario file")
    exp.add_argument("name")
    exp.add_argument("--out", default=None)
    exp.set_defaults(func=cmd_export)

    lst = sub.add_parser("list", help="list presets")
    lst.set_defaults(func=cmd_list)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_BAD_INPUT
    try:
        return args.func(args)
    except BadInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
