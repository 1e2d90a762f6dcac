"""Command-line interface.

Subcommands: simulate (exact data-driven simulation from a data CSV),
design (input design from a config JSON), experiment (Monte-Carlo grid),
fit (compare two trajectory CSVs). Exit codes: 0 success, 2 input
contract violation, 3 solver failure. DDSIM_SEED overrides config seeds.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import design as design_mod
from . import harness
from .errors import DdsimError, InputContractError
from .exact import SimulationTask, simulate_dd
from .lti import Trajectory
from .sigmat import MatrixKind

EXIT_INPUT = 2
EXIT_SOLVER = 3


def _read_trajectory_csv(path: str) -> Trajectory:
    with open(path, encoding="utf-8") as fh:
        return Trajectory.from_csv(fh.read())


def _read_data_csv(path: str):
    """Data CSV with header t,u0,...,y0,...; returns (u_d, y_d)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    header = lines[0].split(",")
    u_cols = [i for i, name in enumerate(header) if name.startswith("u")]
    y_cols = [i for i, name in enumerate(header) if name.startswith("y")]
    if header[0] != "t" or not u_cols or not y_cols:
        raise InputContractError("data CSV needs header t,u0,...,y0,...")
    rows = [ln.split(",") for ln in lines[1:]]
    u = np.asarray([[float(r[i]) for i in u_cols] for r in rows])
    y = np.asarray([[float(r[i]) for i in y_cols] for r in rows])
    return Trajectory(u), Trajectory(y)


def _read_task_json(path: str) -> SimulationTask:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        return SimulationTask(
            u_ini=Trajectory.from_values(doc["u_ini"], doc.get("n_u", 1)),
            y_ini=Trajectory.from_values(doc["y_ini"], doc.get("n_y", 1)),
            u_s=Trajectory.from_values(doc["u_s"], doc.get("n_u", 1)),
        )
    except KeyError as exc:
        raise InputContractError(f"task JSON missing field {exc}") from exc


def _seed_override(seed: int) -> int:
    env = os.environ.get("DDSIM_SEED")
    return int(env) if env is not None else seed


def _cmd_simulate(args) -> int:
    u_d, y_d = _read_data_csv(args.data)
    task = _read_task_json(args.task)
    sol = simulate_dd(u_d, y_d, task, MatrixKind(args.kind))
    text = sol.y_s_hat.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"residual: {sol.residual:.3e}", file=sys.stderr)
    return 0


def _cmd_design(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        doc = json.load(fh)
    task = SimulationTask(
        u_ini=Trajectory.from_values(doc["u_ini"]),
        y_ini=Trajectory.from_values(doc["y_ini"]),
        u_s=Trajectory.from_values(doc["u_s"]),
    )
    baseline = design_mod.BaselineModel(np.asarray(doc["baseline_h"], dtype=float))
    problem = design_mod.DesignProblem(
        task=task, baseline=baseline, sigma2=float(doc["sigma2"]),
        N=int(doc["N"]), kind=MatrixKind(doc.get("kind", "hankel")),
        E0=float(doc["E0"]),
    )
    seed = _seed_override(int(doc.get("seed", 0)))
    result = design_mod.solve_design(
        problem, multistart=int(doc.get("multistart", 5)), seed=seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(result.u_d_opt.to_csv())
    meta_path = os.path.splitext(args.out)[0] + ".json"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(result.to_json_dict(), fh, indent=2)
    print(f"objective: {result.objective:.6e}  energy: {result.energy_used:.4f}  "
          f"kkt residual: {result.kkt_residual:.3e}", file=sys.stderr)
    return 0


def _cmd_experiment(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        config = harness.ExperimentConfig.from_json(fh.read())
    config = replace(config, seed=_seed_override(config.seed))
    reports = harness.run_experiment(config, out_dir=args.out)
    for rep in reports:
        print(f"N={rep.N} sigma2={rep.sigma2} {rep.kind}: "
              f"mean W = {rep.mean:.2f}, median = {rep.median:.2f}")
    return 0


def _cmd_fit(args) -> int:
    y_true = _read_trajectory_csv(args.true)
    y_hat = _read_trajectory_csv(args.est)
    print(f"{harness.fit_metric(y_true, y_hat)!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddsim", description="Data-driven LTI simulation and input design")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="exact data-driven simulation")
    p_sim.add_argument("--model", help="model JSON (unused, kept for provenance)")
    p_sim.add_argument("--data", required=True, help="data CSV (t,u0,...,y0,...)")
    p_sim.add_argument("--task", required=True, help="task JSON")
    p_sim.add_argument("--kind", choices=["hankel", "page"], default="hankel")
    p_sim.add_argument("--out", help="output CSV (default stdout)")
    p_sim.set_defaults(func=_cmd_simulate)

    p_des = sub.add_parser("design", help="input design")
    p_des.add_argument("--config", required=True)
    p_des.add_argument("--out", required=True, help="designed input CSV")
    p_des.set_defaults(func=_cmd_design)

    p_exp = sub.add_parser("experiment", help="Monte-Carlo experiment grid")
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--out", required=True, help="output directory")
    p_exp.set_defaults(func=_cmd_experiment)

    p_fit = sub.add_parser("fit", help="fit metric between two trajectory CSVs")
    p_fit.add_argument("--true", required=True)
    p_fit.add_argument("--est", required=True)
    p_fit.set_defaults(func=_cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DdsimError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
