"""Command-line interface.

Subcommands: ``cases`` (dump a published scenario), ``plan``, ``simulate``,
``track`` (plan + simulate + metrics), ``metrics``, ``identify``.  Exit
codes: 0 success, 1 usage error, 2 planner infeasibility, 3 closed-loop
divergence.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import io as kvio
from .control import ControllerGains
from .dynamics import FwavParams, VerticalLog, VerticalParams
from .errors import FlapkitError, PlanInfeasibleError
from .identify import identify_drag_from_log
from .metrics import compute_metrics
from .planning import case_library, plan as run_planner
from .simulate import run_closed_loop
from .trajectory import PiecewiseTrajectory

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_DIVERGED = 3

CASE_NAMES = ("a", "b", "c", "line")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="flapkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_cases = sub.add_parser("cases", help="dump a published case scenario")
    p_cases.add_argument("name", choices=CASE_NAMES)
    p_cases.add_argument("--out", help="write the scenario file here")

    p_plan = sub.add_parser("plan", help="plan a trajectory from a scenario")
    p_plan.add_argument("--scenario", required=True,
                        help="scenario file path or a case name")
    p_plan.add_argument("--out", required=True, help="coefficient CSV output")
    p_plan.add_argument("--sampled", help="optional sampled-trajectory CSV")
    p_plan.add_argument("--restarts", type=int)
    p_plan.add_argument("--seed", type=int)

    p_sim = sub.add_parser("simulate", help="closed-loop tracking of a trajectory")
    p_sim.add_argument("--traj", required=True, help="coefficient CSV to track")
    _sim_args(p_sim)

    p_track = sub.add_parser("track", help="plan a case and track it")
    p_track.add_argument("--case", required=True, choices=CASE_NAMES)
    p_track.add_argument("--out-dir", required=True)
    p_track.add_argument("--restarts", type=int)
    _sim_args(p_track)

    p_met = sub.add_parser("metrics", help="tracking metrics from logs")
    p_met.add_argument("--state", required=True, help="state-log CSV")
    p_met.add_argument("--traj", required=True, help="coefficient CSV")
    p_met.add_argument("--case", default="run")
    p_met.add_argument("--out")

    p_id = sub.add_parser("identify", help="drag identification from a log")
    p_id.add_argument("--state", required=True, help="vertical state-log CSV")
    p_id.add_argument("--params", help="vertical parameter file")
    return parser


def _sim_args(p) -> None:
    p.add_argument("--model", choices=("vertical", "full"), default="vertical")
    p.add_argument("--params", help="parameter file (model-matching)")
    p.add_argument("--gains", help="controller gain file")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--rate", type=float, default=100.0)
    p.add_argument("--duration", type=float)
    p.add_argument("--perturb", default="0,0,0",
                   help="initial position offset 'x,y,z' or scalar x-offset")
    p.add_argument("--seed", type=int, default=0)
    if p.prog.endswith("simulate"):
        p.add_argument("--out-state", required=True)
        p.add_argument("--out-control", required=True)


def _parse_perturb(text: str) -> np.ndarray:
    parts = [float(x) for x in text.split(",")]
    if len(parts) == 1:
        return np.array([parts[0], 0.0, 0.0])
    if len(parts) != 3:
        raise _UsageError("--perturb wants one or three comma-separated numbers")
    return np.array(parts)


def _load_scenario(source: str):
    if source in CASE_NAMES and not os.path.exists(source):
        return case_library(source), source
    data = kvio.load_kv(source)
    name = str(data.get("name", "custom"))
    if name in CASE_NAMES and len(data) == 1:
        return case_library(name), name
    return kvio.scenario_from_dict(data), name


def _simulation_pieces(args):
    vparams = (
        kvio.vertical_params_from_dict(kvio.load_kv(args.params))
        if args.params and args.model == "vertical" else VerticalParams()
    )
    fparams = (
        kvio.fwav_params_from_dict(kvio.load_kv(args.params))
        if args.params and args.model == "full" else FwavParams()
    )
    gains = (
        kvio.gains_from_dict(kvio.load_kv(args.gains))
        if args.gains else ControllerGains()
    )
    return vparams, fparams, gains


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _dispatch(args)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except PlanInfeasibleError as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FlapkitError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


def _dispatch(args) -> int:
    if args.command == "cases":
        (cons, opts, weights), name = _load_scenario(args.name)
        text = kvio.format_kv(
            kvio.scenario_to_pairs(cons, opts, weights, name),
            comment=f"published demonstration case {name}",
        )
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            print(text, end="")
        return EXIT_OK

    if args.command == "plan":
        (cons, opts, weights), _ = _load_scenario(args.scenario)
        if args.restarts is not None:
            opts.restarts = args.restarts
        if args.seed is not None:
            opts.seed = args.seed
        traj, report = run_planner(cons, weights, opts)
        traj.to_coeff_csv(args.out)
        if args.sampled:
            traj.to_sampled_csv(args.sampled)
        print(report.summary())
        return EXIT_OK

    if args.command == "simulate":
        traj = PiecewiseTrajectory.from_coeff_csv(args.traj)
        vparams, fparams, gains = _simulation_pieces(args)
        result = run_closed_loop(
            traj, model=args.model, vparams=vparams, fparams=fparams, gains=gains,
            dt=args.dt, rate_hz=args.rate, duration=args.duration,
            perturb_pos=_parse_perturb(args.perturb),
        )
        result.state_log.to_csv(args.out_state)
        result.control_to_csv(args.out_control)
        if result.diverged:
            print(f"diverged at t={result.abort_time:.3f} s", file=sys.stderr)
            return EXIT_DIVERGED
        return EXIT_OK

    if args.command == "track":
        (cons, opts, weights), name = _load_scenario(args.case)
        if args.restarts is not None:
            opts.restarts = args.restarts
        opts.seed = args.seed
        traj, report = run_planner(cons, weights, opts)
        os.makedirs(args.out_dir, exist_ok=True)
        traj.to_coeff_csv(os.path.join(args.out_dir, "traj.csv"))
        vparams, fparams, gains = _simulation_pieces(args)
        result = run_closed_loop(
            traj, model=args.model, vparams=vparams, fparams=fparams, gains=gains,
            dt=args.dt, rate_hz=args.rate, duration=args.duration,
            perturb_pos=_parse_perturb(args.perturb),
        )
        result.state_log.to_csv(os.path.join(args.out_dir, "state.csv"))
        result.control_to_csv(os.path.join(args.out_dir, "control.csv"))
        if result.diverged:
            print(f"diverged at t={result.abort_time:.3f} s", file=sys.stderr)
            return EXIT_DIVERGED
        positions = (
            result.state_log.positions
            if isinstance(result.state_log, VerticalLog)
            else result.state_log.states[:, 0:3]
        )
        metrics = compute_metrics(positions, result.state_log.t, traj, case=name)
        metrics.to_csv(os.path.join(args.out_dir, "metrics.csv"))
        summary = "\n".join([
            report.summary(), metrics.summary(),
            f"hysteresis jump episodes {result.jump_episodes()}",
            f"heading-rate cap saturations {len(result.ff_sat_times)}",
        ])
        with open(os.path.join(args.out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
            fh.write(summary + "\n")
        print(metrics.summary())
        return EXIT_OK

    if args.command == "metrics":
        traj = PiecewiseTrajectory.from_coeff_csv(args.traj)
        log = kvio.load_state_log(args.state)
        positions = (
            log.positions if isinstance(log, VerticalLog) else log.states[:, 0:3]
        )
        metrics = compute_metrics(positions, log.t, traj, case=args.case)
        if args.out:
            metrics.to_csv(args.out)
        print(metrics.summary())
        return EXIT_OK

    if args.command == "identify":
        log = kvio.load_state_log(args.state)
        if not isinstance(log, VerticalLog):
            raise _UsageError("identification expects a vertical-model log")
        params = (
            kvio.vertical_params_from_dict(kvio.load_kv(args.params))
            if args.params else VerticalParams()
        )
        est = identify_drag_from_log(log, params)
        print(
            f"k_d/m = {est.k_d_over_m:.6f} 1/m "
            f"(residual {est.residual_norm:.3e}, {est.sample_count} samples)"
        )
        return EXIT_OK

    raise _UsageError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
