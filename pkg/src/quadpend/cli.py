"""Command-line interface: ``quadpend run | list | check``.

Exit status is 0 on success, 1 for invalid input (or a failed ``check``) and
2 when the integration produced non-finite values.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import ConfigError, RunSetup, from_preset, load_config
from .integrator import NonFiniteState, simulate
from .io import summarize, write_summary, write_trajectory
from .lyapunov import monitor
from .plots import render_plots
from .presets import TABLE

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NONFINITE = 2


def _setup(args) -> RunSetup:
    setup = load_config(args.config) if args.config else from_preset(args.experiment)
    kw = {}
    if args.dt is not None:
        kw["dt"] = args.dt
    if args.t_end is not None:
        kw["t_end"] = args.t_end
    return setup.with_integrator(**kw) if kw else setup


def _suffixed(path: str | None, tag: str) -> str | None:
    if path is None:
        return None
    root, ext = os.path.splitext(path)
    return f"{root}_{tag}{ext}"


def _run_one(setup: RunSetup, out, plots, tag):
    traj = simulate(setup.initial, setup.gains, setup.params, setup.cfg, setup.law)
    if out:
        write_trajectory(traj, out)
    if plots:
        render_plots(traj, plots, prefix=tag)
    return summarize(traj, setup.experiment)


def _run_preset(job):
    pid, dt, t_end, out, plots = job
    setup = from_preset(pid)
    kw = {k: v for k, v in (("dt", dt), ("t_end", t_end)) if v is not None}
    if kw:
        setup = setup.with_integrator(**kw)
    return _run_one(setup, out, plots, f"exp{pid}")


def _print_summary(s):
    print(
        f"experiment {s.experiment}: e3.y={s.final_e3_dot_y:.6f} e3.z={s.final_e3_dot_z:.6f} "
        f"V0={s.V0:.6g} V_end={s.V_end:.6g} max dV+={s.max_positive_dV:.6g} "
        f"drift y={s.max_drift_y:.2e} R={s.max_drift_R:.2e} wall={s.wall_time:.2f}s"
    )


def cmd_run(args) -> int:
    if args.all:
        jobs = [(pid, args.dt, args.t_end, _suffixed(args.out, f"exp{pid}"), args.plots) for pid in sorted(TABLE)]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                summaries = list(pool.map(_run_preset, jobs))
        else:
            summaries = [_run_preset(j) for j in jobs]
    else:
        setup = _setup(args)
        tag = f"exp{setup.experiment}" if not args.config else os.path.splitext(os.path.basename(args.config))[0]
        summaries = [_run_one(setup, args.out, args.plots, tag)]
    for s in summaries:
        _print_summary(s)
    if args.summary:
        write_summary(summaries[0] if len(summaries) == 1 else summaries, args.summary)
    return EXIT_OK


def cmd_list(args) -> int:
    print(f"{'id':>2}  {'y0':<34} {'ydot0':<26} {'k_d':>4} {'k1':>5} {'k2':>5}")
    for pid, (y0, yd0, K) in sorted(TABLE.items()):
        ys = "(" + ", ".join(f"{v:g}" for v in y0) + ")"
        yds = "(" + ", ".join(f"{v:g}" for v in yd0) + ")"
        print(f"{pid:>2}  {ys:<34} {yds:<26} {K[0]:>4g} {K[1]:>5g} {K[2]:>5g}")
    return EXIT_OK


def invariant_checks(traj) -> list[tuple[str, bool | None, str]]:
    """``(name, passed, detail)`` rows; ``passed is None`` marks information only."""
    rep = monitor(traj)
    rows = [
        ("finite state", bool(np.all(np.isfinite(traj.y)) and np.all(np.isfinite(traj.R))), ""),
        ("|y| drift < 1e-9", float(np.max(traj.drift_y)) < 1e-9, f"{np.max(traj.drift_y):.2e}"),
        ("R orthogonality drift < 1e-8", float(np.max(traj.drift_R)) < 1e-8, f"{np.max(traj.drift_R):.2e}"),
        ("moment extraction residual < 1e-6", float(np.max(traj.moment_residual)) < 1e-6,
         f"{np.max(traj.moment_residual):.2e}"),
        ("V1, V2 >= 0", bool(np.all(traj.V1 >= -1e-12) and np.all(traj.V2 >= -1e-12)), ""),
        ("V(end) < 1e-2 V(0)", rep.V_end < 1e-2 * rep.V0 or rep.V0 == 0.0, f"{rep.V_end:.3e} vs {rep.V0:.3e}"),
        ("e3.y(end) > 0.95", float(traj.e3_dot_y[-1]) > 0.95, f"{traj.e3_dot_y[-1]:.6f}"),
        ("e3.z(end) > 0.95", float(traj.e3_dot_z[-1]) > 0.95, f"{traj.e3_dot_z[-1]:.6f}"),
        ("max positive dV/dt", None, f"{rep.max_positive_dV:.3e} at t={rep.t_max_positive_dV:.3f}"),
        ("rotor thrust reversal", None, f"{int(np.sum(traj.rotor_reversal))} ticks"),
    ]
    return rows


def cmd_check(args) -> int:
    setup = _setup(args)
    traj = simulate(setup.initial, setup.gains, setup.params, setup.cfg, setup.law)
    ok = True
    for name, passed, detail in invariant_checks(traj):
        mark = "INFO" if passed is None else ("PASS" if passed else "FAIL")
        ok = ok and passed is not False
        print(f"[{mark}] {name}" + (f": {detail}" if detail else ""))
    return EXIT_OK if ok else EXIT_INVALID


class _Parser(argparse.ArgumentParser):
    # usage errors are invalid input; status 2 is reserved for non-finite runs
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quadpend", description="Quadrotor inverted-pendulum swing-up simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log preset corrections and progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def source(p, required=True):
        g = p.add_mutually_exclusive_group(required=required)
        g.add_argument("--experiment", type=int, choices=sorted(TABLE), help="preset number")
        g.add_argument("--config", help="TOML configuration file")
        p.add_argument("--dt", type=float, help="step size [s]")
        p.add_argument("--t-end", type=float, dest="t_end", help="final time [s]")

    run = sub.add_parser("run", help="simulate and write CSV, plots and summary")
    source(run, required=False)
    run.add_argument("--all", action="store_true", help="run all five presets")
    run.add_argument("--jobs", type=int, default=1, help="parallel processes for --all")
    run.add_argument("--out", help="trajectory CSV path (suffixed per experiment with --all)")
    run.add_argument("--plots", help="directory for SVG figures")
    run.add_argument("--summary", help="summary JSON path")
    run.set_defaults(func=cmd_run)

    lst = sub.add_parser("list", help="print the five presets")
    lst.set_defaults(func=cmd_list)

    chk = sub.add_parser("check", help="run the invariant suite without writing files")
    source(chk)
    chk.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run" and not args.all and args.experiment is None and args.config is None:
        parser.error("run needs --experiment, --config or --all")
    if args.command == "run" and args.all and (args.experiment is not None or args.config):
        parser.error("--all cannot be combined with --experiment or --config")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NonFiniteState as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
