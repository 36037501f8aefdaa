"""Command-line entry point: ``mppi-nav {run,batch,sweep,plot,validate}``.

Exit codes: 0 success, 1 configuration error, 2 collision, 3 timeout,
4 numerically unstable.  ``batch`` returns the highest code among its trials;
``sweep`` reports failures as data and exits 0 unless the config is invalid.
"""

import argparse
from dataclasses import replace
import logging
import os
import sys
import time

from . import _accel, config as cfgmod, world
from .sim import (COLLISION, SUCCESS, TIMEOUT, TUNING_CASES, UNSTABLE, INDICATORS,
                  fov_mask, read_log_csv, run_trial, summarize, write_json, write_log_csv)

EXIT_CODES = {SUCCESS: 0, COLLISION: 2, TIMEOUT: 3, UNSTABLE: 4}
EXIT_CONFIG = 1

log = logging.getLogger("mppi_nav")


def _load(args):
    cfg = cfgmod.load(args.config) if args.config else cfgmod.loads("")
    return cfgmod.override(cfg, scenario=args.scenario, obs=args.obs, seed=args.seed,
                           trials=getattr(args, "trials", None))


def _apply_workers(cfg):
    if cfg.run.workers > 0:
        n = _accel.set_workers(cfg.run.workers)
        log.info("rollout workers: %d (%s backend)", n, _accel.BACKEND)


def _fov_size(cfg, grid):
    """Horizontal FoV footprint in meters for the top-down figure."""
    if cfg.scenario.obs != "poc":
        return None
    mask = fov_mask(cfg.scenario, grid)
    return (mask.fx * grid.cell_size, mask.fy * grid.cell_size)


def _write_trial(res, cfg, out, plots):
    os.makedirs(out, exist_ok=True)
    log_path = os.path.join(out, "log.csv")
    write_log_csv(res.log, log_path)
    write_json(res.metrics, os.path.join(out, "metrics.json"))
    world.save(res.truth_map, os.path.join(out, "truth_map.txt"))
    world.save(res.local_map, os.path.join(out, "local_map.txt"))
    cfgmod.save(cfg, os.path.join(out, "config.ini"))
    if plots:
        # draw from the saved log so `plot` on this directory reproduces the files
        _plot(read_log_csv(log_path), res.truth_map, res.local_map, cfg, out)


def _plot(trial_log, truth, local, cfg, out):
    from .plots import emit_plots  # matplotlib is only needed here

    goals = cfg.scenario.goals
    for p in emit_plots(trial_log, truth, local, out, goals=goals, fov=_fov_size(cfg, truth)):
        log.info("wrote %s", p)


def _fmt_metrics(m):
    return (f"{m['termination']:9s} N_col={m['N_col']} t_comp={m['t_comp']:5.1f}% "
            f"t_av={m['t_av']:6.1f}s d_av={m['d_av']:6.1f}m v_av={m['v_av']:.2f}m/s "
            f"E_av={m['E_av']:.2f}Wh t_mppi={m['t_mppi_mean']:.1f}ms")


def _trial(cfg, seed):
    t0 = time.perf_counter()
    res = run_trial(cfg.scenario, cfg.mppi, cfg.cost, cfg.vehicle, seed=seed)
    log.info("seed %d: %s (%.0f s wall)", seed, _fmt_metrics(res.metrics), time.perf_counter() - t0)
    return res


def cmd_run(args):
    cfg = _load(args)
    _apply_workers(cfg)
    res = _trial(cfg, cfg.scenario.seed)
    _write_trial(res, cfg, args.out, args.plots)
    print(_fmt_metrics(res.metrics))
    return EXIT_CODES[res.termination]


def cmd_batch(args):
    cfg = _load(args)
    _apply_workers(cfg)
    rows = []
    code = 0
    for i in range(cfg.run.trials):
        seed = cfg.scenario.seed + i
        res = _trial(cfg, seed)
        _write_trial(res, cfg, os.path.join(args.out, f"trial_{seed}"), args.plots)
        rows.append(res.metrics)
        code = max(code, EXIT_CODES[res.termination])
        print(f"seed {seed}: {_fmt_metrics(res.metrics)}")
    summary = summarize(rows)
    summary["scenario"] = cfg.scenario.kind
    summary["obs"] = cfg.scenario.obs
    write_json({"summary": summary, "trials": rows}, os.path.join(args.out, "summary.json"))
    print(_summary_line(f"{cfg.scenario.kind}/{cfg.scenario.obs}", summary))
    return code


def _summary_line(label, summary):
    parts = [f"{k}={summary[k]['mean']:.3g}+-{summary[k]['std']:.2g}" for k in INDICATORS]
    return f"{label}: {summary['successes']}/{summary['trials']} ok  " + " ".join(parts)


def cmd_sweep(args):
    cfg = _load(args)
    _apply_workers(cfg)
    cases = sorted(TUNING_CASES) if not args.cases else [int(c) for c in args.cases.split(",")]
    unknown = [c for c in cases if c not in TUNING_CASES]
    if unknown:
        raise cfgmod.ConfigError([f"unknown tuning case(s): {unknown}"])
    trials = 3 if args.trials is None else args.trials
    if trials < 1:
        raise cfgmod.ConfigError([f"trials must be >= 1 (got {trials})"])
    scen = replace(cfg.scenario, goals=cfg.scenario.goals[:1])
    report = {}
    for case in cases:
        horizon, nu = TUNING_CASES[case]
        case_cfg = replace(cfg, scenario=scen, mppi=replace(cfg.mppi, T=horizon, nu=nu))
        rows = []
        for i in range(trials):
            seed = scen.seed + i
            res = _trial(case_cfg, seed)
            rows.append(res.metrics)
        summary = summarize(rows)
        summary["T"] = horizon
        summary["nu"] = nu
        report[str(case)] = {"summary": summary, "trials": rows}
        print(_summary_line(f"case {case} (T={horizon}, nu={nu:g})", summary))
    os.makedirs(args.out, exist_ok=True)
    write_json(report, os.path.join(args.out, "sweep.json"))
    return 0


def cmd_plot(args):
    run_dir = args.run_dir
    cfg = cfgmod.load(os.path.join(run_dir, "config.ini"), environ={})
    trial_log = read_log_csv(os.path.join(run_dir, "log.csv"))
    truth = world.load(os.path.join(run_dir, "truth_map.txt"))
    local = world.load(os.path.join(run_dir, "local_map.txt"))
    _plot(trial_log, truth, local, cfg, args.out or run_dir)
    return 0


def cmd_validate(args):
    cfg = _load(args)
    sys.stdout.write(cfgmod.dumps(cfg))
    return 0


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not a collision (2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI file (default: reference settings)")
    common.add_argument("--scenario", choices=("2d", "3d"), help="obstacle world")
    common.add_argument("--obs", choices=("foc", "poc"), help="full or partial map observability")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="mppi-nav", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="fly one trial")
    p.add_argument("--out", default="run_out")
    p.add_argument("--plots", action="store_true", help="also write SVG figures")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", parents=[common], help="fly seeded trials and summarize")
    p.add_argument("--out", default="batch_out")
    p.add_argument("--trials", type=int)
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("sweep", parents=[common], help="horizon / exploration tuning cases")
    p.add_argument("--out", default="sweep_out")
    p.add_argument("--trials", type=int, help="trials per case (default 3)")
    p.add_argument("--cases", help="comma-separated case ids (default: all)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="redraw the figures of a run directory")
    p.add_argument("run_dir")
    p.add_argument("--out", help="output directory (default: run_dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("validate", parents=[common], help="check a config and print it resolved")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
