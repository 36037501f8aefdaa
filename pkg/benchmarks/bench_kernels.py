"""Benchmark the rollout kernels: numba vs the pure-numpy fallback.

Times one full controller iteration (sample noise, cost all rollouts, update,
smooth) in the 2D forest for several rollout counts, then the numba path
again for 1..N workers.  The numpy numbers come from a child interpreter
started with MPPI_NAV_NO_NUMBA=1, since the backend is fixed at import.

    python benchmarks/bench_kernels.py [--K 256 1024 2700] [--repeat 20] [--json out.json]
"""

import argparse
import json
import os
import statistics
import subprocess
import sys
import time

import numpy as np


def time_control_step(K, T, repeat, workers=None):
    from mppi_nav import _accel
    from mppi_nav.cost import CostParams, GoalSpec
    from mppi_nav.dynamics import VehicleParams, hover_control, make_state
    from mppi_nav.mppi import CostModel, MppiConfig, control_step
    from mppi_nav.sim import ScenarioConfig, build_scenario

    if workers is not None:
        _accel.set_workers(workers)
    vehicle = VehicleParams()
    cfg = MppiConfig(K=K, T=T, sigma=(2.5, 5e-5, 5e-5, 5e-5))
    grid, goals = build_scenario(ScenarioConfig())
    cm = CostModel(GoalSpec(goals[0].position, 0.8), CostParams(inflation=0.5, clearance_weight=1e5))
    x0 = make_state((4.0, 4.0, 1.5), (0, 0, 0.8), (0.8, 0.8, 0.0))
    U = np.tile(hover_control(vehicle), (T, 1))
    control_step(x0, grid, cm, U, cfg, vehicle, seed=0)  # compile / warm caches
    times = []
    for i in range(repeat):
        t0 = time.perf_counter()
        control_step(x0, grid, cm, U, cfg, vehicle, seed=i + 1)
        times.append(1e3 * (time.perf_counter() - t0))
    return {"backend": _accel.BACKEND, "K": K, "T": T, "workers": _accel.get_workers(),
            "median_ms": statistics.median(times), "min_ms": min(times)}


def _child(args):
    env = dict(os.environ, MPPI_NAV_NO_NUMBA="1")
    cmd = [sys.executable, __file__, "--child", "--T", str(args.T), "--repeat", str(args.repeat),
           "--K", *map(str, args.K)]
    out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--K", type=int, nargs="+", default=[256, 1024, 2700])
    p.add_argument("--T", type=int, default=150)
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--max-workers", type=int, default=4)
    p.add_argument("--json", help="also write the results here")
    p.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args(argv)

    if args.child:
        print(json.dumps([time_control_step(k, args.T, args.repeat) for k in args.K]))
        return 0

    rows = [time_control_step(k, args.T, args.repeat) for k in args.K]
    if rows[0]["backend"] != "numba":
        print("numba is not active in this interpreter; only the numpy path is timed")
    else:
        rows += _child(args)
    print(f"{'backend':8s} {'K':>6s} {'T':>4s} {'workers':>7s} {'median ms':>10s} {'min ms':>8s}")
    for r in rows:
        print(f"{r['backend']:8s} {r['K']:6d} {r['T']:4d} {r['workers']:7d} {r['median_ms']:10.2f} {r['min_ms']:8.2f}")

    scaling = []
    if rows[0]["backend"] == "numba":
        import numba

        top = min(args.max_workers, numba.config.NUMBA_NUM_THREADS)
        k = max(args.K)
        for w in range(1, top + 1):
            scaling.append(time_control_step(k, args.T, args.repeat, workers=w))
        base = scaling[0]["median_ms"]
        print(f"\nworker scaling at K={k} (host reports {os.cpu_count()} CPU(s)):")
        for r in scaling:
            speedup = base / r["median_ms"]
            print(f"  {r['workers']} worker(s): {r['median_ms']:8.2f} ms  speedup {speedup:.2f}"
                  f"  efficiency {speedup / r['workers']:.0%}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"rows": rows, "scaling": scaling, "cpus": os.cpu_count()}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
