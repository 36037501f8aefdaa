"""Closed-loop trials: truth vehicle, obstacle forest, sensing and metrics.

A trial repeats at every control period: estimate the state, reveal the
FoV block of the truth map (partial observability only), run one controller
step, convert the command to realizable rotor speeds, and integrate the
truth model under wind.  It ends on the final landing, a crash, a timeout or
a numerically unstable state.
"""

from dataclasses import dataclass, field, replace
import csv
import json
import math

import numpy as np

from .cost import CostParams, GoalSpec, desired_yaw
from .dynamics import (STATE_DIM, VehicleParams, euler_step_into, make_state, perturb_params,
                       rk4_step_into, saturate_control)
from .mppi import Controller, MppiConfig
from .world import FovMask, OCCUPIED, lookup, new_grid, reveal_all, update_local_map

TOUR_GOALS = ((23.0, 38.0, 1.5), (40.0, 23.0, 4.0), (22.0, 0.0, 8.0), (0.0, 22.0, 5.0))

# tuning cases flown to the first goal: case id -> (horizon T, exploration nu)
TUNING_CASES = {1: (75, 1000.0), 2: (100, 1000.0), 3: (125, 1000.0),
                4: (150, 300.0), 5: (150, 500.0), 6: (150, 800.0)}

SUCCESS = "success"
COLLISION = "collision"
TIMEOUT = "timeout"
UNSTABLE = "unstable"
TERMINATIONS = (SUCCESS, COLLISION, TIMEOUT, UNSTABLE)

# independent random streams inside one trial
_STREAM_MPPI = 1
_STREAM_SENSE = 2
_STREAM_WIND = 3
_STREAM_MODEL = 4


def derive_seed(*ints):
    """64-bit seed hashed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(v) for v in ints]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class WindParams:
    theta: float = 2.0  # relaxation time [s]
    sigma: float = 0.5  # stationary std per horizontal axis [N]
    f_max: float = 1.5  # clip [N]
    vertical: float = 0.3  # scale of the vertical component

    def __post_init__(self):
        if self.theta <= 0 or self.sigma < 0 or self.f_max < 0 or self.vertical < 0:
            raise ValueError(f"wind needs theta > 0 and non-negative sigma, f_max, vertical: {self}")


@dataclass(frozen=True)
class SensorNoise:
    position: float = 0.02
    attitude: float = 0.01
    velocity: float = 0.02
    rates: float = 0.01

    def __post_init__(self):
        if min(self.position, self.attitude, self.velocity, self.rates) < 0:
            raise ValueError(f"sensor noise levels must be >= 0: {self}")

    def vector(self):
        return np.repeat([self.position, self.attitude, self.velocity, self.rates], 3)


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = "2d"
    obs: str = "foc"
    extent: tuple = (40.0, 40.0, 8.5)
    cell_size: float = 1.0
    layer_height: float = 0.2
    cylinder_radius: float = 0.16
    spacing: float = 4.0
    lattice_offset: float = 1.0  # keeps the start and every tour goal >= 1 m from a column cell
    margin: float = 2.0
    bar_heights: tuple = (3.0, 6.0)
    start: tuple = (0.0, 0.0, 0.0)
    goals: tuple = TOUR_GOALS
    land: bool = True
    goal_tol: float = 0.5
    fov: tuple = (5.0, 5.0, 3.0)
    fov_units: str = "m"
    wind: WindParams = field(default_factory=WindParams)
    sensor: SensorNoise = field(default_factory=SensorNoise)
    model_error: float = 0.1
    integrator: str = "euler"
    substeps: int = 1
    max_time: float = 300.0
    crash_speed: float = 1.0
    land_z: float = 0.15
    land_speed: float = 0.3
    land_rate: float = 0.25
    land_floor: float = -1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", str(self.kind).lower())
        object.__setattr__(self, "obs", str(self.obs).lower())
        object.__setattr__(self, "extent", tuple(float(v) for v in self.extent))
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "goals", tuple(tuple(float(c) for c in g) for g in self.goals))
        object.__setattr__(self, "fov", tuple(float(v) for v in self.fov))
        object.__setattr__(self, "bar_heights", tuple(float(v) for v in self.bar_heights))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self):
        out = []
        if self.kind not in ("2d", "3d"):
            out.append(f"kind must be 2d or 3d, got {self.kind!r}")
        if self.obs not in ("foc", "poc"):
            out.append(f"obs must be foc or poc, got {self.obs!r}")
        if len(self.extent) != 3 or min(self.extent) <= 0:
            out.append("extent must be three positive lengths")
        if self.cell_size <= 0 or self.layer_height <= 0:
            out.append("cell size and layer height must be positive")
        if self.margin < 0:
            out.append("margin must be >= 0")
        if self.spacing <= 0 or self.cylinder_radius < 0:
            out.append("spacing must be positive and radius non-negative")
        if not self.goals:
            out.append("at least one goal is required")
        for g in self.goals:
            if len(g) != 3 or not all(0.0 <= c <= e for c, e in zip(g, self.extent)):
                out.append(f"goal {g} outside the arena")
        if len(self.start) != 3:
            out.append("start must be a 3-vector")
        if len(self.fov) != 3 or min(self.fov) <= 0:
            out.append("FoV extents must be positive")
        if self.fov_units not in ("m", "cells"):
            out.append("fov_units must be 'm' or 'cells'")
        if self.goal_tol <= 0:
            out.append("goal_tol must be positive")
        if not 0 <= self.model_error < 1:
            out.append("model_error must lie in [0, 1)")
        if self.integrator not in ("euler", "rk4"):
            out.append("integrator must be euler or rk4")
        if self.substeps < 1:
            out.append("substeps must be >= 1")
        if self.max_time <= 0:
            out.append("max_time must be positive")
        if self.land_rate < 0 or self.land_floor > 0.1:
            out.append("land_rate must be >= 0 and land_floor <= 0.1")
        return out


def build_scenario(cfg):
    """Truth map and goal list for a scenario.

    The arena spans ``[0, extent]`` and is surrounded by a free apron of
    ``margin`` metres so that goals on its edges are interior points of the
    map.  Vertical cylinders stand on the lattice ``offset + spacing * i`` in x and
    y through every layer.  The 3D variant adds full-width horizontal bars:
    along x at the lattice rows for the first height, along y at the lattice
    columns for the second, alternating for further heights.
    """
    grid = arena_grid(cfg, fill=0)
    nx, ny, nz = grid.dims
    ex, ey, ez = cfg.extent
    ox, oy = grid.origin[0], grid.origin[1]
    xs = _lattice(cfg.lattice_offset, cfg.spacing, ex)
    ys = _lattice(cfg.lattice_offset, cfg.spacing, ey)
    ci = sorted({int(math.floor((x - ox) / cfg.cell_size)) for x in xs})
    cj = sorted({int(math.floor((y - oy) / cfg.cell_size)) for y in ys})
    for i in ci:
        for j in cj:
            grid.cells[i, j, :] = OCCUPIED
    if cfg.kind == "3d":
        for n, h in enumerate(cfg.bar_heights):
            lo = max(0, int(math.floor((h - cfg.cylinder_radius) / cfg.layer_height)))
            hi = min(nz - 1, int(math.floor((h + cfg.cylinder_radius) / cfg.layer_height)))
            if n % 2 == 0:
                for j in cj:
                    grid.cells[:, j, lo:hi + 1] = OCCUPIED
            else:
                for i in ci:
                    grid.cells[i, :, lo:hi + 1] = OCCUPIED
    goals = [GoalSpec(g) for g in cfg.goals]
    return grid, goals


def arena_grid(cfg, fill=0):
    """Grid covering the arena plus a free horizontal apron of ``cfg.margin``."""
    m = cfg.margin
    ex, ey, ez = cfg.extent
    return new_grid((ex + 2 * m, ey + 2 * m, ez), cfg.cell_size, cfg.layer_height,
                    fill=fill, origin=(-m, -m, 0.0))


def _lattice(offset, spacing, length):
    pts = []
    v = offset
    while v < length - 1e-9:
        if v >= 0:
            pts.append(v)
        v += spacing
    return pts


def fov_mask(cfg, grid, theta=0.0):
    if cfg.fov_units == "cells":
        return FovMask(*(int(v) for v in cfg.fov), theta=theta)
    return FovMask.from_meters(cfg.fov, grid, theta)


def wind_trace(n, dt, params, seed):
    """``(n, 3)`` wind forces: independent Ornstein-Uhlenbeck processes per axis."""
    out = np.zeros((n, 3))
    if params.sigma == 0 or n == 0:
        return out
    rng = np.random.default_rng(seed)
    a = math.exp(-dt / params.theta)
    b = params.sigma * math.sqrt(1.0 - a * a)
    xi = rng.standard_normal((n, 3))
    w = params.sigma * xi[0]
    for k in range(n):
        if k:
            w = a * w + b * xi[k]
        out[k] = w
    np.clip(out, -params.f_max, params.f_max, out=out)
    out[:, 2] *= params.vertical
    return out


def wind_force(t, params, seed, dt=0.02):
    """Wind force at time ``t`` of the trace generated with ``seed``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    k = int(round(t / dt))
    return wind_trace(k + 1, dt, params, seed)[k]


def sense_state(x, noise, seed, k):
    """Noisy estimate of ``x``; ``noise`` is a SensorNoise, ``k`` the step index."""
    std = noise.vector()
    x = np.asarray(x, dtype=np.float64)
    if not std.any():
        return x.copy()
    rng = np.random.default_rng(derive_seed(seed, _STREAM_SENSE, k))
    return x + std * rng.standard_normal(STATE_DIM)


@dataclass
class TrialResult:
    termination: str
    log: dict
    metrics: dict
    local_map: object = None
    truth_map: object = None

    @property
    def success(self):
        return self.termination == SUCCESS


LOG_FIELDS = (
    ["t"]
    + [f"x_{n}" for n in ("x", "y", "z", "phi", "theta", "psi", "vx", "vy", "vz", "p", "q", "r")]
    + [f"est_{n}" for n in ("x", "y", "z", "phi", "theta", "psi", "vx", "vy", "vz", "p", "q", "r")]
    + ["F", "tau_x", "tau_y", "tau_z", "s_min", "t_mppi_ms"]
)


def run_trial(scenario, mppi=None, cost=None, vehicle=None, seed=None, progress=None):
    """Fly one trial and return its TrialResult."""
    mppi = mppi or MppiConfig()
    cost = cost or CostParams()
    truth_params = vehicle or VehicleParams()
    seed = scenario.seed if seed is None else int(seed)
    dt = mppi.dt

    truth_map, goals = build_scenario(scenario)
    if scenario.obs == "foc":
        local = reveal_all(truth_map.copy(), truth_map)
    else:
        local = arena_grid(scenario, fill=-1)
    model = perturb_params(truth_params, scenario.model_error, derive_seed(seed, _STREAM_MODEL))
    ctl = Controller(mppi, model, cost)

    n_max = int(math.ceil(scenario.max_time / dt))
    wind = wind_trace(n_max, dt, scenario.wind, derive_seed(seed, _STREAM_WIND))
    packed = truth_params.packed()
    base_mask = fov_mask(scenario, truth_map)

    x = make_state(scenario.start)
    rows_t, rows_x, rows_est, rows_u, rows_s, rows_ms, omegas = [], [], [], [], [], [], []
    goal_idx = 0
    reached = 0
    landing = None
    yaw = 0.0
    termination = TIMEOUT
    nxt = np.empty(STATE_DIM)
    sub_dt = dt / scenario.substeps

    if _truth_collides(x, truth_map, scenario.crash_speed):
        termination = COLLISION
        n_max = 0

    for k in range(n_max):
        est = sense_state(x, scenario.sensor, seed, k)
        target = goals[goal_idx].position if landing is None else landing
        yaw = desired_yaw(est[0:3], target, yaw)
        goal = GoalSpec(target, yaw)
        if scenario.obs == "poc":
            try:
                update_local_map(local, truth_map, x[0:3], base_mask.rotated(yaw))
            except IndexError:
                pass  # outside the mapped volume: nothing to reveal
        u_cmd, diag = ctl(est, local, goal, derive_seed(seed, _STREAM_MPPI, k))
        u, omega = saturate_control(u_cmd, truth_params, mppi.omega_max)

        rows_t.append(k * dt)
        rows_x.append(x.copy())
        rows_est.append(est)
        rows_u.append(u)
        rows_s.append(diag.s_min)
        rows_ms.append(diag.t_mppi_ms)
        omegas.append(omega)

        status = None
        for _ in range(scenario.substeps):
            if scenario.integrator == "rk4":
                ok = rk4_step_into(x, u, wind[k], sub_dt, packed, nxt)
            else:
                ok = euler_step_into(x, u, wind[k], sub_dt, packed, nxt)
            if not ok or not np.all(np.isfinite(nxt)):
                status = UNSTABLE
                break
            impact = _ground_contact(nxt)
            x = nxt.copy()
            if _truth_collides(x, truth_map, scenario.crash_speed, impact):
                status = COLLISION
                break
        if status is not None:
            termination = status
            break

        if landing is None:
            if np.linalg.norm(x[0:3] - np.asarray(goals[goal_idx].position)) <= scenario.goal_tol:
                reached += 1
                goal_idx += 1
                if goal_idx == len(goals):
                    if not scenario.land:
                        termination = SUCCESS
                        break
                    landing = (float(x[0]), float(x[1]), 0.1)
                    # the pad is the ground: stop keeping clear of it
                    ctl.cost_params = replace(ctl.cost_params, ground_clearance=False)
                    goal_idx -= 1
        elif x[2] < scenario.land_z and np.linalg.norm(x[6:9]) < scenario.land_speed:
            termination = SUCCESS
            break
        elif est[2] > scenario.land_z and abs(est[8]) < 0.1:
            # hovering above the pad (e.g. thrust bias from model error):
            # walk the landing reference down until the vehicle settles
            landing = (landing[0], landing[1], max(scenario.land_floor, landing[2] - scenario.land_rate * dt))
        if progress is not None:
            progress(k, x, reached)

    rows_t.append(len(rows_t) * dt)
    rows_x.append(x.copy())
    log = {
        "t": np.array(rows_t),
        "x": np.array(rows_x).reshape(-1, STATE_DIM),
        "est": np.array(rows_est).reshape(-1, STATE_DIM),
        "u": np.array(rows_u).reshape(-1, 4),
        "s_min": np.array(rows_s),
        "t_mppi_ms": np.array(rows_ms),
        "omega": np.array(omegas).reshape(-1, 4),
        "dt": dt,
    }
    metrics = compute_metrics(log, reached, len(goals), truth_params,
                              collided=termination == COLLISION)
    metrics["termination"] = termination
    metrics["seed"] = seed
    return TrialResult(termination, log, metrics, local, truth_map)


def _ground_contact(x):
    """Resolve contact with the ground plane in place; returns the impact speed."""
    if x[2] >= 0.0:
        return 0.0
    impact = max(0.0, -x[8])
    x[2] = 0.0
    x[8] = max(x[8], 0.0)
    return impact


def _truth_collides(x, grid, crash_speed, impact=0.0):
    if impact > crash_speed:
        return True
    # leaving the mapped volume is not a crash: there are no walls
    return lookup(grid.cells, grid.origin[0], grid.origin[1], grid.origin[2], grid.cell_size,
                  grid.layer_height, x[0], x[1], x[2], 0) == OCCUPIED


def compute_metrics(log, reached=0, n_goals=1, params=None, collided=False):
    """Performance indicators from a trial log."""
    params = params or VehicleParams()
    xs = np.asarray(log["x"])
    dt = float(log.get("dt", 0.02))
    pos = xs[:, 0:3]
    steps = np.linalg.norm(np.diff(pos, axis=0), axis=1) if len(pos) > 1 else np.zeros(0)
    distance = float(steps.sum())
    flight_time = dt * len(steps)
    omega = np.asarray(log.get("omega", np.zeros((0, 4))))
    energy_j = float((params.k_moment * omega ** 3).sum() * dt)
    ms = np.asarray(log.get("t_mppi_ms", np.zeros(0)))
    return {
        "N_col": int(bool(collided)),
        "t_comp": 100.0 * reached / max(n_goals, 1),
        "t_av": flight_time,
        "d_av": distance,
        "v_av": distance / flight_time if flight_time > 0 else 0.0,
        "E_av": energy_j / 3600.0,
        "t_mppi_mean": float(ms.mean()) if ms.size else 0.0,
        "t_mppi_std": float(ms.std()) if ms.size else 0.0,
    }


def hover_energy_wh(params, seconds):
    """Rotor mechanical energy of a level hover, for reference."""
    w = params.hover_rotor_speed
    return 4.0 * params.k_moment * w ** 3 * seconds / 3600.0


INDICATORS = ("N_col", "t_comp", "t_av", "d_av", "v_av", "E_av", "t_mppi_mean")


def summarize(metric_rows):
    """Mean and population std per indicator."""
    out = {}
    for key in INDICATORS:
        vals = np.array([m[key] for m in metric_rows], dtype=np.float64)
        out[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
    out["trials"] = len(metric_rows)
    out["successes"] = sum(m["termination"] == SUCCESS for m in metric_rows)
    return out


def run_batch(scenario, n_trials, seeds=None, mppi=None, cost=None, vehicle=None, progress=None):
    """Independent trials that differ only in their seeds.

    Returns ``(results, summary)``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if seeds is None:
        seeds = [scenario.seed + i for i in range(n_trials)]
    if len(seeds) != n_trials:
        raise ValueError("need one seed per trial")
    results = []
    for s in seeds:
        res = run_trial(scenario, mppi, cost, vehicle, seed=s)
        results.append(res)
        if progress is not None:
            progress(res)
    return results, summarize([r.metrics for r in results])


def write_log_csv(log, path):
    n = len(log["u"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_FIELDS)
        for k in range(n):
            w.writerow([repr(float(log["t"][k]))]
                       + [repr(float(v)) for v in log["x"][k]]
                       + [repr(float(v)) for v in log["est"][k]]
                       + [repr(float(v)) for v in log["u"][k]]
                       + [repr(float(log["s_min"][k])), repr(float(log["t_mppi_ms"][k]))])


def read_log_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array(rows[1:], dtype=np.float64).reshape(-1, len(LOG_FIELDS))
    return {
        "t": data[:, 0],
        "x": data[:, 1:13],
        "est": data[:, 13:25],
        "u": data[:, 25:29],
        "s_min": data[:, 29],
        "t_mppi_ms": data[:, 30],
    }


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")

