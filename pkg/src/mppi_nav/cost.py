"""Navigation cost: quadratic goal tracking plus indicator penalties.

    q(x) = (x - x_des)' Q (x - x_des) + w_col * C1(x) + w_lim * C2(x)

C1 flags ground contact (z < 0) or an occupied map cell at the vehicle
position; C2 flags over-speed, near-vertical roll/pitch, or flying above the
ceiling.  Unknown cells are treated as free.

An optional clearance band (``inflation`` > 0) probes six points at that
distance along the world axes; a state that misses the obstacles but has a
probe inside one is charged ``clearance_weight`` instead of the collision
weight.  ``ground_clearance`` adds the ground plane to the band.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from ._accel import INLINE_OPTS, JIT_OPTS, njit
from .dynamics import STATE_DIM
from ._trig import sincos
from .world import OCCUPIED, lookup

Q_SLOW = (2.5, 2.5, 5.0, 1.0, 1.0, 50.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
Q_FAST = (5.0, 5.0, 15.0, 30.0, 30.0, 50.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

TERMINAL_STATE = "state"
TERMINAL_ZERO = "zero"


def q_for_speed(v_max):
    """Tracking weights for a speed limit (the slow table applies up to 1.5 m/s)."""
    return Q_SLOW if v_max <= 1.5 else Q_FAST


@dataclass(frozen=True)
class GoalSpec:
    position: tuple
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if len(self.position) != 3 or not all(math.isfinite(v) for v in self.position + (self.yaw,)):
            raise ValueError(f"goal must be a finite 3-vector plus yaw, got {self}")

    def desired_state(self):
        xd = np.zeros(STATE_DIM)
        xd[0:3] = self.position
        xd[5] = self.yaw
        return xd


@dataclass(frozen=True)
class CostParams:
    v_max: float = 1.5
    q_diag: tuple = None  # None: pick from the speed-limit table
    collision_weight: float = 1e8
    limit_weight: float = 1e5
    cos_floor: float = 0.1
    ceiling: float = 8.5
    terminal: str = TERMINAL_STATE
    inflation: float = 0.0
    clearance_weight: float = None  # None: inflation probes cost as much as a collision
    ground_clearance: bool = False  # True: the margin also applies to the ground plane
    outside: int = OCCUPIED
    wrap_yaw: bool = True

    def __post_init__(self):
        if self.clearance_weight is None:
            object.__setattr__(self, "clearance_weight", self.collision_weight)
        if self.q_diag is None:
            object.__setattr__(self, "q_diag", q_for_speed(self.v_max))
        object.__setattr__(self, "q_diag", tuple(float(v) for v in self.q_diag))
        problems = []
        if len(self.q_diag) != STATE_DIM or min(self.q_diag) < 0:
            problems.append("q_diag must hold 12 non-negative weights")
        if self.collision_weight < 0 or self.limit_weight < 0 or self.clearance_weight < 0:
            problems.append("penalty weights must be >= 0")
        if self.v_max <= 0:
            problems.append("v_max must be > 0")
        if self.terminal not in (TERMINAL_STATE, TERMINAL_ZERO):
            problems.append(f"terminal must be '{TERMINAL_STATE}' or '{TERMINAL_ZERO}'")
        if self.inflation < 0:
            problems.append("inflation must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))

    def packed(self):
        """Scalars in the order the kernels read them."""
        return np.array(
            [self.collision_weight, self.limit_weight, self.v_max, self.cos_floor,
             self.ceiling, float(self.outside), self.inflation, float(self.wrap_yaw),
             self.clearance_weight, float(self.ground_clearance)],
            dtype=np.float64,
        )


def grid_packed(grid):
    return np.array([*grid.origin, grid.cell_size, grid.layer_height], dtype=np.float64)


@njit(**INLINE_OPTS)
def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    if -math.pi < a <= math.pi:
        return a
    two_pi = 2.0 * math.pi
    b = math.pi - a
    return math.pi - (b - two_pi * math.floor(b / two_pi))


@njit(**INLINE_OPTS)
def collides(x, y, z, cells, gp, outside, inflation, ground):
    """Ground contact or an occupied cell at the point, or (``inflation`` > 0)
    within the clearance margin of one."""
    return hits_point(x, y, z, cells, gp, outside) or near_obstacle(x, y, z, cells, gp, inflation, ground)


@njit(**INLINE_OPTS)
def hits_point(x, y, z, cells, gp, outside):
    """Ground contact or an occupied cell at the point itself."""
    if z < 0.0:
        return True
    return lookup(cells, gp[0], gp[1], gp[2], gp[3], gp[4], x, y, z, outside) == 1


@njit(**INLINE_OPTS)
def near_obstacle(x, y, z, cells, gp, inflation, ground):
    """Any of the six axis probes at distance ``inflation`` in an occupied cell,
    or (``ground``) closer than ``inflation`` to the ground plane.

    Probes only see occupied cells (off-grid probes count as free), so the
    clearance margin never turns the map boundary into an obstacle.
    """
    if inflation > 0.0:
        if ground and z < inflation:
            return True
        for axis in range(3):
            for sgn in (-1.0, 1.0):
                px, py, pz = x, y, z
                if axis == 0:
                    px += sgn * inflation
                elif axis == 1:
                    py += sgn * inflation
                else:
                    pz += sgn * inflation
                if lookup(cells, gp[0], gp[1], gp[2], gp[3], gp[4], px, py, pz, 0) == 1:
                    return True
    return False


@njit(**INLINE_OPTS)
def state_cost_scalars(px, py, pz, phi, theta, psi, vx, vy, vz, p, q, r,
                       cos_phi, cos_theta, xdes, qd, cp, cells, gp):
    """q(x) on unpacked scalars, with cos(roll) and cos(pitch) precomputed.

    ``cp`` comes from CostParams.packed and ``gp`` from grid_packed.
    """
    d = px - xdes[0]
    acc = qd[0] * d * d
    d = py - xdes[1]
    acc += qd[1] * d * d
    d = pz - xdes[2]
    acc += qd[2] * d * d
    d = phi - xdes[3]
    acc += qd[3] * d * d
    d = theta - xdes[4]
    acc += qd[4] * d * d
    d = psi - xdes[5]
    if cp[7] != 0.0:
        d = wrap_angle(d)
    acc += qd[5] * d * d
    d = vx - xdes[6]
    acc += qd[6] * d * d
    d = vy - xdes[7]
    acc += qd[7] * d * d
    d = vz - xdes[8]
    acc += qd[8] * d * d
    d = p - xdes[9]
    acc += qd[9] * d * d
    d = q - xdes[10]
    acc += qd[10] * d * d
    d = r - xdes[11]
    acc += qd[11] * d * d
    if hits_point(px, py, pz, cells, gp, int(cp[5])):
        acc += cp[0]
    elif near_obstacle(px, py, pz, cells, gp, cp[6], cp[9] != 0.0):
        acc += cp[8]
    if (vx * vx + vy * vy + vz * vz > cp[2] * cp[2] or abs(cos_phi) < cp[3]
            or abs(cos_theta) < cp[3] or pz > cp[4]):
        acc += cp[1]
    return acc


@njit(**JIT_OPTS)
def over_limits(x, cp):
    vx, vy, vz = x[6], x[7], x[8]
    if vx * vx + vy * vy + vz * vz > cp[2] * cp[2]:
        return True
    if abs(sincos(x[3])[1]) < cp[3] or abs(sincos(x[4])[1]) < cp[3]:
        return True
    return x[2] > cp[4]


@njit(**JIT_OPTS)
def state_cost(x, xdes, qd, cp, cells, gp):
    """q(x) for one 12-vector state."""
    return state_cost_scalars(x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9], x[10], x[11],
                              sincos(x[3])[1], sincos(x[4])[1], xdes, qd, cp, cells, gp)


def wrap_angle_array(a):
    two_pi = 2.0 * np.pi
    b = np.pi - a
    wrapped = np.pi - (b - two_pi * np.floor(b / two_pi))
    return np.where((a > -np.pi) & (a <= np.pi), a, wrapped)


def lookup_batch(cells, gp, x, y, z, outside):
    fi = np.floor((x - gp[0]) / gp[3])
    fj = np.floor((y - gp[1]) / gp[3])
    fl = np.floor((z - gp[2]) / gp[4])
    nx, ny, nz = cells.shape
    ok = (fi >= 0) & (fj >= 0) & (fl >= 0) & (fi < nx) & (fj < ny) & (fl < nz)
    out = np.full(x.shape, outside, dtype=np.int64)
    out[ok] = cells[fi[ok].astype(np.int64), fj[ok].astype(np.int64), fl[ok].astype(np.int64)]
    return out


def state_cost_batch(X, xdes, qd, cp, cells, gp):
    """Vectorized q over the rows of ``X`` (shape (K, 12))."""
    D = X - xdes
    if cp[7] != 0.0:
        D[:, 5] = wrap_angle_array(D[:, 5])
    acc = (D * D) @ np.asarray(qd)
    outside, inflation = int(cp[5]), cp[6]
    px, py, pz = X[:, 0], X[:, 1], X[:, 2]
    col = (pz < 0.0) | (lookup_batch(cells, gp, px, py, pz, outside) == 1)
    near = np.zeros_like(col)
    if inflation > 0.0:
        if cp[9] != 0.0:
            near |= pz < inflation
        for axis in range(3):
            for sgn in (-1.0, 1.0):
                probe = [px, py, pz]
                probe[axis] = probe[axis] + sgn * inflation
                near |= lookup_batch(cells, gp, *probe, 0) == 1
    v2 = X[:, 6] ** 2 + X[:, 7] ** 2 + X[:, 8] ** 2
    lim = (
        (v2 > cp[2] * cp[2])
        | (np.abs(np.cos(X[:, 3])) < cp[3])
        | (np.abs(np.cos(X[:, 4])) < cp[3])
        | (pz > cp[4])
    )
    return acc + cp[0] * col + cp[8] * (near & ~col) + cp[1] * lim


def collision_indicator(x, grid, params=None):
    """C1: below ground or inside an occupied cell of ``grid``."""
    params = params or CostParams()
    return bool(collides(float(x[0]), float(x[1]), float(x[2]), grid.cells,
                         grid_packed(grid), int(params.outside), params.inflation,
                         params.ground_clearance))


def limit_indicator(x, params):
    """C2: over-speed, aggressive roll/pitch, or above the ceiling."""
    return bool(over_limits(np.asarray(x, dtype=np.float64), params.packed()))


def running_state_cost(x, goal, params, grid):
    return float(state_cost(np.asarray(x, dtype=np.float64), goal.desired_state(),
                            np.asarray(params.q_diag), params.packed(), grid.cells, grid_packed(grid)))


def terminal_cost(x, goal, params, grid):
    if params.terminal == TERMINAL_ZERO:
        return 0.0
    return running_state_cost(x, goal, params, grid)


def desired_yaw(current, next_goal, previous=0.0):
    """Heading from ``current`` toward ``next_goal`` in the horizontal plane;
    ``previous`` is kept when the two are horizontally coincident."""
    dx = next_goal[0] - current[0]
    dy = next_goal[1] - current[1]
    if math.hypot(dx, dy) < 1e-6:
        return previous
    return math.atan2(dy, dx)


def goal_reached(x, goal, tol=0.5):
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    return float(np.linalg.norm(np.asarray(x[0:3]) - np.asarray(goal.position))) <= tol
