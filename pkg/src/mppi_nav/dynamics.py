"""Quadrotor rigid-body model.

State vectors are flat float arrays of length 12 laid out as::

    [x, y, z, phi, theta, psi, vx, vy, vz, p, q, r]

i.e. world position, ZXY Euler angles, world-frame velocity and body rates.
Controls are ``[F, tau_x, tau_y, tau_z]``: collective thrust along body z and
the body torque.
"""

from dataclasses import dataclass, replace

import numpy as np

from ._accel import INLINE_OPTS, JIT_OPTS, njit
from ._trig import sincos

STATE_DIM = 12
CONTROL_DIM = 4

POS = slice(0, 3)
EULER = slice(3, 6)
VEL = slice(6, 9)
RATES = slice(9, 12)

# |cos(roll)| below this makes the Euler-rate map singular
SINGULAR_COS = 1e-6


class SingularAttitudeError(ValueError):
    pass


class InfeasibleControlError(ValueError):
    pass


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants; defaults are the Hummingbird values."""

    mass: float = 0.716
    arm_length: float = 0.17
    inertia: tuple = (7e-3, 7e-3, 12e-3)
    gravity: float = 9.81
    k_force: float = 8.55e-6
    k_moment: float = 1.6e-2

    def __post_init__(self):
        object.__setattr__(self, "inertia", tuple(float(v) for v in self.inertia))
        vals = (self.mass, self.arm_length, self.gravity, self.k_force, self.k_moment)
        if len(self.inertia) != 3 or min(vals + self.inertia) <= 0:
            raise ValueError(f"vehicle parameters must be strictly positive: {self}")

    @property
    def hover_thrust(self):
        return self.mass * self.gravity

    @property
    def hover_rotor_speed(self):
        return float(np.sqrt(self.hover_thrust / (4.0 * self.k_force)))

    def packed(self):
        """(m, g, Jx, Jy, Jz) as a float array, the layout the kernels take."""
        return np.array([self.mass, self.gravity, *self.inertia], dtype=np.float64)

    def mixing_matrix(self):
        kf, km, L = self.k_force, self.k_moment, self.arm_length
        return np.array(
            [
                [kf, kf, kf, kf],
                [0.0, kf * L, 0.0, -kf * L],
                [-kf * L, 0.0, kf * L, 0.0],
                [km, -km, km, -km],
            ]
        )


def make_state(position=(0.0, 0.0, 0.0), euler=(0.0, 0.0, 0.0),
               velocity=(0.0, 0.0, 0.0), rates=(0.0, 0.0, 0.0)):
    x = np.empty(STATE_DIM)
    x[POS] = position
    x[EULER] = euler
    x[VEL] = velocity
    x[RATES] = rates
    if not np.all(np.isfinite(x)):
        raise ValueError("state entries must be finite")
    return x


def hover_control(params):
    return np.array([params.hover_thrust, 0.0, 0.0, 0.0])


def rotation_matrix(euler):
    """Body-to-world rotation for ZXY Euler angles (roll, pitch, yaw)."""
    phi, theta, psi = euler
    sf, cf = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(psi), np.cos(psi)
    return np.array(
        [
            [cp * ct - sf * sp * st, -cf * sp, cp * st + ct * sf * sp],
            [ct * sp + cp * sf * st, cf * cp, sp * st - cp * ct * sf],
            [-cf * st, sf, cf * ct],
        ]
    )


def euler_rate_transform(euler):
    """Matrix T with body rates = T @ Euler rates.  det(T) = cos(roll)."""
    phi, theta, _ = euler
    sf, cf = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    return np.array(
        [
            [ct, 0.0, -cf * st],
            [0.0, 1.0, sf],
            [st, 0.0, cf * ct],
        ]
    )


@njit(**INLINE_OPTS)
def derivative_trig(sf, cf, st, ct, sp, cp, vx, vy, vz, p, q, r,
                    f, tx, ty, tz, ax, ay, az, m, g, jx, jy, jz):
    """Equations of motion given the sines/cosines of roll, pitch and yaw.

    ``(ax, ay, az)`` is an external world-frame acceleration.  The caller is
    responsible for the singularity guard on ``cf``.
    """
    psi_dot = (-st * p + ct * r) / cf
    a = f / m
    return (
        vx, vy, vz,
        ct * p + st * r,
        q - sf * psi_dot,
        psi_dot,
        a * (cp * st + ct * sf * sp) + ax,
        a * (sp * st - cp * ct * sf) + ay,
        a * cf * ct - g + az,
        (tx - (jz - jy) * q * r) / jx,
        (ty - (jx - jz) * r * p) / jy,
        (tz - (jy - jx) * p * q) / jz,
    )


@njit(**INLINE_OPTS)
def derivative_scalars(px, py, pz, phi, theta, psi, vx, vy, vz, p, q, r,
                       f, tx, ty, tz, wx, wy, wz, m, g, jx, jy, jz):
    """Equations of motion on unpacked scalars.

    Returns ``(ok, dx...)`` with twelve derivative entries; ``ok`` is False
    when |cos(roll)| is below the singularity guard.  ``(wx, wy, wz)`` is an
    external world-frame force.  The Euler-rate map is inverted in closed form.
    """
    sf, cf = sincos(phi)
    if abs(cf) < SINGULAR_COS:
        return (False, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    st, ct = sincos(theta)
    sp, cp = sincos(psi)
    d = derivative_trig(sf, cf, st, ct, sp, cp, vx, vy, vz, p, q, r,
                        f, tx, ty, tz, wx / m, wy / m, wz / m, m, g, jx, jy, jz)
    return (True, d[0], d[1], d[2], d[3], d[4], d[5], d[6], d[7], d[8], d[9], d[10], d[11])


@njit(**JIT_OPTS)
def derivative_into(x, f, tx, ty, tz, wx, wy, wz, m, g, jx, jy, jz, out):
    """Array wrapper of ``derivative_scalars``; ``out`` untouched if singular."""
    res = derivative_scalars(x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9], x[10], x[11],
                             f, tx, ty, tz, wx, wy, wz, m, g, jx, jy, jz)
    if not res[0]:
        return False
    out[0] = res[1]
    out[1] = res[2]
    out[2] = res[3]
    out[3] = res[4]
    out[4] = res[5]
    out[5] = res[6]
    out[6] = res[7]
    out[7] = res[8]
    out[8] = res[9]
    out[9] = res[10]
    out[10] = res[11]
    out[11] = res[12]
    return True


@njit(**JIT_OPTS)
def euler_step_into(x, u, wind, dt, packed, out):
    """One forward-Euler step; on a singular attitude ``out`` = ``x`` (frozen)."""
    d = np.empty(12)
    ok = derivative_into(x, u[0], u[1], u[2], u[3], wind[0], wind[1], wind[2],
                         packed[0], packed[1], packed[2], packed[3], packed[4], d)
    if not ok:
        out[:] = x
        return False
    for i in range(12):
        out[i] = x[i] + d[i] * dt
    return True


@njit(**JIT_OPTS)
def rk4_step_into(x, u, wind, dt, packed, out):
    """Classical RK4 with control and wind held constant over the step."""
    m, g, jx, jy, jz = packed[0], packed[1], packed[2], packed[3], packed[4]
    k1 = np.empty(12)
    k2 = np.empty(12)
    k3 = np.empty(12)
    k4 = np.empty(12)
    tmp = np.empty(12)
    ok = derivative_into(x, u[0], u[1], u[2], u[3], wind[0], wind[1], wind[2], m, g, jx, jy, jz, k1)
    for i in range(12):
        tmp[i] = x[i] + 0.5 * dt * k1[i]
    ok = ok and derivative_into(tmp, u[0], u[1], u[2], u[3], wind[0], wind[1], wind[2], m, g, jx, jy, jz, k2)
    for i in range(12):
        tmp[i] = x[i] + 0.5 * dt * k2[i]
    ok = ok and derivative_into(tmp, u[0], u[1], u[2], u[3], wind[0], wind[1], wind[2], m, g, jx, jy, jz, k3)
    for i in range(12):
        tmp[i] = x[i] + dt * k3[i]
    ok = ok and derivative_into(tmp, u[0], u[1], u[2], u[3], wind[0], wind[1], wind[2], m, g, jx, jy, jz, k4)
    if not ok:
        out[:] = x
        return False
    for i in range(12):
        out[i] = x[i] + dt * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0
    return True


_NO_WIND = np.zeros(3)


def continuous_dynamics(x, u, params, wind=None):
    """Time derivative of the state under control ``u``.

    Raises SingularAttitudeError when |cos(roll)| < 1e-6.
    """
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    w = _NO_WIND if wind is None else np.asarray(wind, dtype=np.float64)
    out = np.empty(STATE_DIM)
    m, g, jx, jy, jz = params.packed()
    if not derivative_into(x, u[0], u[1], u[2], u[3], w[0], w[1], w[2], m, g, jx, jy, jz, out):
        raise SingularAttitudeError(f"cos(roll) = {np.cos(x[3]):.3g}, Euler-rate map not invertible")
    return out


def step(x, u, dt, params, wind=None):
    """Forward-Euler propagation by ``dt`` seconds."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return np.asarray(x, dtype=np.float64) + continuous_dynamics(x, u, params, wind) * dt


def rk4_step(x, u, dt, params, wind=None):
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=np.float64)
    w = _NO_WIND if wind is None else np.asarray(wind, dtype=np.float64)
    out = np.empty(STATE_DIM)
    if not rk4_step_into(x, np.asarray(u, dtype=np.float64), w, dt, params.packed(), out):
        raise SingularAttitudeError("singular attitude during RK4 stage")
    return out


def rotor_speeds_to_control(omega, params):
    omega = np.asarray(omega, dtype=np.float64)
    if np.any(omega < 0):
        raise ValueError("rotor speeds must be non-negative")
    return params.mixing_matrix() @ (omega * omega)


def control_to_rotor_speeds(u, params):
    """Invert the mixing map.  Raises InfeasibleControlError if any omega^2 < 0."""
    sq = np.linalg.solve(params.mixing_matrix(), np.asarray(u, dtype=np.float64))
    if np.any(sq < 0):
        raise InfeasibleControlError(f"control {u} needs negative squared rotor speeds {sq}")
    return np.sqrt(sq)


def saturate_control(u, params, omega_max=None):
    """Closest realizable control: clip squared rotor speeds to [0, omega_max^2].

    Returns ``(applied_control, rotor_speeds)``.
    """
    sq = np.linalg.solve(params.mixing_matrix(), np.asarray(u, dtype=np.float64))
    hi = np.inf if omega_max is None else omega_max * omega_max
    sq = np.clip(sq, 0.0, hi)
    omega = np.sqrt(sq)
    return params.mixing_matrix() @ sq, omega


def perturb_params(params, fraction, seed):
    """Copy of ``params`` with mass and each inertia diagonal scaled by an
    independent factor drawn from U[1 - fraction, 1 + fraction]."""
    if not 0 <= fraction < 1:
        raise ValueError("fraction must lie in [0, 1)")
    scale = np.random.default_rng(seed).uniform(1.0 - fraction, 1.0 + fraction, size=4)
    if fraction == 0:
        scale[:] = 1.0
    inertia = tuple(float(j * s) for j, s in zip(params.inertia, scale[1:]))
    return replace(params, mass=float(params.mass * scale[0]), inertia=inertia)
