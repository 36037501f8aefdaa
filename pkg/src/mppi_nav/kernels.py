"""Hot loops of the controller: perturbation sampling and rollout costing.

Both exist as numba kernels (parallel over rollouts) and as vectorized numpy
fallbacks.  The random stream is counter based: the normal pair for rollout
``k``, step ``t`` is a pure function of ``(key, k, t)``, so results do not
depend on how rollouts are split across workers.
"""

from concurrent.futures import ThreadPoolExecutor
import math

import numpy as np

from . import _accel
from ._accel import JIT_OPTS, njit, prange
from ._trig import normal_quantile, normal_quantile_array, sincos
from .cost import state_cost_batch, state_cost_scalars
from .dynamics import SINGULAR_COS, derivative_trig

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0


@njit(**JIT_OPTS)
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


_MASK = 0xFFFFFFFFFFFFFFFF


def stream_key(seed):
    """64-bit key for an integer seed (splitmix64 finalizer)."""
    z = (int(seed) + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return np.uint64(z ^ (z >> 31))


def _mix_array(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(parallel=True, **JIT_OPTS)
def _normals_numba(key, K, T, sigma, out):
    for k in prange(K):
        base = np.uint64(k * T * 4)
        for t in range(T):
            for j in range(4):
                h = _mix(key + (base + np.uint64(t * 4 + j + 1)) * _GOLDEN)
                u = (float(h >> _S11) + 0.5) * _TWO_M53
                out[k, t, j] = sigma[j] * normal_quantile(u)


def _normals_numpy(key, K, T, sigma):
    c = np.arange(1, K * T * 4 + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _mix_array(key + c * _GOLDEN)
    u = ((h >> _S11).astype(np.float64) + 0.5) * _TWO_M53
    return normal_quantile_array(u).reshape(K, T, 4) * sigma


def gaussian_noise(seed, K, T, std):
    """``(K, T, 4)`` zero-mean normals with per-channel std ``std``."""
    sigma = np.ascontiguousarray(std, dtype=np.float64)
    key = stream_key(int(seed) & _MASK)
    if _accel.HAVE_NUMBA:
        out = np.empty((K, T, 4))
        _normals_numba(key, K, T, sigma, out)
        return out
    return _normals_numpy(key, K, T, sigma)


@njit(**JIT_OPTS)
def _one_rollout(k, x0, U, ctrl_nominal, noise, dt, veh, R, nu_term, qd, xdes, cp, cells, gp, terminal):
    m, g, jx, jy, jz = veh[0], veh[1], veh[2], veh[3], veh[4]
    px, py, pz = x0[0], x0[1], x0[2]
    phi, th, psi = x0[3], x0[4], x0[5]
    vx, vy, vz = x0[6], x0[7], x0[8]
    p, q, r = x0[9], x0[10], x0[11]
    s = 0.0
    # one sincos per angle and step, shared by the dynamics and the cost
    sf, cf = sincos(phi)
    st, ct = sincos(th)
    sp, cps = sincos(psi)
    for t in range(U.shape[0]):
        d0 = noise[k, t, 0]
        d1 = noise[k, t, 1]
        d2 = noise[k, t, 2]
        d3 = noise[k, t, 3]
        # singular attitude: the state stays frozen and C2 keeps charging
        if abs(cf) >= SINGULAR_COS:
            r1, r2, r3, r4, r5, r6, r7, r8, r9, r10, r11, r12 = derivative_trig(
                sf, cf, st, ct, sp, cps, vx, vy, vz, p, q, r,
                U[t, 0] + d0, U[t, 1] + d1, U[t, 2] + d2, U[t, 3] + d3,
                0.0, 0.0, 0.0, m, g, jx, jy, jz)
            px += r1 * dt
            py += r2 * dt
            pz += r3 * dt
            phi += r4 * dt
            th += r5 * dt
            psi += r6 * dt
            vx += r7 * dt
            vy += r8 * dt
            vz += r9 * dt
            p += r10 * dt
            q += r11 * dt
            r += r12 * dt
            sf, cf = sincos(phi)
            st, ct = sincos(th)
            sp, cps = sincos(psi)
        # running cost of the step just taken, charged at x_{t+1}
        s += state_cost_scalars(px, py, pz, phi, th, psi, vx, vy, vz, p, q, r,
                                cf, ct, xdes, qd, cp, cells, gp)
        s += ctrl_nominal[t]
        s += nu_term * (R[0] * d0 * d0 + R[1] * d1 * d1 + R[2] * d2 * d2 + R[3] * d3 * d3)
        s += R[0] * U[t, 0] * d0 + R[1] * U[t, 1] * d1 + R[2] * U[t, 2] * d2 + R[3] * U[t, 3] * d3
    if terminal:
        s += state_cost_scalars(px, py, pz, phi, th, psi, vx, vy, vz, p, q, r,
                                cf, ct, xdes, qd, cp, cells, gp)
    return s


@njit(parallel=True, **JIT_OPTS)
def _rollouts_numba(x0, U, noise, dt, veh, R, nu_term, qd, xdes, cp, cells, gp, terminal, out):
    T = U.shape[0]
    ctrl_nominal = np.empty(T)
    for t in range(T):
        acc = 0.0
        for j in range(4):
            acc += 0.5 * R[j] * U[t, j] * U[t, j]
        ctrl_nominal[t] = acc
    for k in prange(noise.shape[0]):
        out[k] = _one_rollout(k, x0, U, ctrl_nominal, noise, dt, veh, R, nu_term, qd, xdes, cp, cells, gp, terminal)


def _rollouts_numpy(x0, U, noise, dt, veh, R, nu_term, qd, xdes, cp, cells, gp, terminal):
    K, T, _ = noise.shape
    m, g, jx, jy, jz = veh
    X = np.repeat(x0[None, :], K, axis=0)
    s = np.zeros(K)
    for t in range(T):
        u = U[t]
        du = noise[:, t, :]
        s += (0.5 * R * u * u).sum()
        s += nu_term * (du * du) @ R
        s += du @ (R * u)
        F = u[0] + du[:, 0]
        tx = u[1] + du[:, 1]
        ty = u[2] + du[:, 2]
        tz = u[3] + du[:, 3]

        phi, theta, psi = X[:, 3], X[:, 4], X[:, 5]
        cf = np.cos(phi)
        live = np.abs(cf) >= 1e-6
        safe_cf = np.where(live, cf, 1.0)
        sf, st, ct = np.sin(phi), np.sin(theta), np.cos(theta)
        sp, cp_ = np.sin(psi), np.cos(psi)
        p, q, r = X[:, 9], X[:, 10], X[:, 11]

        D = np.empty_like(X)
        D[:, 0:3] = X[:, 6:9]
        psi_dot = (-st * p + ct * r) / safe_cf
        D[:, 3] = ct * p + st * r
        D[:, 4] = q - sf * psi_dot
        D[:, 5] = psi_dot
        a = F / m
        D[:, 6] = a * (cp_ * st + ct * sf * sp)
        D[:, 7] = a * (sp * st - cp_ * ct * sf)
        D[:, 8] = a * cf * ct - g
        D[:, 9] = (tx - (jz - jy) * q * r) / jx
        D[:, 10] = (ty - (jx - jz) * r * p) / jy
        D[:, 11] = (tz - (jy - jx) * p * q) / jz
        D[~live] = 0.0
        X = X + D * dt
        s += state_cost_batch(X, xdes, qd, cp, cells, gp)
    if terminal:
        s += state_cost_batch(X, xdes, qd, cp, cells, gp)
    return s


def rollout_costs(x0, U, noise, dt, veh, R, nu, qd, xdes, cp, cells, gp, terminal):
    """Cost-to-go of every rollout.

    ``noise`` is ``(K, T, 4)``, ``U`` is ``(T, 4)``.  Each rollout starts at
    ``x0``, applies ``U[t] + noise[k, t]`` with forward-Euler steps of ``dt``
    and accumulates the state cost plus the importance-sampling control terms.
    """
    args = (
        np.ascontiguousarray(x0, dtype=np.float64),
        np.ascontiguousarray(U, dtype=np.float64),
        np.ascontiguousarray(noise, dtype=np.float64),
        float(dt),
        np.ascontiguousarray(veh, dtype=np.float64),
        np.ascontiguousarray(R, dtype=np.float64),
        0.5 * (1.0 - 1.0 / nu),
        np.ascontiguousarray(qd, dtype=np.float64),
        np.ascontiguousarray(xdes, dtype=np.float64),
        np.ascontiguousarray(cp, dtype=np.float64),
        np.ascontiguousarray(cells, dtype=np.int8),
        np.ascontiguousarray(gp, dtype=np.float64),
        bool(terminal),
    )
    K = args[2].shape[0]
    if _accel.HAVE_NUMBA:
        out = np.empty(K)
        _rollouts_numba(*args, out)
        return out
    workers = _accel.get_workers()
    if workers <= 1 or K < 2 * workers:
        return _rollouts_numpy(*args)
    bounds = np.linspace(0, K, workers + 1).astype(int)
    chunks = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def run(ab):
        a, b = ab
        return _rollouts_numpy(args[0], args[1], args[2][a:b], *args[3:])

    with ThreadPoolExecutor(len(chunks)) as pool:
        return np.concatenate(list(pool.map(run, chunks)))
