"""Sampling-based MPC: the path-integral control loop.

One control step samples K perturbation sequences, costs every rollout of the
prediction model, re-weights the perturbations with a softmax of the costs,
smooths the updated sequence with a Savitzky-Golay filter and finally shifts
the horizon by one slot.
"""

from dataclasses import dataclass, field
import time

import numpy as np

from . import _accel
from ._accel import JIT_OPTS, njit, prange
from .cost import CostParams, GoalSpec, TERMINAL_STATE, grid_packed
from .dynamics import CONTROL_DIM, VehicleParams, hover_control
from .kernels import gaussian_noise, rollout_costs


class InvalidWindowError(ValueError):
    pass


@dataclass(frozen=True)
class MppiConfig:
    """Controller settings.  Defaults reproduce the reference tuning."""

    K: int = 2700
    T: int = 150
    dt: float = 0.02
    lam: float = 0.02
    nu: float = 1000.0
    sigma: tuple = (2.5, 5e-3, 5e-3, 5e-3)  # noise variances per channel
    R: tuple = (8e-3, 4.0, 4.0, 4.0)
    sg_window: int = 51
    sg_order: int = 3
    omega_max: float = None  # rotor speed cap for the thrust clamp; None = F >= 0 only

    def __post_init__(self):
        object.__setattr__(self, "sigma", tuple(float(v) for v in self.sigma))
        object.__setattr__(self, "R", tuple(float(v) for v in self.R))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self):
        out = []
        if self.K < 1:
            out.append(f"K must be >= 1 (got {self.K})")
        if self.T < 2:
            out.append(f"T must be >= 2 (got {self.T})")
        if not self.dt > 0:
            out.append("dt must be > 0")
        if not self.lam > 0:
            out.append("lambda must be > 0")
        if not self.nu > 0:
            out.append("nu must be > 0")
        if len(self.sigma) != CONTROL_DIM or min(self.sigma) <= 0:
            out.append("sigma must hold 4 positive variances")
        if len(self.R) != CONTROL_DIM or min(self.R) < 0:
            out.append("R must hold 4 non-negative weights")
        if self.sg_window % 2 == 0 or self.sg_window <= self.sg_order or self.sg_order < 0:
            out.append(f"SG window must be odd and > order (got {self.sg_window}, {self.sg_order})")
        if self.omega_max is not None and self.omega_max <= 0:
            out.append("omega_max must be positive")
        return out

    @property
    def std(self):
        return np.sqrt(np.asarray(self.sigma))


def sample_noise(cfg, seed):
    """``(K, T, 4)`` Gaussian perturbations with variances ``cfg.sigma``."""
    return gaussian_noise(seed, cfg.K, cfg.T, cfg.std)


def modified_running_cost(q, u, du, cfg):
    """Per-step cost with the importance-sampling control terms added."""
    R = np.asarray(cfg.R)
    u = np.asarray(u, dtype=np.float64)
    du = np.asarray(du, dtype=np.float64)
    return (
        q
        + 0.5 * u @ (R * u)
        + 0.5 * (1.0 - 1.0 / cfg.nu) * du @ (R * du)
        + u @ (R * du)
    )


@dataclass
class CostModel:
    """What a rollout is charged for: tracking ``goal`` on ``grid``."""

    goal: GoalSpec
    params: CostParams = field(default_factory=CostParams)

    def args(self, grid):
        return (
            np.asarray(self.params.q_diag, dtype=np.float64),
            self.goal.desired_state(),
            self.params.packed(),
            grid.cells,
            grid_packed(grid),
            self.params.terminal == TERMINAL_STATE,
        )


def batch_costs(x0, U, noise, grid, costmodel, cfg, vehicle):
    """Cost-to-go of all rollouts (K-vector)."""
    qd, xdes, cp, cells, gp, terminal = costmodel.args(grid)
    return rollout_costs(x0, U, noise, cfg.dt, vehicle.packed(), np.asarray(cfg.R), cfg.nu,
                         qd, xdes, cp, cells, gp, terminal)


def rollout_cost(x0, U, du, grid, costmodel, cfg, vehicle):
    """Cost-to-go of one rollout under perturbation ``du`` (shape (T, 4))."""
    du = np.asarray(du, dtype=np.float64)[None]
    return float(batch_costs(x0, U, du, grid, costmodel, cfg, vehicle)[0])


def softmax_weights(costs, lam):
    """exp(-(S - S_min) / lam), normalized.

    Non-finite costs (a diverged rollout) get zero weight; if no rollout is
    finite all weights are zero and the sequence is left unchanged.
    """
    costs = np.asarray(costs, dtype=np.float64)
    finite = np.isfinite(costs)
    if not finite.any():
        return np.zeros_like(costs)
    s = np.where(finite, costs, np.inf)
    e = np.exp(-(s - s[finite].min()) / lam)
    return e / e.sum()


@njit(parallel=True, **JIT_OPTS)
def _weighted_sum_numba(w, noise, out):
    K, T, M = noise.shape
    for t in prange(T):
        for j in range(M):
            acc = 0.0
            for k in range(K):
                acc += w[k] * noise[k, t, j]
            out[t, j] = acc


def weighted_perturbation(w, noise):
    """sum_k w_k * noise[k] in a fixed summation order."""
    if _accel.HAVE_NUMBA:
        out = np.empty(noise.shape[1:])
        _weighted_sum_numba(np.ascontiguousarray(w), np.ascontiguousarray(noise), out)
        return out
    return np.einsum("k,ktj->tj", w, noise)


def update_control_sequence(U, noise, costs, lam):
    """Exponentially weighted average of the perturbations added to ``U``.

    Returns ``(U_new, weights)``.
    """
    w = softmax_weights(costs, lam)
    return np.asarray(U, dtype=np.float64) + weighted_perturbation(w, noise), w


def sg_coefficients(window, order):
    """Central smoothing weights of a least-squares polynomial fit."""
    if window % 2 == 0 or window <= order or order < 0:
        raise InvalidWindowError(f"window must be odd and > order, got ({window}, {order})")
    half = window // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    A = np.vander(offsets, order + 1, increasing=True)
    # value of the fitted polynomial at offset 0 = first row of the pseudo-inverse
    return np.linalg.pinv(A)[0]


def sg_filter(U, window, order):
    """Smooth each channel of ``U`` (shape (T, m)) with mirror padding at the ends."""
    coeffs = sg_coefficients(window, order)
    U = np.asarray(U, dtype=np.float64)
    squeeze = U.ndim == 1
    if squeeze:
        U = U[:, None]
    if U.shape[0] < 1:
        raise InvalidWindowError("sequence must be non-empty")
    half = window // 2
    if U.shape[0] == 1:
        padded = np.repeat(U, window, axis=0)
    else:
        padded = np.pad(U, ((half, half), (0, 0)), mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(padded, window, axis=0)
    out = windows @ coeffs
    return out[:, 0] if squeeze else out


def shift_sequence(U, init):
    """Drop the first slot, move everything forward, put ``init`` last."""
    out = np.empty_like(U)
    out[:-1] = U[1:]
    out[-1] = init
    return out


def clamp_thrust(U, vehicle, omega_max=None):
    out = np.array(U, dtype=np.float64)
    hi = np.inf if omega_max is None else 4.0 * vehicle.k_force * omega_max * omega_max
    out[:, 0] = np.clip(out[:, 0], 0.0, hi)
    return out


@dataclass
class StepDiagnostics:
    step: int
    s_min: float
    mean_cost: float
    entropy: float
    t_mppi_ms: float

    def as_dict(self):
        return {"step": self.step, "s_min": self.s_min, "mean_cost": self.mean_cost,
                "entropy": self.entropy, "t_mppi_ms": self.t_mppi_ms}


def control_step(x0, grid, costmodel, U, cfg, vehicle, seed, noise=None, step_index=0):
    """One pass of the loop: sample, cost, update, smooth, shift.

    Returns ``(u0, U_next, diagnostics)`` where ``u0`` is the control to apply
    and ``U_next`` the warm start for the next step.  ``noise`` overrides the
    sampler (used by tests).
    """
    t0 = time.perf_counter()
    if noise is None:
        noise = sample_noise(cfg, seed)
    costs = batch_costs(x0, U, noise, grid, costmodel, cfg, vehicle)
    U_new, w = update_control_sequence(U, noise, costs, cfg.lam)
    U_new = sg_filter(U_new, cfg.sg_window, cfg.sg_order)
    U_new = clamp_thrust(U_new, vehicle, cfg.omega_max)
    u0 = U_new[0].copy()
    U_next = shift_sequence(U_new, hover_control(vehicle))
    elapsed = 1e3 * (time.perf_counter() - t0)
    nz = w[w > 0]
    finite = costs[np.isfinite(costs)]
    diag = StepDiagnostics(
        step=step_index,
        s_min=float(finite.min()) if finite.size else float("inf"),
        mean_cost=float(finite.mean()) if finite.size else float("inf"),
        entropy=float(-(nz * np.log(nz)).sum()),
        t_mppi_ms=elapsed,
    )
    return u0, U_next, diag


class Controller:
    """Receding-horizon wrapper holding the warm-start sequence."""

    def __init__(self, cfg=None, vehicle=None, cost_params=None):
        self.cfg = cfg or MppiConfig()
        self.vehicle = vehicle or VehicleParams()
        self.cost_params = cost_params or CostParams()
        self.reset()

    def reset(self):
        self.U = np.tile(hover_control(self.vehicle), (self.cfg.T, 1))
        self.steps = 0

    def __call__(self, x0, grid, goal, seed):
        model = CostModel(goal, self.cost_params)
        u0, self.U, diag = control_step(x0, grid, model, self.U, self.cfg, self.vehicle,
                                        seed, step_index=self.steps)
        self.steps += 1
        return u0, diag

