import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import savgol_coeffs

from mppi_nav.cost import CostParams, GoalSpec, TERMINAL_ZERO, running_state_cost
from mppi_nav.dynamics import VehicleParams, hover_control, make_state, step
from mppi_nav.mppi import (
    Controller,
    CostModel,
    InvalidWindowError,
    MppiConfig,
    batch_costs,
    control_step,
    modified_running_cost,
    rollout_cost,
    sample_noise,
    sg_coefficients,
    sg_filter,
    shift_sequence,
    softmax_weights,
    update_control_sequence,
)
from mppi_nav.world import FREE, OCCUPIED, new_grid

P = VehicleParams()


def empty_world():
    return new_grid((10, 10, 5), fill=FREE)


def test_table_defaults():
    cfg = MppiConfig()
    assert (cfg.K, cfg.T, cfg.dt, cfg.lam, cfg.nu) == (2700, 150, 0.02, 0.02, 1000.0)
    assert cfg.sigma == (2.5, 5e-3, 5e-3, 5e-3)
    assert cfg.R == (8e-3, 4.0, 4.0, 4.0)
    assert (cfg.sg_window, cfg.sg_order) == (51, 3)
    # R = lambda * Sigma^-1 holds for the defaults
    assert np.allclose(np.asarray(cfg.R), cfg.lam / np.asarray(cfg.sigma))


@pytest.mark.parametrize("kw", [dict(K=0), dict(T=1), dict(lam=0.0), dict(nu=-1.0),
                                dict(sigma=(1, 0, 1, 1)), dict(sg_window=50), dict(sg_window=3, sg_order=3)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        MppiConfig(**kw)


def test_noise_statistics_and_determinism():
    cfg = MppiConfig()
    a = sample_noise(cfg, 11)
    assert a.shape == (2700, 150, 4)
    assert abs(a[..., 0].var() - 2.5) < 0.03 * 2.5
    assert abs(a[..., 0].mean()) < 3 * math.sqrt(2.5 / a[..., 0].size)
    assert abs(a[..., 1].var() - 5e-3) < 0.03 * 5e-3
    assert np.array_equal(a, sample_noise(cfg, 11))
    assert not np.array_equal(a, sample_noise(cfg, 12))
    tiny = sample_noise(MppiConfig(K=8, T=10, sigma=(1e-12,) * 4), 1)
    assert np.abs(tiny).max() < 1e-4


def test_modified_running_cost_examples():
    cfg = MppiConfig()
    assert modified_running_cost(3.0, np.zeros(4), np.zeros(4), cfg) == 3.0
    assert modified_running_cost(0.0, [1, 0, 0, 0], np.zeros(4), cfg) == pytest.approx(0.004, abs=1e-15)
    assert modified_running_cost(0.0, np.zeros(4), [1, 0, 0, 0], cfg) == pytest.approx(0.003996, abs=1e-15)


def _model(goal=(0, 0, 1), **kw):
    return CostModel(GoalSpec(goal), CostParams(**kw))


def test_rollout_single_step_hand_trace():
    cfg = MppiConfig(K=1, T=2, sg_window=1, sg_order=0)
    grid = empty_world()
    x0 = make_state((5, 5, 2))
    U = np.zeros((1, 4))
    du = np.zeros((1, 4))
    x1 = step(x0, U[0], cfg.dt, P)
    goal = GoalSpec((5, 6, 1))
    q1 = running_state_cost(x1, goal, CostParams(), grid)
    assert q1 == pytest.approx(2.5 * 1 + 5.0 * 1, abs=1e-12)
    zero_term = CostModel(goal, CostParams(terminal=TERMINAL_ZERO))
    assert rollout_cost(x0, U, du, grid, zero_term, cfg, P) == pytest.approx(q1, rel=1e-14)
    with_term = CostModel(goal, CostParams())
    assert rollout_cost(x0, U, du, grid, with_term, cfg, P) == pytest.approx(2 * q1, rel=1e-14)


def test_rollout_control_only_terms():
    cfg = MppiConfig(K=1, T=5)
    grid = empty_world()
    x0 = make_state((5, 5, 2))
    rng = np.random.default_rng(0)
    U = hover_control(P) + rng.normal(scale=0.01, size=(5, 4))
    du = rng.normal(scale=0.01, size=(5, 4))
    model = CostModel(GoalSpec((5, 5, 2)), CostParams(q_diag=(0.0,) * 12, terminal=TERMINAL_ZERO))
    expected = sum(modified_running_cost(0.0, U[t], du[t], cfg) for t in range(5))
    assert rollout_cost(x0, U, du, grid, model, cfg, P) == pytest.approx(expected, rel=1e-12)


def test_rollout_inside_obstacle_is_penalized():
    grid = empty_world()
    grid.cells[5, 5, :] = OCCUPIED
    cfg = MppiConfig(K=4, T=10)
    U = np.tile(hover_control(P), (10, 1))
    costs = batch_costs(make_state((5.5, 5.5, 2.0)), U, sample_noise(cfg, 0), grid,
                        _model(goal=(5.5, 5.5, 2.0)), cfg, P)
    assert np.all(costs >= 1e8)


def test_softmax_weights_examples():
    w = softmax_weights(np.array([0.0, 1000 * 0.02]), 0.02)
    assert w[0] == pytest.approx(1.0, abs=1e-300) and w[1] < 1e-400 + 1e-300
    w = softmax_weights(np.full(7, 3.0), 0.5)
    assert np.allclose(w, 1 / 7)
    w = softmax_weights(np.array([1.0, np.inf, np.nan]), 1.0)
    assert np.array_equal(w, [1.0, 0.0, 0.0])
    assert np.all(softmax_weights(np.array([np.inf, np.nan]), 1.0) == 0)


costs_st = st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=40)


@settings(max_examples=150, deadline=None)
@given(costs_st, st.floats(1e-3, 1e3), st.floats(-1e6, 1e6))
def test_weights_normalized_and_baseline_invariant(costs, lam, c):
    costs = np.array(costs)
    w = softmax_weights(costs, lam)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1.0) < 1e-12
    rng = np.random.default_rng(len(costs))
    noise = rng.normal(size=(len(costs), 6, 4))
    U = rng.normal(size=(6, 4))
    a, _ = update_control_sequence(U, noise, costs, lam)
    b, _ = update_control_sequence(U, noise, costs + c, lam)
    # exact in real arithmetic; forming costs + c rounds each cost by up to
    # half an ulp, which the softmax turns into a relative weight error of
    # about ulp / lam, and the update sums weights times noise
    rounding = np.spacing(abs(c) + costs.max()) / lam
    assert np.abs(a - b).max() < 1e-10 + 10 * rounding * np.abs(noise).max()


@settings(max_examples=100, deadline=None)
@given(costs_st, st.floats(1e-3, 1e3))
def test_update_is_convex_combination(costs, lam):
    costs = np.array(costs)
    rng = np.random.default_rng(7)
    noise = rng.normal(size=(len(costs), 5, 4))
    U = rng.normal(size=(5, 4))
    new, _ = update_control_sequence(U, noise, costs, lam)
    d = new - U
    assert np.all(d >= noise.min(axis=0) - 1e-12)
    assert np.all(d <= noise.max(axis=0) + 1e-12)


def test_update_special_cases():
    rng = np.random.default_rng(1)
    U = rng.normal(size=(8, 4))
    noise = rng.normal(size=(1, 8, 4))
    new, _ = update_control_sequence(U, noise, np.array([123.0]), 0.02)
    assert np.array_equal(new, U + noise[0])
    noise = rng.normal(size=(5, 8, 4))
    new, _ = update_control_sequence(U, noise, np.full(5, 2.0), 0.02)
    assert np.allclose(new, U + noise.mean(axis=0), atol=1e-14)
    # lambda -> 0: the argmin rollout wins outright
    costs = np.array([5.0, 1.0, 3.0, 9.0, 2.0])
    new, _ = update_control_sequence(U, noise, costs, 1e-9)
    assert np.allclose(new, U + noise[1], atol=1e-14)


def test_sg_coefficients_match_scipy():
    assert np.allclose(sg_coefficients(51, 3), savgol_coeffs(51, 3), atol=1e-14)
    assert np.allclose(sg_coefficients(11, 2), savgol_coeffs(11, 2), atol=1e-14)


def _direct_fit_center(y, window, order):
    half = window // 2
    out = np.full(len(y), np.nan)
    offs = np.arange(-half, half + 1)
    for i in range(half, len(y) - half):
        coef = np.polynomial.polynomial.polyfit(offs, y[i - half:i + half + 1], order)
        out[i] = coef[0]
    return out


def test_sg_reproduces_cubic_in_interior():
    t = np.arange(150, dtype=np.float64)
    y = t ** 3
    out = sg_filter(y, 51, 3)
    interior = slice(25, 125)
    assert np.abs(out[interior] - y[interior]).max() <= 1e-9 * np.abs(y).max()
    oracle = _direct_fit_center(y, 51, 3)
    assert np.allclose(out[interior], oracle[interior], rtol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=4, max_size=4))
def test_sg_reproduces_low_order_polynomials(c):
    t = np.arange(120, dtype=np.float64) / 10.0
    y = c[0] + c[1] * t + c[2] * t ** 2 + c[3] * t ** 3
    out = sg_filter(y, 51, 3)
    assert np.allclose(out[25:95], y[25:95], atol=1e-8)


def test_sg_constant_and_alternating():
    const = np.full((150, 4), 3.25)
    assert np.allclose(sg_filter(const, 51, 3), const, atol=1e-12)
    alt = (-1.0) ** np.arange(150)
    out = sg_filter(alt, 51, 3)
    # explicit convolution oracle in the interior
    oracle = np.convolve(alt, savgol_coeffs(51, 3)[::-1], mode="same")
    assert np.allclose(out[25:125], oracle[25:125], atol=1e-12)
    assert np.abs(out).max() < 1.0


def test_sg_invalid_window():
    for w, o in ((50, 3), (3, 3), (5, -1)):
        with pytest.raises(InvalidWindowError):
            sg_coefficients(w, o)


def test_shift_sequence():
    h = hover_control(P)
    U = np.array([[1.0, 0, 0, 0], [2.0, 0, 0, 0], [3.0, 0, 0, 0]])
    out = shift_sequence(U, h)
    assert np.array_equal(out[:2], U[1:]) and np.array_equal(out[2], h)
    hov = np.tile(h, (5, 1))
    assert np.array_equal(shift_sequence(hov, h), hov)
    V = np.random.default_rng(0).normal(size=(6, 4))
    for _ in range(6):
        V = shift_sequence(V, h)
    assert np.array_equal(V, np.tile(h, (6, 1)))


def test_control_step_hover_equilibrium():
    cfg = MppiConfig(K=512, T=60, sigma=(2.5, 5e-5, 5e-5, 5e-5))
    x0 = make_state((5, 5, 2))
    U = np.tile(hover_control(P), (cfg.T, 1))
    u0, U_next, diag = control_step(x0, empty_world(), _model(goal=(5, 5, 2)), U, cfg, P, seed=4)
    assert abs(u0[0] - P.hover_thrust) < 0.05 * P.hover_thrust
    assert U_next.shape == U.shape
    assert diag.t_mppi_ms > 0
    assert set(diag.as_dict()) == {"step", "s_min", "mean_cost", "entropy", "t_mppi_ms"}


def test_control_step_zero_noise_returns_filtered_sequence():
    cfg = MppiConfig(K=1, T=80)
    rng = np.random.default_rng(2)
    U = hover_control(P) + rng.normal(scale=0.1, size=(80, 4))
    u0, U_next, _ = control_step(make_state((5, 5, 2)), empty_world(), _model(), U, cfg, P,
                                 seed=0, noise=np.zeros((1, 80, 4)))
    expected = sg_filter(U, 51, 3)
    assert np.allclose(u0, expected[0], atol=1e-14)
    assert np.allclose(U_next[:-1], expected[1:], atol=1e-14)


def test_control_step_deterministic():
    cfg = MppiConfig(K=64, T=40)
    args = (make_state((5, 5, 2)), empty_world(), _model(goal=(6, 5, 2)),
            np.tile(hover_control(P), (40, 1)), cfg, P)
    a = control_step(*args, seed=9)
    b = control_step(*args, seed=9)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert a[2].s_min == b[2].s_min


def test_rollout_order_independent():
    cfg = MppiConfig(K=32, T=30)
    noise = sample_noise(cfg, 3)
    args = (make_state((5, 5, 2)), np.tile(hover_control(P), (30, 1)))
    full = batch_costs(*args, noise, empty_world(), _model(), cfg, P)
    perm = np.random.default_rng(0).permutation(32)
    shuffled = batch_costs(*args, noise[perm], empty_world(), _model(), cfg, P)
    assert np.array_equal(full[perm], shuffled)
    single = [rollout_cost(*args, noise[k], empty_world(), _model(), cfg, P) for k in (0, 17, 31)]
    assert single == [full[0], full[17], full[31]]


def test_controller_warm_start():
    ctl = Controller(MppiConfig(K=16, T=20), P)
    assert np.array_equal(ctl.U, np.tile(hover_control(P), (20, 1)))
    ctl(make_state((5, 5, 2)), empty_world(), GoalSpec((5, 5, 2)), seed=1)
    assert ctl.steps == 1
    ctl.reset()
    assert ctl.steps == 0
