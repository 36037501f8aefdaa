import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mppi_nav.cost import (
    Q_FAST,
    Q_SLOW,
    TERMINAL_ZERO,
    CostParams,
    GoalSpec,
    collision_indicator,
    desired_yaw,
    goal_reached,
    limit_indicator,
    q_for_speed,
    running_state_cost,
    state_cost_batch,
    grid_packed,
    terminal_cost,
)
from mppi_nav.dynamics import make_state
from mppi_nav.world import FREE, OCCUPIED, UNKNOWN, new_grid

ARENA = (40.0, 40.0, 8.5)


def arena(fill=FREE):
    return new_grid(ARENA, 1.0, 0.2, fill=fill)


def test_zero_at_goal():
    g = GoalSpec((5, 6, 1), yaw=0.4)
    x = make_state((5, 6, 1), euler=(0, 0, 0.4))
    assert running_state_cost(x, g, CostParams(), arena()) == 0.0
    assert terminal_cost(x, g, CostParams(), arena()) == 0.0


def test_unit_offset_and_occupied_cell():
    grid = arena()
    g = GoalSpec((5.5, 5.5, 1.1))
    x = make_state((6.5, 5.5, 1.1))
    assert running_state_cost(x, g, CostParams(), grid) == pytest.approx(2.5, abs=1e-12)
    grid.cells[6, 5, 5] = OCCUPIED
    assert running_state_cost(x, g, CostParams(), grid) == pytest.approx(2.5 + 1e8, abs=1e-6)


def test_terminal_policies():
    grid = arena()
    grid.cells[2, 2, :] = OCCUPIED
    g = GoalSpec((10, 10, 1))
    x = make_state((2.5, 2.5, 1.0))
    assert terminal_cost(x, g, CostParams(), grid) >= 1e8
    assert terminal_cost(x, g, CostParams(terminal=TERMINAL_ZERO), grid) == 0.0


def test_collision_indicator_examples():
    grid = arena()
    assert collision_indicator(make_state((1, 1, -0.01)), grid)
    grid.cells[3, 3, 5] = OCCUPIED
    assert collision_indicator(make_state((3.5, 3.5, 1.0)), grid)
    assert not collision_indicator(make_state((4.5, 3.5, 1.0)), grid)
    # unknown cells are free for the controller
    assert not collision_indicator(make_state((1, 1, 1)), arena(UNKNOWN))


def test_inflation_probes():
    grid = arena()
    grid.cells[3, 3, :] = OCCUPIED
    x = make_state((2.7, 3.5, 1.0))
    assert not collision_indicator(x, grid)
    assert collision_indicator(x, grid, CostParams(inflation=0.5))
    # the map boundary is not an obstacle for the probes
    assert not collision_indicator(make_state((0.2, 0.2, 1.0)), grid, CostParams(inflation=0.5))
    # the ground plane joins the margin only on request
    low = make_state((1.0, 1.0, 0.3))
    assert not collision_indicator(low, grid, CostParams(inflation=0.5))
    assert collision_indicator(low, grid, CostParams(inflation=0.5, ground_clearance=True))


def test_clearance_weight():
    grid = arena()
    grid.cells[3, 3, :] = OCCUPIED
    g = GoalSpec((2.7, 3.5, 1.0))
    near = make_state((2.7, 3.5, 1.0))
    inside = make_state((3.5, 3.5, 1.0))
    p = CostParams(inflation=0.5)
    assert p.clearance_weight == p.collision_weight
    assert running_state_cost(near, g, p, grid) == pytest.approx(1e8)
    soft = CostParams(inflation=0.5, clearance_weight=1e5)
    assert running_state_cost(near, g, soft, grid) == pytest.approx(1e5)
    # a hit at the center point is charged once, at the full weight
    assert running_state_cost(inside, g, soft, grid) == pytest.approx(1e8 + 2.5 * 0.8 ** 2)


def test_limit_indicator_examples():
    p = CostParams()
    assert limit_indicator(make_state((1, 1, 1), velocity=(1.6, 0, 0)), p)
    assert not limit_indicator(make_state((1, 1, 1), velocity=(1.5, 0, 0)), p)
    assert not limit_indicator(make_state((1, 1, 1)), p)
    assert limit_indicator(make_state((1, 1, 8.6)), p)
    assert limit_indicator(make_state((1, 1, 1), euler=(1.5, 0, 0)), p)
    assert limit_indicator(make_state((1, 1, 1), euler=(0, -1.5, 0)), p)
    assert not limit_indicator(make_state((1, 1, 1), euler=(1.4, 1.4, 3.0)), p)


def test_q_switch_table():
    assert CostParams(v_max=1.5).q_diag == (2.5, 2.5, 5, 1, 1, 50, 0, 0, 0, 0, 0, 0)
    assert CostParams(v_max=1.0).q_diag == Q_SLOW
    assert CostParams(v_max=2.0).q_diag == (5, 5, 15, 30, 30, 50, 0, 0, 0, 0, 0, 0)
    assert q_for_speed(1.5000001) == Q_FAST
    assert CostParams(q_diag=(1,) * 12).q_diag == (1.0,) * 12


def test_invalid_params():
    for kw in ({"v_max": 0}, {"collision_weight": -1}, {"q_diag": (1,) * 11},
               {"terminal": "bogus"}, {"inflation": -0.1}, {"clearance_weight": -1}):
        with pytest.raises(ValueError):
            CostParams(**kw)


@pytest.mark.parametrize("q", [Q_SLOW, Q_FAST])
def test_penalty_dominance(q):
    # largest residual per component over the arena box: positions span the
    # arena, angles span (-pi, pi] and yaw is wrapped, rates carry zero weight
    span = [ARENA[0], ARENA[1], ARENA[2], math.pi, math.pi, math.pi, 0, 0, 0, 0, 0, 0]
    worst = sum(w * s * s for w, s in zip(q, span))
    assert worst < 1e6 < 1e8
    # the corner state far from a goal in the opposite corner attains it
    grid = arena()
    g = GoalSpec((0.0, 0.0, 0.0), yaw=math.pi)
    x = make_state((40.0 - 1e-9, 40.0 - 1e-9, 8.5 - 1e-9), euler=(math.pi, math.pi, 0.0))
    p = CostParams(q_diag=q, limit_weight=0.0)
    assert running_state_cost(x, g, p, grid) == pytest.approx(worst, rel=1e-6)
    grid.cells[39, 39, 42] = OCCUPIED
    assert running_state_cost(x, g, p, grid) >= 1e8


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=12, max_size=12))
def test_cost_non_negative(vals):
    x = np.array(vals)
    assert running_state_cost(x, GoalSpec((20, 20, 4)), CostParams(), arena()) >= 0.0


def test_batch_matches_scalar():
    rng = np.random.default_rng(4)
    grid = arena()
    grid.cells[rng.integers(0, 40, 300), rng.integers(0, 40, 300), rng.integers(0, 43, 300)] = OCCUPIED
    g = GoalSpec((20, 20, 4), yaw=2.5)
    p = CostParams(inflation=0.3, clearance_weight=1e6)
    X = np.column_stack([rng.uniform(-1, 41, (500, 2)), rng.uniform(-0.5, 9, 500),
                         rng.uniform(-2, 2, (500, 3)), rng.uniform(-2, 2, (500, 6))])
    xdes = g.desired_state()
    batch = state_cost_batch(X.copy(), xdes, np.asarray(p.q_diag), p.packed(), grid.cells, grid_packed(grid))
    scalar = [running_state_cost(x, g, p, grid) for x in X]
    assert np.allclose(batch, scalar, rtol=1e-12, atol=1e-6)


def test_yaw_residual_is_wrapped():
    g = GoalSpec((1, 1, 1), yaw=math.pi - 0.1)
    x = make_state((1, 1, 1), euler=(0, 0, -math.pi + 0.1))
    assert running_state_cost(x, g, CostParams(), arena()) == pytest.approx(50 * 0.2 ** 2, rel=1e-9)
    raw = CostParams(wrap_yaw=False)
    assert running_state_cost(x, g, raw, arena()) == pytest.approx(50 * (2 * math.pi - 0.2) ** 2, rel=1e-9)


def test_desired_yaw_examples():
    assert desired_yaw((0, 0), (1, 0)) == 0.0
    assert desired_yaw((0, 0), (0, 1)) == pytest.approx(math.pi / 2)
    assert desired_yaw((23, 38), (40, 23)) == pytest.approx(math.atan2(-15, 17), abs=1e-15)
    assert desired_yaw((23, 38), (40, 23)) == pytest.approx(-0.7230, abs=1e-4)
    assert desired_yaw((1, 1), (1, 1 + 1e-9), previous=0.3) == 0.3


@settings(max_examples=200, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(-20, 20), st.floats(-20, 20),
       st.floats(-math.pi, math.pi))
def test_desired_yaw_rotation_equivariant(x0, y0, x1, y1, a):
    if math.hypot(x1 - x0, y1 - y0) < 1e-3:
        return
    c, s = math.cos(a), math.sin(a)
    rot = lambda p: (c * p[0] - s * p[1], s * p[0] + c * p[1])  # noqa: E731
    base = desired_yaw((x0, y0), (x1, y1))
    turned = desired_yaw(rot((x0, y0)), rot((x1, y1)))
    diff = (turned - base - a + math.pi) % (2 * math.pi) - math.pi
    assert abs(diff) < 1e-9


def test_goal_reached_boundary():
    g = GoalSpec((0, 0, 1))
    assert goal_reached(make_state((0, 0, 1)), g)
    assert goal_reached(make_state((0.5, 0, 1)), g, 0.5)
    assert not goal_reached(make_state((0.6, 0, 1)), g, 0.5)
    with pytest.raises(ValueError):
        goal_reached(make_state(), g, 0.0)


def test_goal_validation():
    with pytest.raises(ValueError):
        GoalSpec((1, 2))
    with pytest.raises(ValueError):
        GoalSpec((1, 2, float("nan")))
