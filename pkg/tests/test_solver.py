import json

import numpy as np
import pytest

from conftest import feasible_plans
from mmnoma.cvx_solver import (
    CATALOG,
    Constraint,
    ConvexSubproblem,
    Status,
    build_power_subproblem,
    cross_solve,
    dump_subproblem,
    solve,
)
from mmnoma.errors import InvalidInputError
from mmnoma.noma_core import decoding_order, zf_detection, zf_model


def _lp(rows, n, x0):
    cons = [Constraint("affine", np.asarray(b, float), c) for b, c in rows]
    obj = np.zeros(n)
    obj[-1] = 1.0
    return ConvexSubproblem(n, cons, obj, x0=np.asarray(x0, float))


def test_trivial_bound():
    res = solve(_lp([([1.0], -3.0)], 1, [0.0]), tol=1e-9)
    assert res.status is Status.OPTIMAL and res.ok
    assert res.z == pytest.approx(3.0, abs=1e-8)


def test_phase_one_from_infeasible_start():
    # x >= 2, z <= 5 - x
    prob = _lp([([-1.0, 0.0], 2.0), ([1.0, 1.0], -5.0), ([1.0, 0.0], -10.0)], 2, [0.0, 0.0])
    res = solve(prob, tol=1e-9)
    assert res.ok and res.phase1_steps > 0
    assert res.z == pytest.approx(3.0, abs=1e-7)


def test_infeasible_status():
    prob = _lp([([1.0, 0.0], 1.0), ([-1.0, 0.0], 1.0), ([0.0, 1.0], 0.0)], 2, [0.0, 0.0])
    assert solve(prob).status is Status.INFEASIBLE


def test_unbounded_status():
    prob = _lp([([1.0, 0.0], -1.0)], 2, [0.0, 0.0])
    assert solve(prob).status is Status.UNBOUNDED


def test_log_constraint():
    # z <= log(x + 1), x <= e - 1  ->  z* = 1
    cons = [
        Constraint("log-rate", np.array([0.0, 1.0]), 0.0, w=1.0, a=np.array([1.0, 0.0]), d=1.0),
        Constraint("box", np.array([1.0, 0.0]), -(np.e - 1)),
    ]
    res = solve(ConvexSubproblem(2, cons, np.array([0.0, 1.0]), x0=np.array([0.5, -1.0])), tol=1e-10)
    assert res.ok and res.z == pytest.approx(1.0, abs=1e-8)


def test_norm_ball():
    # maximize z s.t. z <= x1 + x2, ||x||^2 <= 1  ->  sqrt(2)
    cons = [
        Constraint("affine", np.array([-1.0, -1.0, 1.0]), 0.0),
        Constraint("norm-ball", np.zeros(3), -1.0, A=np.diag([2.0, 2.0, 0.0])),
    ]
    res = solve(ConvexSubproblem(3, cons, np.array([0, 0, 1.0]), x0=np.zeros(3)), tol=1e-10)
    assert res.z == pytest.approx(np.sqrt(2), abs=1e-7)


def test_constraint_validation():
    with pytest.raises(InvalidInputError):
        Constraint("cone", np.zeros(1))
    with pytest.raises(InvalidInputError):
        Constraint("log-rate", np.zeros(1), w=1.0)
    with pytest.raises(InvalidInputError):
        solve(_lp([([1.0], -3.0)], 1, [0.0]), x0=np.zeros(2))
    assert set(CATALOG) >= {"affine", "box", "norm-ball"}


def test_single_user_power_at_budget(tiny_config):
    plan = feasible_plans(tiny_config, 1)[0]
    V = zf_detection(plan)
    model = zf_model(decoding_order(plan.hbar))
    P_hat = np.full(4, 0.5 * tiny_config.p_max)
    free = model.__class__("free", np.zeros((4, 4), bool), np.ones(4))
    prob = build_power_subproblem(0.0, V, P_hat, plan, tiny_config, free)
    res = solve(prob, tol=1e-10)
    assert res.ok
    P = res.x[prob.layout["P"]]
    # without interference the weakest user's rate is increasing in its own power
    gains = np.abs(V @ plan.hbar_flat.T) ** 2
    own = gains[np.arange(4) // 2, np.arange(4)]
    weakest = int(np.argmin(own))
    assert P[weakest] == pytest.approx(tiny_config.p_max, rel=1e-6)
    assert res.z == pytest.approx(np.log2(1 + own[weakest] * tiny_config.p_max / tiny_config.noise_power), rel=1e-7)


def test_cross_solver_agrees_on_power_problem(tiny_config, rng):
    plan = feasible_plans(tiny_config, 1)[0]
    V = zf_detection(plan)
    model = zf_model(decoding_order(plan.hbar))
    prob = build_power_subproblem(5.0, V, np.full(4, tiny_config.p_max), plan, tiny_config, model)
    a = solve(prob, tol=1e-10)
    b = cross_solve(prob, prob.x0)
    assert a.ok and b.ok
    assert b.z == pytest.approx(a.z, rel=1e-5)


def test_dump_round_trip(tmp_path):
    prob = _lp([([1.0], -3.0)], 1, [0.0])
    path = dump_subproblem(prob, tmp_path / "p.json")
    doc = json.loads(path.read_text())
    assert doc["n"] == 1 and len(doc["constraints"]) == 1


def test_dump_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        dump_subproblem(_lp([([1.0], -3.0)], 1, [0.0]), blocker / "p.json")
