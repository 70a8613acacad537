"""Dense QP/LP interface: optima, duals, statuses."""

import numpy as np

from convexavoid.qp import QuadProgram, solve_lp, solve_qp


def test_unconstrained_qp():
    rep = solve_qp(QuadProgram(H=2.0 * np.eye(2), f=np.array([-2.0, 4.0])))
    assert rep.status == "optimal"
    assert np.allclose(rep.x, [1.0, -2.0], atol=1e-8)


def test_equality_constrained_qp():
    # min ||x||^2 s.t. x0 + x1 = 1 -> x = (0.5, 0.5)
    rep = solve_qp(QuadProgram(
        H=2.0 * np.eye(2), f=np.zeros(2),
        A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([1.0])))
    assert rep.status == "optimal"
    assert np.allclose(rep.x, [0.5, 0.5], atol=1e-7)
    # stationarity: 2x + A' y = 0 -> y = -1
    assert np.allclose(rep.dual_eq, [-1.0], atol=1e-6)


def test_active_inequality_dual_sign():
    # min (x - 2)^2 s.t. x <= 1: active at x = 1 with multiplier 2
    rep = solve_qp(QuadProgram(
        H=np.array([[2.0]]), f=np.array([-4.0]),
        A_in=np.array([[1.0]]), b_in=np.array([1.0])))
    assert rep.status == "optimal"
    assert np.isclose(rep.x[0], 1.0, atol=1e-7)
    assert np.isclose(rep.dual_in[0], 2.0, atol=1e-5)


def test_box_bounds():
    rep = solve_qp(QuadProgram(
        H=np.eye(2), f=np.array([-10.0, 10.0]),
        lb=np.array([-1.0, -1.0]), ub=np.array([1.0, 1.0])))
    assert rep.status == "optimal"
    assert np.allclose(rep.x, [1.0, -1.0], atol=1e-7)


def test_infeasible_qp_detected():
    rep = solve_qp(QuadProgram(
        H=np.eye(1), f=np.zeros(1),
        A_in=np.array([[1.0], [-1.0]]), b_in=np.array([-1.0, -1.0])))
    assert rep.status == "infeasible"


def test_lp_basic_and_duals():
    # max x0 + x1 s.t. x0 + 2 x1 <= 4, x in [0, 3]^2
    rep = solve_lp(np.ones(2), A_in=np.array([[1.0, 2.0]]),
                   b_in=np.array([4.0]),
                   bounds=(np.zeros(2), np.full(2, 3.0)), maximize=True)
    assert rep.status == "optimal"
    assert np.allclose(rep.x, [3.0, 0.5], atol=1e-9)
    assert np.isclose(rep.objective, 3.5, atol=1e-9)
    assert np.all(rep.dual_in >= -1e-9)
    assert rep.residuals["primal_in"] <= 1e-9


def test_lp_large_box_stays_exact():
    # the multiplier-rate LPs use M = 1e4 boxes; the solution must sit
    # exactly on the box without drift
    M = 1e4
    rep = solve_lp(np.array([1.0, -1.0]),
                   A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([0.0]),
                   bounds=(np.full(2, -M), np.full(2, M)), maximize=True)
    assert rep.status == "optimal"
    assert np.allclose(rep.x, [M, -M])


def test_lp_infeasible_and_unbounded():
    infeas = solve_lp(np.ones(1), A_in=np.array([[1.0], [-1.0]]),
                      b_in=np.array([-1.0, -1.0]))
    assert infeas.status == "infeasible"
    unb = solve_lp(np.ones(1), maximize=True)
    assert unb.status == "unbounded"
