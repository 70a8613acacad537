"""Minimum-distance solvers for both body kinds."""

import numpy as np
import pytest

from convexavoid.distance import (min_dist_polytope_dual,
                                  min_dist_polytope_primal, min_dist_strict,
                                  polytope_contact_sites)
from convexavoid.geometry import BodyAtState, PolytopeBody, make_circle
from convexavoid.verify import (random_disjoint_pair, random_polygon,
                                random_strict_body, _polytope_h, _strict_h)


def circle_pair(d, r_i=0.8, r_j=0.6):
    bi = BodyAtState.of(make_circle(r_i), np.array([0.0, 0.0, 0.0]))
    bj = BodyAtState.of(make_circle(r_j), np.array([d, 0.0, 0.0]))
    return bi, bj


def test_circle_pair_analytic():
    bi, bj = circle_pair(3.0)
    sol = min_dist_strict(bi, bj)
    assert sol.converged
    assert np.isclose(sol.h, (3.0 - 0.8 - 0.6) ** 2, atol=1e-9)
    assert np.allclose(sol.z_i, [0.8, 0.0], atol=1e-7)
    assert np.allclose(sol.z_j, [3.0 - 0.6, 0.0], atol=1e-7)


def test_strict_solver_warm_start_converges_faster():
    bi, bj = circle_pair(3.0)
    cold = min_dist_strict(bi, bj)
    bj2 = BodyAtState.of(bj.body, bj.x + np.array([0.01, 0.0, 0.0]))
    warm = min_dist_strict(bi, bj2, warm=cold)
    assert warm.converged
    assert np.isclose(warm.h, (3.01 - 1.4) ** 2, atol=1e-8)


def test_strict_kkt_residual_small():
    rng = np.random.default_rng(5)
    for _ in range(20):
        bi, bj = random_disjoint_pair(rng, random_strict_body, _strict_h)
        sol = min_dist_strict(bi, bj)
        assert sol.converged
        assert sol.kkt_residual <= 1e-9
        # s matches the closest points
        assert np.allclose(sol.s, sol.z_i - sol.z_j)
        assert np.isclose(sol.h, float(sol.s @ sol.s))


def test_polytope_primal_dual_agree():
    rng = np.random.default_rng(7)
    for _ in range(30):
        bi, bj = random_disjoint_pair(rng, random_polygon, _polytope_h)
        h_primal = min_dist_polytope_primal(bi, bj).h
        h_dual = min_dist_polytope_dual(bi, bj)[0]
        assert abs(h_primal - h_dual) <= 1e-6


def test_polytope_dual_separating_vector():
    # two unit squares 3 apart: h = 1, s = (1, 0) via s = -A_i' lam_i / 2
    sq = PolytopeBody.from_vertices([[1, 1], [-1, 1], [-1, -1], [1, -1]])
    bi = BodyAtState.of(sq, np.zeros(3))
    bj = BodyAtState.of(sq, np.array([3.0, 0.0, 0.0]))
    h, lam_i, lam_j, _ = min_dist_polytope_dual(bi, bj)
    assert np.isclose(h, 1.0, atol=1e-8)
    s = -0.5 * bi.A.T @ lam_i
    assert np.allclose(s, [-1.0, 0.0], atol=1e-6)


def test_polytope_dual_polish_is_stationary():
    # polished multipliers satisfy the support-restricted optimality
    # system to near machine precision
    rng = np.random.default_rng(11)
    for _ in range(20):
        bi, bj = random_disjoint_pair(rng, random_polygon, _polytope_h)
        h, lam_i, lam_j, _ = min_dist_polytope_dual(bi, bj)
        assert np.allclose(bi.A.T @ lam_i + bj.A.T @ lam_j, 0.0, atol=1e-9)
        w = bi.A.T @ lam_i
        obj = -0.25 * w @ w - lam_i @ bi.b - lam_j @ bj.b
        assert np.isclose(obj, h, atol=1e-8)


def test_intersecting_polytopes_flagged():
    sq = PolytopeBody.from_vertices([[1, 1], [-1, 1], [-1, -1], [1, -1]])
    bi = BodyAtState.of(sq, np.zeros(3))
    bj = BodyAtState.of(sq, np.array([0.5, 0.0, 0.0]))
    sol = min_dist_polytope_primal(bi, bj)
    assert sol.intersecting
    assert sol.h <= 1e-9


def test_contact_sites_on_parallel_edges():
    # two long rectangles with parallel facing edges have a continuum of
    # closest points; the site enumeration returns multiple distinct
    # vertex-anchored supports at the same distance
    rect = PolytopeBody.from_vertices(
        [[2.0, 0.5], [-2.0, 0.5], [-2.0, -0.5], [2.0, -0.5]])
    bi = BodyAtState.of(rect, np.zeros(3))
    bj = BodyAtState.of(rect, np.array([0.0, 2.0, 0.0]))
    h = min_dist_polytope_dual(bi, bj)[0]
    assert np.isclose(h, 1.0, atol=1e-8)
    sites = polytope_contact_sites(bi, bj, h)
    assert len(sites) >= 2
    for hs, li, lj in sites:
        assert hs >= h - 1e-9
        assert np.all(li >= 0) and np.all(lj >= 0)


def test_contact_sites_respect_window():
    sq = PolytopeBody.from_vertices([[1, 1], [-1, 1], [-1, -1], [1, -1]])
    bi = BodyAtState.of(sq, np.zeros(3))
    bj = BodyAtState.of(sq, np.array([4.0, 0.0, 0.0]))
    h = min_dist_polytope_dual(bi, bj)[0]
    for hs, _, _ in polytope_contact_sites(bi, bj, h, window=0.5):
        assert hs <= h + 0.5 + 1e-9
