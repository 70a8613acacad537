"""Bodies, poses, and their state-rate linearizations."""

import numpy as np
import pytest

from convexavoid.geometry import (BodyAtState, PolytopeBody, make_circle,
                                  make_circle_intersection, make_ellipse,
                                  make_superellipse, pose_from_state,
                                  rotation_2d, verify_licq_vertices)


def test_rotation_is_orthonormal():
    R = rotation_2d(0.7)
    assert np.allclose(R @ R.T, np.eye(2))
    assert np.isclose(np.linalg.det(R), 1.0)


def test_pose_from_state():
    p, R = pose_from_state(np.array([1.0, -2.0, np.pi / 2]))
    assert np.allclose(p, [1.0, -2.0])
    assert np.allclose(R @ np.array([1.0, 0.0]), [0.0, 1.0], atol=1e-12)


@pytest.mark.parametrize("body", [
    make_circle(1.2),
    make_ellipse(1.5, 0.8),
    make_superellipse(1.5, 1.0, 4),
    make_superellipse(2.0, 1.0, 6),
    make_circle_intersection([[-0.5, 0.0], [0.5, 0.0]], [1.0, 1.0]),
])
def test_level_gradients_match_finite_differences(body):
    rng = np.random.default_rng(0)
    x = np.array([0.3, -0.4, 0.6])
    for _ in range(5):
        z = rng.uniform(-0.3, 0.3, size=2)
        ev = body.evaluate(x, z)
        step = 1e-6
        for d in range(2):
            dz = np.zeros(2)
            dz[d] = step
            fd = (body.evaluate(x, z + dz).values
                  - body.evaluate(x, z - dz).values) / (2 * step)
            assert np.allclose(ev.grad_z[:, d], fd, atol=1e-5)


def test_strict_body_contains_center():
    body = make_ellipse(1.5, 1.0)
    x = np.array([2.0, 1.0, 0.4])
    inside, margin = body.contains(x, np.array([2.0, 1.0]))
    assert inside and margin < 0
    outside, _ = body.contains(x, np.array([5.0, 5.0]))
    assert not outside


def test_polytope_from_vertices_round_trip():
    square = PolytopeBody.from_vertices(
        [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
    assert square.num_constraints == 4
    got = square.vertices()
    expect = {(1, 1), (-1, 1), (-1, -1), (1, -1)}
    assert {tuple(np.round(v, 9)) for v in got} == expect


def test_polytope_world_transform():
    square = PolytopeBody.from_vertices(
        [[1.0, 0.5], [-1.0, 0.5], [-1.0, -0.5], [1.0, -0.5]])
    x = np.array([3.0, -1.0, np.pi / 2])
    A, b = square.at_state(x)
    p, R = pose_from_state(x)
    for v in square.vertices():
        w = p + R @ v
        assert np.all(A @ w <= b + 1e-9)
    # a point clearly outside must violate some row
    assert np.any(A @ (p + np.array([2.0, 0.0])) > b)


def test_polytope_rates_match_finite_differences():
    body = PolytopeBody.from_vertices(
        [[1.2, 0.4], [-0.8, 0.9], [-1.0, -0.6], [0.7, -1.0]])
    x = np.array([0.5, -0.3, 0.8])
    f = np.array([0.1, -0.2, 0.3])
    g = np.eye(3)
    u = np.array([0.4, 0.2, -0.5])
    rates = body.rates(x, f, g)
    Adot, bdot = rates.at_input(u)
    xdot = f + g @ u
    step = 1e-7
    A1, b1 = body.at_state(x + step * xdot)
    A0, b0 = body.at_state(x - step * xdot)
    assert np.allclose(Adot, (A1 - A0) / (2 * step), atol=1e-5)
    assert np.allclose(bdot, (b1 - b0) / (2 * step), atol=1e-5)


def test_licq_detects_duplicate_face():
    square = PolytopeBody.from_vertices(
        [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
    assert verify_licq_vertices(square).ok
    dup = PolytopeBody(np.vstack([square.A0, square.A0[0]]),
                       np.concatenate([square.b0, [square.b0[0]]]))
    assert not verify_licq_vertices(dup).ok


def test_body_at_state_caches_world_data():
    body = PolytopeBody.from_vertices([[1, 0], [0, 1], [-1, -1]])
    at = BodyAtState.of(body, np.array([1.0, 2.0, 0.3]))
    A, b = body.at_state(np.array([1.0, 2.0, 0.3]))
    assert np.allclose(at.A, A) and np.allclose(at.b, b)
