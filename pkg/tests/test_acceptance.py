"""End-to-end acceptance checks at their stated tolerances.

Each test prints one PASS line with the measured quantity so the run log
doubles as a release report.  The two closed-loop regressions simulate
the full 60 s scenarios and take a few minutes combined.
"""

import time

import numpy as np
import pytest

from convexavoid.distance import min_dist_strict
from convexavoid.geometry import BodyAtState, make_circle
from convexavoid.scenario import (shipped_polytope_scenario,
                                  shipped_strict_scenario)
from convexavoid.sensitivity import (assemble_qv, directional_derivative,
                                     grad_h_strict, _pair_blocks)
from convexavoid.verify import (_safety_metrics, _strict_h,
                                random_disjoint_pair, random_strict_body,
                                suite_duality, suite_filter_projection,
                                suite_gradients, suite_polytope_rate)

REGRESSION_BUDGET_S = 300.0


@pytest.fixture(scope="module")
def strict_metrics():
    t0 = time.perf_counter()
    metrics = _safety_metrics(shipped_strict_scenario())
    metrics["wall_s"] = time.perf_counter() - t0
    return metrics


@pytest.fixture(scope="module")
def polytope_metrics():
    t0 = time.perf_counter()
    metrics = _safety_metrics(shipped_polytope_scenario())
    metrics["wall_s"] = time.perf_counter() - t0
    return metrics


def test_polytope_strong_duality():
    result = suite_duality(cases=200)
    assert result.passed, result.summary()
    assert result.elapsed_s < 5.0
    print(f"\nPASS strong duality: worst |h_primal - h_dual| = "
          f"{result.details['worst_gap']:.2e} <= 1e-6 over 200 pairs "
          f"in {result.elapsed_s:.2f} s")


def test_circle_pair_analytic_oracle():
    rng = np.random.default_rng(12)
    worst_h = 0.0
    worst_g = 0.0
    for _ in range(100):
        r_i = float(rng.uniform(0.3, 1.0))
        r_j = float(rng.uniform(0.3, 1.0))
        x_i = np.array([*rng.uniform(-5, 5, 2), rng.uniform(-np.pi, np.pi)])
        gap = rng.uniform(0.3, 4.0)
        ang = rng.uniform(0, 2 * np.pi)
        x_j = x_i + np.array([*((r_i + r_j + gap)
                                * np.array([np.cos(ang), np.sin(ang)])),
                              0.0])
        bi = BodyAtState.of(make_circle(r_i), x_i)
        bj = BodyAtState.of(make_circle(r_j), x_j)
        sol = min_dist_strict(bi, bj)
        d = float(np.linalg.norm(x_i[:2] - x_j[:2]))
        worst_h = max(worst_h, abs(sol.h - (d - r_i - r_j) ** 2))
        grad = grad_h_strict(sol, assemble_qv(bi, bj, sol))
        direction = (x_i[:2] - x_j[:2]) / d
        coef = 2.0 * (d - r_i - r_j)
        expect = np.zeros(6)
        expect[:2] = coef * direction
        expect[3:5] = -coef * direction
        worst_g = max(worst_g, float(np.max(np.abs(grad - expect))))
    assert worst_h <= 1e-8 and worst_g <= 1e-8
    print(f"\nPASS circle oracle: worst h error {worst_h:.2e}, "
          f"worst gradient error {worst_g:.2e} <= 1e-8 over 100 configs")


def test_strict_directional_derivative():
    result = suite_gradients(cases=100)
    assert result.passed, result.summary()
    print(f"\nPASS directional derivative: worst relative error "
          f"{result.details['worst_rel_err']:.2e} <= 1e-3, worst rate "
          f"residual {result.details['worst_residual']:.2e} <= 1e-8 "
          f"over 100 pairs")


def test_second_order_condition_at_strict_solutions():
    rng = np.random.default_rng(13)
    cases = 100
    regularized = 0
    min_eig = np.inf
    for _ in range(cases):
        bi, bj = random_disjoint_pair(rng, random_strict_body, _strict_h)
        sol = min_dist_strict(bi, bj)
        hess_L = _pair_blocks(bi, bj, sol)[3]
        min_eig = min(min_eig, float(np.linalg.eigvalsh(hess_L)[0]))
        dd = directional_derivative(bi, bj, sol, sol.index_sets,
                                    rng.standard_normal(6))
        regularized += dd.regularized
    assert min_eig > 0.0
    assert regularized <= 0.01 * cases
    print(f"\nPASS second-order condition: min Lagrangian-Hessian "
          f"eigenvalue {min_eig:.2e} > 0, {regularized} regularization "
          f"events (<= 1%) over {cases} pairs")


def test_polytope_rate_lower_bound():
    result = suite_polytope_rate(cases=100)
    assert result.passed, result.summary()
    print(f"\nPASS polytope rate bound: worst excess over realized rate "
          f"{result.details['worst_excess']:.2e} <= 1e-4, equality error "
          f"{result.details['worst_eq_err']:.2e} <= 1e-3 on "
          f"{result.details['tight_cases']} fixed-support cases")


def _check_regression(metrics, name):
    assert not metrics["breach"], f"{name}: safety margin violated"
    assert metrics["solver_failures"] == 0
    assert metrics["min_h"] >= 0.1
    assert metrics["max_goal_dist"] <= 0.5
    assert metrics["wall_s"] < REGRESSION_BUDGET_S
    print(f"\nPASS safety regression ({name}): min h = "
          f"{metrics['min_h']:.4f} >= 0.1 over {metrics['steps']} steps, "
          f"max goal distance {metrics['max_goal_dist']:.3f} <= 0.5, "
          f"wall {metrics['wall_s']:.0f} s < {REGRESSION_BUDGET_S:.0f} s")


def test_safety_regression_strict(strict_metrics):
    _check_regression(strict_metrics, "strict")


def test_safety_regression_polytope(polytope_metrics):
    _check_regression(polytope_metrics, "polytope")


def test_exponential_barrier_envelope(strict_metrics, polytope_metrics):
    for name, m in (("strict", strict_metrics),
                    ("polytope", polytope_metrics)):
        assert m["worst_envelope_deficit"] <= m["envelope_slack"], name
    print(f"\nPASS exponential envelope: worst deficit "
          f"{strict_metrics['worst_envelope_deficit']:.2e} (strict) / "
          f"{polytope_metrics['worst_envelope_deficit']:.2e} (polytope) "
          f"within slack {strict_metrics['envelope_slack']:.3f}")


def test_timing_report(strict_metrics, polytope_metrics):
    for name, m in (("strict", strict_metrics),
                    ("polytope", polytope_metrics)):
        for section in ("dist", "filter", "total"):
            stats = m["timing"][section]
            assert set(stats) == {"mean_ms", "std_ms", "p50_ms",
                                  "p99_ms", "max_ms"}, (name, section)
    p50_s = strict_metrics["timing"]["total"]["p50_ms"]
    p50_p = polytope_metrics["timing"]["total"]["p50_ms"]
    # the 85 ms target is hardware-dependent and reported, not enforced
    target_met = "met" if max(p50_s, p50_p) <= 85.0 else "NOT met"
    print(f"\nPASS timing report: p50 total {p50_s:.1f} ms (strict), "
          f"{p50_p:.1f} ms (polytope); 85 ms reference {target_met} "
          f"(non-blocking)")


def test_filter_projection_property():
    result = suite_filter_projection(cases=50)
    assert result.passed, result.summary()
    print(f"\nPASS filter projection: worst |u* - u_nom| = "
          f"{result.details['worst_perturbation']:.2e} <= 1e-7 "
          f"over 50 safe states, both filters")


def test_plot_pipeline(tmp_path):
    """[SECONDARY] plots package renders both figure styles from artifacts."""
    matplotlib = pytest.importorskip("matplotlib")
    from click.testing import CliRunner

    from convexavoid.cli import main as convexavoid_main
    from convexavoid.scenario import dump_scenario

    try:
        from convexavoid_plots.cli import main as plot_main
    except ModuleNotFoundError:
        pytest.skip("plots package not installed")

    scn = shipped_strict_scenario()
    scn.horizon = 0.5
    scenario_file = tmp_path / "strict.toml"
    scenario_file.write_text(dump_scenario(scn))
    out = tmp_path / "run"
    res = CliRunner().invoke(convexavoid_main,
                             ["run", str(scenario_file), "--out", str(out)])
    assert res.exit_code == 0, res.output

    fig_dir = tmp_path / "figs"
    res = CliRunner().invoke(plot_main,
                             [str(out / "summary.json"),
                              "--snapshots", "0.0,0.4",
                              "--out", str(fig_dir)])
    assert res.exit_code == 0, res.output
    assert (fig_dir / "snapshots.png").exists()
    assert (fig_dir / "ncbf.png").exists()
    print("\nPASS plot pipeline: snapshot panel and barrier-vs-time "
          "figure rendered from strict-scenario artifacts")
