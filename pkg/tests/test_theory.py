import numpy as np
import pytest

from mtunlearn import theory
from mtunlearn.errors import DimensionError, EmptySubsetError
from mtunlearn.theory import (
    QuadraticPair,
    QuadraticProblem,
    actual_interference,
    aggregate_interference,
    constraint_plane_samples,
    optimal_direction,
    predict_interference,
    quadratic_cost,
    random_quadratic_problem,
    residual_order_fit,
    run_all_checks,
)


def small_quadratic(rho=0.01, seed=0):
    return random_quadratic_problem(
        dim=10,
        n_instances=6,
        n_tasks=2,
        out_dim=2,
        n_forget_instances=2,
        rho=rho,
        seed=seed,
    )


def test_minimizers_satisfy_stationarity():
    prob = small_quadratic()
    assert np.linalg.norm(prob.grad_retain(prob.theta_r)) <= 1e-9
    combined = prob.grad_retain(prob.theta_star) + prob.rho * prob.grad_forget(
        prob.theta_star
    )
    assert np.linalg.norm(combined) <= 1e-9


def test_empty_pair_sets_rejected():
    prob = small_quadratic()
    with pytest.raises(EmptySubsetError):
        QuadraticProblem(retain_pairs=[], forget_pairs=prob.forget_pairs, rho=0.1, ridge=1e-2)
    with pytest.raises(EmptySubsetError):
        aggregate_interference(prob, [])
    with pytest.raises(DimensionError):
        random_quadratic_problem(
            dim=4, n_instances=2, n_tasks=2, out_dim=1,
            n_forget_instances=2, rho=0.1, seed=0,
        )


def test_prediction_close_at_small_rho():
    prob = random_quadratic_problem(
        dim=10,
        n_instances=8,
        n_tasks=3,
        out_dim=2,
        n_forget_instances=2,
        rho=0.01,
        seed=1000,
    )
    actual = np.array([actual_interference(prob, q) for q in prob.retain_pairs])
    predicted = np.array([predict_interference(prob, q) for q in prob.retain_pairs])
    assert np.linalg.norm(actual - predicted) <= 0.10 * np.linalg.norm(actual)


def test_aggregation_is_exactly_linear():
    prob = small_quadratic()
    subset = prob.retain_pairs[:5]
    direct = aggregate_interference(prob, subset)
    summed = sum(predict_interference(prob, q) for q in subset)
    assert direct == pytest.approx(summed, abs=1e-12)


def test_residual_is_second_order_in_rho():
    def factory(rho):
        return small_quadratic(rho=rho, seed=3)

    fit = residual_order_fit(factory, [0.01, 0.02, 0.04])
    assert fit["slope"] >= 1.7
    # halving rho roughly quarters the residual
    ratio = fit["residual"][1] / fit["residual"][0]
    assert 3.0 <= ratio <= 5.0
    with pytest.raises(ValueError):
        residual_order_fit(factory, [0.0, 0.01])


def test_optimal_direction_satisfies_constraint_and_beats_samples():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((8, 8))
    h = m @ m.T / 8 + 0.5 * np.eye(8)
    g = rng.standard_normal(8)
    gamma = 1.3
    delta = optimal_direction(h, g, gamma)
    assert float(g @ delta) == pytest.approx(gamma, rel=1e-10)
    best = quadratic_cost(h, delta)
    for sample in constraint_plane_samples(g, delta, 200, seed=1):
        assert float(g @ sample) == pytest.approx(gamma, rel=1e-8)
        assert quadratic_cost(h, sample) >= best - 1e-9


def test_optimal_direction_eigenvector_case_matches_raw_gradient():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((6, 6))
    h = m @ m.T / 6 + 0.5 * np.eye(6)
    _, evecs = np.linalg.eigh(h)
    g = evecs[:, 2]
    delta = optimal_direction(h, g, gamma=0.7)
    raw = (0.7 / float(g @ g)) * g
    assert quadratic_cost(h, raw) == pytest.approx(quadratic_cost(h, delta), abs=1e-12)


def test_optimal_direction_input_validation():
    h = np.eye(3)
    with pytest.raises(ValueError):
        optimal_direction(h, np.ones(3), gamma=0.0)
    with pytest.raises(DimensionError):
        optimal_direction(h, np.zeros(3), gamma=1.0)


def test_all_suites_pass_and_are_deterministic():
    r1 = run_all_checks(seed=0)
    assert r1["all_passed"], [s for s in r1["suites"] if not s["passed"]]
    assert len(r1["suites"]) == 5
    r2 = run_all_checks(seed=0)
    assert theory.report_to_json(r1) == theory.report_to_json(r2)


def test_report_json_is_loadable():
    import json

    report = run_all_checks(seed=1)
    doc = json.loads(theory.report_to_json(report))
    assert doc["schema_version"] == theory.THEORY_SCHEMA_VERSION
    assert {s["suite"] for s in doc["suites"]} == {
        "first_order_interference",
        "aggregation_linearity",
        "optimal_direction",
        "projection_bound",
        "orthogonalization_identity",
    }
