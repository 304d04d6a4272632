import numpy as np
import pytest

from src.optimization.gradcheck import finite_difference_gradient, gradient_error
from src.optimization.ncg import LineSearchConfig, OptimizerConfig, minimize
from src.utils.exceptions import ConfigError


def sphere(x):
    return float(x @ x), 2.0 * x


def rosenbrock(x):
    a, b = x
    value = (1.0 - a) ** 2 + 100.0 * (b - a * a) ** 2
    grad = np.array([
        -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
        200.0 * (b - a * a),
    ])
    return float(value), grad


def test_quadratic_reaches_zero():
    cfg = OptimizerConfig(max_iterations=60, rel_f_tol=1e-20, grad_tol=1e-10)
    outcome = minimize(sphere, np.array([3.0, -4.0, 1.0, 0.5]), cfg)
    assert outcome.final_f <= 1e-12
    assert outcome.iterations <= 60
    assert outcome.converged


def test_rosenbrock_from_standard_start():
    cfg = OptimizerConfig(max_iterations=10000, rel_f_tol=1e-30, grad_tol=1e-14)
    outcome = minimize(rosenbrock, np.array([-1.2, 1.0]), cfg)
    assert outcome.final_f <= 1e-10
    np.testing.assert_allclose(outcome.final_point, [1.0, 1.0], atol=1e-4)


def test_stationary_start_returns_immediately():
    outcome = minimize(sphere, np.zeros(3))
    assert outcome.iterations == 0
    assert outcome.termination == 'grad_tol'
    assert outcome.f_trace == [0.0]


def test_trace_is_monotone_and_starts_at_initial_value():
    x0 = np.array([-1.2, 1.0])
    outcome = minimize(rosenbrock, x0, OptimizerConfig(max_iterations=200))
    trace = np.array(outcome.f_trace)
    assert trace[0] == rosenbrock(x0)[0]
    assert len(trace) == outcome.iterations + 1
    assert np.all(np.diff(trace) <= 0.0)


def test_is_deterministic():
    first = minimize(rosenbrock, np.array([-1.2, 1.0]))
    second = minimize(rosenbrock, np.array([-1.2, 1.0]))
    np.testing.assert_array_equal(first.final_point, second.final_point)
    assert first.f_trace == second.f_trace
    assert first.termination == second.termination


def test_iteration_budget():
    outcome = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimizerConfig(max_iterations=3))
    assert outcome.iterations == 3
    assert outcome.termination == 'max_iterations'
    assert not outcome.converged


def test_restart_every_iteration_counts_restarts():
    outcome = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimizerConfig(max_iterations=50, restart_every=1))
    assert outcome.n_restarts > 0
    assert outcome.final_f < rosenbrock(np.array([-1.2, 1.0]))[0]


def test_wrong_gradient_ends_with_line_search_failure():
    def uphill(x):
        return float(x @ x), -2.0 * x

    outcome = minimize(uphill, np.array([1.0, 2.0]))
    assert outcome.termination == 'line_search_failure'
    assert outcome.iterations == 0
    assert outcome.converged


@pytest.mark.parametrize('kwargs', [
    {'max_iterations': 0},
    {'rel_f_tol': 0.0},
    {'grad_tol': -1.0},
    {'cg_update': 'fletcher_reeves'},
    {'restart_every': 0},
])
def test_optimizer_config_rejects_bad_values(kwargs):
    with pytest.raises(ConfigError):
        OptimizerConfig(**kwargs)


@pytest.mark.parametrize('c1,c2', [(0.5, 0.1), (0.0, 0.1), (1e-4, 1.0)])
def test_line_search_config_rejects_bad_constants(c1, c2):
    with pytest.raises(ConfigError):
        LineSearchConfig(c1=c1, c2=c2)


def test_optimizer_config_dict_round_trip():
    cfg = OptimizerConfig(max_iterations=123, rel_f_tol=1e-8, line_search=LineSearchConfig(c2=0.4), restart_every=7)
    assert OptimizerConfig.from_dict(cfg.to_dict()) == cfg
    assert OptimizerConfig.from_dict(None) == OptimizerConfig()


def test_finite_difference_gradient_on_smooth_function(rng):
    x = rng.standard_normal(6)
    numeric = finite_difference_gradient(lambda p: float(np.sum(np.sin(p)) + p @ p), x)
    assert gradient_error(np.cos(x) + 2.0 * x, numeric) <= 1e-8


def test_gradient_error_scaling():
    assert gradient_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert gradient_error(np.array([0.0]), np.array([0.5])) == 0.5
    assert gradient_error(np.array([10.0]), np.array([20.0])) == 0.5
    # a small coordinate is not hidden by a large one elsewhere
    assert gradient_error(np.array([1000.0, 0.5]), np.array([1000.0, 1.0])) == 0.5
    assert gradient_error(np.array([1010.0, 1.0]), np.array([1000.0, 1.0])) == pytest.approx(0.01)
