import numpy as np
import pytest

from src.core.tensor import DenseMatrix, DenseTensor3
from src.models.cp_opt import CpConfig, CpProblem, cp_gradient, cp_objective, fit_cp
from src.models.kruskal import KruskalModel, factor_match_score, reconstruct_tensor
from src.optimization.gradcheck import finite_difference_gradient, gradient_error
from src.optimization.ncg import OptimizerConfig
from src.synthetic.generator import SynthSpec, generate
from src.utils.exceptions import ConfigError, DomainError, FitFailureError


def _planted(rng, make_factors, dims=(4, 5, 6), rank=2):
    factors = make_factors(rng, dims, rank)
    tensor = reconstruct_tensor(KruskalModel(np.ones(rank), factors))
    return tensor, factors


def test_objective_of_zero_factors_is_squared_norm(rng):
    x = DenseTensor3(rng.standard_normal((3, 4, 2)))
    zeros = [np.zeros((d, 2)) for d in x.dims]
    assert cp_objective(x, zeros) == pytest.approx(float(np.sum(x.data ** 2)), rel=1e-14)


def test_objective_and_gradient_vanish_at_exact_factors(rng, make_factors):
    x, factors = _planted(rng, make_factors)
    assert cp_objective(x, factors) <= 1e-24
    for g in cp_gradient(x, factors):
        np.testing.assert_allclose(g, 0.0, atol=1e-11)


def test_objective_matches_loop(rng):
    x = DenseTensor3(rng.standard_normal((2, 3, 4)))
    a, b, c = (rng.standard_normal((d, 2)) for d in x.dims)
    expected = 0.0
    for i in range(2):
        for j in range(3):
            for k in range(4):
                model_entry = sum(a[i, r] * b[j, r] * c[k, r] for r in range(2))
                expected += (x.data[i, j, k] - model_entry) ** 2
    assert cp_objective(x, (a, b, c)) == pytest.approx(expected, rel=1e-12)


def test_objective_accepts_dense_matrices(rng):
    x = DenseTensor3(rng.standard_normal((2, 3, 4)))
    factors = [rng.standard_normal((d, 2)) for d in x.dims]
    assert cp_objective(x, [DenseMatrix(f) for f in factors]) == cp_objective(x, factors)


def test_gradient_of_zero_factors_is_zero(rng):
    x = DenseTensor3(rng.standard_normal((3, 4, 2)))
    for g in cp_gradient(x, [np.zeros((d, 3)) for d in x.dims]):
        np.testing.assert_array_equal(g, 0.0)


@pytest.mark.parametrize('seed', range(20))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in rng.integers(2, 6, size=3))
    rank = int(rng.integers(1, 4))
    x = DenseTensor3(rng.standard_normal(dims))
    problem = CpProblem(x, rank)
    params = rng.standard_normal(problem.n_params)

    _, analytic = problem.f_and_grad(params)
    numeric = finite_difference_gradient(lambda p: problem.f_and_grad(p)[0], params)
    assert gradient_error(analytic, numeric) <= 1e-6

    blocks = cp_gradient(x, problem.split(params))
    np.testing.assert_allclose(np.concatenate([g.ravel() for g in blocks]), analytic, rtol=1e-13, atol=1e-13)


def test_objective_is_permutation_invariant(rng):
    x = DenseTensor3(rng.standard_normal((3, 4, 5)))
    factors = [rng.standard_normal((d, 3)) for d in x.dims]
    order = [2, 0, 1]
    assert cp_objective(x, [f[:, order] for f in factors]) == pytest.approx(cp_objective(x, factors), rel=1e-13)


def test_factor_mismatch_raises(rng):
    x = DenseTensor3(rng.standard_normal((3, 4, 5)))
    with pytest.raises(DomainError):
        cp_objective(x, [np.ones((3, 2)), np.ones((5, 2)), np.ones((5, 2))])
    with pytest.raises(DomainError):
        cp_gradient(x, [np.ones((3, 2)), np.ones((4, 3)), np.ones((5, 2))])
    with pytest.raises(DomainError):
        cp_objective(x, [np.ones((3, 2)), np.ones((4, 2))])


def test_config_validation():
    with pytest.raises(ConfigError):
        CpConfig(rank=0)
    with pytest.raises(ConfigError):
        CpConfig(rank=2, n_starts=0)
    with pytest.raises(ConfigError):
        CpConfig(rank=2, n_jobs=0)
    assert CpConfig(rank=2, n_jobs=-1).n_jobs == -1
    cfg = CpConfig.from_dict({'rank': 4, 'n_starts': 7}, optimizer={'max_iterations': 50}, rank=2, seed=None)
    assert cfg.rank == 2
    assert cfg.n_starts == 7
    assert cfg.seed == 0
    assert cfg.optimizer.max_iterations == 50


def test_rank_bound(rng):
    x = DenseTensor3(rng.standard_normal((2, 2, 2)))
    with pytest.raises(DomainError):
        fit_cp(x, CpConfig(rank=5, n_starts=1))


def test_rank_one_recovery(rng, make_factors):
    x, factors = _planted(rng, make_factors, dims=(4, 5, 6), rank=1)
    model, report = fit_cp(x, CpConfig(rank=1, n_starts=3, seed=1))
    truth = KruskalModel(np.ones(1), factors)
    assert factor_match_score(model, truth).score >= 0.999
    assert report.model_type == 'cp'
    assert report.n_converged >= 1
    assert len(report.components) == 1
    assert report.components[0]['weight'] > 0
    # exact fits from the other starts fall inside the near-best window
    assert len(report.uniqueness) >= 1
    assert report.unique


def test_fit_is_deterministic(rng):
    x = DenseTensor3(rng.standard_normal((4, 5, 3)))
    cfg = CpConfig(rank=2, n_starts=3, seed=11)
    first_model, first = fit_cp(x, cfg)
    second_model, second = fit_cp(x, cfg)
    assert first.to_dict() == second.to_dict()
    np.testing.assert_array_equal(first_model.weights, second_model.weights)


def test_no_converged_start_raises_with_report(rng):
    x = DenseTensor3(rng.standard_normal((4, 5, 3)))
    cfg = CpConfig(rank=2, n_starts=2, optimizer=OptimizerConfig(max_iterations=1))
    with pytest.raises(FitFailureError) as excinfo:
        fit_cp(x, cfg)
    assert excinfo.value.report is not None
    assert excinfo.value.report.n_converged == 0


def test_report_records_every_start(rng):
    x = DenseTensor3(rng.standard_normal((4, 5, 3)))
    _, report = fit_cp(x, CpConfig(rank=2, n_starts=4, seed=3))
    assert [s.start for s in report.starts] == [0, 1, 2, 3]
    assert report.best_objective == min(s.objective for s in report.starts if s.converged)
    assert report.model_objective == pytest.approx(report.best_objective, rel=1e-10, abs=1e-12)
    assert 0.0 <= report.congruence <= 1.0


@pytest.mark.slow
def test_noiseless_recovery(tight_optimizer):
    data = generate(SynthSpec(dims=(30, 40, 20, 5), rank=3, seed=4))
    truth = data.truth.tensor_part()
    model, report = fit_cp(data.tensor, CpConfig(rank=3, n_starts=10, seed=0, optimizer=tight_optimizer))
    assert factor_match_score(model, truth).score >= 0.99
    residual = np.sqrt(report.model_objective) / np.linalg.norm(data.tensor.data)
    assert residual <= 1e-6
    assert len(report.uniqueness) >= 1
    assert report.uniqueness_min_fms >= 0.95
    assert report.unique


@pytest.mark.slow
def test_noisy_recovery():
    data = generate(SynthSpec(dims=(30, 40, 20, 5), rank=3, noise_tensor=0.2, seed=5))
    model, _ = fit_cp(data.tensor, CpConfig(rank=3, n_starts=10, seed=0))
    assert factor_match_score(model, data.truth.tensor_part()).score >= 0.95


def test_objective_is_equivariant_under_subject_relabeling(rng):
    x = DenseTensor3(rng.standard_normal((5, 4, 3)))
    factors = [rng.standard_normal((d, 2)) for d in x.dims]
    order = rng.permutation(5)
    relabeled = DenseTensor3(x.data[order])
    moved = [factors[0][order], factors[1], factors[2]]
    assert cp_objective(relabeled, moved) == pytest.approx(cp_objective(x, factors), rel=1e-13)
