"""
Structure-Revealing Coupled Matrix-Tensor Factorization

Joint fit of a third-order tensor X and a matrix Y sharing the first-mode
factor A:

    f = ||X - [[lambda; A, B, C]]||^2 + ||Y - A diag(sigma) V^T||^2
        + beta * sum_r sqrt(lambda_r^2 + eps) + beta * sum_r sqrt(sigma_r^2 + eps)
        + gamma * sum over A, B, C, V of sum_r (||col_r|| - 1)^2

The smoothed 1-norm drives the weight of a component towards zero in the
dataset that does not contain it; the quadratic terms keep factor columns
near unit norm so the weights carry all scale. Components are then labelled
shared, tensor_only, matrix_only or degenerate from the relative weights.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from src.core.tensor import DenseMatrix, DenseTensor3, cp_reconstruct_array, mttkrp_array
from src.models.fitting import FitReport, fit_multistart
from src.models.kruskal import DEGENERACY_THRESHOLD, CoupledModel
from src.optimization.ncg import OptimizerConfig
from src.utils.exceptions import ConfigError, DegenerateModelError, DomainError

logger = logging.getLogger(__name__)


class ComponentLabel(str, Enum):
    SHARED = 'shared'
    TENSOR_ONLY = 'tensor_only'
    MATRIX_ONLY = 'matrix_only'
    DEGENERATE = 'degenerate'


@dataclass(frozen=True)
class AcmtfConfig:
    rank: int = 10
    beta: float = 1e-3
    gamma: float = 1.0
    l1_epsilon: float = 1e-8
    n_starts: int = 32
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    share_threshold: float = 0.05
    uniqueness_fms_threshold: float = 0.95
    degeneracy_threshold: float = DEGENERACY_THRESHOLD
    n_jobs: int = 1

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigError(f"rank must be >= 1, got {self.rank}")
        if self.n_starts < 1:
            raise ConfigError(f"n_starts must be >= 1, got {self.n_starts}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.n_jobs == 0:
            raise ConfigError("n_jobs must be a positive worker count or negative (all cores), got 0")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.l1_epsilon <= 0:
            raise ConfigError(f"l1_epsilon must be > 0, got {self.l1_epsilon}")
        if not 0 < self.share_threshold < 1:
            raise ConfigError(f"share_threshold must be in (0, 1), got {self.share_threshold}")
        if not 0 < self.uniqueness_fms_threshold <= 1:
            raise ConfigError(f"uniqueness_fms_threshold must be in (0, 1], got {self.uniqueness_fms_threshold}")

    @classmethod
    def from_dict(cls, values: Dict, optimizer: Optional[Dict] = None, **overrides) -> 'AcmtfConfig':
        """Build from the ``acmtf`` config section; keyword overrides win (None is ignored)."""
        merged = dict(values or {})
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return cls(
            rank=int(merged.get('rank', 10)),
            beta=float(merged.get('beta', 1e-3)),
            gamma=float(merged.get('gamma', 1.0)),
            l1_epsilon=float(merged.get('l1_epsilon', 1e-8)),
            n_starts=int(merged.get('n_starts', 32)),
            seed=int(merged.get('seed', 0)),
            optimizer=OptimizerConfig.from_dict(optimizer),
            share_threshold=float(merged.get('share_threshold', 0.05)),
            uniqueness_fms_threshold=float(merged.get('uniqueness_fms_threshold', 0.95)),
            degeneracy_threshold=float(merged.get('degeneracy_threshold', DEGENERACY_THRESHOLD)),
            n_jobs=int(merged.get('n_jobs', 1)),
        )


class CoupledGradient(NamedTuple):
    tensor_weights: np.ndarray
    matrix_weights: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    v: np.ndarray


def _check_coupled(x: DenseTensor3, y: DenseMatrix) -> None:
    if x.dims[0] != y.dims[0]:
        raise DomainError(f"Coupled mode extents differ: tensor has {x.dims[0]} subjects, matrix has {y.dims[0]}")


def _variables(x: DenseTensor3, y: DenseMatrix, m: CoupledModel):
    _check_coupled(x, y)
    a, b, c, v = m.factors
    expected = x.dims + (y.dims[1],)
    for mode, (f, extent) in enumerate(zip((a, b, c, v), expected), start=1):
        if f.shape[0] != extent:
            raise DomainError(f"Factor {mode} has {f.shape[0]} rows, data extent is {extent}")
    return m.tensor_weights, m.matrix_weights, a, b, c, v


def _norm_penalty(factors, gamma: float) -> Tuple[float, List[np.ndarray]]:
    value = 0.0
    grads = []
    for f in factors:
        norms = np.linalg.norm(f, axis=0)
        gap = norms - 1.0
        value += float(np.sum(gap ** 2))
        scale = np.divide(2.0 * gamma * gap, norms, out=np.zeros_like(norms), where=norms > 0)
        grads.append(f * scale)
    return gamma * value, grads


def _evaluate(x_data, y_data, lam, sigma, a, b, c, v, beta, gamma, eps, with_gradient=True):
    residual_x = x_data - cp_reconstruct_array(lam, a, b, c)
    residual_y = y_data - (a * sigma) @ v.T
    smooth_lam = np.sqrt(lam ** 2 + eps)
    smooth_sigma = np.sqrt(sigma ** 2 + eps)
    penalty, penalty_grads = _norm_penalty((a, b, c, v), gamma)

    value = (
        float(np.vdot(residual_x, residual_x))
        + float(np.vdot(residual_y, residual_y))
        + beta * float(np.sum(smooth_lam) + np.sum(smooth_sigma))
        + penalty
    )
    if not with_gradient:
        return value, None

    g1 = mttkrp_array(residual_x, b, c, 1)
    projected = residual_y @ v
    grad = CoupledGradient(
        tensor_weights=-2.0 * np.sum(a * g1, axis=0) + beta * lam / smooth_lam,
        matrix_weights=-2.0 * np.sum(a * projected, axis=0) + beta * sigma / smooth_sigma,
        a=-2.0 * g1 * lam - 2.0 * projected * sigma + penalty_grads[0],
        b=-2.0 * mttkrp_array(residual_x, a, c, 2) * lam + penalty_grads[1],
        c=-2.0 * mttkrp_array(residual_x, a, b, 3) * lam + penalty_grads[2],
        v=-2.0 * (residual_y.T @ a) * sigma + penalty_grads[3],
    )
    return value, grad


def acmtf_objective(x: DenseTensor3, y: DenseMatrix, m: CoupledModel, cfg: AcmtfConfig) -> float:
    """
    Smoothed, norm-penalized coupled objective at the variables held in ``m``.

    ``m`` need not be normalized; its weights and factors are used as-is.
    """
    lam, sigma, a, b, c, v = _variables(x, y, m)
    value, _ = _evaluate(x.data, y.data, lam, sigma, a, b, c, v,
                         cfg.beta, cfg.gamma, cfg.l1_epsilon, with_gradient=False)
    return value


def acmtf_gradient(x: DenseTensor3, y: DenseMatrix, m: CoupledModel, cfg: AcmtfConfig) -> CoupledGradient:
    """Analytic gradient of acmtf_objective for (lambda, sigma, A, B, C, V)."""
    lam, sigma, a, b, c, v = _variables(x, y, m)
    _, grad = _evaluate(x.data, y.data, lam, sigma, a, b, c, v, cfg.beta, cfg.gamma, cfg.l1_epsilon)
    return grad


class AcmtfProblem:
    """Coupled objective over the flat vector concat(lambda, sigma, A, B, C, V)."""

    name = 'acmtf'

    def __init__(self, x: DenseTensor3, y: DenseMatrix, cfg: AcmtfConfig):
        _check_coupled(x, y)
        self.x_data = np.ascontiguousarray(x.data)
        self.y_data = np.ascontiguousarray(y.data)
        self.rank = cfg.rank
        self.beta = cfg.beta
        self.gamma = cfg.gamma
        self.eps = cfg.l1_epsilon
        self.extents = x.dims + (y.dims[1],)
        sizes = [self.rank, self.rank] + [d * self.rank for d in self.extents]
        self.n_params = sum(sizes)
        self._splits = np.cumsum(sizes)[:-1]
        self.x_norm = float(np.linalg.norm(self.x_data))
        self.y_norm = float(np.linalg.norm(self.y_data))
        self.objective_scale = self.x_norm ** 2 + self.y_norm ** 2

    def split(self, params: np.ndarray):
        blocks = np.split(params, self._splits)
        lam, sigma = blocks[0], blocks[1]
        factors = tuple(block.reshape(extent, self.rank) for block, extent in zip(blocks[2:], self.extents))
        return (lam, sigma) + factors

    def f_and_grad(self, params: np.ndarray):
        value, grad = _evaluate(self.x_data, self.y_data, *self.split(params), self.beta, self.gamma, self.eps)
        return value, np.concatenate([g.ravel() for g in grad])

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        blocks = [
            np.full(self.rank, self.x_norm / np.sqrt(self.rank)),
            np.full(self.rank, self.y_norm / np.sqrt(self.rank)),
        ]
        for extent in self.extents:
            f = rng.standard_normal((extent, self.rank))
            blocks.append((f / np.linalg.norm(f, axis=0)).ravel())
        return np.concatenate(blocks)

    def unpack(self, params: np.ndarray) -> CoupledModel:
        lam, sigma, a, b, c, v = self.split(params)
        return CoupledModel(lam, sigma, (a, b, c, v))

    def model_objective(self, model: CoupledModel) -> float:
        value, _ = _evaluate(self.x_data, self.y_data, model.tensor_weights, model.matrix_weights,
                             *model.factors, self.beta, self.gamma, self.eps, with_gradient=False)
        return value


def classify_components(m: CoupledModel, threshold: float = 0.05) -> List[ComponentLabel]:
    """
    Label each component from its weights relative to the largest weight.

    Args:
        m: Normalized coupled model
        threshold: Relative weight below which a component is absent from a dataset

    Returns:
        One ComponentLabel per component

    Raises:
        DegenerateModelError: if every weight of one dataset is zero
    """
    lam = np.abs(m.tensor_weights)
    sigma = np.abs(m.matrix_weights)
    if lam.max() == 0:
        raise DegenerateModelError("All tensor weights are zero")
    if sigma.max() == 0:
        raise DegenerateModelError("All matrix weights are zero")

    lam_rel = lam / lam.max()
    sigma_rel = sigma / sigma.max()
    labels = []
    for r in range(m.rank):
        weak_tensor = lam_rel[r] < threshold
        weak_matrix = sigma_rel[r] < threshold
        if weak_tensor and weak_matrix:
            logger.warning(f"Component {r} is weak in both datasets (lambda {lam_rel[r]:.3g}, sigma {sigma_rel[r]:.3g})")
            labels.append(ComponentLabel.DEGENERATE)
        elif weak_matrix:
            labels.append(ComponentLabel.TENSOR_ONLY)
        elif weak_tensor:
            labels.append(ComponentLabel.MATRIX_ONLY)
        else:
            labels.append(ComponentLabel.SHARED)
    return labels


def weight_table(m: CoupledModel, labels: Sequence[ComponentLabel]) -> List[Dict]:
    lam_max = float(np.abs(m.tensor_weights).max()) or 1.0
    sigma_max = float(np.abs(m.matrix_weights).max()) or 1.0
    return [
        {
            'component': r,
            'lambda': float(m.tensor_weights[r]),
            'sigma': float(m.matrix_weights[r]),
            'lambda_relative': float(abs(m.tensor_weights[r]) / lam_max),
            'sigma_relative': float(abs(m.matrix_weights[r]) / sigma_max),
            'label': label.value,
        }
        for r, label in enumerate(labels)
    ]


def fit_acmtf(x: DenseTensor3, y: DenseMatrix, cfg: AcmtfConfig,
              progress: bool = False) -> Tuple[CoupledModel, FitReport]:
    """
    Multi-start coupled fit.

    Args:
        x: Data tensor (subjects in mode 1)
        y: Data matrix with the same number of rows as x has subjects
        cfg: Rank, penalties, starts, seed and optimizer settings
        progress: Show a progress bar over starts

    Returns:
        (normalized best CoupledModel, FitReport with the per-component weight table)

    Raises:
        DomainError: if the coupled extents differ
        FitFailureError: if no start converged
    """
    problem = AcmtfProblem(x, y, cfg)
    model, report, _ = fit_multistart(
        problem, cfg.rank, cfg.n_starts, cfg.seed, cfg.optimizer,
        cfg.uniqueness_fms_threshold, cfg.degeneracy_threshold,
        n_jobs=cfg.n_jobs, progress=progress,
    )
    report.settings = {
        'n_starts': cfg.n_starts,
        'seed': cfg.seed,
        'beta': cfg.beta,
        'gamma': cfg.gamma,
        'l1_epsilon': cfg.l1_epsilon,
        'share_threshold': cfg.share_threshold,
        'uniqueness_fms_threshold': cfg.uniqueness_fms_threshold,
        'optimizer': cfg.optimizer.to_dict(),
    }
    try:
        labels = classify_components(model, cfg.share_threshold)
    except DegenerateModelError as e:
        logger.warning(f"Cannot classify components: {e}")
        labels = [ComponentLabel.DEGENERATE] * model.rank
    report.components = weight_table(model, labels)
    n_shared = sum(1 for label in labels if label is ComponentLabel.SHARED)
    logger.info(f"acmtf: {n_shared}/{model.rank} components shared")
    return model, report
