"""
CP Decomposition by Gradient-Based Optimization

Least-squares CP fit of a third-order tensor over unnormalized factor
matrices (A, B, C) with nonlinear conjugate gradients. Weights are extracted
by normalization only when the best model is reported.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src.core.tensor import DenseMatrix, DenseTensor3, cp_reconstruct_array, mttkrp_array
from src.models.fitting import FitReport, fit_multistart
from src.models.kruskal import DEGENERACY_THRESHOLD, KruskalModel
from src.optimization.ncg import OptimizerConfig
from src.utils.exceptions import ConfigError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CpConfig:
    rank: int
    n_starts: int = 10
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
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
        if not 0 < self.uniqueness_fms_threshold <= 1:
            raise ConfigError(f"uniqueness_fms_threshold must be in (0, 1], got {self.uniqueness_fms_threshold}")

    @classmethod
    def from_dict(cls, values: Dict, optimizer: Optional[Dict] = None, **overrides) -> 'CpConfig':
        """Build from the ``cp`` config section; keyword overrides win (None is ignored)."""
        merged = dict(values or {})
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return cls(
            rank=int(merged.get('rank', 3)),
            n_starts=int(merged.get('n_starts', 10)),
            seed=int(merged.get('seed', 0)),
            optimizer=OptimizerConfig.from_dict(optimizer),
            uniqueness_fms_threshold=float(merged.get('uniqueness_fms_threshold', 0.95)),
            degeneracy_threshold=float(merged.get('degeneracy_threshold', DEGENERACY_THRESHOLD)),
            n_jobs=int(merged.get('n_jobs', 1)),
        )


def _factor_arrays(x: DenseTensor3, factors: Sequence) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    arrays = tuple(np.asarray(f.data if isinstance(f, DenseMatrix) else f, dtype=np.float64) for f in factors)
    if len(arrays) != 3:
        raise DomainError(f"CP needs three factor matrices, got {len(arrays)}")
    ranks = {f.shape[1] for f in arrays}
    if len(ranks) != 1:
        raise DomainError(f"Factor matrices disagree on the number of columns: {sorted(ranks)}")
    for mode, (f, extent) in enumerate(zip(arrays, x.dims), start=1):
        if f.shape[0] != extent:
            raise DomainError(f"Factor {mode} has {f.shape[0]} rows, tensor mode {mode} has extent {extent}")
    return arrays


def _residual(data: np.ndarray, a, b, c) -> np.ndarray:
    return data - cp_reconstruct_array(np.ones(a.shape[1]), a, b, c)


def cp_objective(x: DenseTensor3, factors: Sequence) -> float:
    """Squared Frobenius residual ||X - [[A, B, C]]||^2."""
    a, b, c = _factor_arrays(x, factors)
    residual = _residual(x.data, a, b, c)
    return float(np.vdot(residual, residual))


def cp_gradient(x: DenseTensor3, factors: Sequence) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gradient of cp_objective with respect to (A, B, C).

    Computed as -2 * MTTKRP of the residual, which equals
    2 (A ((B^T B) * (C^T C)) - MTTKRP(X, B, C)) and its cyclic analogues.
    """
    a, b, c = _factor_arrays(x, factors)
    residual = _residual(x.data, a, b, c)
    return _gradient_blocks(residual, a, b, c)


def _gradient_blocks(residual, a, b, c):
    return (
        -2.0 * mttkrp_array(residual, b, c, 1),
        -2.0 * mttkrp_array(residual, a, c, 2),
        -2.0 * mttkrp_array(residual, a, b, 3),
    )


class CpProblem:
    """CP least squares over the flat vector concat(A, B, C)."""

    name = 'cp'

    def __init__(self, x: DenseTensor3, rank: int):
        self.data = np.ascontiguousarray(x.data)
        self.dims = x.dims
        self.rank = rank
        self.n_params = sum(self.dims) * rank
        self.objective_scale = float(np.vdot(self.data, self.data))
        self._splits = np.cumsum([d * rank for d in self.dims])[:-1]

    def split(self, params: np.ndarray):
        return tuple(
            block.reshape(extent, self.rank)
            for block, extent in zip(np.split(params, self._splits), self.dims)
        )

    def f_and_grad(self, params: np.ndarray):
        a, b, c = self.split(params)
        residual = _residual(self.data, a, b, c)
        grads = _gradient_blocks(residual, a, b, c)
        return float(np.vdot(residual, residual)), np.concatenate([g.ravel() for g in grads])

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        blocks = []
        for extent in self.dims:
            f = rng.standard_normal((extent, self.rank))
            blocks.append((f / np.linalg.norm(f, axis=0)).ravel())
        return np.concatenate(blocks)

    def unpack(self, params: np.ndarray) -> KruskalModel:
        return KruskalModel(np.ones(self.rank), self.split(params))

    def model_objective(self, model: KruskalModel) -> float:
        a, b, c = model.factors
        residual = self.data - cp_reconstruct_array(model.weights, a, b, c)
        return float(np.vdot(residual, residual))


def fit_cp(x: DenseTensor3, cfg: CpConfig, progress: bool = False) -> Tuple[KruskalModel, FitReport]:
    """
    Multi-start CP fit.

    Args:
        x: Data tensor
        cfg: Rank, starts, seed and optimizer settings
        progress: Show a progress bar over starts

    Returns:
        (normalized best KruskalModel, FitReport)

    Raises:
        DomainError: if the rank exceeds the per-mode sanity bound
        FitFailureError: if no start converged
    """
    i, j, k = x.dims
    bound = min(j * k, i * k, i * j)
    if cfg.rank > bound:
        raise DomainError(f"Rank {cfg.rank} exceeds the bound {bound} for a tensor of dims {x.dims}")

    problem = CpProblem(x, cfg.rank)
    model, report, _ = fit_multistart(
        problem, cfg.rank, cfg.n_starts, cfg.seed, cfg.optimizer,
        cfg.uniqueness_fms_threshold, cfg.degeneracy_threshold,
        n_jobs=cfg.n_jobs, progress=progress,
    )
    report.settings = {
        'n_starts': cfg.n_starts,
        'seed': cfg.seed,
        'uniqueness_fms_threshold': cfg.uniqueness_fms_threshold,
        'optimizer': cfg.optimizer.to_dict(),
    }
    report.components = [
        {'component': r, 'weight': float(w)} for r, w in enumerate(model.weights)
    ]
    return model, report
