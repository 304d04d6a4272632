"""
Kruskal Model Containers

KruskalModel holds a CP decomposition as weights plus factor matrices
(A, B, C); CoupledModel adds the matrix weights and the fourth factor V of a
coupled matrix-tensor decomposition, with A shared by both datasets.

Also provides reconstruction, normalization with a fixed sign convention,
factor match scores between models and the cross-component congruence used
to flag degenerate CP solutions.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from src.core.tensor import DenseMatrix, DenseTensor3, cp_reconstruct_array
from src.utils.exceptions import DegenerateComponentError, DomainError

logger = logging.getLogger(__name__)

UNIT_NORM_SLACK = 4 * np.finfo(np.float64).eps
DEGENERACY_THRESHOLD = 0.97


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class KruskalModel:
    """
    CP model [[weights; A, B, C]].

    Args:
        weights: Length-R weight vector
        factors: Factor matrices A (I x R), B (J x R), C (K x R)
    """

    weights: np.ndarray
    factors: Tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self):
        weights = _frozen(self.weights).ravel()
        factors = tuple(_frozen(f) for f in self.factors)
        if len(factors) != 3:
            raise DomainError(f"KruskalModel needs three factor matrices, got {len(factors)}")
        _check_rank(weights, factors)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'factors', factors)

    @property
    def rank(self) -> int:
        return int(self.weights.size)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    def permuted(self, order: Sequence[int]) -> 'KruskalModel':
        order = list(order)
        return KruskalModel(self.weights[order], tuple(f[:, order] for f in self.factors))


@dataclass(frozen=True, eq=False)
class CoupledModel:
    """
    Coupled matrix-tensor model: X ~ [[lambda; A, B, C]] and Y ~ A diag(sigma) V^T.

    Factors are ordered (A, B, C, V); mode 4 refers to V when comparing models.
    """

    tensor_weights: np.ndarray
    matrix_weights: np.ndarray
    factors: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self):
        lam = _frozen(self.tensor_weights).ravel()
        sigma = _frozen(self.matrix_weights).ravel()
        factors = tuple(_frozen(f) for f in self.factors)
        if len(factors) != 4:
            raise DomainError(f"CoupledModel needs four factor matrices (A, B, C, V), got {len(factors)}")
        if sigma.size != lam.size:
            raise DomainError(f"Tensor and matrix weight lengths differ: {lam.size} vs {sigma.size}")
        _check_rank(lam, factors)
        object.__setattr__(self, 'tensor_weights', lam)
        object.__setattr__(self, 'matrix_weights', sigma)
        object.__setattr__(self, 'factors', factors)

    @property
    def rank(self) -> int:
        return int(self.tensor_weights.size)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    def tensor_part(self) -> KruskalModel:
        return KruskalModel(self.tensor_weights, self.factors[:3])

    def permuted(self, order: Sequence[int]) -> 'CoupledModel':
        order = list(order)
        return CoupledModel(
            self.tensor_weights[order],
            self.matrix_weights[order],
            tuple(f[:, order] for f in self.factors),
        )


AnyModel = Union[KruskalModel, CoupledModel]


class FactorMatch(NamedTuple):
    score: float
    permutation: Tuple[int, ...]


def _check_rank(weights: np.ndarray, factors) -> None:
    rank = weights.size
    for mode, f in enumerate(factors, start=1):
        if f.ndim != 2:
            raise DomainError(f"Factor {mode} must be a matrix, got shape {f.shape}")
        if f.shape[1] != rank:
            raise DomainError(f"Factor {mode} has {f.shape[1]} columns but there are {rank} weights")
        if f.shape[0] < 1:
            raise DomainError(f"Factor {mode} has no rows")


def reconstruct_tensor(m: AnyModel) -> DenseTensor3:
    """Entry (i, j, k) = sum_r lambda_r A[i, r] B[j, r] C[k, r]."""
    weights = m.tensor_weights if isinstance(m, CoupledModel) else m.weights
    a, b, c = m.factors[:3]
    return DenseTensor3(cp_reconstruct_array(weights, a, b, c))


def reconstruct_matrix(m: CoupledModel) -> DenseMatrix:
    a, v = m.factors[0], m.factors[3]
    return DenseMatrix((a * m.matrix_weights) @ v.T)


def _column_scales(factor: np.ndarray, mode: int) -> np.ndarray:
    norms = np.linalg.norm(factor, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateComponentError(mode, int(zero[0]))
    # Columns already at unit norm are left untouched so normalize is idempotent.
    return np.where(np.abs(norms - 1.0) <= UNIT_NORM_SLACK, 1.0, norms)


def _peak_signs(factor: np.ndarray) -> np.ndarray:
    peaks = np.argmax(np.abs(factor), axis=0)
    signs = np.sign(factor[peaks, np.arange(factor.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def normalize(m: AnyModel) -> AnyModel:
    """
    Scale every factor column to unit 2-norm and fix signs.

    Column norms are absorbed into the weights: the norms of A, B and C go to
    lambda, the norms of A and V go to sigma. Signs: the largest-magnitude
    entry of each A column is made positive, flipping C (and V for coupled
    models); then B, flipping C; then C, flipping lambda; then V, flipping
    sigma.

    Raises:
        DegenerateComponentError: if any factor column is exactly zero
    """
    if isinstance(m, CoupledModel):
        a, b, c, v = (f.copy() for f in m.factors)
    else:
        a, b, c = (f.copy() for f in m.factors)
        v = None

    scales = [_column_scales(f, mode) for mode, f in enumerate((a, b, c), start=1)]
    a /= scales[0]
    b /= scales[1]
    c /= scales[2]

    tensor_weights = np.array(m.tensor_weights if v is not None else m.weights, dtype=np.float64)
    tensor_weights = tensor_weights * scales[0] * scales[1] * scales[2]

    s = _peak_signs(a)
    a *= s
    c *= s
    if v is not None:
        v_scale = _column_scales(v, 4)
        v /= v_scale
        matrix_weights = np.array(m.matrix_weights, dtype=np.float64) * scales[0] * v_scale
        v *= s

    s = _peak_signs(b)
    b *= s
    c *= s

    s = _peak_signs(c)
    c *= s
    tensor_weights = tensor_weights * s

    if v is None:
        return KruskalModel(tensor_weights, (a, b, c))

    s = _peak_signs(v)
    v *= s
    matrix_weights = matrix_weights * s
    return CoupledModel(tensor_weights, matrix_weights, (a, b, c, v))


def _cosines(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    nu = np.linalg.norm(u, axis=0)
    nw = np.linalg.norm(w, axis=0)
    denom = np.outer(nu, nw)
    gram = u.T @ w
    return np.divide(gram, denom, out=np.zeros_like(gram), where=denom > 0)


def _selected_modes(m1: AnyModel, m2: AnyModel, modes: Optional[Sequence[int]]) -> Tuple[int, ...]:
    n_modes = min(len(m1.factors), len(m2.factors))
    chosen = tuple(range(1, n_modes + 1)) if modes is None else tuple(int(x) for x in modes)
    if not chosen:
        raise DomainError("At least one mode must be compared")
    for mode in chosen:
        if mode < 1 or mode > n_modes:
            raise DomainError(f"Mode {mode} is not available in both models (1..{n_modes})")
    return chosen


def congruence_matrix(m1: AnyModel, m2: AnyModel, modes: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Matrix of component congruences: entry (r, s) is the product over the
    compared modes of |cos| between column r of m1 and column s of m2.
    """
    if m1.rank != m2.rank:
        raise DomainError(f"Models have different ranks: {m1.rank} vs {m2.rank}")
    chosen = _selected_modes(m1, m2, modes)
    result = np.ones((m1.rank, m2.rank))
    for mode in chosen:
        f1, f2 = m1.factors[mode - 1], m2.factors[mode - 1]
        if f1.shape[0] != f2.shape[0]:
            raise DomainError(f"Mode {mode} extents differ: {f1.shape[0]} vs {f2.shape[0]}")
        result *= np.abs(_cosines(f1, f2))
    return result


def factor_match_score(m1: AnyModel, m2: AnyModel, modes: Optional[Sequence[int]] = None) -> FactorMatch:
    """
    Greedy factor match score.

    Pairs are taken largest congruence first; the score is the smallest
    congruence among the matched pairs. permutation[r] is the m2 component
    matched to m1 component r.

    Args:
        m1: First model
        m2: Second model with equal rank
        modes: Optional subset of modes to compare (1-based)

    Returns:
        FactorMatch(score, permutation)
    """
    congruence = congruence_matrix(m1, m2, modes)
    rank = congruence.shape[0]
    work = congruence.copy()
    permutation = [-1] * rank
    matched = []
    for _ in range(rank):
        r, s = np.unravel_index(int(np.argmax(work)), work.shape)
        permutation[r] = int(s)
        matched.append(congruence[r, s])
        work[r, :] = -1.0
        work[:, s] = -1.0
    return FactorMatch(float(min(matched)), tuple(permutation))


def exhaustive_match_score(m1: AnyModel, m2: AnyModel, modes: Optional[Sequence[int]] = None) -> FactorMatch:
    """Optimal assignment variant of factor_match_score (maximizes the product of congruences)."""
    congruence = congruence_matrix(m1, m2, modes)
    with np.errstate(divide='ignore'):
        cost = -np.log(np.maximum(congruence, np.finfo(np.float64).tiny))
    rows, cols = linear_sum_assignment(cost)
    permutation = [0] * congruence.shape[0]
    for r, s in zip(rows, cols):
        permutation[int(r)] = int(s)
    return FactorMatch(float(congruence[rows, cols].min()), tuple(permutation))


def congruence_check(m: AnyModel) -> float:
    """Largest |cos(a_r,a_s) cos(b_r,b_s) cos(c_r,c_s)| over r != s; 0 for rank one."""
    if m.rank < 2:
        return 0.0
    product = np.ones((m.rank, m.rank))
    for f in m.factors[:3]:
        product *= _cosines(f, f)
    off_diagonal = np.abs(product[~np.eye(m.rank, dtype=bool)])
    return float(off_diagonal.max())


def is_degenerate(m: AnyModel, threshold: float = DEGENERACY_THRESHOLD) -> Tuple[float, bool]:
    value = congruence_check(m)
    flagged = value >= threshold
    if flagged:
        logger.warning(f"Possible degenerate model: cross-component congruence {value:.4f} >= {threshold}")
    return value, flagged
