"""
Dense Tensor Containers and Multilinear Kernels

Immutable order-3 tensor and matrix containers plus the kernels every
factorization model needs: mode-n unfolding and folding, the Khatri-Rao
product, MTTKRP and the Frobenius norm.

Layout is first-index-fastest throughout: tensor entry (i, j, k) sits at flat
offset i + I*j + I*J*k and matrices are column-major. Modes are numbered
1, 2, 3. The mode-n unfolding puts the mode-n index on rows and orders the
remaining indices with the lower-numbered mode varying fastest.

The ``*_array`` functions are the raw ndarray kernels used inside objectives
and gradients; the container functions validate and wrap them.
"""
import logging
from dataclasses import dataclass, field
from typing import Sequence, Tuple, Union

import numpy as np

from src.utils.exceptions import DomainError

logger = logging.getLogger(__name__)

DEFAULT_MODE_NAMES = ('subjects', 'time', 'electrodes')
VALID_MODES = (1, 2, 3)


def _frozen_copy(values, ndim: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, order='F')
    if arr.ndim != ndim:
        raise DomainError(f"{what} must have {ndim} dimensions, got shape {arr.shape}")
    if any(extent < 1 for extent in arr.shape):
        raise DomainError(f"{what} extents must all be >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} contains NaN or Inf values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DenseTensor3:
    """Order-3 dense real tensor with informational mode names."""

    data: np.ndarray
    mode_names: Tuple[str, str, str] = field(default=DEFAULT_MODE_NAMES)

    def __post_init__(self):
        object.__setattr__(self, 'data', _frozen_copy(self.data, 3, 'Tensor'))
        names = tuple(self.mode_names)
        if len(names) != 3:
            raise DomainError(f"Tensor needs exactly three mode names, got {len(names)}")
        object.__setattr__(self, 'mode_names', names)

    @classmethod
    def from_values(cls, dims: Sequence[int], values, mode_names=DEFAULT_MODE_NAMES) -> 'DenseTensor3':
        """Build a tensor from its flat first-index-fastest value list."""
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise DomainError(f"Tensor dims must be three positive extents, got {dims}")
        flat = np.asarray(values, dtype=np.float64).ravel()
        if flat.size != dims[0] * dims[1] * dims[2]:
            raise DomainError(f"Expected {dims[0] * dims[1] * dims[2]} values for dims {dims}, got {flat.size}")
        return cls(flat.reshape(dims, order='F'), mode_names)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def values(self) -> np.ndarray:
        return self.data.ravel(order='F')

    def __repr__(self):
        return f"DenseTensor3(dims={self.dims}, mode_names={self.mode_names})"


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Dense real matrix stored column-major."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'data', _frozen_copy(self.data, 2, 'Matrix'))

    @classmethod
    def from_values(cls, dims: Sequence[int], values) -> 'DenseMatrix':
        """Build a matrix from its flat column-major value list."""
        dims = tuple(int(d) for d in dims)
        if len(dims) != 2 or any(d < 1 for d in dims):
            raise DomainError(f"Matrix dims must be two positive extents, got {dims}")
        flat = np.asarray(values, dtype=np.float64).ravel()
        if flat.size != dims[0] * dims[1]:
            raise DomainError(f"Expected {dims[0] * dims[1]} values for dims {dims}, got {flat.size}")
        return cls(flat.reshape(dims, order='F'))

    @property
    def dims(self) -> Tuple[int, int]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def values(self) -> np.ndarray:
        return self.data.ravel(order='F')

    def __repr__(self):
        return f"DenseMatrix(dims={self.dims})"


def check_mode(mode) -> int:
    if mode not in VALID_MODES:
        raise DomainError(f"Mode must be one of {VALID_MODES}, got {mode!r}")
    return int(mode)


# ---------------------------------------------------------------------------
# ndarray kernels
# ---------------------------------------------------------------------------

def unfold_array(x: np.ndarray, mode: int) -> np.ndarray:
    axis = mode - 1
    return np.reshape(np.moveaxis(x, axis, 0), (x.shape[axis], -1), order='F')


def fold_array(m: np.ndarray, mode: int, dims: Sequence[int]) -> np.ndarray:
    axis = mode - 1
    others = [d for n, d in enumerate(dims) if n != axis]
    full = np.reshape(m, [dims[axis]] + others, order='F')
    return np.moveaxis(full, 0, axis)


def khatri_rao_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    rank = a.shape[1]
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], rank)


def mttkrp_array(x: np.ndarray, f_low: np.ndarray, f_high: np.ndarray, mode: int) -> np.ndarray:
    """
    MTTKRP without forming the Khatri-Rao product.

    ``f_low`` and ``f_high`` are the factors of the lower- and higher-numbered
    surviving modes. The high-mode factor is contracted first, which keeps the
    intermediate at (extent x extent x R).
    """
    if mode == 1:
        partial = np.tensordot(x, f_high, axes=([2], [0]))
        return np.einsum('ijr,jr->ir', partial, f_low)
    if mode == 2:
        partial = np.tensordot(x, f_high, axes=([2], [0]))
        return np.einsum('ijr,ir->jr', partial, f_low)
    partial = np.tensordot(x, f_high, axes=([1], [0]))
    return np.einsum('ikr,ir->kr', partial, f_low)


def cp_reconstruct_array(weights: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.einsum('r,ir,jr,kr->ijk', weights, a, b, c)


# ---------------------------------------------------------------------------
# Container operations
# ---------------------------------------------------------------------------

def unfold(t: DenseTensor3, mode: int) -> DenseMatrix:
    """
    Mode-n unfolding.

    Args:
        t: Tensor to unfold
        mode: 1, 2 or 3

    Returns:
        Matrix of shape (I, J*K), (J, I*K) or (K, I*J)
    """
    mode = check_mode(mode)
    return DenseMatrix(unfold_array(t.data, mode))


def fold(m: DenseMatrix, mode: int, dims: Sequence[int]) -> DenseTensor3:
    """Exact inverse of ``unfold`` for the given target extents."""
    mode = check_mode(mode)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise DomainError(f"Fold target dims must have three extents, got {dims}")
    rows, cols = m.dims
    expected_cols = int(np.prod(dims)) // dims[mode - 1]
    if rows != dims[mode - 1] or cols != expected_cols:
        raise DomainError(
            f"Matrix of dims {m.dims} cannot fold in mode {mode} to {dims}; "
            f"expected ({dims[mode - 1]}, {expected_cols})"
        )
    return DenseTensor3(fold_array(m.data, mode, dims))


def khatri_rao(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    """Column-wise Kronecker product; the row index of ``b`` varies fastest."""
    if a.dims[1] != b.dims[1]:
        raise DomainError(f"Khatri-Rao operands need equal column counts, got {a.dims[1]} and {b.dims[1]}")
    return DenseMatrix(khatri_rao_array(a.data, b.data))


def mttkrp(t: DenseTensor3, f1: DenseMatrix, f2: DenseMatrix, mode: int) -> DenseMatrix:
    """
    Matricized tensor times Khatri-Rao product.

    Equals ``unfold(t, mode) @ khatri_rao(f2, f1)`` where ``f1`` belongs to
    the lower-numbered surviving mode and ``f2`` to the higher one.

    Args:
        t: Tensor
        f1: Factor of the lower-numbered non-target mode
        f2: Factor of the higher-numbered non-target mode
        mode: Target mode

    Returns:
        Matrix of shape (extent of target mode, R)
    """
    mode = check_mode(mode)
    others = [n for n in VALID_MODES if n != mode]
    dims = t.dims
    if f1.dims[1] != f2.dims[1]:
        raise DomainError(f"MTTKRP factors need equal column counts, got {f1.dims[1]} and {f2.dims[1]}")
    if f1.dims[0] != dims[others[0] - 1] or f2.dims[0] != dims[others[1] - 1]:
        raise DomainError(
            f"MTTKRP factor rows ({f1.dims[0]}, {f2.dims[0]}) do not match tensor "
            f"extents ({dims[others[0] - 1]}, {dims[others[1] - 1]}) for mode {mode}"
        )
    return DenseMatrix(mttkrp_array(t.data, f1.data, f2.data, mode))


def frobenius_norm(t: Union[DenseTensor3, DenseMatrix, np.ndarray]) -> float:
    data = t.data if isinstance(t, (DenseTensor3, DenseMatrix)) else np.asarray(t)
    return float(np.linalg.norm(data.ravel()))


def select_indices(t: DenseTensor3, mode: int, indices: Sequence[int]) -> DenseTensor3:
    """
    Keep only the listed indices of one mode, in the listed order.

    Used to cut electrode subsets out of a full recording tensor.
    """
    mode = check_mode(mode)
    idx = [int(i) for i in indices]
    extent = t.dims[mode - 1]
    if not idx:
        raise DomainError("Index selection must not be empty")
    if len(set(idx)) != len(idx):
        raise DomainError(f"Index selection contains duplicates: {idx}")
    bad = [i for i in idx if i < 0 or i >= extent]
    if bad:
        raise DomainError(f"Indices {bad} out of range for mode {mode} with extent {extent}")
    logger.debug(f"Selecting {len(idx)} of {extent} indices in mode {mode}")
    return DenseTensor3(np.take(t.data, idx, axis=mode - 1), t.mode_names)
