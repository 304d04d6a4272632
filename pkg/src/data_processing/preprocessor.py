"""
Preprocessing for coupled tensor and matrix data.

Tensor: center across one mode (time by default), then scale within another
(subjects by default) by dividing each slice by its sample standard
deviation. Matrix: center each row, then divide each row by its standard
deviation. Optionally, each dataset is finally divided by its Frobenius norm
so both carry equal weight in a coupled fit.

Every step returns a PreprocessRecord holding the offsets or scales it used,
so a result can be audited and undone exactly.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.tensor import DenseMatrix, DenseTensor3, check_mode
from src.utils.exceptions import PreprocessingError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PreprocessRecord:
    """
    One applied preprocessing step.

    operation is one of 'center', 'scale', 'center_rows', 'scale_rows',
    'unit_norm'. values holds the subtracted offsets (broadcastable against
    the data) or the positive divisors.
    """

    operation: str
    mode: Optional[int]
    values: np.ndarray

    def to_dict(self) -> Dict:
        return {
            'operation': self.operation,
            'mode': self.mode,
            'shape': list(self.values.shape),
            'values': np.ravel(self.values).tolist(),
        }

    @classmethod
    def from_dict(cls, d: Dict) -> 'PreprocessRecord':
        values = np.asarray(d['values'], dtype=np.float64).reshape(d['shape'])
        return cls(d['operation'], d.get('mode'), values)


def center_tensor_across_mode(t: DenseTensor3, mode: int = 2) -> Tuple[DenseTensor3, PreprocessRecord]:
    """Subtract the mean of every fiber running along ``mode``."""
    mode = check_mode(mode)
    axis = mode - 1
    if t.dims[axis] < 2:
        raise PreprocessingError(f"Cannot center across mode {mode} with extent {t.dims[axis]}")
    offsets = t.data.mean(axis=axis, keepdims=True)
    logger.debug(f"Centered {t.dims} tensor across mode {mode}")
    return DenseTensor3(t.data - offsets, t.mode_names), PreprocessRecord('center', mode, offsets)


def scale_tensor_within_mode(t: DenseTensor3, mode: int = 1) -> Tuple[DenseTensor3, PreprocessRecord]:
    """
    Divide each slice orthogonal to ``mode`` by its sample standard deviation.

    Raises:
        PreprocessingError: naming the first slice with zero or undefined deviation
    """
    mode = check_mode(mode)
    axis = mode - 1
    moved = np.moveaxis(t.data, axis, 0).reshape(t.dims[axis], -1)
    if moved.shape[1] < 2:
        raise PreprocessingError(f"Slices of mode {mode} have a single entry; standard deviation undefined")
    scales = moved.std(axis=1, ddof=1)
    bad = np.flatnonzero(~(scales > 0))
    if bad.size:
        index = int(bad[0])
        raise PreprocessingError(f"Slice {index} of mode {mode} has zero variance", index=index)
    shape = [1, 1, 1]
    shape[axis] = t.dims[axis]
    scales = scales.reshape(shape)
    logger.debug(f"Scaled {t.dims} tensor within mode {mode}")
    return DenseTensor3(t.data / scales, t.mode_names), PreprocessRecord('scale', mode, scales)


def center_and_scale_matrix_rows(y: DenseMatrix) -> Tuple[DenseMatrix, List[PreprocessRecord]]:
    """
    Center each row, then divide it by its sample standard deviation.

    Raises:
        PreprocessingError: naming the first constant row
    """
    rows, cols = y.dims
    if cols < 2:
        raise PreprocessingError(f"Rows need at least two entries, matrix has {cols} column")
    means = y.data.mean(axis=1, keepdims=True)
    centered = y.data - means
    scales = centered.std(axis=1, ddof=1, keepdims=True)
    bad = np.flatnonzero(~(scales.ravel() > 0))
    if bad.size:
        index = int(bad[0])
        raise PreprocessingError(f"Row {index} is constant; cannot scale", index=index)
    logger.debug(f"Centered and scaled {rows} matrix rows")
    records = [
        PreprocessRecord('center_rows', None, means),
        PreprocessRecord('scale_rows', None, scales),
    ]
    return DenseMatrix(centered / scales), records


def scale_to_unit_norm(data):
    """Divide a whole tensor or matrix by its Frobenius norm."""
    norm = float(np.linalg.norm(data.data.ravel()))
    if norm == 0:
        raise PreprocessingError("Cannot scale an all-zero dataset to unit norm")
    record = PreprocessRecord('unit_norm', None, np.array(norm))
    if isinstance(data, DenseTensor3):
        return DenseTensor3(data.data / norm, data.mode_names), record
    return DenseMatrix(data.data / norm), record


def preprocess_tensor(t: DenseTensor3, center_mode: int = 2, scale_mode: int = 1,
                      unit_norm: bool = False) -> Tuple[DenseTensor3, List[PreprocessRecord]]:
    """Center, then scale, then optionally bring the tensor to unit norm."""
    t, centering = center_tensor_across_mode(t, center_mode)
    t, scaling = scale_tensor_within_mode(t, scale_mode)
    records = [centering, scaling]
    if unit_norm:
        t, record = scale_to_unit_norm(t)
        records.append(record)
    logger.info(f"Preprocessed tensor {t.dims}: {[r.operation for r in records]}")
    return t, records


def preprocess_matrix(y: DenseMatrix, unit_norm: bool = False) -> Tuple[DenseMatrix, List[PreprocessRecord]]:
    y, records = center_and_scale_matrix_rows(y)
    if unit_norm:
        y, record = scale_to_unit_norm(y)
        records.append(record)
    logger.info(f"Preprocessed matrix {y.dims}: {[r.operation for r in records]}")
    return y, records


def _undo(data: np.ndarray, records: Sequence[PreprocessRecord]) -> np.ndarray:
    for record in reversed(records):
        if record.operation in ('center', 'center_rows'):
            data = data + record.values
        elif record.operation in ('scale', 'scale_rows', 'unit_norm'):
            data = data * record.values
        else:
            raise PreprocessingError(f"Unknown preprocessing operation {record.operation!r}")
    return data


def undo_tensor(t: DenseTensor3, records: Sequence[PreprocessRecord]) -> DenseTensor3:
    return DenseTensor3(_undo(t.data, records), t.mode_names)


def undo_matrix(y: DenseMatrix, records: Sequence[PreprocessRecord]) -> DenseMatrix:
    return DenseMatrix(_undo(y.data, records))
