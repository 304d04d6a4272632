"""
Plain-text file formats.

TensorFile:  header ``tensor3 I J K``, optional ``#`` comment lines (a line
             ``# modes: a b c`` sets mode names), then I*J*K values in
             first-index-fastest order.
MatrixFile:  header ``matrix ROWS COLS``, then the values row by row.
Labels file: one ``0`` or ``1`` per line; line i is subject i.
Vector file: one value per line.

Values are written with 17 significant digits so every float64 round-trips.
"""
import logging
from pathlib import Path
from typing import List, Tuple

import numpy as np
import pandas as pd

from src.analysis.significance import GroupLabels
from src.core.tensor import DEFAULT_MODE_NAMES, DenseMatrix, DenseTensor3
from src.utils.exceptions import DataFormatError, DomainError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'


def _read_lines(file_path) -> Tuple[List[str], List[str]]:
    path = Path(file_path)
    if not path.exists():
        raise DataFormatError(f"File not found: {path}")
    comments, body = [], []
    with open(path, 'r') as f:
        for line in f:
            stripped = line.strip()
            if not stripped:
                continue
            (comments if stripped.startswith('#') else body).append(stripped)
    if not body:
        raise DataFormatError(f"{path} is empty")
    return comments, body


def _parse_header(header: str, keyword: str, n_dims: int, path) -> Tuple[int, ...]:
    parts = header.split()
    if len(parts) != n_dims + 1 or parts[0] != keyword:
        raise DataFormatError(f"{path}: expected header '{keyword}' followed by {n_dims} extents, got '{header}'")
    try:
        dims = tuple(int(p) for p in parts[1:])
    except ValueError as e:
        raise DataFormatError(f"{path}: non-integer extent in header '{header}'") from e
    if any(d < 1 for d in dims):
        raise DataFormatError(f"{path}: extents must be positive, got {dims}")
    return dims


def _parse_values(lines: List[str], expected: int, path) -> np.ndarray:
    try:
        values = np.array(' '.join(lines).split(), dtype=np.float64)
    except ValueError as e:
        raise DataFormatError(f"{path}: could not parse values ({e})") from e
    if values.size != expected:
        raise DataFormatError(f"{path}: header promises {expected} values, found {values.size}")
    if not np.all(np.isfinite(values)):
        raise DataFormatError(f"{path}: values must be finite")
    return values


def read_tensor(file_path) -> DenseTensor3:
    comments, body = _read_lines(file_path)
    dims = _parse_header(body[0], 'tensor3', 3, file_path)
    values = _parse_values(body[1:], dims[0] * dims[1] * dims[2], file_path)

    mode_names = DEFAULT_MODE_NAMES
    for line in comments:
        text = line.lstrip('#').strip()
        if text.startswith('modes:'):
            names = text[len('modes:'):].split()
            if len(names) == 3:
                mode_names = tuple(names)
    try:
        tensor = DenseTensor3.from_values(dims, values, mode_names)
    except DomainError as e:
        raise DataFormatError(f"{file_path}: {e}") from e
    logger.info(f"Loaded tensor {tensor.dims} from {file_path}")
    return tensor


def write_tensor(t: DenseTensor3, file_path) -> None:
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    i, j, k = t.dims
    with open(path, 'w') as f:
        f.write(f"tensor3 {i} {j} {k}\n")
        f.write(f"# modes: {' '.join(t.mode_names)}\n")
        np.savetxt(f, t.values.reshape(j * k, i), fmt=FLOAT_FORMAT)
    logger.debug(f"Wrote tensor {t.dims} to {path}")


def read_matrix(file_path) -> DenseMatrix:
    _, body = _read_lines(file_path)
    rows, cols = _parse_header(body[0], 'matrix', 2, file_path)
    values = _parse_values(body[1:], rows * cols, file_path)
    matrix = DenseMatrix(values.reshape(rows, cols))
    logger.info(f"Loaded matrix {matrix.dims} from {file_path}")
    return matrix


def write_matrix(m, file_path) -> None:
    data = m.data if isinstance(m, DenseMatrix) else np.asarray(m, dtype=np.float64)
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows, cols = data.shape
    with open(path, 'w') as f:
        f.write(f"matrix {rows} {cols}\n")
        np.savetxt(f, data, fmt=FLOAT_FORMAT)
    logger.debug(f"Wrote matrix {data.shape} to {path}")


def read_labels(file_path) -> GroupLabels:
    path = Path(file_path)
    if not path.exists():
        raise DataFormatError(f"Labels file not found: {path}")
    try:
        df = pd.read_csv(path, header=None, comment='#', dtype=str, skip_blank_lines=True)
    except pd.errors.EmptyDataError as e:
        raise DataFormatError(f"{path}: labels file is empty") from e
    if df.shape[1] != 1:
        raise DataFormatError(f"{path}: expected one label per line, found {df.shape[1]} columns")
    raw = df[0].str.strip()
    bad = raw[~raw.isin(['0', '1'])]
    if len(bad):
        raise DataFormatError(f"{path}: line {int(bad.index[0]) + 1} has label '{bad.iloc[0]}', expected 0 or 1")
    try:
        return GroupLabels(raw.astype(int).to_numpy())
    except DomainError as e:
        raise DataFormatError(f"{path}: {e}") from e


def write_labels(labels: GroupLabels, file_path) -> None:
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.Series(labels.values).to_csv(path, header=False, index=False)


def read_vector(file_path) -> np.ndarray:
    path = Path(file_path)
    if not path.exists():
        raise DataFormatError(f"File not found: {path}")
    try:
        df = pd.read_csv(path, header=None, comment='#', float_precision='round_trip')
    except (ValueError, pd.errors.EmptyDataError) as e:
        raise DataFormatError(f"{path}: could not parse vector ({e})") from e
    if df.shape[1] != 1 or not pd.api.types.is_numeric_dtype(df[0]):
        raise DataFormatError(f"{path}: expected one number per line")
    return df[0].to_numpy(dtype=np.float64)


def write_vector(values, file_path) -> None:
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.ravel(values), fmt=FLOAT_FORMAT)
