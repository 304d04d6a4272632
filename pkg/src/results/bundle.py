"""
Result Bundles

A fit is written to a directory:

    factors/A.txt, B.txt, C.txt[, V.txt]   MatrixFile per factor
    weights/lambda.txt[, sigma.txt]        one weight per line
    traces/component_<r>.txt               time index and time-mode loading
    zmaps/V_z.txt                          z-scored voxel factor (coupled fits)
    preprocessing.yaml                     applied preprocessing records
    report.yaml                            fit report, significance, objective check

Nothing time-dependent is written, so identical runs give identical files.
"""
import logging
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Union

import numpy as np
import yaml

from src.analysis.significance import component_zmaps
from src.data_processing.data_loader import FLOAT_FORMAT, read_matrix, read_vector, write_matrix, write_vector
from src.data_processing.preprocessor import PreprocessRecord
from src.models.kruskal import CoupledModel, KruskalModel
from src.utils.exceptions import DataFormatError
from src.utils.helpers import to_builtin

logger = logging.getLogger(__name__)

FACTOR_NAMES = ('A', 'B', 'C', 'V')
OBJECTIVE_CHECK_TOLERANCE = 1e-8


def write_model(out_dir, model: Union[KruskalModel, CoupledModel], zmap_threshold: float = 2.7) -> Dict:
    """
    Write factors, weights, time traces and (for coupled models) voxel z-maps.

    Returns:
        Summary of the z-maps for the report (empty for CP models)
    """
    out = Path(out_dir)
    for name, factor in zip(FACTOR_NAMES, model.factors):
        write_matrix(factor, out / 'factors' / f'{name}.txt')

    if isinstance(model, CoupledModel):
        write_vector(model.tensor_weights, out / 'weights' / 'lambda.txt')
        write_vector(model.matrix_weights, out / 'weights' / 'sigma.txt')
    else:
        write_vector(model.weights, out / 'weights' / 'lambda.txt')

    traces = out / 'traces'
    traces.mkdir(parents=True, exist_ok=True)
    time_factor = model.factors[1]
    index = np.arange(time_factor.shape[0])
    for r in range(model.rank):
        np.savetxt(traces / f'component_{r}.txt', np.column_stack([index, time_factor[:, r]]),
                   fmt=['%d', FLOAT_FORMAT])

    summary = {}
    if isinstance(model, CoupledModel):
        zmaps = component_zmaps(model.factors[3], zmap_threshold)
        write_matrix(zmaps.z, out / 'zmaps' / 'V_z.txt')
        summary = {
            'threshold': zmap_threshold,
            'voxels_above': zmaps.n_positive,
            'voxels_below': zmaps.n_negative,
        }
    logger.info(f"Wrote rank-{model.rank} model to {out}")
    return summary


def load_bundle(out_dir) -> Union[KruskalModel, CoupledModel]:
    """Read factors and weights back; a sigma file makes it a CoupledModel."""
    out = Path(out_dir)
    lam_path = out / 'weights' / 'lambda.txt'
    if not lam_path.exists():
        raise DataFormatError(f"{out} is not a result bundle (missing {lam_path})")
    lam = read_vector(lam_path)
    sigma_path = out / 'weights' / 'sigma.txt'
    if sigma_path.exists():
        factors = tuple(read_matrix(out / 'factors' / f'{n}.txt').data for n in FACTOR_NAMES)
        return CoupledModel(lam, read_vector(sigma_path), factors)
    factors = tuple(read_matrix(out / 'factors' / f'{n}.txt').data for n in FACTOR_NAMES[:3])
    return KruskalModel(lam, factors)


def objective_check(out_dir, objective: Callable, reported: float) -> Dict:
    """
    Reload the written model and compare its objective with the reported one.

    Args:
        out_dir: Bundle directory with factors and weights already written
        objective: Callable mapping a model to its objective value
        reported: Objective value recorded for the fitted model

    Returns:
        Dict with recomputed value, relative discrepancy and pass flag
    """
    recomputed = float(objective(load_bundle(out_dir)))
    discrepancy = abs(recomputed - reported) / max(abs(reported), np.finfo(np.float64).tiny)
    if reported == 0 and recomputed == 0:
        discrepancy = 0.0
    passed = discrepancy <= OBJECTIVE_CHECK_TOLERANCE
    if not passed:
        logger.error(f"Objective check failed: reported {reported:.12e}, reloaded {recomputed:.12e}")
    return {
        'reported': reported,
        'recomputed': recomputed,
        'relative_discrepancy': discrepancy,
        'tolerance': OBJECTIVE_CHECK_TOLERANCE,
        'passed': passed,
    }


def write_preprocessing(out_dir, records: Dict[str, Sequence[PreprocessRecord]]) -> None:
    payload = {name: [r.to_dict() for r in recs] for name, recs in records.items()}
    _dump_yaml(payload, Path(out_dir) / 'preprocessing.yaml')


def read_preprocessing(out_dir) -> Dict[str, List[PreprocessRecord]]:
    path = Path(out_dir) / 'preprocessing.yaml'
    with open(path, 'r') as f:
        payload = yaml.safe_load(f) or {}
    return {name: [PreprocessRecord.from_dict(d) for d in recs] for name, recs in payload.items()}


def write_report(out_dir, report: Dict) -> Path:
    path = Path(out_dir) / 'report.yaml'
    _dump_yaml(report, path)
    logger.info(f"Report written to {path}")
    return path


def read_report(out_dir) -> Dict:
    with open(Path(out_dir) / 'report.yaml', 'r') as f:
        return yaml.safe_load(f)


def _dump_yaml(payload, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        yaml.safe_dump(to_builtin(payload), f, sort_keys=False, default_flow_style=None)
