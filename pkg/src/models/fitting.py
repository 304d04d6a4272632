"""
Multi-start Fitting Driver

Runs independent optimizations of one factorization problem from random
starting points, selects the converged start with the lowest objective and
records how similar the other near-optimal starts are to it.

A problem object exposes:
    n_params, objective_scale
    f_and_grad(x) -> (value, gradient)
    initial_point(rng) -> flat starting vector
    unpack(x) -> KruskalModel | CoupledModel
    model_objective(model) -> objective value of a model
Problems hold plain numpy arrays so joblib can ship them to worker processes.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from src.models.kruskal import factor_match_score, is_degenerate, normalize
from src.optimization.ncg import OptimizeOutcome, OptimizerConfig, minimize
from src.utils.exceptions import DegenerateComponentError, FitFailureError

logger = logging.getLogger(__name__)

NEAR_BEST_FRACTION = 0.01
# objectives below this fraction of the data energy count as exact fits
NEAR_BEST_FLOOR = 1e-6


@dataclass
class StartRecord:
    start: int
    objective: float
    iterations: int
    termination: str
    converged: bool
    n_restarts: int
    grad_norm: float

    @classmethod
    def from_outcome(cls, start: int, outcome: OptimizeOutcome) -> 'StartRecord':
        return cls(
            start=start,
            objective=float(outcome.final_f),
            iterations=int(outcome.iterations),
            termination=outcome.termination,
            converged=outcome.converged,
            n_restarts=int(outcome.n_restarts),
            grad_norm=float(outcome.final_grad_norm),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'start': self.start,
            'objective': self.objective,
            'iterations': self.iterations,
            'termination': self.termination,
            'converged': self.converged,
            'n_restarts': self.n_restarts,
            'grad_norm': self.grad_norm,
        }


@dataclass
class FitReport:
    """Everything a multi-start fit found, in start-index order."""

    model_type: str
    rank: int
    starts: List[StartRecord]
    best_start: Optional[int] = None
    best_objective: Optional[float] = None
    model_objective: Optional[float] = None
    uniqueness: List[Dict[str, Any]] = field(default_factory=list)
    uniqueness_min_fms: Optional[float] = None
    unique: Optional[bool] = None
    congruence: Optional[float] = None
    degenerate: Optional[bool] = None
    components: List[Dict[str, Any]] = field(default_factory=list)
    settings: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_converged(self) -> int:
        return sum(1 for s in self.starts if s.converged)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'model_type': self.model_type,
            'rank': self.rank,
            'settings': self.settings,
            'best_start': self.best_start,
            'best_objective': self.best_objective,
            'model_objective': self.model_objective,
            'n_starts': len(self.starts),
            'n_converged': self.n_converged,
            'congruence': self.congruence,
            'degenerate': self.degenerate,
            'unique': self.unique,
            'uniqueness_min_fms': self.uniqueness_min_fms,
            'uniqueness': self.uniqueness,
            'components': self.components,
            'starts': [s.to_dict() for s in self.starts],
        }


def _run_start(problem, start: int, seed: int, cfg: OptimizerConfig) -> OptimizeOutcome:
    rng = np.random.default_rng([seed, start])
    x0 = problem.initial_point(rng)
    outcome = minimize(problem.f_and_grad, x0, cfg)
    logger.debug(
        f"start {start}: f={outcome.final_f:.10e} after {outcome.iterations} iterations ({outcome.termination})"
    )
    return outcome


def run_starts(problem, n_starts: int, seed: int, cfg: OptimizerConfig,
               n_jobs: int = 1, progress: bool = False) -> List[OptimizeOutcome]:
    """Optimize from n_starts seeded random points; results come back in start order."""
    starts = range(n_starts)
    if progress:
        starts = tqdm(starts, desc=f"{problem.name} starts", unit="start")
    return Parallel(n_jobs=n_jobs)(
        delayed(_run_start)(problem, s, seed, cfg) for s in starts
    )


def fit_multistart(problem, rank: int, n_starts: int, seed: int, cfg: OptimizerConfig,
                   uniqueness_threshold: float, degeneracy_threshold: float,
                   n_jobs: int = 1, progress: bool = False) -> Tuple[Any, FitReport, List[OptimizeOutcome]]:
    """
    Fit a problem from several random starts and pick the best converged one.

    Args:
        problem: Problem object (see module docstring)
        rank: Number of components, for the report
        n_starts: Number of random starts
        seed: Base seed; start s draws from default_rng([seed, s])
        cfg: Optimizer settings
        uniqueness_threshold: Minimum FMS expected among near-best starts
        degeneracy_threshold: Congruence level flagged as degenerate
        n_jobs: joblib worker count
        progress: Show a tqdm bar over starts

    Returns:
        (normalized best model, FitReport, raw outcomes)

    Raises:
        FitFailureError: if no start converged
    """
    logger.info(f"Fitting {problem.name} rank {rank} from {n_starts} starts (seed {seed}, n_jobs {n_jobs})")
    outcomes = run_starts(problem, n_starts, seed, cfg, n_jobs=n_jobs, progress=progress)
    records = [StartRecord.from_outcome(s, o) for s, o in enumerate(outcomes)]
    report = FitReport(model_type=problem.name, rank=rank, starts=records)

    converged = [r for r in records if r.converged]
    if not converged:
        raise FitFailureError(f"None of {n_starts} starts converged", report=report)

    best = min(converged, key=lambda r: (r.objective, r.start))
    best_model = normalize(problem.unpack(outcomes[best.start].final_point))
    report.best_start = best.start
    report.best_objective = best.objective
    report.model_objective = float(problem.model_objective(best_model))

    floor = NEAR_BEST_FLOOR * max(problem.objective_scale, 1.0)
    cutoff = best.objective + NEAR_BEST_FRACTION * max(abs(best.objective), floor)
    scores = []
    for record in converged:
        if record.start == best.start or record.objective > cutoff:
            continue
        try:
            other = normalize(problem.unpack(outcomes[record.start].final_point))
            fms = factor_match_score(best_model, other).score
        except DegenerateComponentError as e:
            logger.warning(f"Start {record.start} has a zero component ({e}); scored as 0")
            fms = 0.0
        scores.append(fms)
        report.uniqueness.append({'start': record.start, 'objective': record.objective, 'fms': fms})

    report.uniqueness_min_fms = float(min(scores)) if scores else None
    report.unique = bool(not scores or min(scores) >= uniqueness_threshold)
    if not report.unique:
        logger.warning(
            f"{problem.name}: near-best starts disagree (min FMS {report.uniqueness_min_fms:.4f} "
            f"< {uniqueness_threshold}); solution may not be unique"
        )

    report.congruence, report.degenerate = is_degenerate(best_model, degeneracy_threshold)
    logger.info(
        f"{problem.name}: best start {best.start} f={best.objective:.10e}, "
        f"{report.n_converged}/{n_starts} converged, {len(scores)} near-best compared"
    )
    return best_model, report, outcomes
