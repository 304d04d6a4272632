"""
Nonlinear Conjugate Gradient Minimizer

Polak-Ribiere+ conjugate directions with a strong-Wolfe line search over a
flat parameter vector. Both factorization models hand their objective to
``minimize`` as a single callable returning (value, gradient).

Restarts to steepest descent happen when the conjugate direction is not a
descent direction and every ``restart_every`` iterations (default: the
parameter count). A failed line search is retried once along the negative
gradient and otherwise ends the run softly with ``line_search_failure``.
"""
import logging
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import line_search

from src.utils.exceptions import ConfigError

logger = logging.getLogger(__name__)

TERMINATION_REASONS = ('rel_f_tol', 'grad_tol', 'max_iterations', 'line_search_failure')
DESCENT_TOLERANCE = 1e-12

FunAndGrad = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass(frozen=True)
class LineSearchConfig:
    c1: float = 1e-4
    c2: float = 0.1
    max_trials: int = 50

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ConfigError(f"Line search needs 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.max_trials < 1:
            raise ConfigError(f"Line search max_trials must be >= 1, got {self.max_trials}")

    @classmethod
    def from_dict(cls, values: Optional[Dict]) -> 'LineSearchConfig':
        values = values or {}
        return cls(
            c1=float(values.get('c1', cls.c1)),
            c2=float(values.get('c2', cls.c2)),
            max_trials=int(values.get('max_trials', cls.max_trials)),
        )


@dataclass(frozen=True)
class OptimizerConfig:
    """
    Stopping rules and line-search settings for ``minimize``.

    ``restart_every`` of None means restart every n-parameters iterations.
    """

    max_iterations: int = 10000
    rel_f_tol: float = 1e-10
    grad_tol: float = 1e-9
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    cg_update: str = 'polak_ribiere_plus'
    restart_every: Optional[int] = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.rel_f_tol <= 0 or self.grad_tol <= 0:
            raise ConfigError(f"Tolerances must be positive, got rel_f_tol={self.rel_f_tol}, grad_tol={self.grad_tol}")
        if self.cg_update != 'polak_ribiere_plus':
            raise ConfigError(f"Unsupported cg_update {self.cg_update!r}; only 'polak_ribiere_plus' is available")
        if self.restart_every is not None and self.restart_every < 1:
            raise ConfigError(f"restart_every must be >= 1, got {self.restart_every}")

    @classmethod
    def from_dict(cls, values: Optional[Dict]) -> 'OptimizerConfig':
        values = values or {}
        restart = values.get('restart_every')
        return cls(
            max_iterations=int(values.get('max_iterations', 10000)),
            rel_f_tol=float(values.get('rel_f_tol', 1e-10)),
            grad_tol=float(values.get('grad_tol', 1e-9)),
            line_search=LineSearchConfig.from_dict(values.get('line_search')),
            cg_update=str(values.get('cg_update', 'polak_ribiere_plus')),
            restart_every=None if restart is None else int(restart),
        )

    def to_dict(self) -> Dict:
        return {
            'max_iterations': self.max_iterations,
            'rel_f_tol': self.rel_f_tol,
            'grad_tol': self.grad_tol,
            'line_search': {
                'c1': self.line_search.c1,
                'c2': self.line_search.c2,
                'max_trials': self.line_search.max_trials,
            },
            'cg_update': self.cg_update,
            'restart_every': self.restart_every,
        }


@dataclass
class OptimizeOutcome:
    final_point: np.ndarray
    final_f: float
    iterations: int
    termination: str
    f_trace: List[float]
    n_restarts: int = 0
    final_grad_norm: float = float('nan')

    @property
    def converged(self) -> bool:
        return self.termination != 'max_iterations' and bool(np.isfinite(self.final_f))


class _EvaluationCache:
    """Remembers the last few (value, gradient) pairs keyed by the point's bytes."""

    def __init__(self, f_and_grad: FunAndGrad, size: int = 8):
        self._f_and_grad = f_and_grad
        self._size = size
        self._entries = OrderedDict()

    def __call__(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        key = x.tobytes()
        hit = self._entries.get(key)
        if hit is not None:
            self._entries.move_to_end(key)
            return hit
        value, grad = self._f_and_grad(x)
        entry = (float(value), np.asarray(grad, dtype=np.float64))
        self._entries[key] = entry
        if len(self._entries) > self._size:
            self._entries.popitem(last=False)
        return entry

    def value(self, x: np.ndarray) -> float:
        return self(x)[0]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self(x)[1]


def _wolfe_step(cache: _EvaluationCache, x, direction, grad, f, f_before, ls: LineSearchConfig):
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        alpha, _, _, f_new, _, _ = line_search(
            cache.value, cache.gradient, x, direction, gfk=grad,
            old_fval=f, old_old_fval=f_before,
            c1=ls.c1, c2=ls.c2, maxiter=ls.max_trials,
        )
    if alpha is None or f_new is None or not np.isfinite(f_new):
        return None
    return float(alpha)


def minimize(f_and_grad: FunAndGrad, x0: np.ndarray, cfg: Optional[OptimizerConfig] = None) -> OptimizeOutcome:
    """
    Minimize a smooth function with PR+ nonlinear conjugate gradients.

    Args:
        f_and_grad: Callable returning (value, gradient) at a flat point
        x0: Starting point
        cfg: Optimizer settings (defaults when None)

    Returns:
        OptimizeOutcome with the final point, value, trace and termination reason
    """
    cfg = cfg or OptimizerConfig()
    cache = _EvaluationCache(f_and_grad)
    x = np.array(x0, dtype=np.float64).ravel()
    f, g = cache(x)
    f_trace = [f]
    restart_every = cfg.restart_every or max(1, x.size)

    grad_norm = float(np.linalg.norm(g))
    if grad_norm / (1.0 + abs(f)) <= cfg.grad_tol:
        logger.debug(f"Starting point already stationary (|g|={grad_norm:.3e})")
        return OptimizeOutcome(x, f, 0, 'grad_tol', f_trace, 0, grad_norm)

    direction = -g
    f_before = f + grad_norm / 2.0
    since_restart = 0
    n_restarts = 0
    termination = 'max_iterations'
    iteration = 0

    while iteration < cfg.max_iterations:
        alpha = _wolfe_step(cache, x, direction, g, f, f_before, cfg.line_search)
        if alpha is None and since_restart > 0:
            logger.debug(f"Line search failed at iteration {iteration}; retrying along steepest descent")
            direction = -g
            since_restart = 0
            n_restarts += 1
            alpha = _wolfe_step(cache, x, direction, g, f, f_before, cfg.line_search)
        if alpha is None:
            termination = 'line_search_failure'
            break

        x_new = x + alpha * direction
        f_new, g_new = cache(x_new)
        iteration += 1
        since_restart += 1

        f_before, f_prev = f, f
        x, f = x_new, f_new
        f_trace.append(f)

        grad_norm = float(np.linalg.norm(g_new))
        if grad_norm / (1.0 + abs(f)) <= cfg.grad_tol:
            g = g_new
            termination = 'grad_tol'
            break
        if abs(f_prev - f) / (1.0 + abs(f_prev)) <= cfg.rel_f_tol:
            g = g_new
            termination = 'rel_f_tol'
            break

        beta = max(0.0, float(np.dot(g_new, g_new - g) / np.dot(g, g)))
        candidate = -g_new + beta * direction
        g = g_new

        if since_restart >= restart_every:
            direction = -g
            since_restart = 0
            n_restarts += 1
        elif np.dot(g, candidate) >= -DESCENT_TOLERANCE * grad_norm * np.linalg.norm(candidate):
            logger.debug(f"PR+ direction is not a descent direction at iteration {iteration}; restarting")
            direction = -g
            since_restart = 0
            n_restarts += 1
        else:
            direction = candidate

        if iteration % 500 == 0:
            logger.debug(f"iter {iteration}: f={f:.10e} |g|={grad_norm:.3e}")

    grad_norm = float(np.linalg.norm(g))
    logger.debug(
        f"NCG stopped after {iteration} iterations ({termination}): f={f:.10e}, "
        f"|g|={grad_norm:.3e}, restarts={n_restarts}"
    )
    return OptimizeOutcome(x, f, iteration, termination, f_trace, n_restarts, grad_norm)
