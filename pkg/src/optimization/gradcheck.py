"""
Finite-difference gradient checks for analytic objective gradients.
"""
import logging
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)


def finite_difference_gradient(fun: Callable[[np.ndarray], float], x: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """
    Central-difference gradient with per-coordinate step rel_step * (1 + |x_i|).

    Args:
        fun: Scalar function of a flat vector
        x: Point at which to differentiate
        rel_step: Relative step size

    Returns:
        Gradient estimate with the shape of x
    """
    x0 = np.array(x, dtype=np.float64).ravel()
    n = x0.size
    logger.debug(f"Finite difference gradient over {n} coordinates")

    grad = np.zeros(n)
    probe = x0.copy()
    for j in range(n):
        h = rel_step * (1.0 + abs(x0[j]))
        probe[j] = x0[j] + h
        f_plus = fun(probe)
        probe[j] = x0[j] - h
        f_minus = fun(probe)
        probe[j] = x0[j]
        grad[j] = (f_plus - f_minus) / (2.0 * h)
    return grad


def gradient_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest coordinate-wise relative error, each coordinate scaled by max(1, |numeric_i|)."""
    analytic = np.ravel(analytic)
    numeric = np.ravel(numeric)
    scale = np.maximum(1.0, np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / scale))
