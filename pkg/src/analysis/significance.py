"""
Group-difference testing on subject-mode factors.

Each column of the subjects factor is compared between the two subject
groups with an unpaired two-sample t-test; p values are Bonferroni-adjusted
over the components tested.
"""
import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from src.utils.exceptions import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GroupLabels:
    """Per-subject group membership, 0 or 1, aligned with the subjects mode."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values).ravel()
        if values.size == 0:
            raise DomainError("Group labels are empty")
        if not np.all(np.isin(values, (0, 1))):
            raise DomainError("Group labels must be 0 or 1")
        values = values.astype(np.int64)
        if values.min() == values.max():
            raise DomainError(f"Both groups must be nonempty; all labels are {int(values[0])}")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def from_sizes(cls, n_group0: int, n_group1: int) -> 'GroupLabels':
        """First n_group0 subjects in group 0, the rest in group 1."""
        return cls(np.concatenate([np.zeros(n_group0, dtype=np.int64), np.ones(n_group1, dtype=np.int64)]))

    def __len__(self):
        return int(self.values.size)

    @property
    def sizes(self):
        n1 = int(self.values.sum())
        return len(self) - n1, n1


class TTestResult(NamedTuple):
    t: float
    df: float
    p: float


@dataclass(frozen=True)
class ComponentSignificance:
    component: int
    t: float
    df: float
    p: float
    p_bonferroni: float
    significant: bool
    significant_bonferroni: bool

    def to_dict(self):
        return {
            'component': self.component,
            't': self.t,
            'df': self.df,
            'p': self.p,
            'p_bonferroni': self.p_bonferroni,
            'significant': self.significant,
            'significant_bonferroni': self.significant_bonferroni,
        }


def two_sample_ttest(values: Sequence[float], labels: GroupLabels, equal_var: bool = True) -> TTestResult:
    """
    Unpaired two-sample t-test of group 0 against group 1.

    Args:
        values: One value per subject
        labels: Group membership
        equal_var: Pooled-variance Student test when True, Welch otherwise

    Returns:
        TTestResult(t, df, two-sided p)

    Raises:
        DomainError: if a group has fewer than two members or neither group varies
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size != len(labels):
        raise DomainError(f"{values.size} values but {len(labels)} labels")
    group0 = values[labels.values == 0]
    group1 = values[labels.values == 1]
    if group0.size < 2 or group1.size < 2:
        raise DomainError(f"Each group needs at least two members, got {group0.size} and {group1.size}")
    if np.ptp(group0) == 0 and np.ptp(group1) == 0:
        raise DomainError("Both groups have zero variance; t statistic undefined")

    result = stats.ttest_ind(group0, group1, equal_var=equal_var)
    df = float(group0.size + group1.size - 2) if equal_var else float(result.df)
    return TTestResult(float(result.statistic), df, float(result.pvalue))


def bonferroni(p_values: Sequence[float]) -> np.ndarray:
    p = np.asarray(p_values, dtype=np.float64)
    return np.minimum(1.0, p * p.size)


def significance_report(model, labels: GroupLabels, alpha: float = 0.05,
                        equal_var: bool = True) -> List[ComponentSignificance]:
    """
    Test every column of the subjects-mode factor for a group difference.

    Accepts a KruskalModel, a CoupledModel or a bare (subjects x R) array.
    """
    factor = np.asarray(model.factors[0] if hasattr(model, 'factors') else model, dtype=np.float64)
    if factor.ndim != 2:
        raise DomainError(f"Subjects factor must be a matrix, got shape {factor.shape}")
    if factor.shape[0] != len(labels):
        raise DomainError(f"Subjects factor has {factor.shape[0]} rows but there are {len(labels)} labels")

    tests = [two_sample_ttest(factor[:, r], labels, equal_var) for r in range(factor.shape[1])]
    adjusted = bonferroni([t.p for t in tests])
    results = [
        ComponentSignificance(
            component=r,
            t=test.t,
            df=test.df,
            p=test.p,
            p_bonferroni=float(adjusted[r]),
            significant=bool(test.p < alpha),
            significant_bonferroni=bool(adjusted[r] < alpha),
        )
        for r, test in enumerate(tests)
    ]
    flagged = [r.component for r in results if r.significant_bonferroni]
    logger.info(f"Group differences: components {flagged} significant after Bonferroni at {alpha}")
    return results


def significance_table(results: Sequence[ComponentSignificance]) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in results]).set_index('component')


class ZMaps(NamedTuple):
    z: np.ndarray
    n_positive: np.ndarray
    n_negative: np.ndarray


def component_zmaps(v: np.ndarray, threshold: float = 2.7) -> ZMaps:
    """
    Z-score each column of a voxel factor and count voxels beyond +/- threshold.

    Constant columns map to all-zero z scores.
    """
    v = np.asarray(v, dtype=np.float64)
    centered = v - v.mean(axis=0)
    scale = centered.std(axis=0, ddof=1) if v.shape[0] > 1 else np.zeros(v.shape[1])
    z = np.divide(centered, scale, out=np.zeros_like(centered), where=scale > 0)
    return ZMaps(z, (z > threshold).sum(axis=0), (z < -threshold).sum(axis=0))
