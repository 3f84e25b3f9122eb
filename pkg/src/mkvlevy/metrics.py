"""Empirical transport distances between equal-size samples.

In one dimension the quantile (sorted) coupling is optimal, so the
distance is exact.  In higher dimension the optimal coupling between
two N-point uniform empirical measures is an assignment, solved exactly
up to a size budget.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import BudgetError, DomainError
from .streams import as_rng

#: largest sample size routed to the assignment solver
ASSIGNMENT_BUDGET = 512


@dataclass
class DistanceReport:
    value: float
    p: float
    method: str  # "Sorted1D" | "ExactAssignment"
    bootstrap_se: Optional[float] = None

    def to_json(self) -> dict:
        out = {"value": self.value, "p": self.p, "method": self.method}
        if self.bootstrap_se is not None:
            out["bootstrap_se"] = self.bootstrap_se
        return out


def _as_samples(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise DomainError("empty sample")
    if x.ndim == 1:
        x = x[:, None]
    return x


def _match_counts(x: np.ndarray, y: np.ndarray, rng) -> tuple:
    if x.shape[0] == y.shape[0]:
        return x, y
    if rng is None:
        raise DomainError("unequal sample counts; pass rng to subsample the larger")
    rng = as_rng(rng)
    n = min(x.shape[0], y.shape[0])
    if x.shape[0] > n:
        x = x[rng.choice(x.shape[0], size=n, replace=False)]
    else:
        y = y[rng.choice(y.shape[0], size=n, replace=False)]
    return x, y


def wasserstein_1d(x, y, p: float = 1.0, rng=None) -> DistanceReport:
    """Exact W_p between two 1-d samples via the quantile coupling."""
    if p < 1:
        raise DomainError(f"order must be >= 1, got {p}")
    x, y = _as_samples(x), _as_samples(y)
    if x.shape[1] != 1 or y.shape[1] != 1:
        raise DomainError("wasserstein_1d needs scalar samples")
    x, y = _match_counts(x, y, rng)
    diff = np.abs(np.sort(x[:, 0]) - np.sort(y[:, 0]))
    value = float(np.mean(diff ** p) ** (1.0 / p))
    return DistanceReport(value=value, p=p, method="Sorted1D")


def wasserstein_exact(x, y, p: float = 1.0, rng=None) -> DistanceReport:
    """Exact W_p between equal-size samples by optimal assignment."""
    if p < 1:
        raise DomainError(f"order must be >= 1, got {p}")
    x, y = _as_samples(x), _as_samples(y)
    if x.shape[1] != y.shape[1]:
        raise DomainError("dimension mismatch")
    x, y = _match_counts(x, y, rng)
    n = x.shape[0]
    if n > ASSIGNMENT_BUDGET:
        raise BudgetError(
            f"{n} points exceed the assignment budget {ASSIGNMENT_BUDGET}; "
            "subsample the inputs first")
    cost = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2) ** p
    rows, cols = linear_sum_assignment(cost)
    value = float(np.mean(cost[rows, cols]) ** (1.0 / p))
    return DistanceReport(value=value, p=p, method="ExactAssignment")


def distance(x, y, p: float = 1.0, rng=None) -> DistanceReport:
    """Dispatch: sorted coupling in 1-d, assignment otherwise (with
    seeded subsampling down to the budget)."""
    x, y = _as_samples(x), _as_samples(y)
    if x.shape[1] == 1 and y.shape[1] == 1:
        return wasserstein_1d(x, y, p, rng)
    if max(x.shape[0], y.shape[0]) > ASSIGNMENT_BUDGET:
        rng = as_rng(rng if rng is not None else 0)
        keep = lambda s: s[rng.choice(s.shape[0], size=ASSIGNMENT_BUDGET, replace=False)] \
            if s.shape[0] > ASSIGNMENT_BUDGET else s
        x, y = keep(x), keep(y)
    return wasserstein_exact(x, y, p, rng)


def bootstrap_se(x, y, p: float = 1.0, B: int = 200, rng=0) -> float:
    """Joint-index resampling SE of the empirical distance.

    One index set is drawn per replicate and applied to both samples,
    so identical samples report SE exactly 0.
    """
    if B < 100:
        raise DomainError(f"need B >= 100 replicates, got {B}")
    x, y = _as_samples(x), _as_samples(y)
    rng = as_rng(rng)
    x, y = _match_counts(x, y, rng)
    n = x.shape[0]
    one_d = x.shape[1] == 1 and y.shape[1] == 1
    reps = np.empty(B)
    for b in range(B):
        idx = rng.integers(0, n, size=n)
        if one_d:
            reps[b] = wasserstein_1d(x[idx], y[idx], p).value
        else:
            reps[b] = distance(x[idx], y[idx], p, rng).value
    return float(reps.std(ddof=1))
