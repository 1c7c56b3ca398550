"""Correlation and distribution-shape analysis.

Pearson correlation against binary funding outcomes (point-biserial as
Pearson on 0/1 coding) with the usual significance stars, and Hartigan's dip
test of unimodality with a seeded bootstrap null.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from ._dip import dip_batch_sorted, dip_statistic
from .errors import ConstantInput, DegenerateConstant, LengthMismatch, TooFewPoints
from .features import FeatureMatrix

STAR_THRESHOLDS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))


def significance_stars(p: float) -> str:
    for threshold, marker in STAR_THRESHOLDS:
        if p < threshold:
            return marker
    return ""


@dataclass(frozen=True)
class CorrelationResult:
    feature: str
    r: float
    p_value: float
    n: int
    stars: str
    degenerate: bool = False

    def formatted(self) -> str:
        """Row-style rendering, e.g. ``0.605***``."""
        if self.degenerate:
            return "n/a"
        return f"{self.r:.3f}{self.stars}"

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "r": None if self.degenerate else self.r,
            "p_value": None if self.degenerate else self.p_value,
            "n": self.n,
            "stars": self.stars,
            "formatted": self.formatted(),
            "degenerate": self.degenerate,
        }


def pearson(x, y, name: str = "") -> CorrelationResult:
    """Product-moment correlation with a two-sided t-test p-value.

    ``t = r * sqrt((n - 2) / (1 - r^2))`` is referred to a t distribution
    with n - 2 degrees of freedom.  Perfectly (anti)correlated input yields
    r of exactly +/-1 and p = 0.

    Raises
    ------
    LengthMismatch
        If the sequences differ in length.
    ConstantInput
        If n < 3 or either sequence is constant.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"x has shape {x.shape}, y has shape {y.shape}")
    n = x.size
    if n < 3:
        raise ConstantInput(f"need at least 3 observations, got {n}")
    xd = x - x.mean()
    yd = y - y.mean()
    sxx = float(np.sum(xd * xd))
    syy = float(np.sum(yd * yd))
    if sxx == 0.0 or syy == 0.0:
        raise ConstantInput("correlation is undefined for constant input")
    # single square root keeps rational r values exact (e.g. 4/sqrt(5*5))
    r = float(np.sum(xd * yd) / np.sqrt(sxx * syy))
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * np.sqrt((n - 2) / (1.0 - r * r))
        p = float(2.0 * sps.t.sf(abs(t), df=n - 2))
    return CorrelationResult(name, r, p, n, significance_stars(p))


def correlate_with_outcome(matrix: FeatureMatrix, outcomes) -> list[CorrelationResult]:
    """One correlation per crowd feature column against the 0/1 outcome.

    Constant feature columns are reported as degenerate rather than raising;
    a constant outcome is fatal.
    """
    y = np.asarray(outcomes, dtype=float)
    if y.size != len(matrix.project_ids):
        raise LengthMismatch(
            f"{y.size} outcomes for {len(matrix.project_ids)} projects")
    results = []
    for name in matrix.columns_of("crowd"):
        col = matrix.column(name)
        try:
            results.append(pearson(col, y, name=name))
        except ConstantInput:
            if np.all(y == y[0]):
                raise
            results.append(CorrelationResult(name, float("nan"), float("nan"),
                                             int(y.size), "", degenerate=True))
    return results


@dataclass(frozen=True)
class DipResult:
    feature: str
    dip: float
    p_value: float
    n: int
    bootstrap_reps: int
    verdict: str  # "unimodal" | "multimodal" at alpha = 0.05

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "dip": self.dip,
            "p_value": self.p_value,
            "n": self.n,
            "bootstrap_reps": self.bootstrap_reps,
            "verdict": self.verdict,
        }


def dip_test(x, bootstrap_reps: int = 2000, seed: int = 0,
             name: str = "") -> DipResult:
    """Dip statistic with a bootstrap p-value from uniform null samples.

    The p-value is the share of ``bootstrap_reps`` seeded uniform(0,1)
    samples of the same size whose dip meets or exceeds the observed one
    (valid for any continuous null because the dip only depends on ranks).

    Raises
    ------
    TooFewPoints
        If fewer than 4 observations are supplied.
    DegenerateConstant
        If all observations are identical.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        raise TooFewPoints(f"dip test needs at least 4 points, got {n}")
    if np.all(x == x[0]):
        raise DegenerateConstant("dip test is undefined for constant data")
    if bootstrap_reps < 100:
        raise ValueError("bootstrap_reps must be at least 100")
    observed = dip_statistic(x)
    rng = np.random.default_rng(seed)
    nulls = np.sort(rng.random((bootstrap_reps, n)), axis=1)
    null_dips = dip_batch_sorted(nulls)
    p = float(np.mean(null_dips >= observed))
    verdict = "multimodal" if p < 0.05 else "unimodal"
    return DipResult(name, float(observed), p, n, bootstrap_reps, verdict)


def histogram_data(x, bins: int = 30) -> dict:
    """Bin edges and counts for external plotting of a feature distribution."""
    counts, edges = np.histogram(np.asarray(x, dtype=float), bins=bins)
    return {"bin_edges": edges.tolist(), "counts": counts.tolist()}
