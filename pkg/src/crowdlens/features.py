"""The five per-project crowd-dynamics features, feature matrices, scaling.

Features computed from a project's contribution stream:

* appeal      -- number of unique funders
* momentum    -- mean of the inter-arrival gaps divided by their sample
                 standard deviation (orientation configurable)
* variation   -- sample standard deviation of contribution amounts divided
                 by their mean
* latency     -- delay of the first contribution after posting, as a
                 fraction of the campaign window when a deadline exists,
                 otherwise raw days
* engagement  -- days between the first and last contribution
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._estimator import ParamsMixin
from .errors import EmptyEventStream, NonPositiveWindow
from .ingest import SECONDS_PER_DAY, Dataset, ProjectRecord

log = logging.getLogger(__name__)

FEATURE_NAMES = ("appeal", "momentum", "variation", "latency", "engagement")


@dataclass(frozen=True)
class CrowdFeatureVector:
    appeal: int
    momentum: float
    variation: float
    latency: float
    engagement: float
    latency_is_fraction: bool = True

    def as_array(self) -> np.ndarray:
        return np.array([self.appeal, self.momentum, self.variation,
                         self.latency, self.engagement], dtype=float)


def _sample_std(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1)) if values.size > 1 else 0.0


def extract_crowd_features(project: ProjectRecord, events,
                           cv_orientation: str = "mean-over-std") -> CrowdFeatureVector:
    """Compute the five crowd features for one project.

    Parameters
    ----------
    project : ProjectRecord
    events : sequence of ContributionEvent, sorted ascending by timestamp
    cv_orientation : {"mean-over-std", "std-over-mean"}
        Orientation of the momentum ratio.  The default follows the literal
        mean/std wording; the alternative is the conventional coefficient of
        variation.

    Raises
    ------
    EmptyEventStream
        If the project has no contributions.
    NonPositiveWindow
        If a deadline exists but does not come after the posting time.
    """
    if not events:
        raise EmptyEventStream(f"project '{project.project_id}' has no contributions")
    if cv_orientation not in ("mean-over-std", "std-over-mean"):
        raise ValueError(f"unknown cv_orientation {cv_orientation!r}")

    times = np.array([e.timestamp for e in events], dtype=float)
    amounts = np.array([e.amount for e in events], dtype=float)

    appeal = len({e.funder_id for e in events})

    # momentum needs at least two gaps; a zero-std (perfectly regular) stream
    # saturates to 0 rather than dividing by zero
    momentum = 0.0
    if len(events) >= 3:
        gaps = np.diff(times) / SECONDS_PER_DAY
        gap_std = _sample_std(gaps)
        gap_mean = float(np.mean(gaps))
        if gap_std == 0.0:
            log.warning("project '%s': perfectly regular gaps, momentum saturated to 0",
                        project.project_id)
        elif cv_orientation == "mean-over-std":
            momentum = gap_mean / gap_std
        else:
            momentum = gap_std / gap_mean if gap_mean > 0 else 0.0

    variation = 0.0
    if len(events) >= 2:
        amount_mean = float(np.mean(amounts))
        if amount_mean > 0:
            variation = _sample_std(amounts) / amount_mean

    first_delay_days = (times[0] - project.posted_at) / SECONDS_PER_DAY
    if project.deadline_at is not None:
        window = (project.deadline_at - project.posted_at) / SECONDS_PER_DAY
        if window <= 0:
            raise NonPositiveWindow(
                f"project '{project.project_id}': campaign window is not positive")
        latency = min(max(first_delay_days / window, 0.0), 1.0)
        latency_is_fraction = True
    else:
        latency = first_delay_days
        latency_is_fraction = False

    engagement = (times[-1] - times[0]) / SECONDS_PER_DAY

    return CrowdFeatureVector(appeal, momentum, variation, latency, engagement,
                              latency_is_fraction)


def extract_all(dataset: Dataset, cv_orientation: str = "mean-over-std") -> dict:
    """Crowd features for every project with at least one contribution.

    Projects without contributions are skipped with a warning; the result maps
    project_id -> CrowdFeatureVector in dataset order.
    """
    out = {}
    skipped = 0
    for p in dataset.projects:
        events = dataset.events_for(p.project_id)
        if not events:
            skipped += 1
            continue
        out[p.project_id] = extract_crowd_features(p, events, cv_orientation)
    if skipped:
        log.warning("skipped %d project(s) without contributions", skipped)
    return out


@dataclass
class FeatureMatrix:
    """Numeric per-project design matrix with column provenance.

    ``provenance[j]`` is ``"crowd"`` or ``"project"``; ``col_min``/``col_max``
    hold the observed extrema used (and reusable) for min-max scaling.
    """

    project_ids: tuple
    columns: tuple
    provenance: tuple
    values: np.ndarray
    col_min: np.ndarray
    col_max: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        assert self.values.shape == (len(self.project_ids), len(self.columns))
        assert len(self.provenance) == len(self.columns)

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.columns.index(name)
        except ValueError:
            raise KeyError(f"no column named {name!r}") from None
        return self.values[:, j]

    def columns_of(self, provenance: str) -> tuple:
        return tuple(c for c, p in zip(self.columns, self.provenance) if p == provenance)

    def select(self, names) -> np.ndarray:
        idx = [self.columns.index(n) for n in names]
        return self.values[:, idx]


def build_feature_matrix(dataset: Dataset, include: str = "both",
                         features: dict | None = None,
                         cv_orientation: str = "mean-over-std") -> FeatureMatrix:
    """Assemble the analysis matrix from crowd features and/or covariates.

    Categorical covariates are one-hot encoded into ``name=level`` indicator
    columns (levels sorted for determinism).  ``include`` selects ``"crowd"``,
    ``"project"``, or ``"both"`` column families.
    """
    if include not in ("crowd", "project", "both"):
        raise ValueError(f"include must be crowd, project or both, not {include!r}")
    if features is None:
        features = extract_all(dataset, cv_orientation)
    projects = [p for p in dataset.projects if p.project_id in features]
    ids = tuple(p.project_id for p in projects)

    columns: list[str] = []
    provenance: list[str] = []
    blocks: list[np.ndarray] = []

    if include in ("crowd", "both"):
        crowd = np.array([features[pid].as_array() for pid in ids], dtype=float)
        columns.extend(FEATURE_NAMES)
        provenance.extend(["crowd"] * len(FEATURE_NAMES))
        blocks.append(crowd)

    if include in ("project", "both"):
        for cov in dataset.schema.covariates:
            if cov.kind == "numeric":
                col = np.array([float(p.covariates[cov.name]) for p in projects])
                columns.append(cov.name)
                provenance.append("project")
                blocks.append(col[:, None])
            else:
                levels = sorted({str(p.covariates[cov.name]) for p in projects})
                for level in levels:
                    col = np.array([1.0 if str(p.covariates[cov.name]) == level else 0.0
                                    for p in projects])
                    columns.append(f"{cov.name}={level}")
                    provenance.append("project")
                    blocks.append(col[:, None])

    values = np.hstack(blocks) if blocks else np.empty((len(ids), 0))
    return FeatureMatrix(
        project_ids=ids,
        columns=tuple(columns),
        provenance=tuple(provenance),
        values=values,
        col_min=values.min(axis=0) if len(ids) else np.zeros(len(columns)),
        col_max=values.max(axis=0) if len(ids) else np.zeros(len(columns)),
    )


class MinMaxNormalizer(ParamsMixin):
    """Min-max scaler with the fit/transform estimator interface.

    Columns are mapped onto [0, 1] by ``(x - min) / (max - min)``; constant
    columns map to 0.  The fitted extrema are reused on held-out data, with
    outputs clipped back into [0, 1].
    """

    def __init__(self, clip: bool = True):
        self.clip = clip

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        self.min_ = X.min(axis=0)
        self.max_ = X.max(axis=0)
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        span = self.max_ - self.min_
        safe = np.where(span > 0, span, 1.0)
        out = (X - self.min_) / safe
        out[:, span <= 0] = 0.0
        if self.clip:
            out = np.clip(out, 0.0, 1.0)
        return out

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)


def normalize_minmax(matrix: FeatureMatrix) -> FeatureMatrix:
    """Min-max normalize every column of a FeatureMatrix.

    Uses the matrix's stored per-column extrema, so the operation is
    idempotent: a second application is the identity.
    """
    span = matrix.col_max - matrix.col_min
    safe = np.where(span > 0, span, 1.0)
    values = (matrix.values - matrix.col_min) / safe
    values[:, span <= 0] = 0.0
    return FeatureMatrix(
        project_ids=matrix.project_ids,
        columns=matrix.columns,
        provenance=matrix.provenance,
        values=values,
        col_min=values.min(axis=0) if values.size else np.zeros(len(matrix.columns)),
        col_max=values.max(axis=0) if values.size else np.zeros(len(matrix.columns)),
        normalized=True,
    )


@dataclass(frozen=True)
class GroupStats:
    n: int
    mean: dict
    std: dict

    def cell(self, feature: str) -> str:
        return f"{self.mean[feature]:.3f} ({self.std[feature]:.3f})"


@dataclass(frozen=True)
class FeatureSummary:
    """Per-feature mean/std overall and split by funding outcome."""

    overall: GroupStats
    funded: GroupStats | None
    failed: GroupStats | None
    funded_share: float
    failed_share: float
    latency_is_fraction: bool = True

    def to_dict(self) -> dict:
        def grp(g):
            if g is None:
                return None
            return {"n": g.n, "mean": g.mean, "std": g.std}
        return {
            "overall": grp(self.overall),
            "funded": grp(self.funded),
            "failed": grp(self.failed),
            "funded_share": self.funded_share,
            "failed_share": self.failed_share,
            "latency_is_fraction": self.latency_is_fraction,
        }


def _group_stats(rows: np.ndarray) -> GroupStats:
    mean = {}
    std = {}
    for j, name in enumerate(FEATURE_NAMES):
        col = rows[:, j]
        mean[name] = float(np.mean(col))
        std[name] = float(np.std(col, ddof=1)) if len(col) > 1 else 0.0
    return GroupStats(n=rows.shape[0], mean=mean, std=std)


def summarize(dataset: Dataset, features: dict) -> FeatureSummary:
    """Table-style summary: mean (std) per feature, overall and per outcome."""
    ids = [pid for pid in (p.project_id for p in dataset.projects) if pid in features]
    rows = np.array([features[pid].as_array() for pid in ids], dtype=float)
    if rows.size == 0:
        raise ValueError("no projects with features to summarize")
    outcome = {p.project_id: p.funded for p in dataset.projects}

    funded_rows = np.array([features[pid].as_array() for pid in ids if outcome[pid] is True])
    failed_rows = np.array([features[pid].as_array() for pid in ids if outcome[pid] is False])
    n = len(ids)
    n_funded = len(funded_rows) if funded_rows.size else 0
    n_failed = len(failed_rows) if failed_rows.size else 0

    fraction_flags = {features[pid].latency_is_fraction for pid in ids}
    return FeatureSummary(
        overall=_group_stats(rows),
        funded=_group_stats(funded_rows) if n_funded else None,
        failed=_group_stats(failed_rows) if n_failed else None,
        funded_share=n_funded / n,
        failed_share=n_failed / n,
        latency_is_fraction=(fraction_flags == {True}),
    )
