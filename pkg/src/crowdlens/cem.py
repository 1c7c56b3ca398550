"""Coarsened Exact Matching and treatment-effect estimation.

Workflow: coarsen the matching covariates into bins (Sturges equal-width by
default), group projects by exact bin signature, keep strata containing both
groups, weight controls by the standard CEM scheme, optionally prune to
one-to-one pairs by Euclidean distance, then estimate the sample average
treatment effect on the treated (SATT) of each crowd feature with
logit-imputed counterfactual outcomes.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyData,
    NoCommonSupport,
    NoTreatmentVariation,
    SeparationDetected,
    UnknownColumn,
    UnknownCovariate,
)
from .features import FEATURE_NAMES, FeatureMatrix, build_feature_matrix, normalize_minmax
from .ingest import Dataset
from .logit import LogisticModel

log = logging.getLogger(__name__)


def sturges_bins(n: int) -> int:
    return max(1, math.ceil(math.log2(n) + 1)) if n > 0 else 1


@dataclass(frozen=True)
class CoarseningPlan:
    """Bin edges per numeric covariate, identity mapping per categorical."""

    covariates: tuple
    numeric_edges: dict  # name -> ndarray of strictly increasing edges
    categorical_levels: dict  # name -> {level: bin index}

    def n_bins(self, name: str) -> int:
        if name in self.numeric_edges:
            return max(1, len(self.numeric_edges[name]) - 1)
        return len(self.categorical_levels[name])

    def bin_of(self, name: str, value) -> int:
        if name in self.numeric_edges:
            edges = self.numeric_edges[name]
            k = max(1, len(edges) - 1)
            j = int(np.searchsorted(edges, float(value), side="right")) - 1
            return min(max(j, 0), k - 1)
        levels = self.categorical_levels[name]
        key = str(value)
        if key not in levels:
            raise ValueError(f"covariate '{name}': unseen level {key!r}")
        return levels[key]

    def signature(self, covariates: dict) -> tuple:
        return tuple(self.bin_of(name, covariates[name]) for name in self.covariates)

    def to_dict(self) -> dict:
        return {
            "covariates": list(self.covariates),
            "numeric_edges": {k: [float(e) for e in v] for k, v in self.numeric_edges.items()},
            "categorical_levels": dict(self.categorical_levels),
        }


def coarsen(dataset: Dataset, covariates, overrides: dict | None = None) -> CoarseningPlan:
    """Build a coarsening plan over the named covariates.

    Numeric covariates get ceil(log2(n) + 1) equal-width bins over their
    observed range (Sturges); categorical covariates pass through one bin per
    level.  ``overrides`` maps a covariate name to either an integer bin
    count or an explicit sequence of cut points.
    """
    if dataset.n_projects == 0:
        raise EmptyData("cannot coarsen an empty dataset")
    declared = set(dataset.schema.names)
    for name in covariates:
        if name not in declared:
            raise UnknownCovariate(f"covariate '{name}' is not declared in the schema")
    overrides = overrides or {}

    n = dataset.n_projects
    numeric_edges = {}
    categorical_levels = {}
    for name in covariates:
        kind = dataset.schema.kind_of(name)
        if kind == "numeric":
            values = np.array([float(p.covariates[name]) for p in dataset.projects])
            override = overrides.get(name)
            if override is not None and not isinstance(override, int):
                edges = np.asarray(sorted(float(c) for c in override))
                if len(edges) < 2 or np.any(np.diff(edges) <= 0):
                    raise ValueError(f"covariate '{name}': cut points must be strictly increasing")
            else:
                k = override if isinstance(override, int) else sturges_bins(n)
                lo, hi = float(values.min()), float(values.max())
                if hi <= lo:
                    edges = np.array([lo, lo])  # constant column: one bin
                else:
                    edges = np.linspace(lo, hi, k + 1)
            numeric_edges[name] = edges
        else:
            levels = sorted({str(p.covariates[name]) for p in dataset.projects})
            categorical_levels[name] = {level: i for i, level in enumerate(levels)}
    return CoarseningPlan(tuple(covariates), numeric_edges, categorical_levels)


@dataclass(frozen=True)
class Stratum:
    signature: tuple
    treated_ids: tuple
    control_ids: tuple
    weights: dict  # project_id -> CEM weight


@dataclass
class MatchedSample:
    """CEM strata with weights, balance diagnostics, and optional 1:1 pairs."""

    strata: tuple
    total_treated: int
    total_control: int
    matched_treated: int
    matched_control: int
    l1_before: float
    l1_after: float
    pairs: tuple | None = None
    pruned: bool = False

    @property
    def unmatched_treated(self) -> int:
        return self.total_treated - self.matched_treated

    @property
    def unmatched_control(self) -> int:
        return self.total_control - self.matched_control

    def members(self):
        """Yields (project_id, group, weight, signature) over retained units."""
        for s in self.strata:
            for pid in s.treated_ids:
                yield pid, 1, s.weights[pid], s.signature
            for pid in s.control_ids:
                yield pid, 0, s.weights[pid], s.signature

    def summary_line(self) -> str:
        return (f"matched {self.matched_treated:,} of {self.total_treated:,} "
                f"funded projects")

    def to_dict(self) -> dict:
        return {
            "n_strata": len(self.strata),
            "total_treated": self.total_treated,
            "total_control": self.total_control,
            "matched_treated": self.matched_treated,
            "matched_control": self.matched_control,
            "unmatched_treated": self.unmatched_treated,
            "unmatched_control": self.unmatched_control,
            "l1_before": self.l1_before,
            "l1_after": self.l1_after,
            "pruned": self.pruned,
            "n_pairs": len(self.pairs) if self.pairs is not None else None,
            "summary": self.summary_line(),
        }


def _l1_from_masses(treated_mass: dict, control_mass: dict) -> float:
    total_t = sum(treated_mass.values())
    total_c = sum(control_mass.values())
    if total_t <= 0 or total_c <= 0:
        raise EmptyData("both groups must carry positive mass")
    cells = set(treated_mass) | set(control_mass)
    return 0.5 * sum(abs(treated_mass.get(c, 0.0) / total_t - control_mass.get(c, 0.0) / total_c)
                     for c in cells)


def l1_imbalance(treated_rows, control_rows, plan: CoarseningPlan) -> float:
    """L1 multivariate imbalance: half the summed absolute difference of the
    groups' relative cell frequencies over the plan's bin signatures.

    0 is perfect balance, 1 perfect imbalance.  Rows are covariate mappings
    (or objects with a ``covariates`` attribute).
    """
    def masses(rows):
        out = {}
        for row in rows:
            covs = getattr(row, "covariates", row)
            sig = plan.signature(covs)
            out[sig] = out.get(sig, 0.0) + 1.0
        return out

    return _l1_from_masses(masses(treated_rows), masses(control_rows))


def match_strata(dataset: Dataset, plan: CoarseningPlan, group_labels) -> MatchedSample:
    """Group projects by exact bin signature and keep two-sided strata.

    ``group_labels`` is the 0/1 treated indicator aligned with
    ``dataset.projects`` (1 = treated, conventionally the funded group).
    Treated members weigh 1; control members weigh
    ``(stratum treated / stratum control) * (matched control total / matched
    treated total)``.
    """
    labels = np.asarray(group_labels).astype(int)
    if labels.shape != (dataset.n_projects,):
        raise ValueError(f"group_labels has shape {labels.shape}, "
                         f"expected ({dataset.n_projects},)")
    if not ((labels == 1).any() and (labels == 0).any()):
        raise EmptyData("both groups must be non-empty")

    by_sig: dict = {}
    for p, lab in zip(dataset.projects, labels):
        sig = plan.signature(p.covariates)
        bucket = by_sig.setdefault(sig, ([], []))
        bucket[lab].append(p.project_id)  # bucket[1] treated, bucket[0] control

    retained = {sig: (c, t) for sig, (c, t) in by_sig.items() if c and t}
    if not retained:
        raise NoCommonSupport("no stratum contains both groups")

    matched_treated = sum(len(t) for _, t in retained.values())
    matched_control = sum(len(c) for c, _ in retained.values())

    strata = []
    treated_w_mass: dict = {}
    control_w_mass: dict = {}
    for sig in sorted(retained):
        control_ids, treated_ids = retained[sig]
        w_control = (len(treated_ids) / len(control_ids)) * (matched_control / matched_treated)
        weights = {pid: 1.0 for pid in treated_ids}
        weights.update({pid: w_control for pid in control_ids})
        strata.append(Stratum(sig, tuple(treated_ids), tuple(control_ids), weights))
        treated_w_mass[sig] = float(len(treated_ids))
        control_w_mass[sig] = w_control * len(control_ids)

    l1_before = l1_imbalance(
        [p for p, lab in zip(dataset.projects, labels) if lab == 1],
        [p for p, lab in zip(dataset.projects, labels) if lab == 0],
        plan)
    l1_after = _l1_from_masses(treated_w_mass, control_w_mass)

    return MatchedSample(
        strata=tuple(strata),
        total_treated=int((labels == 1).sum()),
        total_control=int((labels == 0).sum()),
        matched_treated=matched_treated,
        matched_control=matched_control,
        l1_before=l1_before,
        l1_after=l1_after,
    )


def matching_columns(matrix: FeatureMatrix, plan: CoarseningPlan,
                     drop_reference: bool = False) -> list:
    """Encoded matrix columns backing the plan's covariates.

    Categorical covariates map to their ``name=level`` indicator columns;
    ``drop_reference`` omits each categorical's first level (for regression
    designs with an intercept).
    """
    cols = []
    for name in plan.covariates:
        if name in plan.numeric_edges:
            if name not in matrix.columns:
                raise UnknownColumn(f"matrix lacks column '{name}'")
            cols.append(name)
        else:
            indicators = sorted(c for c in matrix.columns if c.startswith(f"{name}="))
            if not indicators:
                raise UnknownColumn(f"matrix lacks indicator columns for '{name}'")
            cols.extend(indicators[1:] if drop_reference else indicators)
    return cols


def prune_one_to_one(ms: MatchedSample, matrix: FeatureMatrix,
                     plan: CoarseningPlan) -> MatchedSample:
    """Greedy nearest-neighbour 1:1 pairing within each stratum.

    Candidate pairs are taken in ascending Euclidean distance over the
    normalized matching covariates, ties broken by lexicographic project id;
    each unit joins at most one pair and unmatched treated units are
    discarded.  The pruned sample carries unit weights of 1.
    """
    if not matrix.normalized:
        raise ValueError("prune_one_to_one requires a min-max normalized matrix")
    cols = matching_columns(matrix, plan)
    row_of = {pid: i for i, pid in enumerate(matrix.project_ids)}
    values = matrix.select(cols)

    new_strata = []
    pairs = []
    treated_mass: dict = {}
    control_mass: dict = {}
    for s in ms.strata:
        cand = []
        for tid in s.treated_ids:
            vt = values[row_of[tid]]
            for cid in s.control_ids:
                dist = float(np.linalg.norm(vt - values[row_of[cid]]))
                cand.append((dist, tid, cid))
        cand.sort()
        used_t: set = set()
        used_c: set = set()
        kept = []
        for dist, tid, cid in cand:
            if tid in used_t or cid in used_c:
                continue
            used_t.add(tid)
            used_c.add(cid)
            kept.append((tid, cid, dist))
        if not kept:
            continue
        t_ids = tuple(t for t, _, _ in kept)
        c_ids = tuple(c for _, c, _ in kept)
        weights = {pid: 1.0 for pid in t_ids + c_ids}
        new_strata.append(Stratum(s.signature, t_ids, c_ids, weights))
        pairs.extend(kept)
        treated_mass[s.signature] = float(len(kept))
        control_mass[s.signature] = float(len(kept))

    if not new_strata:
        raise NoCommonSupport("pruning removed every stratum")
    n_pairs = len(pairs)
    return MatchedSample(
        strata=tuple(new_strata),
        total_treated=ms.total_treated,
        total_control=ms.total_control,
        matched_treated=n_pairs,
        matched_control=n_pairs,
        l1_before=ms.l1_before,
        l1_after=_l1_from_masses(treated_mass, control_mass),
        pairs=tuple(pairs),
        pruned=True,
    )


@dataclass
class SattConfig:
    treatment_quantile: float = 0.5
    bootstrap_reps: int = 1000
    seed: int = 0
    ridge: float = 1e-4
    prune: bool = False

    def __post_init__(self):
        if not 0.0 < self.treatment_quantile < 1.0:
            raise ValueError("treatment_quantile must lie strictly inside (0, 1)")
        if self.bootstrap_reps < 10:
            raise ValueError("bootstrap_reps must be at least 10")


@dataclass(frozen=True)
class SattEstimate:
    feature: str
    point: float
    ci_low: float
    ci_high: float
    n_treated: int
    metadata: dict = field(default_factory=dict)

    @property
    def significant(self) -> bool:
        """True when the 95% CI does not overlap zero."""
        return self.ci_low > 0.0 or self.ci_high < 0.0

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "point": self.point,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_treated": self.n_treated,
            "significant": self.significant,
            "metadata": self.metadata,
        }


def _fit_logit(design, y, w, ridge):
    """Unpenalized IRLS fit with a ridge fallback on separation."""
    try:
        return LogisticModel().fit(design, y, sample_weight=w), False
    except SeparationDetected:
        return LogisticModel(ridge=ridge).fit(design, y, sample_weight=w), True


def _satt_from_fit(model, design_t0, treat_mask, y, w) -> float:
    p0 = model.predict_proba(design_t0[treat_mask])
    wt = w[treat_mask]
    return float(np.sum(wt * (y[treat_mask] - p0)) / np.sum(wt))


def estimate_satt(ms: MatchedSample, feature_values: dict, outcomes: dict,
                  matrix: FeatureMatrix, plan: CoarseningPlan,
                  cfg: SattConfig, name: str = "") -> SattEstimate:
    """SATT of one crowd feature on the matched sample.

    The treatment indicator is 1 when the project's feature value exceeds the
    dataset-wide quantile threshold (median by default).  A weighted logit of
    outcome on treatment plus the matching covariates imputes each treated
    unit's counterfactual outcome; SATT is the CEM-weighted mean over treated
    units of (observed - imputed).  The 95% CI is a seeded percentile
    bootstrap over matched strata.

    Parameters
    ----------
    feature_values : dict
        project_id -> feature value over the whole dataset (threshold source).
    outcomes : dict
        project_id -> 0/1 funded flag.
    matrix : FeatureMatrix
        Normalized matrix supplying the encoded matching covariates.
    """
    threshold = float(np.quantile(np.array(list(feature_values.values()), dtype=float),
                                  cfg.treatment_quantile))

    unit_ids = []
    unit_w = []
    unit_y = []
    unit_t = []
    unit_stratum = []
    for k, s in enumerate(ms.strata):
        for pid in s.treated_ids + s.control_ids:
            unit_ids.append(pid)
            unit_w.append(s.weights[pid])
            unit_y.append(int(outcomes[pid]))
            unit_t.append(1.0 if feature_values[pid] > threshold else 0.0)
            unit_stratum.append(k)
    if not unit_ids:
        raise EmptyData("matched sample has no members")
    w = np.array(unit_w)
    y = np.array(unit_y, dtype=float)
    t = np.array(unit_t)
    stratum_idx = np.array(unit_stratum)
    if t.min() == t.max():
        raise NoTreatmentVariation(
            f"feature '{name}': every matched unit falls on one side of the threshold")

    cols = matching_columns(matrix, plan, drop_reference=True)
    row_of = {pid: i for i, pid in enumerate(matrix.project_ids)}
    covs = matrix.select(cols)[[row_of[pid] for pid in unit_ids]]
    # constant columns within the matched sample would make IRLS singular
    keep = covs.std(axis=0) > 0
    covs = covs[:, keep]

    design = np.hstack([t[:, None], covs])
    design_t0 = design.copy()
    design_t0[:, 0] = 0.0
    treat_mask = t == 1.0

    model, ridge_used = _fit_logit(design, y, w, cfg.ridge)
    point = _satt_from_fit(model, design_t0, treat_mask, y, w)

    rng = np.random.default_rng(cfg.seed)
    n_strata = len(ms.strata)
    estimates = []
    for _ in range(cfg.bootstrap_reps):
        counts = np.bincount(rng.integers(0, n_strata, n_strata), minlength=n_strata)
        mult = counts[stratum_idx].astype(float)
        active = mult > 0
        tb = t[active]
        if tb.size == 0 or tb.min() == tb.max():
            continue
        wb = (w * mult)[active]
        try:
            model_b, _ = _fit_logit(design[active], y[active], wb, cfg.ridge)
        except SeparationDetected:  # pragma: no cover - ridge fallback failed
            continue
        p0 = model_b.predict_proba(design_t0[active][tb == 1.0])
        wt = wb[tb == 1.0]
        estimates.append(float(np.sum(wt * (y[active][tb == 1.0] - p0)) / np.sum(wt)))

    if len(estimates) < max(10, cfg.bootstrap_reps // 2):
        log.warning("feature '%s': only %d of %d bootstrap reps were usable",
                    name, len(estimates), cfg.bootstrap_reps)
    if estimates:
        lo, hi = np.percentile(estimates, [2.5, 97.5])
        lo, hi = float(min(lo, point)), float(max(hi, point))
    else:
        lo = hi = point

    return SattEstimate(
        feature=name,
        point=point,
        ci_low=lo,
        ci_high=hi,
        n_treated=int(treat_mask.sum()),
        metadata={
            "threshold": threshold,
            "treatment_quantile": cfg.treatment_quantile,
            "ridge_fallback": ridge_used,
            "bootstrap_reps": cfg.bootstrap_reps,
            "bootstrap_reps_used": len(estimates),
            "seed": cfg.seed,
            "pruned_sample": ms.pruned,
            "treatment_reading": "treatment = feature above dataset quantile; "
                                 "outcome = funded; matched on project covariates",
        },
    )


def satt_all_features(dataset: Dataset, features: dict, plan: CoarseningPlan,
                      cfg: SattConfig) -> dict:
    """SATT per crowd feature on one shared matched sample.

    Matching treats funded projects as the treated group.  Per-feature errors
    are recorded in the result rather than raised.  Returns a dict with the
    matched sample and a result (estimate or error) per feature.
    """
    ids_with_features = set(features)
    usable = dataset.subset([p.project_id for p in dataset.projects
                             if p.project_id in ids_with_features])
    labels = np.array([int(p.funded) for p in usable.projects])
    ms = match_strata(usable, plan, labels)

    proj_matrix = normalize_minmax(build_feature_matrix(usable, include="project"))
    if cfg.prune:
        ms = prune_one_to_one(ms, proj_matrix, plan)

    outcomes = {p.project_id: int(p.funded) for p in usable.projects}
    results = {}
    for k, fname in enumerate(FEATURE_NAMES):
        values = {pid: float(getattr(fv, fname)) for pid, fv in features.items()}
        feature_cfg = SattConfig(
            treatment_quantile=cfg.treatment_quantile,
            bootstrap_reps=cfg.bootstrap_reps,
            seed=int(np.random.SeedSequence([cfg.seed, k]).generate_state(1)[0]),
            ridge=cfg.ridge,
            prune=cfg.prune,
        )
        try:
            results[fname] = estimate_satt(ms, values, outcomes, proj_matrix,
                                           plan, feature_cfg, name=fname)
        except (NoTreatmentVariation, EmptyData, SeparationDetected) as exc:
            log.warning("SATT for '%s' failed: %s", fname, exc)
            results[fname] = exc
    return {"matched_sample": ms, "estimates": results}
