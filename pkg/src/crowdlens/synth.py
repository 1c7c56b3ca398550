"""Synthetic crowdfunding markets with planted, known effects.

Contribution streams follow a two-regime arrival process (immediate burst vs
delayed onset, which makes first-contribution latency bimodal), amounts are
log-normal, and the funding outcome is drawn from a logistic model over
planted covariate coefficients and crowd-feature effects.

Requested crowd-feature effects are probability-scale: a coefficient search
calibrates each logit coefficient so that, over the projects whose realized
feature exceeds the dataset median, the mean difference between the outcome
probability with and without the feature indicator equals the requested
effect exactly on the realized sample.  The ground truth is emitted as a
separate file so analysis code cannot accidentally read it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, ndtri
from scipy.stats import rankdata

from .errors import InvalidSpec
from .features import FEATURE_NAMES, extract_crowd_features
from .ingest import (
    ContributionEvent,
    Covariate,
    CovariateSchema,
    Dataset,
    ProjectRecord,
    save_dataset,
)

EPOCH_BASE = 1609459200  # 2021-01-01T00:00:00Z
_COEF_BRACKET = 50.0


@dataclass(frozen=True)
class CovariateGen:
    """How to draw one project covariate and its planted outcome coefficient.

    Numeric covariates draw uniformly from [low, high] and contribute
    ``coef * standardized value`` to the outcome logit; categorical ones draw
    uniformly from ``levels`` and contribute the matching entry of
    ``level_coefs``.
    """

    name: str
    kind: str = "numeric"
    low: float = 0.0
    high: float = 1.0
    levels: tuple = ()
    coef: float = 0.0
    level_coefs: tuple = ()


@dataclass
class MarketSpec:
    n_projects: int = 1000
    seed: int = 0
    covariates: tuple = ()
    window_days: tuple = (20.0, 60.0)
    mean_events: float = 18.0
    rate_sigma: float = 0.35
    early_burst_prob: float = 0.55
    burst_latency_frac: float = 0.03
    late_onset_range: tuple = (0.35, 0.9)
    span_range: tuple = (0.25, 0.9)
    gap_shape_sigma: float = 0.6
    repeat_funder_range: tuple = (0.0, 0.6)
    amount_mu: float = 3.5
    amount_sigma_range: tuple = (0.3, 1.2)
    effects: dict = field(default_factory=dict)
    signal_coefs: dict = field(default_factory=dict)
    confounding: float = 0.0
    outcome_noise: float = 0.3
    funded_share: float = 0.5

    def validate(self) -> None:
        if self.n_projects < 1:
            raise InvalidSpec("n_projects must be at least 1")
        if not 0.0 <= self.early_burst_prob <= 1.0:
            raise InvalidSpec("early_burst_prob must lie in [0, 1]")
        if not 0.0 < self.funded_share < 1.0:
            raise InvalidSpec("funded_share must lie strictly inside (0, 1)")
        if self.window_days[0] <= 0 or self.window_days[1] < self.window_days[0]:
            raise InvalidSpec("window_days must be a positive (low, high) pair")
        if self.mean_events < 1:
            raise InvalidSpec("mean_events must be at least 1")
        for fname, tau in self.effects.items():
            if fname not in FEATURE_NAMES:
                raise InvalidSpec(f"unknown crowd feature '{fname}' in effects")
            if not -1.0 <= tau <= 1.0:
                raise InvalidSpec(f"effect for '{fname}' must lie in [-1, 1]")
        for fname in self.signal_coefs:
            if fname not in FEATURE_NAMES:
                raise InvalidSpec(f"unknown crowd feature '{fname}' in signal_coefs")
        seen = set()
        for cov in self.covariates:
            if cov.name in seen:
                raise InvalidSpec(f"duplicate covariate '{cov.name}'")
            seen.add(cov.name)
            if cov.kind not in ("numeric", "categorical"):
                raise InvalidSpec(f"covariate '{cov.name}': unknown kind '{cov.kind}'")
            if cov.kind == "numeric" and cov.high <= cov.low:
                raise InvalidSpec(f"covariate '{cov.name}': high must exceed low")
            if cov.kind == "categorical":
                if len(cov.levels) < 2:
                    raise InvalidSpec(f"covariate '{cov.name}': needs at least 2 levels")
                if cov.level_coefs and len(cov.level_coefs) != len(cov.levels):
                    raise InvalidSpec(f"covariate '{cov.name}': one coef per level required")

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "covariates"}
        out["covariates"] = [c.__dict__ for c in self.covariates]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MarketSpec":
        data = dict(data)
        covs = tuple(CovariateGen(**{**c, "levels": tuple(c.get("levels", ())),
                                     "level_coefs": tuple(c.get("level_coefs", ()))})
                     for c in data.pop("covariates", []))
        for key in ("window_days", "late_onset_range", "span_range",
                    "repeat_funder_range", "amount_sigma_range"):
            if key in data:
                data[key] = tuple(data[key])
        try:
            spec = cls(covariates=covs, **data)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None
        spec.validate()
        return spec

    @classmethod
    def from_json(cls, path) -> "MarketSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class GroundTruth:
    """Planted parameters and realized per-project latents of one market."""

    seed: int
    requested_effects: dict
    calibrated_coefs: dict
    signal_coefs: dict
    realized_satt: dict
    thresholds: dict
    intercept: float
    covariate_coefs: dict
    funded_share_realized: float
    latent_quality: list

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def _draw_covariates(spec: MarketSpec, rng) -> tuple:
    """Returns (values per project, standardized-contribution matrix columns)."""
    n = spec.n_projects
    values = [{} for _ in range(n)]
    eta = np.zeros(n)
    z_conf = np.zeros(n)
    first_numeric_seen = False
    for cov in spec.covariates:
        if cov.kind == "numeric":
            draws = rng.uniform(cov.low, cov.high, n)
            std = draws.std()
            z = (draws - draws.mean()) / std if std > 0 else np.zeros(n)
            eta += cov.coef * z
            if not first_numeric_seen:
                z_conf = z
                first_numeric_seen = True
            for i in range(n):
                values[i][cov.name] = float(draws[i])
        else:
            idx = rng.integers(0, len(cov.levels), n)
            coefs = cov.level_coefs if cov.level_coefs else (0.0,) * len(cov.levels)
            eta += np.array([coefs[j] for j in idx])
            for i in range(n):
                values[i][cov.name] = cov.levels[idx[i]]
    return values, eta, z_conf


def _draw_stream(spec: MarketSpec, rng, posted: int, window_days: float,
                 rate_mult: float, pid: str, funder_counter: list) -> list:
    """One project's contribution events (at least one, all inside the window)."""
    lam = spec.mean_events * rate_mult
    n_ev = 1 + rng.poisson(max(lam - 1.0, 0.0))

    if rng.random() < spec.early_burst_prob:
        frac_first = min(rng.exponential(spec.burst_latency_frac), 0.25)
    else:
        frac_first = rng.uniform(*spec.late_onset_range)

    if n_ev >= 2:
        span_frac = rng.uniform(*spec.span_range) * max(0.98 - frac_first, 0.0)
        shape = float(np.exp(rng.normal(0.0, spec.gap_shape_sigma)))
        raw = rng.gamma(shape, 1.0, n_ev - 1)
        total = raw.sum()
        gaps_days = raw * (span_frac * window_days / total) if total > 0 else np.zeros(n_ev - 1)
    else:
        gaps_days = np.zeros(0)

    first_s = posted + int(frac_first * window_days * 86400)
    offsets = np.concatenate([[0.0], np.cumsum(gaps_days)]) * 86400.0

    repeat_p = rng.uniform(*spec.repeat_funder_range)
    funders = []
    for j in range(n_ev):
        if j > 0 and funders and rng.random() < repeat_p:
            funders.append(funders[rng.integers(0, len(funders))])
        else:
            funder_counter[0] += 1
            funders.append(f"f{funder_counter[0]:07d}")

    sigma = rng.uniform(*spec.amount_sigma_range)
    amounts = rng.lognormal(spec.amount_mu, sigma, n_ev)

    return [ContributionEvent(pid, funders[j], first_s + int(offsets[j]), float(amounts[j]))
            for j in range(n_ev)]


def _calibrate(spec: MarketSpec, eta_base: np.ndarray, indicators: np.ndarray):
    """Solve the intercept and per-feature logit coefficients.

    The intercept hits the target funded share; each feature coefficient makes
    the realized mean probability-scale effect over its treated projects equal
    the requested value.  Cyclic coordinate updates converge because each
    1-D problem is strictly monotone in its coefficient.
    """
    taus = np.array([spec.effects.get(f, 0.0) for f in FEATURE_NAMES])
    b = np.zeros(len(FEATURE_NAMES))
    alpha = 0.0

    for _ in range(8):
        def share_gap(a):
            return float(np.mean(expit(a + eta_base + indicators @ b))) - spec.funded_share
        alpha = brentq(share_gap, -60.0, 60.0, xtol=1e-12)

        for k, tau in enumerate(taus):
            if tau == 0.0:
                b[k] = 0.0
                continue
            treated = indicators[:, k] == 1.0
            if not treated.any() or treated.all():
                raise InvalidSpec(
                    f"effect requested on '{FEATURE_NAMES[k]}' but its median split is degenerate")
            eta_other = alpha + eta_base[treated] + indicators[treated] @ b - b[k]

            def effect_gap(coef):
                return float(np.mean(expit(eta_other + coef) - expit(eta_other))) - tau

            lo, hi = (0.0, _COEF_BRACKET) if tau > 0 else (-_COEF_BRACKET, 0.0)
            if effect_gap(lo) * effect_gap(hi) > 0:
                raise InvalidSpec(
                    f"effect {tau:+.3f} on '{FEATURE_NAMES[k]}' is unreachable at the "
                    f"current base rate")
            b[k] = brentq(effect_gap, lo, hi, xtol=1e-12)

    eta_full = alpha + eta_base + indicators @ b
    realized = {}
    for k, fname in enumerate(FEATURE_NAMES):
        treated = indicators[:, k] == 1.0
        if b[k] == 0.0 or not treated.any():
            realized[fname] = 0.0
        else:
            realized[fname] = float(np.mean(
                expit(eta_full[treated]) - expit(eta_full[treated] - b[k])))
    return alpha, b, eta_full, realized


def generate_market(spec: MarketSpec):
    """Generate one market; returns ``(Dataset, GroundTruth)``.

    Fully deterministic per seed: the same spec yields identical projects,
    streams, and outcomes.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_projects

    cov_values, eta_cov, z_conf = _draw_covariates(spec, rng)
    windows = rng.uniform(*spec.window_days, n)
    posted = EPOCH_BASE + rng.integers(0, 365 * 86400, n)
    rate_mult = np.exp(rng.normal(0.0, spec.rate_sigma, n) + spec.confounding * z_conf)
    noise = rng.normal(0.0, spec.outcome_noise, n) if spec.outcome_noise > 0 else np.zeros(n)

    funder_counter = [0]
    records = []
    streams = {}
    feature_rows = np.zeros((n, len(FEATURE_NAMES)))
    for i in range(n):
        pid = f"p{i:06d}"
        deadline = int(posted[i]) + int(windows[i] * 86400)
        record = ProjectRecord(
            project_id=pid,
            posted_at=int(posted[i]),
            deadline_at=deadline,
            goal_amount=float(np.round(rng.lognormal(spec.amount_mu + 2.5, 0.5), 2)),
            funded=None,
            covariates=dict(cov_values[i]),
        )
        events = _draw_stream(spec, rng, int(posted[i]), float(windows[i]),
                              float(rate_mult[i]), pid, funder_counter)
        events.sort(key=lambda e: e.timestamp)
        records.append(record)
        streams[pid] = tuple(events)
        feature_rows[i] = extract_crowd_features(record, events).as_array()

    thresholds = {fname: float(np.median(feature_rows[:, k]))
                  for k, fname in enumerate(FEATURE_NAMES)}
    indicators = (feature_rows > np.array([thresholds[f] for f in FEATURE_NAMES])).astype(float)

    # continuous signal: normal scores of each feature (rank-based, so the
    # strength is independent of the features' raw scales and tails)
    eta_signal = np.zeros(n)
    for k, fname in enumerate(FEATURE_NAMES):
        coef = spec.signal_coefs.get(fname, 0.0)
        if coef:
            scores = ndtri((rankdata(feature_rows[:, k]) - 0.5) / n)
            eta_signal += coef * scores

    eta_base = eta_cov + eta_signal + noise
    alpha, coefs, eta_full, realized = _calibrate(spec, eta_base, indicators)
    prob = expit(eta_full)
    # shared uniforms couple outcomes across effect settings with equal seeds,
    # making planted-effect sweeps monotone rather than just monotone on average
    funded = rng.random(n) < prob

    final_records = tuple(
        ProjectRecord(r.project_id, r.posted_at, r.deadline_at, r.goal_amount,
                      bool(funded[i]), r.covariates)
        for i, r in enumerate(records))

    schema = CovariateSchema(tuple(
        Covariate(c.name, c.kind) for c in spec.covariates))
    dataset = Dataset(
        projects=final_records,
        contributions=streams,
        schema=schema,
        provenance={"source": "synthetic", "seed": spec.seed,
                    "n_projects": n, "generator": "crowdlens.synth"},
    )
    truth = GroundTruth(
        seed=spec.seed,
        requested_effects={f: float(spec.effects.get(f, 0.0)) for f in FEATURE_NAMES},
        calibrated_coefs={f: float(coefs[k]) for k, f in enumerate(FEATURE_NAMES)},
        signal_coefs={f: float(spec.signal_coefs.get(f, 0.0)) for f in FEATURE_NAMES},
        realized_satt=realized,
        thresholds=thresholds,
        intercept=float(alpha),
        covariate_coefs={c.name: (float(c.coef) if c.kind == "numeric"
                                  else list(c.level_coefs or ()))
                         for c in spec.covariates},
        funded_share_realized=float(np.mean(funded)),
        latent_quality=[float(v) for v in noise],
    )
    return dataset, truth


def write_market(spec: MarketSpec, out_dir) -> dict:
    """Generate and write projects.csv, contributions.csv, schema.json, and
    ground_truth.json under ``out_dir``; returns the file paths."""
    dataset, truth = generate_market(spec)
    paths = save_dataset(dataset, out_dir)
    gt_path = Path(out_dir) / "ground_truth.json"
    truth.to_json(gt_path)
    paths["ground_truth"] = str(gt_path)
    return paths


def _noise_covariates() -> tuple:
    return tuple(CovariateGen(name, "numeric", 0.0, 1.0, coef=0.0)
                 for name in ("req_amount", "creator_score", "prior_projects",
                              "team_size", "media_count"))


def _predictive_covariates() -> tuple:
    # modest coefficients keep outcome probabilities away from the sigmoid
    # tails, so planted probability-scale effects are nearly homogeneous
    return (
        CovariateGen("req_amount", "numeric", 500.0, 50000.0, coef=-0.35),
        CovariateGen("creator_score", "numeric", 0.0, 10.0, coef=0.4),
        CovariateGen("prior_projects", "numeric", 0.0, 20.0, coef=0.25),
        CovariateGen("category", "categorical",
                     levels=("arts", "tech", "community"),
                     level_coefs=(0.15, -0.2, 0.05)),
    )


def preset_spec(name: str, n_projects: int, seed: int) -> MarketSpec:
    """Canonical market specs used by the test suite and CLI examples.

    * ``strong`` -- strong planted effects on all five crowd features, pure
      noise covariates (separable classification benchmark).
    * ``appeal-only`` -- probability-scale appeal effect of +0.2, predictive
      and confounded covariates (SATT recovery benchmark).
    * ``null`` -- no crowd effects, predictive covariates, no confounding.
    * ``confounded-null`` -- no crowd effects, predictive covariates coupled
      to contribution rates (tests bias removal by matching).
    """
    if name == "strong":
        return MarketSpec(
            n_projects=n_projects, seed=seed,
            covariates=_noise_covariates(),
            effects={"appeal": 0.12, "momentum": 0.12, "variation": 0.1,
                     "latency": -0.1, "engagement": -0.1},
            signal_coefs={"appeal": 2.6, "momentum": 2.6, "variation": 2.4,
                          "latency": -2.4, "engagement": -2.2},
            outcome_noise=0.12,
        )
    if name == "appeal-only":
        # gentle covariate slopes keep the planted probability-scale effect
        # near-homogeneous across strata, so the matched-sample SATT and the
        # population effect coincide
        return MarketSpec(
            n_projects=n_projects, seed=seed,
            covariates=(
                CovariateGen("req_amount", "numeric", 500.0, 50000.0, coef=-0.2),
                CovariateGen("creator_score", "numeric", 0.0, 10.0, coef=0.22),
                CovariateGen("prior_projects", "numeric", 0.0, 20.0, coef=0.14),
                CovariateGen("category", "categorical",
                             levels=("arts", "tech", "community"),
                             level_coefs=(0.08, -0.11, 0.03)),
            ),
            effects={"appeal": 0.2},
            confounding=0.4,
            outcome_noise=0.15,
        )
    if name == "null":
        return MarketSpec(
            n_projects=n_projects, seed=seed,
            covariates=_predictive_covariates(),
            effects={},
            confounding=0.0,
            outcome_noise=0.2,
        )
    if name == "confounded-null":
        return MarketSpec(
            n_projects=n_projects, seed=seed,
            covariates=_predictive_covariates(),
            effects={},
            confounding=0.4,
            outcome_noise=0.2,
        )
    raise InvalidSpec(f"unknown preset '{name}'")
