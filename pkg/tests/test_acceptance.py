"""Acceptance gate: one test per release criterion, each printing PASS/FAIL.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the criterion lines
and timings.  Tolerances are fixed here; seeds make every check reproducible.
"""
import hashlib
import json
import time

import numpy as np
import pytest

from crowdlens import (
    ForestConfig,
    RandomForest,
    SattConfig,
    build_feature_matrix,
    coarsen,
    cross_validate,
    dip_test,
    estimate_satt,
    extract_all,
    extract_crowd_features,
    generate_market,
    l1_imbalance,
    match_strata,
    normalize_minmax,
    pearson,
    permutation_importance,
    preset_spec,
    prune_one_to_one,
    undersample_indices,
    write_market,
)
from crowdlens.cem import satt_all_features
from crowdlens.cli import run_pipeline
from crowdlens.ingest import ContributionEvent, ProjectRecord

from oracles import brute_force_features, student_t_two_sided_p

DAY = 86400


def _verdict(num, name, ok, detail=""):
    print(f"\n[criterion {num}] {'PASS' if ok else 'FAIL'}: {name} {detail}")
    assert ok, f"criterion {num} failed: {name} {detail}"


def test_criterion_1_feature_oracle_equivalence():
    started = time.monotonic()
    rng = np.random.default_rng(123)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 11))
        window_days = float(rng.uniform(3, 60))
        has_deadline = rng.random() < 0.8
        days = np.sort(rng.uniform(0, window_days, n))
        amounts = rng.lognormal(2.0, 1.0, n)
        funders = [f"f{int(k)}" for k in rng.integers(0, max(1, n), n)]
        deadline = int(window_days * DAY) if has_deadline else None
        project = ProjectRecord("p", 0, deadline, 10.0, True, {})
        events = tuple(ContributionEvent("p", funders[i], int(days[i] * DAY),
                                         float(amounts[i])) for i in range(n))
        fv = extract_crowd_features(project, events)
        ref = brute_force_features(0, deadline, funders,
                                   [e.timestamp for e in events],
                                   [e.amount for e in events])
        for name in ("appeal", "momentum", "variation", "latency", "engagement"):
            worst = max(worst, abs(getattr(fv, name) - ref[name]))
    elapsed = time.monotonic() - started
    _verdict(1, "feature oracle equivalence over 1,000 streams",
             worst <= 1e-9 and elapsed < 5.0,
             f"(max |err| = {worst:.2e}, {elapsed:.2f}s)")


def test_criterion_2_correlation_correctness():
    res = pearson([1, 2, 3, 4], [1, 3, 2, 4])
    t = 0.8 * np.sqrt(2.0 / (1.0 - 0.64))
    independent_p = student_t_two_sided_p(t, df=2)
    exact_r = res.r == 0.8
    p_ok = abs(res.p_value - independent_p) <= 1e-3
    extremes = (pearson([1, 2, 3], [1, 2, 3]).r == 1.0
                and pearson([1, 2, 3], [3, 2, 1]).r == -1.0)
    _verdict(2, "correlation hand case and extremes",
             exact_r and p_ok and extremes,
             f"(r = {res.r!r}, p = {res.p_value:.6f}, oracle p = {independent_p:.6f})")


def test_criterion_3_dip_calibration():
    started = time.monotonic()
    false_positives = 0
    for seed in range(500):
        x = np.random.default_rng(seed).random(500)
        if dip_test(x, bootstrap_reps=2000, seed=seed + 10_000).p_value < 0.05:
            false_positives += 1
    fp_rate = false_positives / 500

    rejects = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = np.concatenate([rng.normal(0, 0.1, 250), rng.normal(5, 0.1, 250)])
        if dip_test(x, bootstrap_reps=2000, seed=seed + 20_000).p_value < 0.01:
            rejects += 1
    elapsed = time.monotonic() - started
    _verdict(3, "dip-test calibration",
             0.03 <= fp_rate <= 0.07 and rejects >= 99 and elapsed < 120.0,
             f"(FP rate = {fp_rate:.3f}, mixture rejects = {rejects}/100, {elapsed:.0f}s)")


def test_criterion_4_classifier_sanity(strong_market):
    started = time.monotonic()
    ds, _ = strong_market
    feats = extract_all(ds)
    matrix = build_feature_matrix(ds, include="both", features=feats)
    y = np.array([int(ds.project(pid).funded) for pid in matrix.project_ids])

    cfg = ForestConfig(n_trees=100, undersample_iterations=20, folds=5, seed=7)
    rep = cross_validate(matrix, y, cfg)

    permuted = np.random.default_rng(99).permutation(y)
    null_cfg = ForestConfig(n_trees=100, undersample_iterations=3, folds=5, seed=8)
    null_rep = cross_validate(matrix, permuted, null_cfg)
    elapsed = time.monotonic() - started
    ok = (rep.mean["accuracy"] >= 0.85 and rep.mean["auc"] >= 0.90
          and 0.45 <= null_rep.mean["auc"] <= 0.55 and elapsed < 180.0)
    _verdict(4, "classifier sanity on planted effects", ok,
             f"(accuracy = {rep.mean['accuracy']:.3f}, auc = {rep.mean['auc']:.3f}, "
             f"null auc = {null_rep.mean['auc']:.3f}, {elapsed:.0f}s)")


def test_criterion_5_importance_separation(strong_market):
    ds, _ = strong_market
    feats = extract_all(ds)
    matrix = build_feature_matrix(ds, include="both", features=feats)
    y = np.array([int(ds.project(pid).funded) for pid in matrix.project_ids])

    rng = np.random.default_rng(55)
    balanced = undersample_indices(y, rng)
    order = rng.permutation(balanced)
    half = len(order) // 2
    train, hold = order[:half], order[half:]
    model = RandomForest(n_trees=100, seed=5).fit(matrix.values[train], y[train])
    groups = {"crowd": [j for j, p in enumerate(matrix.provenance) if p == "crowd"],
              "project": [j for j, p in enumerate(matrix.provenance) if p == "project"]}
    rep = permutation_importance(model, matrix.values[hold], y[hold],
                                 groups=groups, repeats=20, seed=3)
    shares = {matrix.columns[int(e.name[1:])]: e.share for e in rep.features}
    crowd_min = min(shares[c] for c, p in zip(matrix.columns, matrix.provenance)
                    if p == "crowd")
    noise_max = max(shares[c] for c, p in zip(matrix.columns, matrix.provenance)
                    if p == "project")
    crowd_share = rep.group_share("crowd")
    ratio_ok = crowd_min >= 5.0 * noise_max if noise_max > 0 else crowd_min > 0
    _verdict(5, "importance separation (5 informative vs 5 noise)",
             ratio_ok and crowd_share >= 0.6,
             f"(min informative share = {crowd_min:.4f}, max noise share = "
             f"{noise_max:.4f}, crowd group share = {crowd_share:.3f})")


def test_criterion_6_undersampling_exactness():
    rng = np.random.default_rng(2718)
    ok = True
    for _ in range(100):
        n = int(rng.integers(20, 2000))
        share = float(rng.uniform(0.02, 0.98))
        y = (rng.random(n) < share).astype(int)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        idx = undersample_indices(y, rng)
        if np.sum(y[idx] == 0) != np.sum(y[idx] == 1):
            ok = False
            break
        if len(np.unique(idx)) != len(idx):
            ok = False
            break
    _verdict(6, "undersampling exactness over 100 imbalanced inputs", ok)


def test_criterion_7_cem_balance_invariants():
    from crowdlens.ingest import Covariate, CovariateSchema, Dataset

    # hand case first: f = (0.5, 0.5), g = (0.25, 0.75)
    schema = CovariateSchema((Covariate("c", "categorical"),))
    projects = tuple(ProjectRecord(f"p{i}", 0, DAY, 1.0, i % 2 == 0,
                                   {"c": "A" if i < 2 else "B"}) for i in range(4))
    hand_ds = Dataset(projects, {p.project_id: () for p in projects}, schema)
    plan = coarsen(hand_ds, ["c"])
    hand = l1_imbalance([{"c": "A"}, {"c": "A"}, {"c": "B"}, {"c": "B"}],
                        [{"c": "A"}, {"c": "B"}, {"c": "B"}, {"c": "B"}], plan)
    hand_ok = hand == 0.25

    suite = [("appeal-only", 2500, 3), ("null", 2000, 4),
             ("confounded-null", 2500, 5), ("appeal-only", 3000, 6)]
    all_ok = True
    details = []
    for preset, n, seed in suite:
        ds, _ = generate_market(preset_spec(preset, n, seed))
        feats = extract_all(ds)
        plan = coarsen(ds, list(ds.schema.names),
                       overrides={"req_amount": 5, "creator_score": 5,
                                  "prior_projects": 5})
        labels = np.array([int(p.funded) for p in ds.projects])
        ms = match_strata(ds, plan, labels)
        matrix = normalize_minmax(build_feature_matrix(ds, include="project",
                                                       features=feats))
        pruned = prune_one_to_one(ms, matrix, plan)
        two_sided = all(s.treated_ids and s.control_ids for s in ms.strata)
        seen = set()
        unique_pairs = True
        for tid, cid, _ in pruned.pairs:
            if tid in seen or cid in seen:
                unique_pairs = False
            seen.add(tid)
            seen.add(cid)
        ok = (ms.l1_after <= ms.l1_before and two_sided
              and pruned.matched_treated == pruned.matched_control
              and unique_pairs)
        all_ok &= ok
        details.append(f"{preset}/{seed}: L1 {ms.l1_before:.3f}->{ms.l1_after:.4f}")
    _verdict(7, "CEM balance and pruning invariants",
             hand_ok and all_ok,
             f"(hand L1 = {hand!r}; " + "; ".join(details) + ")")


def test_criterion_8_satt_recovery_and_coverage(appeal_market):
    started = time.monotonic()
    ds, truth = appeal_market
    feats = extract_all(ds)
    plan = coarsen(ds, list(ds.schema.names))
    cfg = SattConfig(bootstrap_reps=1000, seed=17)
    out = satt_all_features(ds, feats, plan, cfg)
    est = out["estimates"]["appeal"]
    recovery_ok = abs(est.point - 0.2) <= 0.05 and est.significant

    covered = 0
    runs = 200
    for seed in range(runs):
        mds, _ = generate_market(preset_spec("null", 4000, seed=seed))
        mfeats = extract_all(mds)
        mplan = coarsen(mds, list(mds.schema.names))
        labels = np.array([int(p.funded) for p in mds.projects])
        ms = match_strata(mds, mplan, labels)
        matrix = normalize_minmax(build_feature_matrix(mds, include="project",
                                                       features=mfeats))
        values = {pid: fv.appeal for pid, fv in mfeats.items()}
        outcomes = {p.project_id: int(p.funded) for p in mds.projects}
        scfg = SattConfig(bootstrap_reps=500, seed=seed + 90_000)
        e = estimate_satt(ms, values, outcomes, matrix, mplan, scfg, name="appeal")
        if e.ci_low <= 0.0 <= e.ci_high:
            covered += 1
    coverage = covered / runs
    elapsed = time.monotonic() - started
    _verdict(8, "SATT recovery and zero-effect coverage",
             recovery_ok and 0.93 <= coverage <= 0.97 and elapsed < 600.0,
             f"(point = {est.point:+.4f} vs planted +0.2000, "
             f"CI = [{est.ci_low:+.4f}, {est.ci_high:+.4f}], "
             f"coverage = {coverage:.3f}, {elapsed:.0f}s)")


def test_criterion_9_pipeline_determinism(tmp_path):
    started = time.monotonic()
    market = tmp_path / "market"
    write_market(preset_spec("appeal-only", 800, seed=31), market)
    config = {
        "data_dir": str(market),
        "seed": 5,
        "stats": {"bootstrap_reps": 500, "histogram_bins": 20},
        "classify": {"trees": 50, "iterations": 5, "repeats": 10},
        "match": {"bins": {"req_amount": 5, "creator_score": 5,
                           "prior_projects": 5}, "bootstrap_reps": 300},
    }
    digests = []
    for run in ("a", "b"):
        report, code = run_pipeline({**config, "out_dir": str(tmp_path / run)})
        assert code == 0
        digests.append(hashlib.sha256(
            (tmp_path / run / "report.json").read_bytes()).hexdigest())
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    tables_present = all(k in report for k in
                         ("feature_summary", "correlations", "evaluation", "satt"))
    elapsed = time.monotonic() - started
    _verdict(9, "end-to-end pipeline determinism",
             digests[0] == digests[1] and tables_present and elapsed < 300.0,
             f"(sha256 = {digests[0][:16]}..., both runs equal, "
             f"all four tables present, {elapsed:.0f}s)")
