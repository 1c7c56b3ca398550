"""Command-line interface.

Subcommands: ingest, features, correlate, distshape, classify, match, synth,
report, pipeline.  Every flag has a config-file equivalent; flags win over
the ``CROWDLENS_SEED`` environment variable, which wins over the config.
All outputs are UTF-8 JSON/CSV under the chosen output directory.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cem import SattConfig, coarsen, satt_all_features
from .errors import CrowdlensError
from .evaluate import ForestConfig, cross_validate, undersample_indices
from .features import (
    FEATURE_NAMES,
    build_feature_matrix,
    extract_all,
    summarize,
)
from .forest import RandomForest
from .importance import permutation_importance
from .ingest import filter_completed, load_dataset, save_dataset
from .report import assemble_report, render_text, validate_report
from .stats import correlate_with_outcome, dip_test, histogram_data
from .synth import MarketSpec, preset_spec, write_market

log = logging.getLogger("crowdlens")

DEFAULT_CONFIG = {
    "data_dir": None,
    "projects": None,
    "contributions": None,
    "schema": None,
    "out_dir": "crowdlens_out",
    "seed": 0,
    "missing_policy": "drop",
    "exclude_ids": None,
    "cv_orientation": "mean-over-std",
    "stages": ["stats", "predict", "cem"],
    "stats": {"bootstrap_reps": 2000, "histogram_bins": 30},
    "classify": {"trees": 100, "folds": 5, "iterations": 100,
                 "error_measure": "accuracy", "holdout_fraction": 0.25,
                 "repeats": 10, "groups": "crowd,project"},
    "match": {"covariates": None, "bins": {}, "treatment_quantile": 0.5,
              "bootstrap_reps": 1000, "prune": False},
}


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    return path


def _write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _dataset_paths(args_or_cfg) -> tuple:
    get = (args_or_cfg.get if isinstance(args_or_cfg, dict)
           else lambda k, d=None: getattr(args_or_cfg, k, d))
    data_dir = get("data_dir")
    projects = get("projects")
    contributions = get("contributions")
    schema = get("schema")
    if data_dir:
        base = Path(data_dir)
        projects = projects or base / "projects.csv"
        contributions = contributions or base / "contributions.csv"
        schema = schema or base / "schema.json"
    if not (projects and contributions and schema):
        raise CrowdlensError(
            "dataset location missing: pass --data-dir or all of "
            "--projects/--contributions/--schema")
    return projects, contributions, schema


def _load(args_or_cfg, completed_only: bool = True):
    projects, contributions, schema = _dataset_paths(args_or_cfg)
    get = (args_or_cfg.get if isinstance(args_or_cfg, dict)
           else lambda k, d=None: getattr(args_or_cfg, k, d))
    exclude = ()
    exclude_path = get("exclude_ids")
    if exclude_path:
        exclude = [line.strip() for line in Path(exclude_path).read_text().splitlines()
                   if line.strip()]
    dataset = load_dataset(projects, contributions, schema,
                           missing_policy=get("missing_policy") or "drop",
                           exclude_projects=exclude)
    return filter_completed(dataset) if completed_only else dataset


def _resolve_seed(flag_seed, config_seed=None) -> int:
    if flag_seed is not None:
        return int(flag_seed)
    env = os.environ.get("CROWDLENS_SEED")
    if env is not None:
        return int(env)
    if config_seed is not None:
        return int(config_seed)
    return 0


def _group_map(matrix, spec: str) -> dict:
    groups = {}
    for name in [s.strip() for s in spec.split(",") if s.strip()]:
        cols = matrix.columns_of(name)
        if not cols:
            raise CrowdlensError(f"no columns with provenance '{name}'")
        groups[name] = list(cols)
    return groups


# ------------------------------------------------------------- subcommands

def cmd_ingest(args) -> int:
    dataset = _load(args, completed_only=False)
    completed = filter_completed(dataset)
    summary = {
        "n_projects": dataset.n_projects,
        "n_contributions": dataset.n_contributions,
        "n_resolved": completed.n_projects,
        "n_unresolved": dataset.n_projects - completed.n_projects,
        "covariates": [{"name": c.name, "kind": c.kind}
                       for c in dataset.schema.covariates],
    }
    print(json.dumps(summary, indent=2))
    if args.out:
        paths = save_dataset(dataset, args.out)
        log.info("validated copy written to %s", args.out)
        print(json.dumps({"written": paths}, indent=2))
    return 0


def cmd_features(args) -> int:
    dataset = _load(args)
    feats = extract_all(dataset, args.cv_orientation)
    out = Path(args.out)
    rows = [[pid, fv.appeal, repr(fv.momentum), repr(fv.variation),
             repr(fv.latency), repr(fv.engagement)]
            for pid, fv in feats.items()]
    _write_csv(out / "features.csv", ["project_id", *FEATURE_NAMES], rows)
    summary = summarize(dataset, feats)
    _write_json(out / "feature_summary.json", summary.to_dict())
    print(f"wrote {len(rows)} feature rows to {out}")
    return 0


def cmd_correlate(args) -> int:
    dataset = _load(args)
    feats = extract_all(dataset, args.cv_orientation)
    matrix = build_feature_matrix(dataset, include="crowd", features=feats)
    y = [int(dataset.project(pid).funded) for pid in matrix.project_ids]
    results = correlate_with_outcome(matrix, y)
    out = Path(args.out)
    _write_json(out / "correlations.json", [r.to_dict() for r in results])
    _write_csv(out / "correlations.csv",
               ["feature", "r", "p_value", "n", "stars", "formatted"],
               [[r.feature, "" if r.degenerate else repr(r.r),
                 "" if r.degenerate else repr(r.p_value), r.n, r.stars, r.formatted()]
                for r in results])
    for r in results:
        print(f"{r.feature:<12} {r.formatted()}")
    return 0


def cmd_distshape(args) -> int:
    dataset = _load(args)
    seed = _resolve_seed(args.seed)
    feats = extract_all(dataset, args.cv_orientation)
    matrix = build_feature_matrix(dataset, include="crowd", features=feats)
    dips = []
    histograms = {}
    for k, name in enumerate(FEATURE_NAMES):
        col = matrix.column(name)
        res = dip_test(col, bootstrap_reps=args.bootstrap,
                       seed=int(np.random.SeedSequence([seed, k]).generate_state(1)[0]),
                       name=name)
        dips.append(res.to_dict())
        histograms[name] = histogram_data(col, bins=args.bins)
        print(f"{name:<12} dip={res.dip:.4f} p={res.p_value:.3f} {res.verdict}")
    out = Path(args.out)
    _write_json(out / "distshape.json", {"dip": dips, "histograms": histograms})
    return 0


def cmd_classify(args) -> int:
    dataset = _load(args)
    seed = _resolve_seed(args.seed)
    feats = extract_all(dataset, args.cv_orientation)
    matrix = build_feature_matrix(dataset, include="both", features=feats)
    y = np.array([int(dataset.project(pid).funded) for pid in matrix.project_ids])

    cfg = ForestConfig(n_trees=args.trees, folds=args.folds,
                       undersample_iterations=args.iterations, seed=seed)
    evaluation = cross_validate(matrix, y, cfg)
    print("accuracy precision recall f1 auc")
    print(evaluation.row())

    importance = _holdout_importance(matrix, y, args.groups, seed,
                                     args.repeats, args.error_measure,
                                     args.holdout_fraction, args.trees)
    out = Path(args.out)
    _write_json(out / "eval_report.json", evaluation.to_dict())
    _write_json(out / "importance_report.json", importance.to_dict())
    _write_csv(out / "importance_ranking.csv",
               ["rank", "feature", "raw", "share"],
               [[i + 1, e.name, repr(e.raw), repr(e.share)]
                for i, e in enumerate(importance.ranking())])
    return 0


def _holdout_importance(matrix, y, groups_spec, seed, repeats, error_measure,
                        holdout_fraction, trees):
    rng = np.random.default_rng([seed, 1])
    balanced = undersample_indices(y, rng)
    order = rng.permutation(balanced)
    n_hold = max(1, int(len(order) * holdout_fraction))
    hold, train = order[:n_hold], order[n_hold:]
    model = RandomForest(n_trees=trees, seed=seed).fit(matrix.values[train], y[train])
    groups = _group_map(matrix, groups_spec) if groups_spec else None
    group_idx = ({name: [matrix.columns.index(c) for c in cols]
                  for name, cols in groups.items()} if groups else None)
    report = permutation_importance(model, matrix.values[hold], y[hold],
                                    groups=group_idx, repeats=repeats,
                                    seed=seed, error_measure=error_measure)
    # restore column names lost by operating on the raw value array
    report.features = [e.__class__(matrix.columns[i], e.raw, e.share)
                       for i, e in enumerate(report.features)]
    return report


def cmd_match(args) -> int:
    dataset = _load(args)
    seed = _resolve_seed(args.seed)
    feats = extract_all(dataset, args.cv_orientation)
    covariates = ([c.strip() for c in args.covariates.split(",") if c.strip()]
                  if args.covariates else list(dataset.schema.names))
    overrides = {}
    for item in (args.bins or "").split(","):
        if item.strip():
            name, _, count = item.partition("=")
            overrides[name.strip()] = int(count)
    usable = dataset.subset(list(feats))
    plan = coarsen(usable, covariates, overrides)
    cfg = SattConfig(treatment_quantile=args.treatment_quantile,
                     bootstrap_reps=args.bootstrap, seed=seed, prune=args.prune)
    result = satt_all_features(usable, feats, plan, cfg)
    ms = result["matched_sample"]
    print(ms.summary_line())
    print(f"L1 before={ms.l1_before:.4f} after={ms.l1_after:.4f}")

    out = Path(args.out)
    _write_json(out / "matched_sample.json",
                {**ms.to_dict(), "plan": plan.to_dict()})
    if ms.pairs is not None:
        _write_csv(out / "pairs.csv", ["treated_id", "control_id", "distance"],
                   [[t, c, repr(d)] for t, c, d in ms.pairs])
    estimates = [(_satt_row(name, est)) for name, est in result["estimates"].items()]
    _write_json(out / "satt.json", estimates)
    _write_csv(out / "satt.csv",
               ["feature", "point", "ci_low", "ci_high", "n_treated", "significant", "error"],
               [[e["feature"],
                 "" if e.get("point") is None else repr(e["point"]),
                 "" if e.get("ci_low") is None else repr(e["ci_low"]),
                 "" if e.get("ci_high") is None else repr(e["ci_high"]),
                 e.get("n_treated", ""), e.get("significant", ""), e.get("error", "")]
                for e in estimates])
    for e in estimates:
        if e.get("error"):
            print(f"{e['feature']:<12} error: {e['error']}")
        else:
            marker = "significant" if e["significant"] else "n.s."
            print(f"{e['feature']:<12} {e['point']:+.4f} "
                  f"[{e['ci_low']:+.4f}, {e['ci_high']:+.4f}] {marker}")
    return 0


def _satt_row(name, est) -> dict:
    if isinstance(est, Exception):
        return {"feature": name, "point": None, "ci_low": None, "ci_high": None,
                "significant": None, "error": str(est)}
    return {**est.to_dict(), "error": None}


def cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    if args.spec:
        spec = MarketSpec.from_json(args.spec)
        if args.seed is not None or os.environ.get("CROWDLENS_SEED"):
            spec.seed = seed
        if args.n:
            spec.n_projects = args.n
    else:
        spec = preset_spec(args.preset, args.n or 1000, seed)
    paths = write_market(spec, args.out)
    print(json.dumps(paths, indent=2))
    return 0


def cmd_report(args) -> int:
    report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    validate_report(report)
    text = render_text(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return 0


# --------------------------------------------------------------- pipeline

def _merge_config(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge_config(merged[key], value)
        else:
            merged[key] = value
    return merged


def run_pipeline(config: dict, flag_seed=None):
    """Execute ingest -> features -> stats -> predict -> cem per the config.

    Returns (report dict or None, exit code): 0 full success, 2 when an
    optional stage failed, 1 when ingest or feature extraction aborted.
    """
    cfg = _merge_config(DEFAULT_CONFIG, config)
    seed = _resolve_seed(flag_seed, cfg.get("seed"))
    sections = {}
    failed = {}

    try:
        dataset = _load(cfg)
        if dataset.n_projects == 0:
            raise CrowdlensError("no resolved projects to analyse")
    except Exception as exc:
        log.error("stage ingest failed: %s", exc)
        print(f"pipeline aborted at stage 'ingest': {exc}", file=sys.stderr)
        return None, 1

    try:
        feats = extract_all(dataset, cfg["cv_orientation"])
        matrix = build_feature_matrix(dataset, include="both", features=feats)
        y = np.array([int(dataset.project(pid).funded) for pid in matrix.project_ids])
        sections["feature_summary"] = summarize(dataset, feats).to_dict()
    except Exception as exc:
        log.error("stage features failed: %s", exc)
        print(f"pipeline aborted at stage 'features': {exc}", file=sys.stderr)
        return None, 1

    stages = cfg.get("stages") or []

    if "stats" in stages:
        try:
            results = correlate_with_outcome(matrix, y)
            sections["correlations"] = [r.to_dict() for r in results]
            dips = []
            histograms = {}
            for k, name in enumerate(FEATURE_NAMES):
                col = matrix.column(name)
                res = dip_test(
                    col, bootstrap_reps=cfg["stats"]["bootstrap_reps"],
                    seed=int(np.random.SeedSequence([seed, 10 + k]).generate_state(1)[0]),
                    name=name)
                dips.append(res.to_dict())
                histograms[name] = histogram_data(col, bins=cfg["stats"]["histogram_bins"])
            sections["distribution_shape"] = {"dip": dips, "histograms": histograms}
        except Exception as exc:
            log.error("stage stats failed: %s", exc)
            failed["stats"] = exc

    if "predict" in stages:
        try:
            ccfg = cfg["classify"]
            fc = ForestConfig(n_trees=ccfg["trees"], folds=ccfg["folds"],
                              undersample_iterations=ccfg["iterations"], seed=seed)
            sections["evaluation"] = cross_validate(matrix, y, fc).to_dict()
            imp = _holdout_importance(matrix, y, ccfg["groups"], seed,
                                      ccfg["repeats"], ccfg["error_measure"],
                                      ccfg["holdout_fraction"], ccfg["trees"])
            sections["importance"] = imp.to_dict()
        except Exception as exc:
            log.error("stage predict failed: %s", exc)
            failed["predict"] = exc

    if "cem" in stages:
        try:
            mcfg = cfg["match"]
            covariates = mcfg["covariates"] or list(dataset.schema.names)
            usable = dataset.subset(list(feats))
            plan = coarsen(usable, covariates, mcfg.get("bins") or {})
            scfg = SattConfig(treatment_quantile=mcfg["treatment_quantile"],
                              bootstrap_reps=mcfg["bootstrap_reps"],
                              seed=seed, prune=mcfg["prune"])
            result = satt_all_features(usable, feats, plan, scfg)
            sections["satt"] = {
                "matched_sample": result["matched_sample"].to_dict(),
                "estimates": [_satt_row(name, est)
                              for name, est in result["estimates"].items()],
            }
        except Exception as exc:
            log.error("stage cem failed: %s", exc)
            failed["cem"] = exc

    # the output location must not influence the report bytes
    embedded_cfg = {k: v for k, v in cfg.items() if k != "out_dir"}
    report = assemble_report(dataset, seed, embedded_cfg, sections, failed)
    validate_report(report)
    out_dir = Path(cfg["out_dir"])
    _write_json(out_dir / "report.json", report)
    (out_dir / "report.txt").write_text(render_text(report), encoding="utf-8")
    return report, (2 if failed else 0)


def cmd_pipeline(args) -> int:
    config = {}
    if args.config:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    for key in ("data_dir", "projects", "contributions", "schema", "out_dir"):
        value = getattr(args, key, None)
        if value:
            config[key] = str(value)
    report, code = run_pipeline(config, flag_seed=args.seed)
    if report is not None:
        out_dir = Path(_merge_config(DEFAULT_CONFIG, config)["out_dir"])
        print(f"report written to {out_dir / 'report.json'} (exit {code})")
    return code


# ------------------------------------------------------------------ parser

def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data-dir", help="directory holding projects.csv, "
                                      "contributions.csv, schema.json")
    p.add_argument("--projects")
    p.add_argument("--contributions")
    p.add_argument("--schema")
    p.add_argument("--missing-policy", default="drop", choices=["drop", "impute"])
    p.add_argument("--exclude-ids", help="file with one project id per line to skip")
    p.add_argument("--cv-orientation", default="mean-over-std",
                   choices=["mean-over-std", "std-over-mean"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdlens",
        description="Crowd-dynamics analysis of crowdfunding event logs")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a dataset and print counts")
    _add_dataset_args(p)
    p.add_argument("--out", help="write a validated copy here")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("features", help="per-project crowd features + summary")
    _add_dataset_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("correlate", help="feature/outcome correlation table")
    _add_dataset_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("distshape", help="dip tests and histogram data")
    _add_dataset_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--bootstrap", type=int, default=2000)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_distshape)

    p = sub.add_parser("classify", help="cross-validated forest + importance")
    _add_dataset_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--groups", default="crowd,project")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--error-measure", default="accuracy", choices=["accuracy", "auc"])
    p.add_argument("--holdout-fraction", type=float, default=0.25)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("match", help="CEM matching, balance, and SATT estimates")
    _add_dataset_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--covariates", help="comma-separated matching covariates "
                                        "(default: all declared)")
    p.add_argument("--bins", help="bin overrides, e.g. amount=8,score=5")
    p.add_argument("--treatment-quantile", type=float, default=0.5)
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--prune", action="store_true",
                   help="prune to one-to-one pairs before estimation")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("synth", help="generate a synthetic market")
    p.add_argument("--spec", help="MarketSpec JSON path")
    p.add_argument("--preset", default="strong",
                   choices=["strong", "appeal-only", "null", "confounded-null"])
    p.add_argument("--n", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="validate and render a report JSON")
    p.add_argument("--report", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="run the full analysis per a config file")
    p.add_argument("--config")
    p.add_argument("--data-dir")
    p.add_argument("--projects")
    p.add_argument("--contributions")
    p.add_argument("--schema")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CrowdlensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
