"""Analysis report assembly, schema validation, and text rendering.

The report JSON carries every table the pipeline produces (feature summary,
correlation table, evaluation metrics, importance rankings, SATT estimates,
dip results) along with the seeds and configuration needed to reproduce it
exactly.  Volatile fields such as load timestamps are deliberately excluded
so repeated runs are checksum-identical.
"""
from __future__ import annotations

import json
from importlib import resources

import jsonschema

from . import __version__ as _version
from .features import FEATURE_NAMES


def load_schema() -> dict:
    ref = resources.files("crowdlens").joinpath("schemas/report.schema.json")
    return json.loads(ref.read_text(encoding="utf-8"))


def validate_report(report: dict) -> None:
    """Raises jsonschema.ValidationError when the report violates the schema."""
    jsonschema.validate(report, load_schema())


def stable_provenance(dataset, seed: int) -> dict:
    """Reproducible provenance fields only (no wall-clock timestamps)."""
    src = dataset.provenance
    out = {"seed": int(seed),
           "n_projects": dataset.n_projects,
           "n_contributions": dataset.n_contributions}
    for key in ("projects_path", "contributions_path", "schema_path", "source",
                "missing_policy", "projects_dropped_missing", "projects_excluded",
                "projects_dropped_unresolved"):
        if key in src:
            out[key] = src[key]
    return out


def assemble_report(dataset, seed: int, config: dict, sections: dict,
                    failed: dict) -> dict:
    report = {
        "tool": {"name": "crowdlens", "version": _version},
        "provenance": stable_provenance(dataset, seed),
        "config": config,
        "stages": {
            "completed": sorted(sections.keys()),
            "failed": {k: str(v) for k, v in failed.items()},
        },
    }
    report.update(sections)
    return report


def render_text(report: dict) -> str:
    """Human-readable tables mirroring the report's sections."""
    lines = []
    tool = report.get("tool", {})
    lines.append(f"crowdlens {tool.get('version', '?')} analysis report")
    prov = report.get("provenance", {})
    lines.append(f"dataset: {prov.get('n_projects', '?')} projects, "
                 f"{prov.get('n_contributions', '?')} contributions, "
                 f"seed {prov.get('seed', '?')}")
    lines.append("")

    summary = report.get("feature_summary")
    if summary:
        lines.append("== Crowd feature summary: mean (std) ==")
        header = f"{'feature':<12} {'overall':>18} {'funded':>18} {'failed':>18}"
        lines.append(header)
        for name in FEATURE_NAMES:
            row = [f"{name:<12}"]
            for group in ("overall", "funded", "failed"):
                g = summary.get(group)
                if g:
                    row.append(f"{g['mean'][name]:>9.3f} ({g['std'][name]:.3f})")
                else:
                    row.append(f"{'-':>18}")
            lines.append(" ".join(row))
        lines.append(f"funded {summary['funded_share']:.1%} / "
                     f"failed {summary['failed_share']:.1%}")
        lines.append("")

    correlations = report.get("correlations")
    if correlations:
        lines.append("== Pearson correlation with funding success ==")
        for row in correlations:
            lines.append(f"  {row['feature']:<12} r = {row['formatted']}")
        lines.append("")

    dist = report.get("distribution_shape", {})
    if dist.get("dip"):
        lines.append("== Dip test of unimodality ==")
        for row in dist["dip"]:
            lines.append(f"  {row['feature']:<12} dip = {row['dip']:.4f}  "
                         f"p = {row['p_value']:.3f}  {row['verdict']}")
        lines.append("")

    evaluation = report.get("evaluation")
    if evaluation:
        lines.append("== Prediction (accuracy precision recall f1 auc) ==")
        lines.append(f"  {evaluation['row']}")
        lines.append("")

    importance = report.get("importance")
    if importance:
        lines.append("== Permutation importance (normalized share) ==")
        for row in importance["features"]:
            lines.append(f"  {row['name']:<20} {row['share']:.3f}")
        for row in importance.get("groups", []):
            lines.append(f"  group {row['name']:<14} {row['share']:.1%}")
        lines.append("")

    satt = report.get("satt")
    if satt:
        ms = satt["matched_sample"]
        lines.append("== CEM / SATT ==")
        lines.append(f"  {ms['summary']}  "
                     f"(L1 before {ms['l1_before']:.3f}, after {ms['l1_after']:.3f})")
        for row in satt["estimates"]:
            if row.get("error"):
                lines.append(f"  {row['feature']:<12} error: {row['error']}")
            else:
                marker = "significant" if row["significant"] else "n.s."
                lines.append(f"  {row['feature']:<12} {row['point']:+.4f}  "
                             f"[{row['ci_low']:+.4f}, {row['ci_high']:+.4f}]  {marker}")
        lines.append("")

    failed = report.get("stages", {}).get("failed", {})
    if failed:
        lines.append("== Failed stages ==")
        for stage, err in failed.items():
            lines.append(f"  {stage}: {err}")
    return "\n".join(lines) + "\n"
