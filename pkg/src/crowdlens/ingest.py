"""Load, validate, and index project and contribution logs.

File formats (all UTF-8):

* ``projects.csv`` -- header ``project_id, posted_at, deadline_at, goal_amount,
  funded`` followed by one column per declared covariate.  ``deadline_at`` and
  ``funded`` may be empty (no deadline / still active).
* ``contributions.csv`` -- header ``project_id, funder_id, timestamp, amount``.
* ``schema.json`` -- array of ``{"name": ..., "kind": "numeric"|"categorical"}``
  entries, one per covariate column, optionally with a ``"unit"`` note.

Timestamps are ISO-8601, coerced to UTC, truncated to whole seconds.
"""
from __future__ import annotations

import csv
import json
import logging
import statistics
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from .errors import (
    MalformedRow,
    SchemaMismatch,
    TemporalViolation,
    UnknownProject,
)

log = logging.getLogger(__name__)

PROJECT_COLUMNS = ("project_id", "posted_at", "deadline_at", "goal_amount", "funded")
CONTRIBUTION_COLUMNS = ("project_id", "funder_id", "timestamp", "amount")

SECONDS_PER_DAY = 86400.0


def parse_timestamp(text: str) -> int:
    """ISO-8601 string to UTC epoch seconds (sub-second precision dropped)."""
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    dt = datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(epoch: int) -> str:
    dt = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class ContributionEvent:
    """One timestamped funding act."""

    project_id: str
    funder_id: str
    timestamp: int
    amount: float


@dataclass(frozen=True)
class Covariate:
    name: str
    kind: str  # "numeric" | "categorical"
    unit: str | None = None


@dataclass(frozen=True)
class CovariateSchema:
    covariates: tuple[Covariate, ...]

    def __post_init__(self):
        names = [c.name for c in self.covariates]
        dupes = [n for n, k in Counter(names).items() if k > 1]
        if dupes:
            raise SchemaMismatch(dupes[0], "declared more than once in schema")
        for c in self.covariates:
            if c.kind not in ("numeric", "categorical"):
                raise SchemaMismatch(c.name, f"unknown kind '{c.kind}'")
            if c.name in PROJECT_COLUMNS:
                raise SchemaMismatch(c.name, "shadows a reserved column")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.covariates)

    def kind_of(self, name: str) -> str:
        for c in self.covariates:
            if c.name == name:
                return c.kind
        raise SchemaMismatch(name, "not declared in schema")

    @classmethod
    def from_json(cls, path) -> "CovariateSchema":
        with open(path, encoding="utf-8") as fh:
            entries = json.load(fh)
        return cls(tuple(
            Covariate(e["name"], e["kind"], e.get("unit")) for e in entries))

    def to_json(self, path) -> None:
        entries = []
        for c in self.covariates:
            entry = {"name": c.name, "kind": c.kind}
            if c.unit is not None:
                entry["unit"] = c.unit
            entries.append(entry)
        Path(path).write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class ProjectRecord:
    """A fundraising campaign and its platform covariates."""

    project_id: str
    posted_at: int
    deadline_at: int | None
    goal_amount: float
    funded: bool | None  # None while the campaign is unresolved
    covariates: dict

    @property
    def resolved(self) -> bool:
        return self.funded is not None


@dataclass(frozen=True)
class Dataset:
    """Immutable, validated view of one platform's projects and contributions.

    Contribution tuples are sorted ascending by timestamp (input order breaks
    ties), so the dataset can be shared freely across threads.
    """

    projects: tuple[ProjectRecord, ...]
    contributions: dict  # project_id -> tuple[ContributionEvent, ...]
    schema: CovariateSchema
    provenance: dict = field(default_factory=dict)

    @property
    def n_projects(self) -> int:
        return len(self.projects)

    @property
    def n_contributions(self) -> int:
        return sum(len(v) for v in self.contributions.values())

    @property
    def project_ids(self) -> tuple[str, ...]:
        return tuple(p.project_id for p in self.projects)

    def project(self, project_id: str) -> ProjectRecord:
        for p in self.projects:
            if p.project_id == project_id:
                return p
        raise UnknownProject(project_id)

    def events_for(self, project_id: str) -> tuple[ContributionEvent, ...]:
        return self.contributions.get(project_id, ())

    def outcome_array(self):
        """funded flags as 0/1 ints; raises if any project is unresolved."""
        flags = []
        for p in self.projects:
            if p.funded is None:
                raise ValueError(
                    f"project '{p.project_id}' is unresolved; call filter_completed first")
            flags.append(int(p.funded))
        return flags

    def subset(self, project_ids) -> "Dataset":
        keep = set(project_ids)
        projects = tuple(p for p in self.projects if p.project_id in keep)
        contributions = {p.project_id: self.contributions.get(p.project_id, ())
                         for p in projects}
        return Dataset(projects, contributions, self.schema, dict(self.provenance))


def _parse_float(value, path, line_no, column):
    try:
        return float(value)
    except ValueError:
        raise MalformedRow(path, line_no, column, f"not a number: {value!r}") from None


def _parse_ts(value, path, line_no, column):
    try:
        return parse_timestamp(value)
    except ValueError:
        raise MalformedRow(path, line_no, column, f"not an ISO-8601 timestamp: {value!r}") from None


def _read_header(reader, path, expected_prefix):
    header = next(reader, None)
    if header is None:
        raise MalformedRow(path, 1, expected_prefix[0], "file is empty")
    header = [h.strip() for h in header]
    for col in expected_prefix:
        if col not in header:
            raise SchemaMismatch(col, f"missing from {path}")
    return header


def _load_projects(path, schema, missing_policy, exclude):
    projects = []
    seen = set()
    missing_by_id = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = _read_header(reader, path, PROJECT_COLUMNS)
        declared = set(schema.names)
        for col in header:
            if col not in PROJECT_COLUMNS and col not in declared:
                raise SchemaMismatch(col, f"present in {path} but not declared in schema")
        for col in declared:
            if col not in header:
                raise SchemaMismatch(col, f"declared in schema but missing from {path}")
        index = {col: i for i, col in enumerate(header)}

        for row in reader:
            line_no = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(path, line_no, header[min(len(row), len(header) - 1)],
                                   f"expected {len(header)} fields, found {len(row)}")
            pid = row[index["project_id"]].strip()
            if not pid:
                raise MalformedRow(path, line_no, "project_id", "empty project id")
            if pid in seen:
                raise MalformedRow(path, line_no, "project_id", f"duplicate project id '{pid}'")
            seen.add(pid)
            if pid in exclude:
                continue

            posted_at = _parse_ts(row[index["posted_at"]], path, line_no, "posted_at")
            raw_deadline = row[index["deadline_at"]].strip()
            deadline_at = _parse_ts(raw_deadline, path, line_no, "deadline_at") if raw_deadline else None
            if deadline_at is not None and deadline_at <= posted_at:
                raise TemporalViolation(
                    f"{path}:{line_no} project '{pid}': deadline "
                    f"{format_timestamp(deadline_at)} is not after posting "
                    f"{format_timestamp(posted_at)}")
            goal = _parse_float(row[index["goal_amount"]], path, line_no, "goal_amount")
            if goal <= 0:
                raise MalformedRow(path, line_no, "goal_amount", f"must be positive, got {goal}")
            raw_funded = row[index["funded"]].strip()
            if raw_funded == "":
                funded = None
            elif raw_funded in ("0", "1"):
                funded = bool(int(raw_funded))
            else:
                raise MalformedRow(path, line_no, "funded", f"expected 0, 1 or empty, got {raw_funded!r}")

            covariates = {}
            missing = []
            for cov in schema.covariates:
                raw = row[index[cov.name]].strip()
                if raw == "":
                    missing.append(cov.name)
                    covariates[cov.name] = None
                elif cov.kind == "numeric":
                    covariates[cov.name] = _parse_float(raw, path, line_no, cov.name)
                else:
                    covariates[cov.name] = raw
            if missing:
                missing_by_id[pid] = missing
            projects.append(ProjectRecord(pid, posted_at, deadline_at, goal, funded, covariates))
    return projects, missing_by_id


def _apply_missing_policy(projects, missing_by_id, schema, policy):
    if not missing_by_id:
        return projects, 0
    if policy == "drop":
        kept = [p for p in projects if p.project_id not in missing_by_id]
        log.warning("dropped %d project(s) with missing covariate values", len(missing_by_id))
        return kept, len(missing_by_id)
    if policy != "impute":
        raise ValueError(f"unknown missing-value policy {policy!r}")
    # mode for categoricals, median for numerics, computed over observed values
    fills = {}
    for cov in schema.covariates:
        observed = [p.covariates[cov.name] for p in projects if p.covariates[cov.name] is not None]
        if not observed:
            raise SchemaMismatch(cov.name, "no observed values to impute from")
        if cov.kind == "numeric":
            fills[cov.name] = statistics.median(observed)
        else:
            fills[cov.name] = Counter(observed).most_common(1)[0][0]
    patched = []
    for p in projects:
        if p.project_id in missing_by_id:
            covs = dict(p.covariates)
            for name in missing_by_id[p.project_id]:
                covs[name] = fills[name]
            patched.append(replace(p, covariates=covs))
        else:
            patched.append(p)
    log.info("imputed covariate values on %d project(s)", len(missing_by_id))
    return patched, 0


def _load_contributions(path, projects_by_id, skip_ids=frozenset()):
    per_project = {pid: [] for pid in projects_by_id}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = _read_header(reader, path, CONTRIBUTION_COLUMNS)
        for col in header:
            if col not in CONTRIBUTION_COLUMNS:
                raise SchemaMismatch(col, f"unexpected column in {path}")
        index = {col: i for i, col in enumerate(header)}
        for row in reader:
            line_no = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(path, line_no, header[min(len(row), len(header) - 1)],
                                   f"expected {len(header)} fields, found {len(row)}")
            pid = row[index["project_id"]].strip()
            if pid not in per_project:
                if pid in skip_ids:
                    continue  # project was excluded or dropped, not unknown
                raise UnknownProject(pid, path, line_no)
            funder = row[index["funder_id"]].strip()
            ts = _parse_ts(row[index["timestamp"]], path, line_no, "timestamp")
            amount = _parse_float(row[index["amount"]], path, line_no, "amount")
            if amount < 0:
                raise MalformedRow(path, line_no, "amount", f"must be non-negative, got {amount}")
            posted = projects_by_id[pid].posted_at
            if ts < posted:
                raise TemporalViolation(
                    f"{path}:{line_no} contribution to '{pid}' at {format_timestamp(ts)} "
                    f"precedes posting {format_timestamp(posted)}")
            per_project[pid].append(ContributionEvent(pid, funder, ts, amount))
    # stable sort keeps input order on timestamp ties
    return {pid: tuple(sorted(events, key=lambda e: e.timestamp))
            for pid, events in per_project.items()}


def load_dataset(projects_path, contributions_path, schema_path, *,
                 missing_policy: str = "drop",
                 exclude_projects=()) -> Dataset:
    """Read and validate the three dataset files into an immutable Dataset.

    Parameters
    ----------
    projects_path, contributions_path, schema_path : path-like
        Locations of projects.csv, contributions.csv, and schema.json.
    missing_policy : {"drop", "impute"}
        What to do with projects that have empty covariate cells: drop them
        (default) or fill with the column median (numeric) / mode (categorical).
    exclude_projects : iterable of str
        Project ids to skip entirely, e.g. campaigns known to carry
        re-allocated contributions.
    """
    schema = CovariateSchema.from_json(schema_path)
    exclude = set(exclude_projects)
    projects, missing = _load_projects(projects_path, schema, missing_policy, exclude)
    projects, n_dropped = _apply_missing_policy(projects, missing, schema, missing_policy)
    projects_by_id = {p.project_id: p for p in projects}
    skip_ids = exclude | (set(missing) if missing_policy == "drop" else set())
    contributions = _load_contributions(contributions_path, projects_by_id, skip_ids)
    provenance = {
        "projects_path": str(projects_path),
        "contributions_path": str(contributions_path),
        "schema_path": str(schema_path),
        "loaded_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "missing_policy": missing_policy,
        "projects_dropped_missing": n_dropped,
        "projects_excluded": len(exclude),
    }
    return Dataset(tuple(projects), contributions, schema, provenance)


def filter_completed(dataset: Dataset) -> Dataset:
    """Keep only projects with a resolved funded/failed outcome."""
    resolved = [p for p in dataset.projects if p.resolved]
    dropped = dataset.n_projects - len(resolved)
    if dropped:
        log.warning("dropped %d unresolved project(s)", dropped)
    if not resolved:
        log.warning("no resolved projects remain after filtering")
    contributions = {p.project_id: dataset.contributions.get(p.project_id, ())
                     for p in resolved}
    provenance = dict(dataset.provenance)
    provenance["projects_dropped_unresolved"] = dropped
    return Dataset(tuple(resolved), contributions, dataset.schema, provenance)


def save_dataset(dataset: Dataset, out_dir) -> dict:
    """Write projects.csv / contributions.csv / schema.json; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "projects": out / "projects.csv",
        "contributions": out / "contributions.csv",
        "schema": out / "schema.json",
    }
    cov_names = dataset.schema.names
    with open(paths["projects"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(PROJECT_COLUMNS) + list(cov_names))
        for p in dataset.projects:
            row = [
                p.project_id,
                format_timestamp(p.posted_at),
                format_timestamp(p.deadline_at) if p.deadline_at is not None else "",
                repr(p.goal_amount),
                "" if p.funded is None else str(int(p.funded)),
            ]
            for name in cov_names:
                value = p.covariates[name]
                row.append(repr(value) if isinstance(value, float) else str(value))
            writer.writerow(row)
    with open(paths["contributions"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(CONTRIBUTION_COLUMNS))
        for p in dataset.projects:
            for e in dataset.contributions.get(p.project_id, ()):
                writer.writerow([e.project_id, e.funder_id,
                                 format_timestamp(e.timestamp), repr(e.amount)])
    dataset.schema.to_json(paths["schema"])
    return {k: str(v) for k, v in paths.items()}
