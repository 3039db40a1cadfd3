"""Feature vectors, dataset assembly, and correlation / redundancy filtering."""

from __future__ import annotations

import csv
from datetime import datetime
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .consensus import ConsensusScores
from .corpus import CorpusRecord, IssueSnapshot, Outcome, PullRequestRecord, select_eligible
from .errors import InputError
from .rubric import CRITERION_KEYS, Dimension, criteria_by_dimension
from .scorer import RecordId
from .stats import spearman_matrix

GENERAL_FEATURES: tuple[str, ...] = (
    "num_comments",
    "sum_comment_length",
    "num_unique_commenters",
    "issue_body_length",
    "issue_title_length",
    "num_prs_before",
    "num_merged_prs_before",
    "num_copilot_prs_before",
)
FEATURE_NAMES: tuple[str, ...] = CRITERION_KEYS + GENERAL_FEATURES
GENERAL_GROUP = "General"

CORRELATION_THRESHOLD = 0.7
REDUNDANCY_R2 = 0.9


class MissingConsensus(InputError):
    def __init__(self, record_id: RecordId) -> None:
        super().__init__(f"no consensus scores for {record_id}")
        self.record_id = record_id


class TooFewRows(InputError):
    pass


def word_count(text: str) -> int:
    return len(text.split())


def general_features(record: CorpusRecord,
                     project_history: Iterable[PullRequestRecord] = ()) -> dict[str, int]:
    """The eight context features, counting only events before the PR was opened."""
    return context_features(record.issue, record.pr.created_at, project_history)


def context_features(issue: IssueSnapshot, cutoff: datetime,
                     project_history: Iterable[PullRequestRecord] = ()) -> dict[str, int]:
    """Context features of ``issue`` as of ``cutoff`` (comments and PRs strictly earlier)."""
    comments = [c for c in issue.comments if c.created_at < cutoff]
    earlier = [p for p in project_history if p.repo == issue.repo and p.created_at < cutoff]
    return {
        "num_comments": len(comments),
        "sum_comment_length": sum(word_count(c.body) for c in comments),
        "num_unique_commenters": len({c.author_login for c in comments}),
        "issue_body_length": word_count(issue.body),
        "issue_title_length": word_count(issue.title),
        "num_prs_before": len(earlier),
        "num_merged_prs_before": sum(p.outcome is Outcome.merged for p in earlier),
        "num_copilot_prs_before": sum(p.agent_authored for p in earlier),
    }


def feature_vector(consensus: ConsensusScores, general: Mapping[str, float]) -> dict[str, float]:
    fv = {k: float(consensus.scores[k]) for k in CRITERION_KEYS}
    fv.update({k: float(general[k]) for k in GENERAL_FEATURES})
    return fv


@dataclass
class Dataset:
    ids: list[RecordId]
    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.ids), len(self.feature_names))
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.y.shape != (len(self.ids),):
            raise InputError("one label per row is required")
        if not np.all((self.y == 0) | (self.y == 1)):
            raise InputError("labels must be 0 (closed) or 1 (merged)")

    def __len__(self) -> int:
        return len(self.ids)

    def rows(self):
        for rid, x, label in zip(self.ids, self.X, self.y):
            yield rid, dict(zip(self.feature_names, x.tolist())), int(label)

    def select(self, names: Sequence[str]) -> "Dataset":
        idx = [self.feature_names.index(n) for n in names]
        return Dataset(list(self.ids), tuple(names), self.X[:, idx].copy(), self.y.copy())

    def take(self, rows: Sequence[int]) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset([self.ids[i] for i in rows], self.feature_names, self.X[rows], self.y[rows])

    def with_labels(self, y: Sequence[int]) -> "Dataset":
        return Dataset(list(self.ids), self.feature_names, self.X.copy(), np.asarray(y))

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*self.feature_names, "label"])
            for x, label in zip(self.X, self.y):
                w.writerow([_fmt(v) for v in x] + [int(label)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "Dataset":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
        if not header or header[-1] != "label":
            raise InputError(f"{path}: last column must be 'label'")
        names = tuple(header[:-1])
        X = np.array([[float(v) for v in r[:-1]] for r in rows], dtype=float).reshape(len(rows), len(names))
        y = np.array([int(r[-1]) for r in rows], dtype=np.int64)
        ids = [("", i + 1, 0) for i in range(len(rows))]
        return cls(ids, names, X, y)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def assemble_dataset(consensus: Sequence[ConsensusScores], records: Sequence[CorpusRecord],
                     histories: Mapping[str, Sequence[PullRequestRecord]] | Sequence[PullRequestRecord] | None = None,
                     ) -> Dataset:
    """One row per eligible record: 32 consensus scores, 8 context features, merged label."""
    by_id = {tuple(c.record_id): c for c in consensus}
    if histories is None:
        history_for = lambda repo: ()  # noqa: E731
    elif isinstance(histories, Mapping):
        history_for = lambda repo: histories.get(repo, ())  # noqa: E731
    else:
        flat = list(histories)
        history_for = lambda repo: flat  # noqa: E731
    ids, X, y = [], [], []
    for rec in select_eligible(records):
        c = by_id.get(rec.record_id)
        if c is None:
            raise MissingConsensus(rec.record_id)
        fv = feature_vector(c, general_features(rec, history_for(rec.pr.repo)))
        ids.append(rec.record_id)
        X.append([fv[n] for n in FEATURE_NAMES])
        y.append(1 if rec.pr.outcome is Outcome.merged else 0)
    return Dataset(ids, FEATURE_NAMES, np.array(X, dtype=float).reshape(len(ids), len(FEATURE_NAMES)), y)


def feature_groups(names: Sequence[str] = FEATURE_NAMES) -> dict[str, list[str]]:
    """Feature names per criterion dimension plus the general context group."""
    present = set(names)
    groups = {d.value: [c.json_key for c in criteria_by_dimension(d) if c.json_key in present]
              for d in Dimension}
    groups[GENERAL_GROUP] = [n for n in GENERAL_FEATURES if n in present]
    return groups


# --------------------------------------------------------------------------
# filtering

@dataclass
class FilterReport:
    threshold: float
    dropped: list[tuple[str, str, float]] = field(default_factory=list)
    retained: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "dropped": [{"feature": f, "kept_partner": k, "rho": r} for f, k, r in self.dropped],
            "retained": list(self.retained),
        }


def correlation_filter(ds: Dataset, threshold: float = CORRELATION_THRESHOLD) -> tuple[Dataset, FilterReport]:
    """Drop one feature of each pair whose |Spearman rho| exceeds ``threshold``.

    The most correlated pair is handled first. Of the two, the feature with the
    larger mean |rho| to the other remaining features is dropped; on a tie the
    one later in the dataset's feature order goes. Constant features have no
    measurable correlation and are never dropped here.
    """
    if len(ds) < 3:
        raise TooFewRows("correlation filtering needs at least 3 rows")
    signed = spearman_matrix(ds.X)
    full = np.abs(signed)
    remaining = list(range(len(ds.feature_names)))
    report = FilterReport(threshold)
    while len(remaining) > 1:
        sub = full[np.ix_(remaining, remaining)].copy()
        np.fill_diagonal(sub, 0.0)
        upper = np.triu(sub, k=1)
        flat = int(np.argmax(upper))
        i, j = divmod(flat, len(remaining))
        if upper[i, j] <= threshold:
            break
        m = len(remaining) - 1
        mean_i = sub[i].sum() / m
        mean_j = sub[j].sum() / m
        drop, keep = (i, j) if mean_i > mean_j + 1e-12 else (j, i)
        fi, fk = remaining[drop], remaining[keep]
        report.dropped.append((ds.feature_names[fi], ds.feature_names[fk], float(signed[fi, fk])))
        del remaining[drop]
    report.retained = [ds.feature_names[i] for i in remaining]
    return ds.select(report.retained), report


def redundancy_r2(ds: Dataset) -> dict[str, float]:
    """R^2 of regressing each feature on all the others (with intercept)."""
    X = ds.X
    n, p = X.shape
    out = {}
    for j, name in enumerate(ds.feature_names):
        target = X[:, j]
        dev = target - target.mean()
        ss_tot = float(dev @ dev)
        if ss_tot == 0.0 or p < 2:
            out[name] = 0.0
            continue
        A = np.column_stack([np.ones(n), np.delete(X, j, axis=1)])
        coef, *_ = np.linalg.lstsq(A, target, rcond=None)
        resid = target - A @ coef
        out[name] = max(0.0, 1.0 - float(resid @ resid) / ss_tot)
    return out


def redundancy_check(ds: Dataset, threshold: float = REDUNDANCY_R2) -> list[str]:
    """Features predictable from the others with R^2 >= ``threshold``.

    Constant features are skipped: they carry no variance to explain.
    """
    return [name for name, r2 in redundancy_r2(ds).items() if r2 >= threshold]
