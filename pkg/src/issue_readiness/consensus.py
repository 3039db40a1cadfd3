"""Self-consistency voting, Krippendorff's alpha, and disagreement statistics."""

from __future__ import annotations

import json
import statistics
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import AnalysisError, InputError
from .rubric import CRITERION_KEYS, HIGH_QUALITY_THRESHOLD
from .scorer import RecordId, RunSet

SCHEMA_VERSION = 1


class EmptyRunSet(InputError):
    pass


class DegenerateData(AnalysisError):
    pass


class NotThreeRuns(InputError):
    pass


class InsufficientStratum(InputError):
    def __init__(self, key: str, stratum: str, available: int) -> None:
        super().__init__(f"{key}: only {available} {stratum}-quality issues available")
        self.key = key
        self.stratum = stratum
        self.available = available


@dataclass(frozen=True)
class ConsensusScores:
    record_id: RecordId
    scores: dict[str, int]
    tie_broken: frozenset[str] = frozenset()

    def to_dict(self) -> dict:
        repo, issue, pr = self.record_id
        return {
            "schema_version": SCHEMA_VERSION,
            "repo": repo,
            "issue_number": issue,
            "pr_number": pr,
            "scores": {k: self.scores[k] for k in CRITERION_KEYS if k in self.scores},
            "tie_broken": sorted(self.tie_broken, key=CRITERION_KEYS.index),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConsensusScores":
        return cls((d["repo"], d["issue_number"], d["pr_number"]), dict(d["scores"]),
                   frozenset(d.get("tie_broken", ())))


def vote_values(values: Sequence[int]) -> tuple[int, bool]:
    """Majority vote over one criterion; returns (score, tie_broken).

    With no unique mode the lower median is used, which for three runs is
    the ordinary median and always an observed score.
    """
    if not values:
        raise EmptyRunSet("no run scores to vote on")
    counts = Counter(values).most_common()
    if len(counts) == 1 or counts[0][1] > counts[1][1]:
        return counts[0][0], False
    return statistics.median_low(values), True


def vote(runs: RunSet) -> ConsensusScores:
    if not runs.runs:
        raise EmptyRunSet(f"{runs.record_id}: run set is empty")
    scores, tied = {}, set()
    for key in CRITERION_KEYS:
        if key not in runs.runs[0].scores:
            continue
        value, was_tied = vote_values([r.scores[key] for r in runs.runs])
        scores[key] = value
        if was_tied:
            tied.add(key)
    return ConsensusScores(runs.record_id, scores, frozenset(tied))


def save_consensus(path: str | Path, items: Iterable[ConsensusScores]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in items:
            fh.write(json.dumps(c.to_dict(), sort_keys=True) + "\n")


def load_consensus(path: str | Path) -> list[ConsensusScores]:
    with open(path, encoding="utf-8") as fh:
        return [ConsensusScores.from_dict(json.loads(line)) for line in fh if line.strip()]


# --------------------------------------------------------------------------
# Krippendorff's alpha

METRICS = ("ordinal", "interval", "nominal")


def _difference_matrix(values: np.ndarray, marginals: np.ndarray, metric: str) -> np.ndarray:
    if metric == "interval":
        diff = values[:, None] - values[None, :]
        return diff * diff
    if metric == "nominal":
        return (values[:, None] != values[None, :]).astype(float)
    if metric == "ordinal":
        cum = np.cumsum(marginals)
        V = values.size
        d = np.zeros((V, V))
        for c in range(V):
            for k in range(c + 1, V):
                s = cum[k] - (cum[c - 1] if c > 0 else 0.0) - (marginals[c] + marginals[k]) / 2.0
                d[c, k] = d[k, c] = s * s
        return d
    raise InputError(f"unknown metric {metric!r}; choose one of {METRICS}")


def coincidence_matrix(units: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value domain and coincidence matrix of a units x raters array (NaN = missing)."""
    data = np.asarray(units, dtype=float)
    if data.ndim != 2:
        raise InputError("units must be a 2-D array (units x raters)")
    present = ~np.isnan(data)
    pairable = present.sum(axis=1) >= 2
    data = data[pairable]
    present = present[pairable]
    values = np.unique(data[present])
    if values.size == 0:
        return values, np.zeros((0, 0))
    index = {v: i for i, v in enumerate(values)}
    counts = np.zeros((data.shape[0], values.size))
    for u in range(data.shape[0]):
        for v in data[u, present[u]]:
            counts[u, index[v]] += 1
    m = counts.sum(axis=1)
    weighted = counts / (m - 1.0)[:, None]
    o = weighted.T @ counts - np.diag(weighted.sum(axis=0))
    return values, o


def krippendorff_alpha(units, metric: str = "ordinal") -> float:
    """Krippendorff's alpha for a units x raters matrix; NaN marks a missing rating.

    Units with fewer than two ratings are not pairable and are ignored.
    Raises :class:`DegenerateData` when expected disagreement is zero.
    """
    data = np.asarray(units, dtype=float)
    if data.ndim != 2 or data.shape[1] < 2 or data.shape[0] < 1:
        raise InputError("need at least one unit and two raters")
    if metric not in METRICS:
        raise InputError(f"unknown metric {metric!r}; choose one of {METRICS}")
    values, o = coincidence_matrix(data)
    if values.size < 2:
        raise DegenerateData("alpha is undefined: fewer than two distinct values")
    n_c = o.sum(axis=1)
    n = n_c.sum()
    delta = _difference_matrix(values, n_c, metric)
    observed = float((o * delta).sum())
    expected = float((np.outer(n_c, n_c) * delta).sum()) / (n - 1.0)
    if expected <= 0.0:
        raise DegenerateData("alpha is undefined: expected disagreement is zero")
    if observed == 0.0:
        return 1.0
    return 1.0 - observed / expected


def agreement_band(alpha: float) -> str:
    if alpha >= 1.0:
        return "perfect"
    if alpha >= 0.8:
        return "strong"
    if alpha >= 0.67:
        return "moderate"
    return "poor"


# --------------------------------------------------------------------------
# disagreement structure

@dataclass(frozen=True)
class DisagreementStats:
    n_units: int
    n_disagreeing: int
    single_dissenter_fraction: float | None
    magnitude_median: float | None
    magnitude_mean: float | None
    magnitude_q3: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def disagreement_structure(runsets: Sequence[RunSet], key: str,
                           single_dissenter: bool = True) -> DisagreementStats:
    """Disagreement magnitude (max - min) and shape over units where runs differ.

    The single-dissenter share needs exactly three runs per unit; pass
    ``single_dissenter=False`` to get only magnitudes for other run counts.
    """
    if single_dissenter and any(len(rs.runs) != 3 for rs in runsets):
        raise NotThreeRuns(f"{key}: single-dissenter statistics need exactly 3 runs per issue")
    magnitudes = []
    dissenters = 0
    for rs in runsets:
        values = [r.scores[key] for r in rs.runs]
        if len(set(values)) <= 1:
            continue
        magnitudes.append(max(values) - min(values))
        if single_dissenter and len(set(values)) == 2:
            dissenters += 1
    if not magnitudes:
        return DisagreementStats(len(runsets), 0, None, None, None, None)
    mags = np.asarray(magnitudes, dtype=float)
    return DisagreementStats(
        n_units=len(runsets),
        n_disagreeing=len(magnitudes),
        single_dissenter_fraction=dissenters / len(magnitudes) if single_dissenter else None,
        magnitude_median=float(np.median(mags)),
        magnitude_mean=float(mags.mean()),
        magnitude_q3=float(np.percentile(mags, 75)),
    )


@dataclass
class AgreementReport:
    metric: str
    per_criterion: dict[str, dict] = field(default_factory=dict)
    disagreement: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        bands = Counter(v["band"] for v in self.per_criterion.values())
        return {
            "metric": self.metric,
            "band_counts": {b: bands.get(b, 0) for b in ("perfect", "strong", "moderate", "poor", "undefined")},
            "per_criterion": self.per_criterion,
            "disagreement": self.disagreement,
        }


def runs_matrix(runsets: Sequence[RunSet], key: str) -> np.ndarray:
    width = max(len(rs.runs) for rs in runsets)
    m = np.full((len(runsets), width), np.nan)
    for i, rs in enumerate(runsets):
        for j, r in enumerate(rs.runs):
            m[i, j] = r.scores[key]
    return m


def agreement_report(runsets: Sequence[RunSet], metric: str = "ordinal") -> AgreementReport:
    if not runsets:
        raise InputError("no run sets to analyse")
    if max(len(rs.runs) for rs in runsets) < 2:
        raise InputError("agreement needs at least two runs per issue")
    three = all(len(rs.runs) == 3 for rs in runsets)
    report = AgreementReport(metric)
    for key in CRITERION_KEYS:
        m = runs_matrix(runsets, key)
        n_units = int(((~np.isnan(m)).sum(axis=1) >= 2).sum())
        try:
            alpha = krippendorff_alpha(m, metric)
            band = agreement_band(alpha)
        except DegenerateData:
            alpha, band = None, "undefined"
        report.per_criterion[key] = {"alpha": alpha, "band": band, "n_units": n_units}
        report.disagreement[key] = disagreement_structure(runsets, key, single_dissenter=three).to_dict()
    return report


# --------------------------------------------------------------------------
# validation sampling

def sample_validation_set(consensus: Sequence[ConsensusScores], key: str, k: int = 5,
                          seed: int = 0) -> dict[str, list[RecordId]]:
    """Draw ``k`` high-quality (>= 4) and ``k`` low-quality (<= 3) issues for manual review."""
    high = [c.record_id for c in consensus if c.scores[key] >= HIGH_QUALITY_THRESHOLD]
    low = [c.record_id for c in consensus if c.scores[key] < HIGH_QUALITY_THRESHOLD]
    if len(high) < k:
        raise InsufficientStratum(key, "high", len(high))
    if len(low) < k:
        raise InsufficientStratum(key, "low", len(low))
    rng = np.random.default_rng(seed)
    return {
        "high": [high[i] for i in rng.choice(len(high), size=k, replace=False)],
        "low": [low[i] for i in rng.choice(len(low), size=k, replace=False)],
    }
