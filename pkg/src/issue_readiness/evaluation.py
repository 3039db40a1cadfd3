"""Bootstrap out-of-bag evaluation, dimension ablation, and merge-rate comparisons."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .consensus import ConsensusScores
from .errors import AnalysisError, InputError
from .features import Dataset, TooFewRows, feature_groups
from .models import ModelConfig, ModelKind, train
from .rubric import CRITERION_KEYS, HIGH_QUALITY_THRESHOLD, Dimension
from .scorer import RecordId
from .stats import ChiSquareResult, DegenerateTable, SingleClass, chi_square_2x2, roc_auc

MIN_BOOTSTRAP_ROWS = 30
DEFAULT_ITERATIONS = 100
DECISION_THRESHOLD = 0.5
SIGNIFICANCE = 0.05
MAX_REDRAWS_PER_ITERATION = 1000

# criteria whose high scores go with higher merge rates; the caller may override
DEFAULT_POSITIVE_CRITERIA: tuple[str, ...] = (
    "scope",
    "detail_simplicity_alignment",
    "ambiguity_avoidance",
    "expected_edge_behaviors",
    "self_containment",
    "context_guidance",
    "system_localization",
    "navigation_hints",
    "solution_guidance",
    "common_task_familiarity",
    "actionability_granularity",
)

METRICS = ("auc", "precision", "recall")
ALL_GROUP = "All"

# column order and short labels used in performance tables
GROUP_LABELS: dict[str, str] = {
    ALL_GROUP: "All",
    "General": "General",
    Dimension.AcceptanceValidation.value: Dimension.AcceptanceValidation.short_label,
    Dimension.ImplementationContext.value: Dimension.ImplementationContext.short_label,
    Dimension.ProblemDefinition.value: Dimension.ProblemDefinition.short_label,
    Dimension.RiskAwareness.value: Dimension.RiskAwareness.short_label,
    Dimension.Traceability.value: Dimension.Traceability.short_label,
}
MODEL_LABELS = {
    ModelKind.Logistic: "Logistic Regression",
    ModelKind.RandomForest: "Random Forest",
    ModelKind.GradientBoosted: "Gradient Boosted",
}


class EmptyStratum(InputError):
    def __init__(self, key: str, stratum: str) -> None:
        super().__init__(f"{key}: the {stratum} stratum is empty")
        self.key = key
        self.stratum = stratum


# --------------------------------------------------------------------------
# bootstrap

@dataclass
class IterationResult:
    auc: float
    precision: float
    recall: float
    importances: dict[str, float]
    n_train: int
    n_test: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class BootstrapResult:
    model_kind: ModelKind
    feature_names: tuple[str, ...]
    per_iteration: list[IterationResult]
    medians: dict[str, float]
    variance_auc: float
    redraws: int = 0

    def importance_samples(self) -> dict[str, list[float]]:
        return {f: [it.importances[f] for it in self.per_iteration] for f in self.feature_names}

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind.value,
            "feature_names": list(self.feature_names),
            "iterations": len(self.per_iteration),
            "medians": dict(self.medians),
            "variance_auc": self.variance_auc,
            "redraws": self.redraws,
            "per_iteration": [it.to_dict() for it in self.per_iteration],
        }


def precision_recall(y_true: np.ndarray, prob: np.ndarray, threshold: float = DECISION_THRESHOLD) -> tuple[float, float]:
    """Precision and recall of the positive class; precision is 0 with no positive predictions."""
    pred = prob >= threshold
    pos = y_true == 1
    tp = int(np.sum(pred & pos))
    n_pred = int(pred.sum())
    n_pos = int(pos.sum())
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_pos if n_pos else 0.0
    return precision, recall


def _iteration_rng(seed: int, iteration: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, iteration, attempt]))


def bootstrap_split(n: int, y: np.ndarray, seed: int, iteration: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Training rows (with replacement) and out-of-bag rows for one iteration.

    A draw is rejected when its training sample or its OOB rows miss a class;
    returns the number of rejected draws as the third element.
    """
    for attempt in range(MAX_REDRAWS_PER_ITERATION):
        rng = _iteration_rng(seed, iteration, attempt)
        rows = rng.integers(0, n, size=n)
        in_bag = np.zeros(n, dtype=bool)
        in_bag[rows] = True
        oob = np.flatnonzero(~in_bag)
        if oob.size and np.unique(y[oob]).size == 2 and np.unique(y[rows]).size == 2:
            return rows, oob, attempt
    raise AnalysisError(f"iteration {iteration}: no usable bootstrap draw after {MAX_REDRAWS_PER_ITERATION} attempts")


def bootstrap_evaluate(ds: Dataset, cfg: ModelConfig, iterations: int = DEFAULT_ITERATIONS, seed: int = 0,
                       min_rows: int = MIN_BOOTSTRAP_ROWS, min_train_rows: int = 10) -> BootstrapResult:
    """Train on a size-n resample and test on the out-of-bag rows, ``iterations`` times."""
    n = len(ds)
    if n < min_rows:
        raise TooFewRows(f"bootstrap evaluation needs at least {min_rows} rows, got {n}")
    if np.unique(ds.y).size < 2:
        raise SingleClass("bootstrap evaluation needs both merged and closed rows")
    if iterations < 1:
        raise InputError("iterations must be positive")
    results, redraws = [], 0
    for i in range(iterations):
        rows, oob, rejected = bootstrap_split(n, ds.y, seed, i)
        redraws += rejected
        model_seed = int(np.random.SeedSequence([seed & 0xFFFFFFFF, i, 1 << 20]).generate_state(1)[0])
        model = train(ds.take(rows), dataclasses.replace(cfg, seed=model_seed), min_rows=min_train_rows)
        prob = model.predict_proba_matrix(ds.X[oob])
        y_oob = ds.y[oob]
        precision, recall = precision_recall(y_oob, prob)
        imp = model.importances()
        results.append(IterationResult(
            auc=roc_auc(prob, y_oob), precision=precision, recall=recall,
            importances={f: float(v) for f, v in zip(ds.feature_names, imp)},
            n_train=int(rows.size), n_test=int(oob.size),
        ))
    aucs = np.array([r.auc for r in results])
    medians = {m: float(np.median([getattr(r, m) for r in results])) for m in METRICS}
    variance = float(aucs.var(ddof=1)) if len(results) > 1 else 0.0
    return BootstrapResult(cfg.kind, tuple(ds.feature_names), results, medians, variance, redraws)


def dimension_ablation(full: Dataset, cfg: ModelConfig, seed: int = 0, iterations: int = DEFAULT_ITERATIONS,
                       min_rows: int = MIN_BOOTSTRAP_ROWS, min_train_rows: int = 10) -> dict[str, dict[str, float]]:
    """Median metrics of a model per criterion dimension and for the general group."""
    out = {}
    for group, names in feature_groups(full.feature_names).items():
        if not names:
            continue
        res = bootstrap_evaluate(full.select(names), cfg, iterations, seed, min_rows, min_train_rows)
        out[group] = res.medians
    return out


@dataclass
class PerformanceTable:
    """Median metrics indexed by model kind, then feature group."""

    cells: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)
    variance_auc: dict[str, float] = field(default_factory=dict)
    redraws: dict[str, dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"medians": self.cells, "variance_auc_all": self.variance_auc, "redraws": self.redraws}

    @classmethod
    def from_dict(cls, d: dict) -> "PerformanceTable":
        return cls(d["medians"], d.get("variance_auc_all", {}), d.get("redraws", {}))


def performance_table(filtered: Dataset, full: Dataset, kinds: Sequence[ModelKind] = tuple(ModelKind),
                      seed: int = 0, iterations: int = DEFAULT_ITERATIONS, hyperparameters=None,
                      min_rows: int = MIN_BOOTSTRAP_ROWS, min_train_rows: int = 10) -> PerformanceTable:
    """All-features (filtered) and per-group (unfiltered) medians for each model kind."""
    hyperparameters = hyperparameters or {}
    table = PerformanceTable()
    groups = {g: names for g, names in feature_groups(full.feature_names).items() if names}
    for kind in kinds:
        cfg = ModelConfig(kind, seed, hyperparameters.get(kind, {}))
        res = bootstrap_evaluate(filtered, cfg, iterations, seed, min_rows, min_train_rows)
        row = {ALL_GROUP: res.medians}
        redraws = {ALL_GROUP: res.redraws}
        table.variance_auc[kind.value] = res.variance_auc
        for group, names in groups.items():
            sub = bootstrap_evaluate(full.select(names), cfg, iterations, seed, min_rows, min_train_rows)
            row[group] = sub.medians
            redraws[group] = sub.redraws
        table.cells[kind.value] = row
        table.redraws[kind.value] = redraws
    return table


def performance_markdown(table: PerformanceTable) -> str:
    cols = [g for g in GROUP_LABELS if any(g in row for row in table.cells.values())]
    lines = ["| Model | Metric | " + " | ".join(GROUP_LABELS[g] for g in cols) + " |",
             "|---|---|" + "---:|" * len(cols)]
    for kind_value, row in table.cells.items():
        label = MODEL_LABELS[ModelKind(kind_value)]
        for j, metric in enumerate(METRICS):
            cells = [f"{row[g][metric]:.3f}" if g in row else "" for g in cols]
            lines.append(f"| {label if j == 0 else ''} | {metric.upper() if metric == 'auc' else metric.capitalize()} | "
                         + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# merge rates

@dataclass(frozen=True)
class LabeledScores:
    record_id: RecordId
    scores: Mapping[str, int]
    merged: bool


def label_consensus(consensus: Iterable[ConsensusScores], labels: Mapping[RecordId, bool]) -> list[LabeledScores]:
    out = []
    for c in consensus:
        rid = tuple(c.record_id)
        if rid in labels:
            out.append(LabeledScores(rid, c.scores, bool(labels[rid])))
    return out


@dataclass(frozen=True)
class MergeRateComparison:
    criterion: str
    n_high: int
    n_low: int
    rate_high: float
    rate_low: float
    diff_points: float
    chi2: ChiSquareResult | None
    significant: bool

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["chi2"] = self.chi2.to_dict() if self.chi2 else None
        return d


def _rates(high: Sequence[bool], low: Sequence[bool], key: str):
    if not high:
        raise EmptyStratum(key, "high")
    if not low:
        raise EmptyStratum(key, "low")
    mh, ml = sum(high), sum(low)
    rate_high, rate_low = mh / len(high), ml / len(low)
    return mh, ml, rate_high, rate_low, 100.0 * (rate_high - rate_low)


def merge_rate_comparison(items: Sequence[LabeledScores], key: str) -> MergeRateComparison:
    """Merge rate of high-scored (>= 4) minus low-scored (<= 3) issues on one criterion."""
    high = [it.merged for it in items if it.scores[key] >= HIGH_QUALITY_THRESHOLD]
    low = [it.merged for it in items if it.scores[key] < HIGH_QUALITY_THRESHOLD]
    mh, ml, rh, rl, diff = _rates(high, low, key)
    try:
        chi2 = chi_square_2x2(mh, len(high) - mh, ml, len(low) - ml)
    except DegenerateTable:
        # every issue merged (or none did): the rates are equal, nothing to test
        chi2 = None
    significant = chi2 is not None and chi2.p_value < SIGNIFICANCE
    return MergeRateComparison(key, len(high), len(low), rh, rl, diff, chi2, significant)


def compare_all(items: Sequence[LabeledScores], keys: Sequence[str] = CRITERION_KEYS) -> dict[str, MergeRateComparison | None]:
    """Per-criterion comparisons; a criterion with an empty stratum maps to None."""
    out = {}
    for key in keys:
        try:
            out[key] = merge_rate_comparison(items, key)
        except EmptyStratum:
            out[key] = None
    return out


def conjunction_comparison(items: Sequence[LabeledScores], keys: Iterable[str]) -> dict:
    """Merge rates of issues high on every key versus issues low on every key."""
    keys = list(dict.fromkeys(keys))
    if not keys:
        raise InputError("conjunction needs at least one criterion")
    label = "+".join(keys)
    high = [it.merged for it in items if all(it.scores[k] >= HIGH_QUALITY_THRESHOLD for k in keys)]
    low = [it.merged for it in items if all(it.scores[k] < HIGH_QUALITY_THRESHOLD for k in keys)]
    _, _, rh, rl, diff = _rates(high, low, label)
    return {"keys": keys, "n_high_all": len(high), "n_low_all": len(low),
            "rate_high": rh, "rate_low": rl, "diff_points": diff}


def comparison_markdown(rows: Mapping[str, dict | None], conjunction: dict | None = None) -> str:
    lines = ["| Criterion | n high | n low | Merge rate high | Merge rate low | Diff (pts) | p-value |",
             "|---|---:|---:|---:|---:|---:|---:|"]
    for key, r in rows.items():
        if r is None:
            lines.append(f"| {key} | n/a | n/a | n/a | n/a | n/a | n/a |")
            continue
        p = r["chi2"]["p_value"] if r["chi2"] else math.nan
        star = "*" if r["significant"] else ""
        lines.append(f"| {key} | {r['n_high']} | {r['n_low']} | {100 * r['rate_high']:.2f}% | "
                     f"{100 * r['rate_low']:.2f}% | {r['diff_points']:+.2f}{star} | {p:.4g} |")
    if conjunction:
        lines += ["", f"Issues high on all of {', '.join(conjunction['keys'])}: {conjunction['n_high_all']} "
                      f"(merge rate {100 * conjunction['rate_high']:.2f}%); low on all: {conjunction['n_low_all']} "
                      f"(merge rate {100 * conjunction['rate_low']:.2f}%); difference "
                      f"{conjunction['diff_points']:+.2f} points."]
    return "\n".join(lines) + "\n"
