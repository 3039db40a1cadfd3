import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from issue_readiness.consensus import ConsensusScores
from issue_readiness.evaluation import (
    ALL_GROUP,
    EmptyStratum,
    LabeledScores,
    PerformanceTable,
    bootstrap_evaluate,
    bootstrap_split,
    compare_all,
    comparison_markdown,
    conjunction_comparison,
    dimension_ablation,
    label_consensus,
    merge_rate_comparison,
    performance_markdown,
    performance_table,
    precision_recall,
)
from issue_readiness.features import FEATURE_NAMES, Dataset, TooFewRows
from issue_readiness.models import ModelConfig, ModelKind
from issue_readiness.stats import SingleClass


def items_from(counts):
    """counts: list of (score, merged, how_many) for the 'scope' criterion."""
    out, i = [], 0
    for score, merged, k in counts:
        for _ in range(k):
            out.append(LabeledScores(("o/r", i, i), {"scope": score, "clarity": score}, merged))
            i += 1
    return out


# --------------------------------------------------------------------------
# merge-rate comparisons


def test_eighty_vs_forty_percent():
    items = items_from([(5, True, 80), (5, False, 20), (2, True, 40), (2, False, 60)])
    r = merge_rate_comparison(items, "scope")
    assert (r.n_high, r.n_low) == (100, 100)
    assert r.diff_points == pytest.approx(40.0)
    assert r.chi2.statistic == pytest.approx(33.333333333333336, rel=1e-12)
    assert r.chi2.p_value == pytest.approx(7.764036537930662e-09, rel=1e-9)
    assert r.significant


def test_flipping_labels_flips_sign():
    items = items_from([(4, True, 30), (4, False, 10), (1, True, 12), (1, False, 28)])
    flipped = [LabeledScores(it.record_id, it.scores, not it.merged) for it in items]
    a = merge_rate_comparison(items, "scope")
    b = merge_rate_comparison(flipped, "scope")
    assert b.diff_points == pytest.approx(-a.diff_points)
    assert b.chi2.statistic == pytest.approx(a.chi2.statistic)


def test_threshold_boundary_three_is_low():
    items = items_from([(4, True, 1), (3, False, 1)])
    r = merge_rate_comparison(items, "scope")
    assert (r.rate_high, r.rate_low) == (1.0, 0.0)


def test_equal_rates_not_significant():
    items = items_from([(5, True, 10), (5, False, 10), (0, True, 10), (0, False, 10)])
    r = merge_rate_comparison(items, "scope")
    assert r.diff_points == 0 and r.chi2.statistic == pytest.approx(0.0) and not r.significant


def test_all_merged_has_no_test():
    r = merge_rate_comparison(items_from([(5, True, 5), (1, True, 5)]), "scope")
    assert r.chi2 is None and not r.significant and r.diff_points == 0


def test_empty_stratum():
    items = items_from([(5, True, 3), (4, False, 3)])
    with pytest.raises(EmptyStratum) as info:
        merge_rate_comparison(items, "scope")
    assert info.value.stratum == "low"
    assert compare_all(items, ["scope"]) == {"scope": None}
    md = comparison_markdown({"scope": None})
    assert "| scope | n/a |" in md


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=60))
def test_comparison_matches_oracle(rows):
    items = [LabeledScores(("o/r", i, i), {"scope": s}, m) for i, (s, m) in enumerate(rows)]
    high = [m for s, m in rows if s >= 4]
    low = [m for s, m in rows if s <= 3]
    if not high or not low:
        return
    r = merge_rate_comparison(items, "scope")
    a, b, c, d = sum(high), len(high) - sum(high), sum(low), len(low) - sum(low)
    if (a + c) == 0 or (b + d) == 0:
        assert r.chi2 is None
        return
    stat, p = oracles.chi_square_2x2(a, b, c, d)
    assert r.chi2.statistic == pytest.approx(stat, rel=1e-9, abs=1e-9)
    assert r.significant == (p < 0.05)


def test_conjunction():
    items = [
        LabeledScores(("o/r", 1, 1), {"a": 5, "b": 4}, True),
        LabeledScores(("o/r", 2, 2), {"a": 4, "b": 5}, False),
        LabeledScores(("o/r", 3, 3), {"a": 4, "b": 1}, True),   # mixed, excluded
        LabeledScores(("o/r", 4, 4), {"a": 0, "b": 2}, False),
        LabeledScores(("o/r", 5, 5), {"a": 3, "b": 3}, False),
    ]
    c = conjunction_comparison(items, ["a", "b"])
    assert (c["n_high_all"], c["n_low_all"]) == (2, 2)
    assert c["diff_points"] == pytest.approx(50.0)
    with pytest.raises(EmptyStratum):
        conjunction_comparison(items[:3], ["a", "b"])


def test_label_consensus_joins_on_id():
    cons = [ConsensusScores(("o/r", 1, 9), {"scope": 4}), ConsensusScores(("o/r", 2, 8), {"scope": 1})]
    out = label_consensus(cons, {("o/r", 1, 9): True})
    assert len(out) == 1 and out[0].merged


# --------------------------------------------------------------------------
# bootstrap


def test_precision_recall():
    y = np.array([1, 1, 0, 0, 1])
    p = np.array([0.9, 0.2, 0.7, 0.1, 0.5])
    assert precision_recall(y, p) == (pytest.approx(2 / 3), pytest.approx(2 / 3))
    assert precision_recall(y, np.zeros(5)) == (0.0, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(10, 80), st.integers(0, 2**31 - 1), st.integers(0, 50))
def test_bootstrap_split_invariants(n, seed, iteration):
    y = np.arange(n) % 2
    rows, oob, _ = bootstrap_split(n, y, seed, iteration)
    assert rows.size == n
    assert set(oob.tolist()) == set(range(n)) - set(rows.tolist())
    assert set(y[oob]) == {0, 1} and set(y[rows]) == {0, 1}
    again = bootstrap_split(n, y, seed, iteration)
    assert np.array_equal(rows, again[0]) and np.array_equal(oob, again[1])


def synthetic(n=120, seed=0, names=None):
    rng = np.random.default_rng(seed)
    names = names or ("a", "b", "c")
    X = rng.normal(size=(n, len(names)))
    y = (X[:, 0] + 0.5 * rng.normal(size=n) > 0).astype(int)
    return Dataset([("o/r", i, i) for i in range(n)], tuple(names), X, y)


def test_bootstrap_is_deterministic_and_informative():
    ds = synthetic()
    cfg = ModelConfig(ModelKind.Logistic)
    a = bootstrap_evaluate(ds, cfg, iterations=12, seed=4)
    b = bootstrap_evaluate(ds, cfg, iterations=12, seed=4)
    assert a.to_dict() == b.to_dict()
    assert len(a.per_iteration) == 12 and a.medians["auc"] > 0.8
    assert all(it.n_train == 120 and it.n_test > 0 for it in a.per_iteration)
    samples = a.importance_samples()
    assert np.median(samples["a"]) > np.median(samples["c"])
    assert bootstrap_evaluate(ds, cfg, iterations=12, seed=5).to_dict() != a.to_dict()


def test_bootstrap_preconditions():
    cfg = ModelConfig(ModelKind.Logistic)
    with pytest.raises(TooFewRows):
        bootstrap_evaluate(synthetic(n=20), cfg)
    ds = synthetic()
    with pytest.raises(SingleClass):
        bootstrap_evaluate(ds.with_labels(np.zeros(len(ds), dtype=int)), cfg)


def test_dimension_ablation_and_table():
    rng = np.random.default_rng(2)
    n = 60
    X = rng.integers(0, 6, size=(n, len(FEATURE_NAMES))).astype(float)
    y = (X[:, 0] + rng.normal(size=n) > 2.5).astype(int)
    full = Dataset([("o/r", i, i) for i in range(n)], FEATURE_NAMES, X, y)
    cfg = ModelConfig(ModelKind.Logistic)
    abl = dimension_ablation(full, cfg, iterations=3)
    assert list(abl) == ["ProblemDefinition", "AcceptanceValidation", "ImplementationContext",
                         "RiskAwareness", "Traceability", "General"]
    assert all(set(m) == {"auc", "precision", "recall"} for m in abl.values())
    table = performance_table(full.select(FEATURE_NAMES[:5]), full, kinds=[ModelKind.Logistic], iterations=3)
    row = table.cells["Logistic"]
    assert ALL_GROUP in row and len(row) == 7
    assert PerformanceTable.from_dict(table.to_dict()).to_dict() == table.to_dict()
    md = performance_markdown(table)
    assert md.count("\n") == 2 + 3
