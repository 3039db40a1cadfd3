from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from issue_readiness.consensus import ConsensusScores
from issue_readiness.corpus import CommentRecord, CorpusRecord, IssueSnapshot, PullRequestRecord
from issue_readiness.features import (
    FEATURE_NAMES,
    GENERAL_FEATURES,
    Dataset,
    MissingConsensus,
    TooFewRows,
    assemble_dataset,
    context_features,
    correlation_filter,
    feature_groups,
    general_features,
    redundancy_check,
    redundancy_r2,
)
from issue_readiness.rubric import CRITERION_KEYS

T0 = datetime(2025, 6, 1, tzinfo=timezone.utc)


def day(n):
    return T0 + timedelta(days=n)


def record(number=1, body="fix the login bug", title="Login broken", comments=(), outcome="merged",
           agent=True, pr_day=0, repo="o/r"):
    issue = IssueSnapshot(repo, number, title, body, tuple(comments), linked_pr=100 + number)
    return CorpusRecord(issue, PullRequestRecord(repo, 100 + number, day(pr_day), outcome, agent, number))


def history(n_before=10, merged=6, agent=2, n_after=3, repo="o/r"):
    prs = []
    for i in range(n_before):
        prs.append(PullRequestRecord(repo, 1 + i, day(-20 + i), "merged" if i < merged else "closed", i < agent))
    for i in range(n_after):
        prs.append(PullRequestRecord(repo, 50 + i, day(1 + i), "merged", True))
    prs.append(PullRequestRecord("other/repo", 99, day(-5), "merged", True))
    return prs


def test_general_features_example():
    comments = [
        CommentRecord("amy", day(-2), "I can reproduce this"),
        CommentRecord("bob", day(-1), "same here"),
        CommentRecord("amy", day(-1) + timedelta(hours=1), "patch incoming"),
        CommentRecord("eve", day(2), "after the PR, ignored"),
    ]
    g = general_features(record(comments=comments), history())
    assert g == {
        "num_comments": 3,
        "sum_comment_length": 4 + 2 + 2,
        "num_unique_commenters": 2,
        "issue_body_length": 4,
        "issue_title_length": 2,
        "num_prs_before": 10,
        "num_merged_prs_before": 6,
        "num_copilot_prs_before": 2,
    }
    assert list(g) == list(GENERAL_FEATURES)


def test_empty_body_and_no_history():
    g = general_features(record(body=""))
    assert g["issue_body_length"] == 0 and g["num_prs_before"] == 0 and g["num_comments"] == 0


def test_context_features_cutoff_is_strict():
    c = [CommentRecord("a", day(0), "on the dot")]
    issue = IssueSnapshot("o/r", 1, "t", "b", tuple(c))
    assert context_features(issue, day(0))["num_comments"] == 0
    assert context_features(issue, day(0) + timedelta(seconds=1))["num_comments"] == 1


def consensus_for(rec, value=3):
    return ConsensusScores(rec.record_id, {k: value for k in CRITERION_KEYS})


def test_assemble_dataset_rows_and_labels():
    recs = [record(1), record(2, outcome="closed"), record(3, outcome="open"), record(4, agent=False)]
    cons = [consensus_for(r, i) for i, r in enumerate(recs)]
    ds = assemble_dataset(cons, recs, {"o/r": history()})
    assert ds.feature_names == FEATURE_NAMES and ds.X.shape == (2, 40)
    assert ds.y.tolist() == [1, 0]
    assert ds.ids == [recs[0].record_id, recs[1].record_id]
    row = dict(zip(FEATURE_NAMES, ds.X[1]))
    assert row["clarity"] == 1 and row["num_prs_before"] == 10


def test_assemble_requires_consensus():
    with pytest.raises(MissingConsensus):
        assemble_dataset([], [record(1)])


def test_feature_groups():
    g = feature_groups()
    assert [len(v) for v in g.values()] == [10, 2, 11, 5, 4, 8]
    assert sum(len(v) for v in g.values()) == 40
    assert feature_groups(["scope", "num_comments"])["General"] == ["num_comments"]


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.integers(0, 6, size=(7, 3)).astype(float)
    X[0, 2] = 0.25
    ds = Dataset([("o/r", i, i) for i in range(7)], ("a", "b", "c"), X, rng.integers(0, 2, 7))
    ds.to_csv(tmp_path / "d.csv")
    back = Dataset.from_csv(tmp_path / "d.csv")
    assert back.feature_names == ds.feature_names
    assert np.array_equal(back.X, ds.X) and np.array_equal(back.y, ds.y)
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "a,b,c,label"


def test_dataset_rejects_bad_labels():
    with pytest.raises(Exception):
        Dataset([("o/r", 1, 1)], ("a",), [[1.0]], [2])


# --------------------------------------------------------------------------
# correlation filter


def make(X, names=None):
    X = np.asarray(X, dtype=float)
    names = names or tuple(f"f{i}" for i in range(X.shape[1]))
    return Dataset([("o/r", i, i) for i in range(X.shape[0])], tuple(names), X, np.arange(X.shape[0]) % 2)


def test_exact_duplicate_loses_later_column():
    rng = np.random.default_rng(1)
    a = rng.normal(size=50)
    b = rng.normal(size=50)
    ds = make(np.column_stack([a, b, a * 3 + 1]), ("a", "b", "a_copy"))
    kept, rep = correlation_filter(ds)
    assert rep.retained == ["a", "b"]
    assert rep.dropped[0][0] == "a_copy" and rep.dropped[0][1] == "a"
    assert rep.dropped[0][2] == pytest.approx(1.0)


def test_higher_mean_correlation_is_dropped():
    rng = np.random.default_rng(2)
    base = rng.normal(size=200)
    hub = base + rng.normal(scale=0.3, size=200)
    peer = base + rng.normal(scale=0.3, size=200)
    side = hub + rng.normal(scale=1.2, size=200)
    ds = make(np.column_stack([peer, hub, side]), ("peer", "hub", "side"))
    _, rep = correlation_filter(ds)
    assert rep.dropped[0][0] == "hub"


def test_constant_column_kept():
    rng = np.random.default_rng(3)
    ds = make(np.column_stack([rng.normal(size=20), np.ones(20)]))
    kept, rep = correlation_filter(ds)
    assert kept.feature_names == ("f0", "f1") and rep.dropped == []


def test_filter_needs_rows():
    with pytest.raises(TooFewRows):
        correlation_filter(make([[1, 2], [2, 1]]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 8))
def test_filter_leaves_no_strong_pair(seed, p):
    rng = np.random.default_rng(seed)
    latent = rng.normal(size=(40, 2))
    X = latent @ rng.normal(size=(2, p)) + rng.normal(scale=0.5, size=(40, p))
    X = np.round(X, 1)
    kept, rep = correlation_filter(make(X))
    cols = [kept.X[:, j].tolist() for j in range(kept.X.shape[1])]
    for i in range(len(cols)):
        for j in range(i + 1, len(cols)):
            if len(set(cols[i])) > 1 and len(set(cols[j])) > 1:
                assert abs(oracles.spearman(cols[i], cols[j])) <= 0.7 + 1e-12
    assert len(rep.retained) + len(rep.dropped) == p
    again, rep2 = correlation_filter(make(X))
    assert rep2.to_dict() == rep.to_dict()


# --------------------------------------------------------------------------
# redundancy


def test_redundancy_finds_linear_combination():
    rng = np.random.default_rng(4)
    a, b, c = rng.normal(size=(3, 100))
    d = 2 * a - b + rng.normal(scale=0.01, size=100)
    ds = make(np.column_stack([a, b, c, d]), ("a", "b", "c", "d"))
    r2 = redundancy_r2(ds)
    assert r2["d"] > 0.99 and r2["c"] < 0.2
    assert set(redundancy_check(ds)) == {"a", "b", "d"}


def test_redundancy_skips_constant():
    rng = np.random.default_rng(5)
    ds = make(np.column_stack([rng.normal(size=30), np.zeros(30)]))
    assert redundancy_r2(ds)["f1"] == 0.0
    assert redundancy_check(ds) == []
