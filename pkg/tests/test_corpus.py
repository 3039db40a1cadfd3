import json
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, strategies as st

from issue_readiness.corpus import (
    CommentRecord,
    CorpusRecord,
    CorpusWriter,
    IssueSnapshot,
    MalformedLine,
    Outcome,
    PullRequestRecord,
    SchemaVersionMismatch,
    CorpusIoError,
    format_timestamp,
    load_corpus,
    load_history,
    parse_timestamp,
    save_corpus,
    save_history,
    select_eligible,
    truncate_comments,
)
from issue_readiness.errors import InputError

T0 = datetime(2025, 5, 1, tzinfo=timezone.utc)


def at(hours: float) -> datetime:
    return T0 + timedelta(hours=hours)


def make_record(comment_hours=(1, 2, 3), pr_hour=2.5, outcome="merged", agent=True, linked=True,
                number=7, body="fix the login bug") -> CorpusRecord:
    comments = tuple(CommentRecord(f"u{i}", at(h), f"comment {i}") for i, h in enumerate(comment_hours))
    issue = IssueSnapshot("octo/app", number, "Login fails", body, comments, linked_pr=40 + number)
    pr = PullRequestRecord("octo/app", 40 + number, at(pr_hour), outcome, agent, number if linked else None)
    return CorpusRecord(issue, pr)


def test_truncate_strict_cutoff():
    rec = truncate_comments(make_record())
    assert [c.created_at for c in rec.issue.comments] == [at(1), at(2)]


def test_truncate_drops_simultaneous_comment():
    rec = truncate_comments(make_record(comment_hours=(1, 2.5)))
    assert len(rec.issue.comments) == 1


def test_truncate_all_after_and_none():
    assert truncate_comments(make_record(comment_hours=(3, 4))).issue.comments == ()
    rec = make_record(comment_hours=())
    assert truncate_comments(rec) == rec


def test_truncate_leaves_input_alone_and_is_idempotent():
    rec = make_record()
    once = truncate_comments(rec)
    assert len(rec.issue.comments) == 3
    assert truncate_comments(once) == once


def test_comments_sorted_on_construction():
    comments = (CommentRecord("a", at(3), "x"), CommentRecord("b", at(1), "y"))
    issue = IssueSnapshot("o/r", 1, "t", "", comments)
    assert [c.author_login for c in issue.comments] == ["b", "a"]


def test_snapshot_validation():
    with pytest.raises(InputError):
        IssueSnapshot("o/r", 1, "   ")
    with pytest.raises(InputError):
        IssueSnapshot("not-a-repo", 1, "t")
    with pytest.raises(InputError):
        IssueSnapshot("o/r", 0, "t")
    assert IssueSnapshot("o/r", 1, "t", "").body == ""


def test_record_linkage_invariants():
    issue = IssueSnapshot("o/r", 1, "t")
    with pytest.raises(InputError):
        CorpusRecord(issue, PullRequestRecord("o/x", 2, T0, "merged", True, 1))
    with pytest.raises(InputError):
        CorpusRecord(issue, PullRequestRecord("o/r", 2, T0, "merged", True, 5))


def test_select_eligible():
    keep = make_record(number=1)
    open_pr = make_record(number=2, outcome="open")
    human = make_record(number=3, agent=False)
    unlinked = make_record(number=4, linked=False)
    closed = make_record(number=5, outcome="closed")
    out = select_eligible([keep, open_pr, human, unlinked, closed])
    assert out == [keep, closed]


def test_timestamps_normalized_to_utc():
    dt = parse_timestamp("2025-05-01T12:00:00+02:00")
    assert dt == datetime(2025, 5, 1, 10, tzinfo=timezone.utc)
    assert format_timestamp(parse_timestamp("2025-05-01T10:00:00Z")) == "2025-05-01T10:00:00Z"


def test_round_trip(tmp_path):
    recs = [make_record(number=i, body="Ünïcode body\n\n```code```") for i in (1, 2, 3)]
    path = tmp_path / "c.jsonl"
    save_corpus(path, recs)
    assert load_corpus(path) == recs
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 3
    assert all(json.loads(line)["schema_version"] == 1 for line in lines)


@given(st.text(min_size=1).filter(lambda s: s.strip()), st.text())
def test_round_trip_text_is_byte_exact(title, body):
    import tempfile
    from pathlib import Path

    rec = CorpusRecord(IssueSnapshot("o/r", 1, title, body),
                       PullRequestRecord("o/r", 2, T0, Outcome.closed, True, 1))
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "c.jsonl"
        save_corpus(path, [rec])
        assert load_corpus(path) == [rec]


def test_malformed_line_reports_number(tmp_path):
    path = tmp_path / "c.jsonl"
    save_corpus(path, [make_record()])
    good = path.read_text()
    bad = json.loads(good)
    del bad["issue"]["repo"]
    path.write_text(good + json.dumps(bad) + "\n")
    with pytest.raises(MalformedLine) as info:
        load_corpus(path)
    assert info.value.line_number == 2


def test_future_schema_version(tmp_path):
    path = tmp_path / "c.jsonl"
    save_corpus(path, [make_record()])
    doc = json.loads(path.read_text())
    doc["schema_version"] = 99
    path.write_text(json.dumps(doc) + "\n")
    with pytest.raises(SchemaVersionMismatch):
        load_corpus(path)


def test_missing_file(tmp_path):
    with pytest.raises(CorpusIoError):
        load_corpus(tmp_path / "nope.jsonl")


def test_history_round_trip(tmp_path):
    prs = [PullRequestRecord("o/r", i, at(i), "merged" if i % 2 else "closed", i < 3) for i in range(1, 6)]
    save_history(tmp_path / "h.jsonl", prs)
    assert load_history(tmp_path / "h.jsonl") == prs


def test_writer_appends_concurrently(tmp_path):
    from concurrent.futures import ThreadPoolExecutor

    path = tmp_path / "w.jsonl"
    recs = [make_record(number=i) for i in range(1, 41)]
    with CorpusWriter(path) as w, ThreadPoolExecutor(4) as pool:
        list(pool.map(w.write, recs))
    loaded = load_corpus(path)
    assert sorted(r.issue.issue_number for r in loaded) == list(range(1, 41))
