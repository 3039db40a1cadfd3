import json
import shutil
from datetime import datetime, timezone
from pathlib import Path

import httpx
import pytest
from hypothesis import given, settings, strategies as st

from issue_readiness.corpus import CommentRecord, IssueSnapshot
from issue_readiness.rubric import CRITERION_KEYS
from issue_readiness.scorer import (
    BadOverallFormat,
    BadRecommendation,
    CriterionScores,
    HttpChatProvider,
    LlmConfig,
    MissingKey,
    NoJsonFound,
    OutOfRange,
    ParseExhausted,
    PlaceholderUnresolved,
    PromptTooLong,
    ProviderError,
    Recommendation,
    RunFailed,
    ScoreCache,
    TemplateChecksumMismatch,
    TemplateMissing,
    build_prompts,
    load_runsets,
    load_templates,
    parse_response,
    prompt_hash,
    render_comments,
    render_response,
    save_runsets,
    score_many,
    score_runs,
)

DATA = Path(__file__).parent / "data"
TEMPLATES = Path(__file__).parents[1] / "src" / "issue_readiness" / "prompts"
CFG = LlmConfig(base_url="http://llm.test/v1", model_name="m1", max_retries=2, retry_backoff=0.0)


def issue(**kw):
    base = dict(repo="o/r", issue_number=3, title="Add retry to uploader",
                body="Uploads fail on flaky networks.\nRetry {3} times.")
    base.update(kw)
    return IssueSnapshot(**base)


def response_dict(value=3, **extra):
    d = {k: value for k in CRITERION_KEYS}
    d.update(overall_score=f"{value * 32}/160", recommendation="Needs revision", summary_feedback="ok")
    d.update(extra)
    return d


def fenced(d):
    return "Here you go:\n```json\n" + json.dumps(d) + "\n```\nThanks."


class FakeProvider:
    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = []

    def complete(self, system_text, user_text, config):
        self.calls.append((system_text, user_text))
        reply = self.replies.pop(0) if len(self.replies) > 1 else self.replies[0]
        if isinstance(reply, Exception):
            raise reply
        return reply


# --------------------------------------------------------------------------
# prompts


def test_user_prompt_is_byte_exact():
    expected = (DATA / "expected_user_prompt.txt").read_bytes().decode("utf-8")
    _, user = build_prompts(issue())
    assert user == expected


def test_system_prompt_is_template_verbatim():
    system, _ = build_prompts(issue())
    assert system.encode("utf-8") == (TEMPLATES / "system.txt").read_bytes()


def test_comments_rendered_in_time_order():
    c = (CommentRecord("bob", datetime(2025, 1, 2, tzinfo=timezone.utc), "second"),
         CommentRecord("amy", datetime(2025, 1, 1, tzinfo=timezone.utc), "first"))
    text = render_comments(issue(comments=c))
    assert text == "[amy at 2025-01-01T00:00:00Z]\nfirst\n\n[bob at 2025-01-02T00:00:00Z]\nsecond"
    _, user = build_prompts(issue(comments=c))
    assert text in user


def test_prompt_hash_changes_with_content():
    a = prompt_hash(*build_prompts(issue()))
    b = prompt_hash(*build_prompts(issue(body="other")))
    assert a != b and a == prompt_hash(*build_prompts(issue()))


def test_missing_template(tmp_path):
    shutil.copy(TEMPLATES / "system.txt", tmp_path / "system.txt")
    with pytest.raises(TemplateMissing):
        load_templates(tmp_path)


def test_checksum_mismatch(tmp_path):
    for name in ("system.txt", "user.txt", "MANIFEST.sha256"):
        shutil.copy(TEMPLATES / name, tmp_path / name)
    assert load_templates(tmp_path) == load_templates()
    (tmp_path / "user.txt").write_text("edited {title} {description} {issue_comments}")
    with pytest.raises(TemplateChecksumMismatch):
        load_templates(tmp_path)
    assert "edited" in load_templates(tmp_path, verify=False).user


def test_unknown_placeholder(tmp_path):
    (tmp_path / "system.txt").write_text("sys")
    (tmp_path / "user.txt").write_text("{title} {labels}")
    with pytest.raises(PlaceholderUnresolved):
        build_prompts(issue(), load_templates(tmp_path))


# --------------------------------------------------------------------------
# responses


def test_parse_fenced_and_bare():
    a = parse_response(fenced(response_dict(4)))
    b = parse_response(json.dumps(response_dict(4)))
    assert a == b
    assert a.scores["clarity"] == 4 and a.recommendation is Recommendation.NeedsRevision


def test_parse_skips_leading_non_object_braces():
    raw = "Scoring {not json} now: " + json.dumps(response_dict(2))
    assert parse_response(raw).scores["scope"] == 2


def test_parse_errors():
    with pytest.raises(NoJsonFound):
        parse_response("no json here")
    d = response_dict()
    del d["scope"]
    with pytest.raises(MissingKey) as info:
        parse_response(json.dumps(d))
    assert info.value.key == "scope"
    with pytest.raises(OutOfRange):
        parse_response(json.dumps(response_dict(clarity=6)))
    with pytest.raises(OutOfRange):
        parse_response(json.dumps(response_dict(clarity=2.5)))
    with pytest.raises(OutOfRange):
        parse_response(json.dumps(response_dict(clarity=True)))
    with pytest.raises(BadRecommendation):
        parse_response(json.dumps(response_dict(recommendation="Ship it")))
    with pytest.raises(BadOverallFormat):
        parse_response(json.dumps(response_dict(overall_score="96")))
    with pytest.raises(BadOverallFormat):
        parse_response(json.dumps(response_dict(overall_score="170/160")))


def test_recommendation_spellings_and_extras():
    r = parse_response(json.dumps(response_dict(recommendation="ai agent ready", extra_key=1)))
    assert r.recommendation is Recommendation.AiAgentReady
    d = response_dict()
    del d["summary_feedback"]
    assert parse_response(json.dumps(d)).summary_feedback == ""


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=32, max_size=32), st.sampled_from(list(Recommendation)), st.text())
def test_render_parse_round_trip(values, rec, summary):
    scores = CriterionScores(dict(zip(CRITERION_KEYS, values)), f"{sum(values)}/160", rec, summary)
    assert parse_response(render_response(scores)) == scores


# --------------------------------------------------------------------------
# calls, retries, cache


def test_retry_after_unparseable_then_success():
    p = FakeProvider(["sorry, cannot", fenced(response_dict(5))])
    rs = score_runs(issue(), CFG, n=1, provider=p, sleep=lambda s: None)
    assert rs.runs[0].scores["clarity"] == 5
    assert len(p.calls) == 2 and p.calls[0] == p.calls[1]


def test_parse_exhausted():
    p = FakeProvider(["garbage"])
    with pytest.raises(RunFailed) as info:
        score_runs(issue(), CFG, n=2, provider=p, sleep=lambda s: None)
    assert info.value.run_index == 0
    assert isinstance(info.value.__cause__, ParseExhausted)
    assert len(p.calls) == 3


def test_provider_errors_retry_unless_fatal():
    sleeps = []
    p = FakeProvider([ProviderError("boom"), fenced(response_dict())])
    score_runs(issue(), CFG, n=1, provider=p, sleep=sleeps.append)
    assert len(p.calls) == 2 and len(sleeps) == 1
    p = FakeProvider([ProviderError("denied", retryable=False)])
    with pytest.raises(RunFailed):
        score_runs(issue(), CFG, n=1, provider=p, sleep=lambda s: None)
    assert len(p.calls) == 1


def test_prompt_length_limit():
    cfg = LlmConfig(base_url="http://x", model_name="m", max_prompt_chars=100)
    p = FakeProvider([fenced(response_dict())])
    with pytest.raises(RunFailed) as info:
        score_runs(issue(), cfg, n=1, provider=p)
    assert isinstance(info.value.__cause__, PromptTooLong)
    assert p.calls == []


def test_cache_makes_second_run_free(tmp_path):
    path = tmp_path / "cache.jsonl"
    p = FakeProvider([fenced(response_dict(1)), fenced(response_dict(2)), fenced(response_dict(3))])
    first = score_runs(issue(), CFG, n=3, cache=ScoreCache(path), provider=p)
    assert len(p.calls) == 3
    assert [r.scores["clarity"] for r in first.runs] == [1, 2, 3]
    again = score_runs(issue(), CFG, n=3, cache=ScoreCache(path), provider=p)
    assert len(p.calls) == 3 and again == first
    # a changed issue text changes the prompt hash, so it is not a hit
    score_runs(issue(body="new"), CFG, n=1, cache=ScoreCache(path), provider=p)
    assert len(p.calls) == 4


def test_cache_tolerates_torn_line(tmp_path):
    path = tmp_path / "cache.jsonl"
    p = FakeProvider([fenced(response_dict())])
    score_runs(issue(), CFG, n=1, cache=ScoreCache(path), provider=p)
    with open(path, "a") as fh:
        fh.write('{"repo": "o/r", "iss')
    assert len(ScoreCache(path)) == 1


def test_runsets_round_trip(tmp_path):
    p = FakeProvider([fenced(response_dict(1)), fenced(response_dict(4))])
    rs = score_runs(issue(), CFG, n=2, provider=p, record_id=("o/r", 3, 8))
    save_runsets(tmp_path / "runs.jsonl", [rs])
    assert load_runsets(tmp_path / "runs.jsonl") == [rs]


def test_score_many_returns_failures_in_place():
    class Picky:
        def complete(self, system_text, user_text, config):
            if "BAD" in user_text:
                return "nope"
            return fenced(response_dict())

    items = [(issue(), ("o/r", 3, 1)), (issue(title="BAD"), ("o/r", 4, 2)), (issue(), ("o/r", 5, 3))]
    out = score_many(items, CFG, n=1, provider=Picky(), workers=2, sleep=lambda s: None)
    assert out[0].record_id == ("o/r", 3, 1) and out[2].record_id == ("o/r", 5, 3)
    assert isinstance(out[1], RunFailed)


# --------------------------------------------------------------------------
# HTTP provider


def test_http_provider_payload_and_reply():
    seen = []

    def handler(request):
        seen.append(request)
        body = {"choices": [{"message": {"content": fenced(response_dict(4))}}]}
        return httpx.Response(200, json=body)

    provider = HttpChatProvider(api_key="k", transport=httpx.MockTransport(handler))
    rs = score_runs(issue(), CFG, n=1, provider=provider)
    assert rs.runs[0].scores["clarity"] == 4
    req = seen[0]
    assert str(req.url) == "http://llm.test/v1/chat/completions"
    assert req.headers["authorization"] == "Bearer k"
    payload = json.loads(req.content)
    assert payload["model"] == "m1" and payload["reasoning_effort"] == "high"
    assert [m["role"] for m in payload["messages"]] == ["system", "user"]
    assert payload["messages"][1]["content"] == build_prompts(issue())[1]


def test_http_provider_errors():
    def make(status, text="err"):
        return HttpChatProvider(api_key="", transport=httpx.MockTransport(lambda r: httpx.Response(status, text=text)))

    with pytest.raises(ProviderError) as info:
        make(503).complete("s", "u", CFG)
    assert info.value.retryable
    with pytest.raises(ProviderError) as info:
        make(401).complete("s", "u", CFG)
    assert not info.value.retryable
    with pytest.raises(PromptTooLong):
        make(400, "context_length_exceeded").complete("s", "u", CFG)
    with pytest.raises(ProviderError):
        make(200, "{}").complete("s", "u", CFG)
