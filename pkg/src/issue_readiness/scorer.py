"""LLM rubric scoring: prompt assembly, response parsing, provider calls, caching."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
import string
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import httpx

from .corpus import IssueSnapshot, format_timestamp
from .errors import InputError, IssueReadinessError
from .rubric import CRITERION_KEYS, MAX_SCORE, is_valid_score

logger = logging.getLogger(__name__)

TEMPLATE_PACKAGE = "issue_readiness.prompts"
SYSTEM_TEMPLATE = "system.txt"
USER_TEMPLATE = "user.txt"
MANIFEST = "MANIFEST.sha256"
PLACEHOLDERS = ("title", "description", "issue_comments")
MAX_OVERALL = MAX_SCORE * len(CRITERION_KEYS)


class ScorerError(IssueReadinessError):
    pass


class TemplateMissing(ScorerError, InputError):
    pass


class TemplateChecksumMismatch(ScorerError, InputError):
    pass


class PlaceholderUnresolved(ScorerError, InputError):
    pass


class PromptTooLong(ScorerError, InputError):
    pass


class ResponseError(ScorerError, ValueError):
    """Base for every way a model response can fail validation."""


class NoJsonFound(ResponseError):
    pass


class MissingKey(ResponseError):
    def __init__(self, key: str) -> None:
        super().__init__(f"missing key {key!r}")
        self.key = key


class OutOfRange(ResponseError):
    def __init__(self, key: str, value: object) -> None:
        super().__init__(f"{key!r}: {value!r} is not an integer in 0..{MAX_SCORE}")
        self.key = key
        self.value = value


class BadRecommendation(ResponseError):
    pass


class BadOverallFormat(ResponseError):
    pass


class ProviderError(ScorerError):
    def __init__(self, message: str, retryable: bool = True) -> None:
        super().__init__(message)
        self.retryable = retryable


class ParseExhausted(ScorerError):
    pass


class RunFailed(ScorerError):
    def __init__(self, run_index: int, cause: Exception) -> None:
        super().__init__(f"run {run_index}: {cause}")
        self.run_index = run_index
        self.cause = cause


# --------------------------------------------------------------------------
# templates and prompts

@dataclass(frozen=True)
class PromptTemplates:
    system: str
    user: str

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.system.encode("utf-8"))
        h.update(b"\x00")
        h.update(self.user.encode("utf-8"))
        return h.hexdigest()


def _read_manifest(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            digest, name = line.split(maxsplit=1)
            out[name.strip().lstrip("*")] = digest
    return out


def load_templates(directory: str | Path | None = None, verify: bool = True) -> PromptTemplates:
    """Load the system/user templates, by default the ones shipped with the package.

    When a ``MANIFEST.sha256`` sits next to the templates and ``verify`` is on,
    each file must match its recorded digest.
    """
    if directory is None:
        root = resources.files(TEMPLATE_PACKAGE)
    else:
        root = Path(directory)
    texts = {}
    for name in (SYSTEM_TEMPLATE, USER_TEMPLATE):
        try:
            texts[name] = root.joinpath(name).read_bytes()
        except (FileNotFoundError, OSError) as exc:
            raise TemplateMissing(f"prompt template {name} not found in {root}") from exc
    if verify:
        try:
            manifest = _read_manifest(root.joinpath(MANIFEST).read_text(encoding="utf-8"))
        except (FileNotFoundError, OSError):
            manifest = {}
        for name, data in texts.items():
            expected = manifest.get(name)
            if expected is not None and hashlib.sha256(data).hexdigest() != expected:
                raise TemplateChecksumMismatch(f"{name} does not match {MANIFEST}; was it edited?")
    return PromptTemplates(texts[SYSTEM_TEMPLATE].decode("utf-8"), texts[USER_TEMPLATE].decode("utf-8"))


def render_comments(issue: IssueSnapshot) -> str:
    blocks = [
        f"[{c.author_login} at {format_timestamp(c.created_at)}]\n{c.body}"
        for c in sorted(issue.comments, key=lambda c: c.created_at)
    ]
    return "\n\n".join(blocks)


def _fill(template: str, values: dict[str, str]) -> str:
    formatter = string.Formatter()
    try:
        fields = {f for _, f, _, _ in formatter.parse(template) if f is not None}
    except ValueError as exc:
        raise PlaceholderUnresolved(f"template is not a valid format string: {exc}") from exc
    unknown = fields - set(values)
    if unknown:
        raise PlaceholderUnresolved(f"template has unresolved placeholders: {sorted(unknown)}")
    return template.format(**values)


def build_prompts(issue: IssueSnapshot, templates: PromptTemplates | None = None) -> tuple[str, str]:
    templates = templates or load_templates()
    values = {
        "title": issue.title,
        "description": issue.body,
        "issue_comments": render_comments(issue),
    }
    return _fill(templates.system, {}), _fill(templates.user, values)


def prompt_hash(system_text: str, user_text: str) -> str:
    h = hashlib.sha256()
    h.update(system_text.encode("utf-8"))
    h.update(b"\x00")
    h.update(user_text.encode("utf-8"))
    return h.hexdigest()


# --------------------------------------------------------------------------
# responses

class Recommendation(str, enum.Enum):
    AiAgentReady = "AI-agent-ready"
    NeedsRevision = "Needs revision"
    NotReady = "Not ready"


_RECOMMENDATION_ALIASES = {
    "aiagentready": Recommendation.AiAgentReady,
    "needsrevision": Recommendation.NeedsRevision,
    "notready": Recommendation.NotReady,
}

_OVERALL_RE = re.compile(r"^\s*(\d+)\s*/\s*160\s*$")


@dataclass(frozen=True)
class CriterionScores:
    scores: dict[str, int]
    overall_score_raw: str
    recommendation: Recommendation
    summary_feedback: str = ""

    def to_dict(self) -> dict:
        out: dict = {k: self.scores[k] for k in CRITERION_KEYS}
        out["overall_score"] = self.overall_score_raw
        out["recommendation"] = self.recommendation.value
        out["summary_feedback"] = self.summary_feedback
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "CriterionScores":
        return _validate(d)


def _parse_recommendation(value: object) -> Recommendation:
    if not isinstance(value, str):
        raise BadRecommendation(f"recommendation must be a string, got {value!r}")
    norm = re.sub(r"[^a-z]", "", value.lower())
    try:
        return _RECOMMENDATION_ALIASES[norm]
    except KeyError:
        raise BadRecommendation(f"unknown recommendation {value!r}") from None


def _validate(obj: dict) -> CriterionScores:
    scores = {}
    for key in CRITERION_KEYS:
        if key not in obj:
            raise MissingKey(key)
        value = obj[key]
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not is_valid_score(value):
            raise OutOfRange(key, obj[key])
        scores[key] = value
    overall = obj.get("overall_score")
    if isinstance(overall, (int, float)) and not isinstance(overall, bool):
        overall = f"{overall}/160"
    m = _OVERALL_RE.match(overall) if isinstance(overall, str) else None
    if m is None or int(m.group(1)) > MAX_OVERALL:
        raise BadOverallFormat(f"overall_score must look like 'XX/160' with XX <= 160, got {overall!r}")
    if "recommendation" not in obj:
        raise MissingKey("recommendation")
    recommendation = _parse_recommendation(obj["recommendation"])
    summary = obj.get("summary_feedback", "")
    if not isinstance(summary, str):
        summary = json.dumps(summary, ensure_ascii=False)
    return CriterionScores(scores, overall.strip(), recommendation, summary)


def _first_json_object(raw: str) -> dict:
    decoder = json.JSONDecoder()
    pos = raw.find("{")
    while pos != -1:
        try:
            obj, _ = decoder.raw_decode(raw, pos)
        except json.JSONDecodeError:
            pass
        else:
            if isinstance(obj, dict):
                return obj
        pos = raw.find("{", pos + 1)
    raise NoJsonFound("response contains no JSON object")


def parse_response(raw: str) -> CriterionScores:
    """Extract and validate the first JSON object of a model response.

    The object may sit inside a fenced code block or appear bare. Keys beyond
    the 32 criteria and the three summary fields are ignored.
    """
    if not isinstance(raw, str):
        raise NoJsonFound("response is not text")
    return _validate(_first_json_object(raw))


def render_response(scores: CriterionScores) -> str:
    """Inverse of :func:`parse_response`: a fenced JSON block in prompt key order."""
    return "```json\n" + json.dumps(scores.to_dict(), indent=2, ensure_ascii=False) + "\n```"


# --------------------------------------------------------------------------
# provider

class ReasoningEffort(str, enum.Enum):
    low = "low"
    medium = "medium"
    high = "high"


@dataclass(frozen=True)
class LlmConfig:
    base_url: str
    model_name: str
    reasoning_effort: ReasoningEffort = ReasoningEffort.high
    max_retries: int = 2
    timeout: float = 300.0
    retry_backoff: float = 1.0
    max_prompt_chars: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "reasoning_effort", ReasoningEffort(self.reasoning_effort))
        if self.max_retries < 0:
            raise InputError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise InputError("timeout must be positive")


class ChatProvider(Protocol):
    def complete(self, system_text: str, user_text: str, config: LlmConfig) -> str: ...


class HttpChatProvider:
    """Chat-completions style endpoint: POST {base_url}/chat/completions."""

    def __init__(self, api_key: str | None = None, transport: httpx.BaseTransport | None = None,
                 timeout: float = 300.0) -> None:
        self.api_key = api_key if api_key is not None else os.environ.get("LLM_API_KEY", "")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        self._client = httpx.Client(headers=headers, transport=transport, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def complete(self, system_text: str, user_text: str, config: LlmConfig) -> str:
        payload = {
            "model": config.model_name,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
            "reasoning_effort": config.reasoning_effort.value,
        }
        url = config.base_url.rstrip("/") + "/chat/completions"
        try:
            response = self._client.post(url, json=payload, timeout=config.timeout)
        except httpx.TransportError as exc:
            raise ProviderError(f"provider unreachable: {exc}") from exc
        if response.status_code >= 400:
            body = response.text[:500]
            if "context_length" in body:
                raise PromptTooLong(f"provider rejected the prompt as too long: {body}")
            retryable = response.status_code >= 500 or response.status_code in (408, 429)
            raise ProviderError(f"provider returned HTTP {response.status_code}: {body}", retryable)
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError("provider response has no choices[0].message.content") from exc


def score_once(issue: IssueSnapshot, config: LlmConfig, rng_tag: object = None,
               provider: ChatProvider | None = None, templates: PromptTemplates | None = None,
               sleep: Callable[[float], None] = time.sleep) -> tuple[CriterionScores, str]:
    """One scoring call; returns the parsed scores and the raw response text.

    Unparseable output and retryable provider failures are retried with the
    same prompts up to ``config.max_retries`` times. ``rng_tag`` only labels
    log lines; run-to-run variation comes from the provider itself.
    """
    system_text, user_text = build_prompts(issue, templates)
    if config.max_prompt_chars is not None and len(system_text) + len(user_text) > config.max_prompt_chars:
        raise PromptTooLong(
            f"{issue.repo}#{issue.issue_number}: prompt has {len(system_text) + len(user_text)} chars, "
            f"limit {config.max_prompt_chars}"
        )
    provider = provider or HttpChatProvider(timeout=config.timeout)
    last_parse_error: ResponseError | None = None
    for attempt in range(config.max_retries + 1):
        try:
            raw = provider.complete(system_text, user_text, config)
        except ProviderError as exc:
            if not exc.retryable or attempt == config.max_retries:
                raise
            logger.warning("run %s attempt %d: %s", rng_tag, attempt, exc)
            sleep(config.retry_backoff * 2**attempt)
            continue
        try:
            return parse_response(raw), raw
        except ResponseError as exc:
            last_parse_error = exc
            logger.warning("run %s attempt %d: unparseable response (%s)", rng_tag, attempt, exc)
    if last_parse_error is None:  # pragma: no cover
        raise ProviderError("no response obtained")
    raise ParseExhausted(f"{config.max_retries + 1} attempts gave no valid response; last: {last_parse_error}")


# --------------------------------------------------------------------------
# cache and run sets

CACHE_SCHEMA_VERSION = 1
RecordId = tuple[str, int, int]


class ScoreCache:
    """Append-only JSONL cache of raw responses, one line per (record, run)."""

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._entries: dict[tuple, str] = {}
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    try:
                        e = json.loads(line)
                        key = (e["repo"], e["issue_number"], e["pr_number"], e["model_name"],
                               e["prompt_hash"], e["run_index"])
                        self._entries[key] = e["raw_response"]
                    except (ValueError, KeyError):
                        # a torn final line from an interrupted run
                        logger.warning("skipping unreadable cache line in %s", self.path)

    def __len__(self) -> int:
        return len(self._entries)

    @staticmethod
    def key(record_id: RecordId, model_name: str, phash: str, run_index: int) -> tuple:
        return (record_id[0], record_id[1], record_id[2], model_name, phash, run_index)

    def get(self, key: tuple) -> str | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: tuple, raw_response: str) -> None:
        repo, issue_number, pr_number, model_name, phash, run_index = key
        line = json.dumps({
            "schema_version": CACHE_SCHEMA_VERSION,
            "repo": repo,
            "issue_number": issue_number,
            "pr_number": pr_number,
            "model_name": model_name,
            "prompt_hash": phash,
            "run_index": run_index,
            "raw_response": raw_response,
        }, ensure_ascii=False, sort_keys=True)
        with self._lock:
            self._entries[key] = raw_response
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                    fh.write(line + "\n")


@dataclass(frozen=True)
class RunSet:
    record_id: RecordId
    runs: tuple[CriterionScores, ...]
    model_name: str

    def __post_init__(self) -> None:
        keys = {frozenset(r.scores) for r in self.runs}
        if len(keys) > 1:
            raise InputError(f"{self.record_id}: runs cover different criterion sets")

    def to_dict(self) -> dict:
        repo, issue, pr = self.record_id
        return {
            "schema_version": CACHE_SCHEMA_VERSION,
            "repo": repo,
            "issue_number": issue,
            "pr_number": pr,
            "model_name": self.model_name,
            "runs": [r.to_dict() for r in self.runs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunSet":
        return cls(
            (d["repo"], d["issue_number"], d["pr_number"]),
            tuple(CriterionScores.from_dict(r) for r in d["runs"]),
            d["model_name"],
        )


def _record_id_for(issue: IssueSnapshot, record_id: RecordId | None) -> RecordId:
    if record_id is not None:
        return tuple(record_id)  # type: ignore[return-value]
    return (issue.repo, issue.issue_number, issue.linked_pr or 0)


def score_runs(issue: IssueSnapshot, config: LlmConfig, n: int = 3, cache: ScoreCache | None = None,
               provider: ChatProvider | None = None, record_id: RecordId | None = None,
               templates: PromptTemplates | None = None,
               sleep: Callable[[float], None] = time.sleep) -> RunSet:
    """Score one issue ``n`` times, sequentially, reusing cached runs."""
    if n < 1:
        raise InputError("n must be >= 1")
    templates = templates or load_templates()
    rid = _record_id_for(issue, record_id)
    phash = prompt_hash(*build_prompts(issue, templates))
    runs = []
    for i in range(n):
        key = ScoreCache.key(rid, config.model_name, phash, i)
        raw = cache.get(key) if cache is not None else None
        if raw is not None:
            runs.append(parse_response(raw))
            continue
        try:
            parsed, raw = score_once(issue, config, rng_tag=i, provider=provider, templates=templates,
                                     sleep=sleep)
        except ScorerError as exc:
            raise RunFailed(i, exc) from exc
        if cache is not None:
            cache.put(key, raw)
        runs.append(parsed)
    return RunSet(rid, tuple(runs), config.model_name)


def score_many(items: Sequence[tuple[IssueSnapshot, RecordId]], config: LlmConfig, n: int = 3,
               cache: ScoreCache | None = None, provider: ChatProvider | None = None,
               workers: int = 4, templates: PromptTemplates | None = None,
               sleep: Callable[[float], None] = time.sleep) -> list[RunSet | Exception]:
    """Score many issues with bounded parallelism; failures are returned in place."""
    templates = templates or load_templates()

    def one(item):
        issue, rid = item
        try:
            return score_runs(issue, config, n=n, cache=cache, provider=provider, record_id=rid,
                              templates=templates, sleep=sleep)
        except IssueReadinessError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(one, items))


def save_runsets(path: str | Path, runsets: Iterable[RunSet]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rs in runsets:
            fh.write(json.dumps(rs.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def load_runsets(path: str | Path) -> list[RunSet]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(RunSet.from_dict(json.loads(line)))
    return out
