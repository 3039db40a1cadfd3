"""Issue / pull-request records, eligibility rules, and JSONL persistence."""

from __future__ import annotations

import dataclasses
import enum
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

from .errors import InputError, IssueReadinessError

SCHEMA_VERSION = 1


class CorpusIoError(IssueReadinessError, OSError):
    pass


class SchemaVersionMismatch(InputError):
    pass


class MalformedLine(InputError):
    def __init__(self, line_number: int, reason: str) -> None:
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


class Outcome(str, enum.Enum):
    merged = "merged"
    closed = "closed"
    open = "open"


def parse_timestamp(value: str | datetime) -> datetime:
    """Parse an ISO-8601 timestamp and normalize it to UTC."""
    if isinstance(value, datetime):
        dt = value
    else:
        text = value.strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class CommentRecord:
    author_login: str
    created_at: datetime
    body: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "created_at", parse_timestamp(self.created_at))
        if self.body is None:
            object.__setattr__(self, "body", "")


@dataclass(frozen=True)
class IssueSnapshot:
    repo: str
    issue_number: int
    title: str
    body: str = ""
    comments: tuple[CommentRecord, ...] = ()
    linked_pr: int | None = None

    def __post_init__(self) -> None:
        _check_repo(self.repo)
        if not isinstance(self.issue_number, int) or self.issue_number <= 0:
            raise InputError(f"issue_number must be a positive integer, got {self.issue_number!r}")
        if not self.title or not self.title.strip():
            raise InputError(f"{self.repo}#{self.issue_number}: title must be non-empty")
        if self.body is None:
            object.__setattr__(self, "body", "")
        comments = tuple(sorted(self.comments, key=lambda c: c.created_at))
        object.__setattr__(self, "comments", comments)


@dataclass(frozen=True)
class PullRequestRecord:
    repo: str
    pr_number: int
    created_at: datetime
    outcome: Outcome
    agent_authored: bool
    issue_number: int | None = None

    def __post_init__(self) -> None:
        _check_repo(self.repo)
        if not isinstance(self.pr_number, int) or self.pr_number <= 0:
            raise InputError(f"pr_number must be a positive integer, got {self.pr_number!r}")
        object.__setattr__(self, "created_at", parse_timestamp(self.created_at))
        object.__setattr__(self, "outcome", Outcome(self.outcome))


@dataclass(frozen=True)
class CorpusRecord:
    issue: IssueSnapshot
    pr: PullRequestRecord

    def __post_init__(self) -> None:
        if self.issue.repo != self.pr.repo:
            raise InputError(f"repo mismatch: issue in {self.issue.repo}, PR in {self.pr.repo}")
        if self.pr.issue_number is not None and self.pr.issue_number != self.issue.issue_number:
            raise InputError(
                f"{self.pr.repo}: PR #{self.pr.pr_number} links issue {self.pr.issue_number}, "
                f"not {self.issue.issue_number}"
            )

    @property
    def record_id(self) -> tuple[str, int, int]:
        return (self.issue.repo, self.issue.issue_number, self.pr.pr_number)


def _check_repo(repo: str) -> None:
    if not isinstance(repo, str) or repo.count("/") != 1 or not all(repo.split("/")):
        raise InputError(f"repo must look like 'owner/name', got {repo!r}")


def record_key(record_id: tuple[str, int, int]) -> str:
    repo, issue, pr = record_id
    return f"{repo}#{issue}/pr{pr}"


# --------------------------------------------------------------------------
# transformations

def truncate_comments(record: CorpusRecord) -> CorpusRecord:
    """Keep only comments created strictly before the pull request."""
    cutoff = record.pr.created_at
    kept = tuple(c for c in record.issue.comments if c.created_at < cutoff)
    if len(kept) == len(record.issue.comments):
        return record
    return dataclasses.replace(record, issue=dataclasses.replace(record.issue, comments=kept))


def is_eligible(record: CorpusRecord) -> bool:
    pr = record.pr
    linked = pr.issue_number is not None and pr.issue_number == record.issue.issue_number
    return pr.agent_authored and linked and pr.outcome in (Outcome.merged, Outcome.closed)


def select_eligible(records: Iterable[CorpusRecord]) -> list[CorpusRecord]:
    return [r for r in records if is_eligible(r)]


# --------------------------------------------------------------------------
# (de)serialization

def comment_to_dict(c: CommentRecord) -> dict:
    return {"author_login": c.author_login, "created_at": format_timestamp(c.created_at), "body": c.body}


def issue_to_dict(issue: IssueSnapshot) -> dict:
    return {
        "repo": issue.repo,
        "issue_number": issue.issue_number,
        "title": issue.title,
        "body": issue.body,
        "comments": [comment_to_dict(c) for c in issue.comments],
        "linked_pr": issue.linked_pr,
    }


def pr_to_dict(pr: PullRequestRecord) -> dict:
    return {
        "repo": pr.repo,
        "pr_number": pr.pr_number,
        "created_at": format_timestamp(pr.created_at),
        "outcome": pr.outcome.value,
        "agent_authored": pr.agent_authored,
        "issue_number": pr.issue_number,
    }


def record_to_dict(record: CorpusRecord) -> dict:
    return {"schema_version": SCHEMA_VERSION, "issue": issue_to_dict(record.issue), "pr": pr_to_dict(record.pr)}


def issue_from_dict(d: dict) -> IssueSnapshot:
    comments = tuple(
        CommentRecord(c["author_login"], parse_timestamp(c["created_at"]), c.get("body") or "")
        for c in d.get("comments", [])
    )
    return IssueSnapshot(
        repo=d["repo"],
        issue_number=d["issue_number"],
        title=d["title"],
        body=d.get("body") or "",
        comments=comments,
        linked_pr=d.get("linked_pr"),
    )


def pr_from_dict(d: dict) -> PullRequestRecord:
    return PullRequestRecord(
        repo=d["repo"],
        pr_number=d["pr_number"],
        created_at=parse_timestamp(d["created_at"]),
        outcome=Outcome(d["outcome"]),
        agent_authored=bool(d["agent_authored"]),
        issue_number=d.get("issue_number"),
    )


def record_from_dict(d: dict) -> CorpusRecord:
    return CorpusRecord(issue=issue_from_dict(d["issue"]), pr=pr_from_dict(d["pr"]))


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise CorpusIoError(f"cannot read {path}: {exc}") from exc
    with fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(n, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise MalformedLine(n, "expected a JSON object")
            version = obj.get("schema_version")
            if version is None:
                raise MalformedLine(n, "missing schema_version")
            if version != SCHEMA_VERSION:
                raise SchemaVersionMismatch(
                    f"{path}:{n}: schema_version {version!r}, this library reads {SCHEMA_VERSION}"
                )
            yield n, obj


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    except OSError as exc:
        raise CorpusIoError(f"cannot write {path}: {exc}") from exc


def save_corpus(path: str | Path, records: Iterable[CorpusRecord]) -> None:
    _write_jsonl(Path(path), (record_to_dict(r) for r in records))


def load_corpus(path: str | Path) -> list[CorpusRecord]:
    out = []
    for n, obj in _iter_jsonl(Path(path)):
        try:
            out.append(record_from_dict(obj))
        except KeyError as exc:
            raise MalformedLine(n, f"missing field {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            raise MalformedLine(n, str(exc)) from exc
    return out


def save_history(path: str | Path, prs: Iterable[PullRequestRecord]) -> None:
    _write_jsonl(Path(path), ({"schema_version": SCHEMA_VERSION, **pr_to_dict(p)} for p in prs))


def load_history(path: str | Path) -> list[PullRequestRecord]:
    out = []
    for n, obj in _iter_jsonl(Path(path)):
        try:
            out.append(pr_from_dict(obj))
        except KeyError as exc:
            raise MalformedLine(n, f"missing field {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            raise MalformedLine(n, str(exc)) from exc
    return out


class CorpusWriter:
    """Append records to a JSONL file from several threads through one lock."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8", newline="\n")

    def write(self, record: CorpusRecord) -> None:
        line = json.dumps(record_to_dict(record), ensure_ascii=False, sort_keys=True) + "\n"
        with self._lock:
            self._fh.write(line)
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "CorpusWriter":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()
