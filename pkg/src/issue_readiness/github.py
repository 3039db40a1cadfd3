"""Minimal GitHub REST v3 client for issue / pull-request ingestion.

Retries transient failures (5xx, connection errors) with exponential backoff
and waits out rate limits using the ``X-RateLimit-Reset`` / ``Retry-After``
headers.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import httpx

from .corpus import (
    CommentRecord,
    CorpusRecord,
    IssueSnapshot,
    Outcome,
    PullRequestRecord,
    parse_timestamp,
)
from .errors import InputError, IssueReadinessError

logger = logging.getLogger(__name__)

API_URL = "https://api.github.com"
PER_PAGE = 100
DEFAULT_AGENT_LOGINS = ("Copilot", "copilot-swe-agent[bot]", "copilot-swe-agent")


class GitHubError(IssueReadinessError):
    pass


class NotFound(GitHubError):
    pass


class AuthError(GitHubError, InputError):
    pass


class RateLimited(GitHubError):
    pass


class MalformedResponse(GitHubError):
    pass


class GitHubClient:
    def __init__(
        self,
        token: str | None = None,
        base_url: str = API_URL,
        max_retries: int = 5,
        backoff: float = 1.0,
        max_wait: float = 3600.0,
        agent_logins: Iterable[str] = DEFAULT_AGENT_LOGINS,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        timeout: float = 30.0,
    ) -> None:
        token = token if token is not None else os.environ.get("GITHUB_TOKEN")
        if not token:
            raise AuthError("no GitHub token: set GITHUB_TOKEN")
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_wait = max_wait
        self.agent_logins = frozenset(agent_logins)
        self._sleep = sleep
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"),
            headers={
                "Accept": "application/vnd.github+json",
                "Authorization": f"Bearer {token}",
                "X-GitHub-Api-Version": "2022-11-28",
            },
            timeout=timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "GitHubClient":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    # -- transport --------------------------------------------------------

    def _rate_limit_wait(self, response: httpx.Response) -> float | None:
        retry_after = response.headers.get("Retry-After")
        if retry_after is not None:
            try:
                return max(0.0, float(retry_after))
            except ValueError:
                return None
        if response.headers.get("X-RateLimit-Remaining") == "0":
            reset = response.headers.get("X-RateLimit-Reset")
            try:
                return max(0.0, float(reset) - time.time()) if reset else self.backoff
            except ValueError:
                return self.backoff
        return None

    def get(self, path: str, params: dict | None = None):
        """GET ``path`` and return decoded JSON, handling retries and rate limits."""
        for attempt in range(self.max_retries + 1):
            last = attempt == self.max_retries
            try:
                response = self._client.get(path, params=params)
            except httpx.TransportError as exc:
                if last:
                    raise GitHubError(f"GET {path} failed after {attempt + 1} attempts: {exc}") from exc
                self._sleep(self.backoff * 2**attempt)
                continue

            status = response.status_code
            if status in (403, 429):
                wait = self._rate_limit_wait(response)
                if wait is None and status == 429:
                    wait = self.backoff * 2**attempt
                if wait is not None:
                    if last:
                        raise RateLimited(f"GET {path}: still rate limited after {attempt + 1} attempts")
                    wait = min(wait, self.max_wait)
                    logger.warning("rate limited on %s, waiting %.1fs", path, wait)
                    self._sleep(wait)
                    continue
                raise AuthError(f"GET {path}: forbidden ({status})")
            if status == 401:
                raise AuthError(f"GET {path}: bad credentials (401)")
            if status == 404:
                raise NotFound(f"GET {path}: not found")
            if status >= 500:
                if last:
                    raise GitHubError(f"GET {path}: server error {status} after {attempt + 1} attempts")
                self._sleep(self.backoff * 2**attempt)
                continue
            if status >= 400:
                raise GitHubError(f"GET {path}: HTTP {status}")
            try:
                return response.json()
            except ValueError as exc:
                raise MalformedResponse(f"GET {path}: body is not JSON") from exc
        raise GitHubError(f"GET {path}: retries exhausted")  # pragma: no cover

    def get_paginated(self, path: str, params: dict | None = None) -> list:
        items: list = []
        page = 1
        while True:
            batch = self.get(path, params={**(params or {}), "per_page": PER_PAGE, "page": page})
            if not isinstance(batch, list):
                raise MalformedResponse(f"GET {path}: expected a JSON array")
            items.extend(batch)
            if len(batch) < PER_PAGE:
                return items
            page += 1

    # -- domain -----------------------------------------------------------

    def _pr_record(self, repo: str, payload: dict, issue_number: int | None) -> PullRequestRecord:
        try:
            if payload.get("merged_at") or payload.get("merged"):
                outcome = Outcome.merged
            elif payload["state"] == "closed":
                outcome = Outcome.closed
            else:
                outcome = Outcome.open
            login = (payload.get("user") or {}).get("login", "")
            return PullRequestRecord(
                repo=repo,
                pr_number=int(payload["number"]),
                created_at=parse_timestamp(payload["created_at"]),
                outcome=outcome,
                agent_authored=login in self.agent_logins,
                issue_number=issue_number,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"{repo}: unexpected pull request payload ({exc})") from exc

    def fetch_issue(self, repo: str, issue_number: int, linked_pr: int | None = None) -> IssueSnapshot:
        base = f"/repos/{repo}"
        issue = self.get(f"{base}/issues/{issue_number}")
        raw_comments = self.get_paginated(f"{base}/issues/{issue_number}/comments")
        try:
            comments = tuple(
                CommentRecord(
                    author_login=(c.get("user") or {}).get("login", ""),
                    created_at=parse_timestamp(c["created_at"]),
                    body=c.get("body") or "",
                )
                for c in raw_comments
            )
            return IssueSnapshot(
                repo=repo,
                issue_number=int(issue["number"]),
                title=issue["title"],
                body=issue.get("body") or "",
                comments=comments,
                linked_pr=linked_pr,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"{repo}#{issue_number}: unexpected issue payload ({exc})") from exc

    def fetch_record(self, repo: str, issue_number: int, pr_number: int) -> CorpusRecord:
        snapshot = self.fetch_issue(repo, issue_number, pr_number)
        pull = self.get(f"/repos/{repo}/pulls/{pr_number}")
        return CorpusRecord(issue=snapshot, pr=self._pr_record(repo, pull, issue_number))

    def fetch_history(self, repo: str) -> list[PullRequestRecord]:
        """All pull requests of ``repo`` (any state), oldest first."""
        pulls = self.get_paginated(f"/repos/{repo}/pulls", params={"state": "all"})
        records = [self._pr_record(repo, p, None) for p in pulls]
        return sorted(records, key=lambda p: (p.created_at, p.pr_number))


def fetch_record(repo: str, issue_number: int, pr_number: int, auth_token: str | None = None,
                 **client_kwargs) -> CorpusRecord:
    with GitHubClient(token=auth_token, **client_kwargs) as client:
        return client.fetch_record(repo, issue_number, pr_number)


def fetch_many(client: GitHubClient, triples: Sequence[tuple[str, int, int]],
               workers: int = 4) -> list[CorpusRecord | Exception]:
    """Fetch several records with bounded parallelism; results keep input order.

    Per-record failures are returned in place of the record so batch callers
    can report them. Authentication failures are re-raised immediately.
    """

    def one(triple):
        try:
            return client.fetch_record(*triple)
        except AuthError:
            raise
        except IssueReadinessError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(one, triples))
