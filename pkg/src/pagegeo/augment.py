"""Search-engine augmentation of low-information differential texts.

Backends are pluggable: an offline fixture backend for deterministic
runs, a generic HTTP search API client, and a null backend for ablation.
All lookups go through a persistent JSON-lines cache keyed by the hash
of the normalized query, so repeated runs never re-query a live engine.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .cluemine import ClueRecord

__all__ = [
    "SearchQuery",
    "Snippet",
    "Augmentation",
    "QuerySkipped",
    "AugmentationUnavailable",
    "BackendError",
    "SearchBackend",
    "FixtureSearchBackend",
    "HttpSearchBackend",
    "NullSearchBackend",
    "AugmentationCache",
    "TokenBucket",
    "build_query",
    "fetch_augmentation",
    "normalize_query",
]

QUERY_MAX_CHARS = 256
DEFAULT_RETRIES = 3
DEFAULT_MAX_SNIPPETS = 10

_CONTROL = re.compile(r"[\x00-\x1f\x7f]")
_WS_RUN = re.compile(r"\s+")


class QuerySkipped(Exception):
    """The clue text reduces to nothing usable as a search query."""


class AugmentationUnavailable(Exception):
    """Backend failed after all retries; the clue proceeds unaugmented."""


class BackendError(Exception):
    """A single backend call failed (retriable)."""


@dataclass(frozen=True)
class SearchQuery:
    query_text: str
    origin: tuple[int, str, str]  # (cluster_id, page_id, path)


@dataclass(frozen=True)
class Snippet:
    title: str
    snippet: str
    url: str


@dataclass
class Augmentation:
    query: SearchQuery
    snippets: list[Snippet]
    backend_tag: str
    retrieved_at: str


def normalize_query(text: str) -> str:
    return _WS_RUN.sub(" ", text).strip().lower()


def query_hash(text: str) -> str:
    return hashlib.sha256(normalize_query(text).encode("utf-8")).hexdigest()


def build_query(clue: ClueRecord) -> SearchQuery:
    """Turn an augmentation-route clue into a single-line search query.

    Control characters are stripped and the text truncated to 256 chars
    on a word boundary. Raises QuerySkipped when nothing remains.
    """
    text = _WS_RUN.sub(" ", _CONTROL.sub(" ", clue.text)).strip()
    if not text:
        raise QuerySkipped(f"clue for page {clue.page_id} is empty after stripping")
    if len(text) > QUERY_MAX_CHARS:
        cut = text[: QUERY_MAX_CHARS + 1]
        head, sep, _ = cut.rpartition(" ")
        text = (head if sep else cut[:QUERY_MAX_CHARS]).rstrip()
    return SearchQuery(
        query_text=text,
        origin=(clue.cluster_id, clue.page_id, clue.path),
    )


class SearchBackend:
    """Contract: given a query string, return ordered snippets."""

    tag = "abstract"

    def search(self, query: str) -> list[Snippet]:
        raise NotImplementedError


class FixtureSearchBackend(SearchBackend):
    """Offline backend: JSON map normalized-query -> snippet list."""

    tag = "fixture"

    def __init__(self, path: str | Path):
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        self._table = {
            normalize_query(q): [
                Snippet(title=s["title"], snippet=s["snippet"], url=s["url"])
                for s in items
            ]
            for q, items in raw.items()
        }
        self.calls = 0

    def search(self, query: str) -> list[Snippet]:
        self.calls += 1
        return list(self._table.get(normalize_query(query), []))


class HttpSearchBackend(SearchBackend):
    """Generic HTTP search API: GET endpoint?q=..., bearer-key auth.

    Expects a JSON body {"results": [{"title", "snippet", "url"}, ...]}.
    Calls are paced by a token bucket (default 1 request/second).
    """

    tag = "http"

    def __init__(self, endpoint: str, api_key: str = "", rate_per_sec: float = 1.0,
                 timeout: float = 15.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout
        self.bucket = TokenBucket(rate_per_sec=rate_per_sec)

    def search(self, query: str) -> list[Snippet]:
        import requests

        self.bucket.acquire()
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.get(
                self.endpoint, params={"q": query}, headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            body = resp.json()
        except Exception as exc:
            raise BackendError(f"search request failed: {exc}") from exc
        return [
            Snippet(
                title=str(r.get("title", "")),
                snippet=str(r.get("snippet", "")),
                url=str(r.get("url", "")),
            )
            for r in body.get("results", [])
        ]


class NullSearchBackend(SearchBackend):
    """Always unavailable; used for no-augmentation ablation runs."""

    tag = "null"

    def __init__(self):
        self.calls = 0

    def search(self, query: str) -> list[Snippet]:
        self.calls += 1
        raise BackendError("null backend has no results")


class TokenBucket:
    """Simple token bucket: acquire() blocks until a token is available."""

    def __init__(self, rate_per_sec: float = 1.0, capacity: float = 1.0,
                 clock=time.monotonic, sleep=time.sleep):
        self.rate = rate_per_sec
        self.capacity = capacity
        self.tokens = capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            while True:
                now = self._clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                self._sleep((1.0 - self.tokens) / self.rate)


class AugmentationCache:
    """Append-safe JSON-lines cache of search results.

    One record per line: {query_hash, query, snippets, backend_tag,
    retrieved_at}. Readers may share the in-memory index; appends are
    serialized by a lock.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[str, dict] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    self._index[obj["query_hash"]] = obj

    def get(self, query: str) -> dict | None:
        """Full cached record for a query, or None."""
        return self._index.get(query_hash(query))

    def put(self, query: str, snippets: list[Snippet], backend_tag: str,
            retrieved_at: str) -> None:
        obj = {
            "query_hash": query_hash(query),
            "query": query,
            "snippets": [
                {"title": s.title, "snippet": s.snippet, "url": s.url}
                for s in snippets
            ],
            "backend_tag": backend_tag,
            "retrieved_at": retrieved_at,
        }
        with self._lock:
            self._index[obj["query_hash"]] = obj
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(obj, sort_keys=True) + "\n")


def fetch_augmentation(
    query: SearchQuery,
    backend: SearchBackend,
    cache: AugmentationCache | None = None,
    retries: int = DEFAULT_RETRIES,
    max_snippets: int = DEFAULT_MAX_SNIPPETS,
) -> Augmentation:
    """Cache-first snippet retrieval with bounded retries.

    A cached normalized query is served without any backend call. A
    backend that keeps failing raises AugmentationUnavailable after
    exactly *retries* attempts.
    """
    if cache is not None:
        cached = cache.get(query.query_text)
        if cached is not None:
            snippets = [Snippet(**s) for s in cached["snippets"]]
            return Augmentation(
                query=query, snippets=snippets[:max_snippets],
                backend_tag="cache", retrieved_at=cached["retrieved_at"],
            )

    last_error: Exception | None = None
    for _ in range(retries):
        try:
            snippets = backend.search(query.query_text)[:max_snippets]
            break
        except Exception as exc:
            last_error = exc
    else:
        raise AugmentationUnavailable(
            f"backend {backend.tag!r} failed after {retries} retries: {last_error}",
        )

    retrieved_at = datetime.now(timezone.utc).isoformat()
    if cache is not None:
        cache.put(query.query_text, snippets, backend.tag, retrieved_at)
    return Augmentation(
        query=query, snippets=snippets, backend_tag=backend.tag,
        retrieved_at=retrieved_at,
    )
