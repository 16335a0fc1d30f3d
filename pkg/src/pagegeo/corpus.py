"""Corpus ingestion: manifest loading, DOM normalization, page serialization.

A corpus is a JSON-lines manifest (page_id, ip, port, html_path, optional
captured_at) next to raw HTML files. Parsing is deliberately forgiving:
device pages are frequently invalid HTML, so the tree builder recovers
from unclosed and stray tags instead of rejecting the page.
"""

from __future__ import annotations

import ipaddress
import json
import logging
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path

log = logging.getLogger(__name__)

__all__ = [
    "PageRecord",
    "DomNode",
    "DomTree",
    "SerializedPage",
    "CorpusLoad",
    "PageUnparseable",
    "load_corpus",
    "parse_dom",
    "serialize_page",
]

_WS_RUN = re.compile(r"\s+")

# Elements whose text content never renders and never carries clues.
_DROP_TEXT_TAGS = frozenset({"script", "style"})

# Void elements per the HTML spec: never pushed onto the open stack.
_VOID_TAGS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr",
})

# Attribute names kept as structure tokens; values are per-device noise.
_KEPT_ATTRS = ("id", "class")

# Separates the structure token section from the visible-text section.
SERIAL_DELIMITER = b"\x00"


class PageUnparseable(Exception):
    """Raised when HTML yields no elements at all."""


@dataclass(frozen=True)
class PageRecord:
    """One captured device page."""

    page_id: str
    ip: str
    port: int
    html: bytes
    captured_at: str | None = None
    source: str | None = None

    @property
    def endpoint(self) -> str:
        return f"{self.ip}:{self.port}"


@dataclass
class DomNode:
    """Normalized element node: lowercase tag, retained attrs, collapsed text."""

    tag: str
    attrs: list[tuple[str, str]] = field(default_factory=list)
    children: list["DomNode"] = field(default_factory=list)
    text: str = ""


@dataclass
class DomTree:
    root: DomNode
    node_count: int

    def walk(self):
        """Yield nodes in document (depth-first pre-) order."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass(frozen=True)
class SerializedPage:
    """Deterministic composite of structure tokens and visible text."""

    page_id: str
    composite: bytes


@dataclass
class CorpusLoad:
    """Result of loading a manifest: records plus per-entry skip diagnostics."""

    records: list[PageRecord]
    skipped: list[str] = field(default_factory=list)

    @property
    def skipped_count(self) -> int:
        return len(self.skipped)


def _collapse(text: str) -> str:
    return _WS_RUN.sub(" ", text).strip()


def load_corpus(path: str | Path) -> CorpusLoad:
    """Load PageRecords from a manifest file or a directory holding one.

    Entries with malformed JSON, duplicate page_ids, invalid endpoints, or
    unreadable HTML files are skipped with a diagnostic; everything else
    becomes a PageRecord. Records are returned sorted by page_id.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"corpus manifest not found: {path}")

    base = path.parent
    records: list[PageRecord] = []
    skipped: list[str] = []
    seen_ids: set[str] = set()

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
                page_id = str(entry["page_id"])
                ip = str(entry["ip"])
                port = int(entry["port"])
                html_path = base / entry["html_path"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                skipped.append(f"line {lineno}: malformed manifest entry ({exc})")
                continue
            if page_id in seen_ids:
                skipped.append(f"line {lineno}: duplicate page_id {page_id!r}")
                continue
            try:
                ipaddress.ip_address(ip)
            except ValueError:
                skipped.append(f"line {lineno}: invalid ip {ip!r}")
                continue
            try:
                html = html_path.read_bytes()
            except OSError as exc:
                skipped.append(f"line {lineno}: unreadable html {html_path} ({exc})")
                continue
            seen_ids.add(page_id)
            records.append(PageRecord(
                page_id=page_id,
                ip=ip,
                port=port,
                html=html,
                captured_at=entry.get("captured_at"),
                source=entry.get("source"),
            ))

    for msg in skipped:
        log.warning("corpus skip: %s", msg)
    records.sort(key=lambda r: r.page_id)
    return CorpusLoad(records=records, skipped=skipped)


class _TreeBuilder(HTMLParser):
    """Tolerant HTML -> DomNode builder.

    Recovery rules: unclosed tags are closed at their parent's boundary,
    stray end tags are ignored, comments are dropped, and script/style
    keep their element but lose their text.
    """

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.top_level: list[DomNode] = []
        self.stack: list[DomNode] = []
        self._text_parts: dict[int, list[str]] = {}

    def _attach(self, node: DomNode) -> None:
        if self.stack:
            self.stack[-1].children.append(node)
        else:
            self.top_level.append(node)

    def handle_starttag(self, tag, attrs):
        node = DomNode(tag=tag)
        node.attrs = [(name, "") for name, _ in attrs if name in _KEPT_ATTRS]
        self._attach(node)
        if tag not in _VOID_TAGS:
            self.stack.append(node)

    def handle_startendtag(self, tag, attrs):
        node = DomNode(tag=tag)
        node.attrs = [(name, "") for name, _ in attrs if name in _KEPT_ATTRS]
        self._attach(node)

    def handle_endtag(self, tag):
        for i in range(len(self.stack) - 1, -1, -1):
            if self.stack[i].tag == tag:
                # implicitly close anything left open above the match
                for closed in self.stack[i:]:
                    self._finalize(closed)
                del self.stack[i:]
                return
        # stray end tag: ignore

    def handle_data(self, data):
        if not self.stack:
            return
        current = self.stack[-1]
        if current.tag in _DROP_TEXT_TAGS:
            return
        self._text_parts.setdefault(id(current), []).append(data)

    def _finalize(self, node: DomNode) -> None:
        parts = self._text_parts.pop(id(node), None)
        if parts:
            node.text = _collapse("".join(parts))

    def close(self):
        super().close()
        for node in self.stack:
            self._finalize(node)
        self.stack.clear()


def parse_dom(page: PageRecord) -> DomTree:
    """Parse page HTML into a normalized DomTree.

    UTF-8 is assumed with lossy replacement. A page that produces zero
    elements raises PageUnparseable. Multiple top-level elements are
    wrapped under a synthetic html root so every page has a single root.
    """
    text = page.html.decode("utf-8", errors="replace")
    builder = _TreeBuilder()
    builder.feed(text)
    builder.close()

    roots = builder.top_level
    if not roots:
        raise PageUnparseable(f"page {page.page_id}: no elements parsed")
    if len(roots) == 1:
        root = roots[0]
    else:
        root = DomNode(tag="html", children=roots)

    count = 0
    stack = [root]
    while stack:
        node = stack.pop()
        count += 1
        stack.extend(node.children)
    return DomTree(root=root, node_count=count)


def serialize_page(tree: DomTree, page_id: str) -> SerializedPage:
    """Build the composite string hashed by the LSH stage.

    Depth-first "tag(depth)" tokens (plus retained attribute-name markers),
    then a delimiter byte, then all visible text in document order.
    """
    tokens: list[str] = []
    texts: list[str] = []
    stack: list[tuple[DomNode, int]] = [(tree.root, 0)]
    while stack:
        node, depth = stack.pop()
        token = f"{node.tag}({depth})"
        for name, _ in node.attrs:
            token += f"@{name}"
        tokens.append(token)
        if node.text:
            texts.append(node.text)
        stack.extend((child, depth + 1) for child in reversed(node.children))
    composite = "".join(tokens).encode("utf-8") + SERIAL_DELIMITER + " ".join(texts).encode("utf-8")
    return SerializedPage(page_id=page_id, composite=composite)
