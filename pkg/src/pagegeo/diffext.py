"""Differential text extraction within structural clusters.

Pages in a cluster share a skeleton, so nodes are aligned by structural
path against a per-cluster reference page; texts that differ at the same
path across pages are the carriers of administrator-customized content.
"""

from __future__ import annotations

import json
import unicodedata
import re
from dataclasses import dataclass, field
from pathlib import Path

from .cluster import Cluster
from .corpus import DomNode, DomTree

__all__ = [
    "NodePath",
    "AlignedNodeGroup",
    "DifferentialEntry",
    "DifferentialTextSet",
    "MINING_TEXT_LIMIT",
    "normalize_text",
    "align_node_groups",
    "extract_differential",
    "mining_text",
    "write_differentials",
    "read_differentials",
]

_WS_RUN = re.compile(r"\s+")

# Normalized texts longer than this are truncated (with an ellipsis
# marker) before downstream mining; the export keeps the original.
MINING_TEXT_LIMIT = 512


@dataclass(frozen=True)
class NodePath:
    """Structural address: (tag, index among same-tag siblings) per step."""

    steps: tuple[tuple[str, int], ...]

    def __str__(self) -> str:
        return "/".join(f"{tag}[{idx}]" for tag, idx in self.steps)

    @classmethod
    def parse(cls, s: str) -> "NodePath":
        steps = []
        for part in s.split("/"):
            tag, _, rest = part.partition("[")
            steps.append((tag, int(rest.rstrip("]"))))
        return cls(steps=tuple(steps))


@dataclass
class AlignedNodeGroup:
    path: NodePath
    texts: dict[str, str]  # page_id -> normalized text; absent if node missing


@dataclass(frozen=True)
class DifferentialEntry:
    page_id: str
    path: NodePath
    text: str  # normalized, untruncated

    @property
    def truncated(self) -> bool:
        return len(self.text) > MINING_TEXT_LIMIT


@dataclass
class DifferentialTextSet:
    cluster_id: int
    entries: list[DifferentialEntry] = field(default_factory=list)
    skipped_singleton: bool = False
    unaligned_pages: list[str] = field(default_factory=list)


def normalize_text(raw: str) -> str:
    """Unicode NFC, case-folded, whitespace runs collapsed, trimmed."""
    return _WS_RUN.sub(" ", unicodedata.normalize("NFC", raw).casefold()).strip()


def mining_text(text: str) -> str:
    """The form of a differential text handed to downstream mining."""
    if len(text) <= MINING_TEXT_LIMIT:
        return text
    return text[: MINING_TEXT_LIMIT - 1].rstrip() + "…"


def _resolve(tree: DomTree, path: NodePath) -> DomNode | None:
    node = tree.root
    tag, idx = path.steps[0]
    if node.tag != tag or idx != 0:
        return None
    for tag, idx in path.steps[1:]:
        seen = 0
        nxt = None
        for child in node.children:
            if child.tag == tag:
                if seen == idx:
                    nxt = child
                    break
                seen += 1
        if nxt is None:
            return None
        node = nxt
    return node


def _text_paths(tree: DomTree):
    """Yield (NodePath, node) for text-bearing nodes in document order."""
    stack: list[tuple[DomNode, tuple[tuple[str, int], ...]]] = [
        (tree.root, ((tree.root.tag, 0),)),
    ]
    while stack:
        node, steps = stack.pop()
        if node.text:
            yield NodePath(steps=steps), node
        tag_counts: dict[str, int] = {}
        indexed = []
        for child in node.children:
            idx = tag_counts.get(child.tag, 0)
            tag_counts[child.tag] = idx + 1
            indexed.append((child, steps + ((child.tag, idx),)))
        stack.extend(reversed(indexed))


def align_node_groups(
    trees: dict[str, DomTree],
    reference: str,
) -> list[AlignedNodeGroup]:
    """Align text-bearing reference nodes across all trees by path.

    Groups follow the reference page's document order; a page appears in
    a group only where the path resolves in its tree. Groups covering
    fewer than two pages are dropped.
    """
    if reference not in trees:
        raise KeyError(f"reference page {reference!r} not among trees")
    others = [(pid, t) for pid, t in sorted(trees.items()) if pid != reference]
    groups: list[AlignedNodeGroup] = []
    for path, ref_node in _text_paths(trees[reference]):
        texts = {reference: normalize_text(ref_node.text)}
        for pid, tree in others:
            node = _resolve(tree, path)
            if node is not None:
                texts[pid] = normalize_text(node.text)
        if len(texts) >= 2:
            groups.append(AlignedNodeGroup(path=path, texts=texts))
    return groups


def extract_differential(
    cluster: Cluster,
    trees: dict[str, DomTree],
) -> DifferentialTextSet:
    """Collect every (page, path, text) of groups whose texts differ.

    Singleton clusters (or clusters with fewer than two parseable trees)
    are skipped with a flag. Within a differing group all texts are kept,
    including values shared by several pages.
    """
    result = DifferentialTextSet(cluster_id=cluster.cluster_id)
    parseable = [pid for pid in cluster.members if pid in trees]
    result.unaligned_pages = [pid for pid in cluster.members if pid not in trees]
    if len(parseable) < 2:
        result.skipped_singleton = True
        return result

    reference = parseable[0]
    cluster_trees = {pid: trees[pid] for pid in parseable}
    for group in align_node_groups(cluster_trees, reference):
        if len(set(group.texts.values())) < 2:
            continue
        for pid in sorted(group.texts):
            result.entries.append(DifferentialEntry(
                page_id=pid, path=group.path, text=group.texts[pid],
            ))
    return result


def write_differentials(sets: list[DifferentialTextSet], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ds in sets:
            for e in ds.entries:
                fh.write(json.dumps({
                    "cluster_id": ds.cluster_id,
                    "page_id": e.page_id,
                    "path": str(e.path),
                    "text": e.text,
                    "truncated": e.truncated,
                }, sort_keys=True) + "\n")


def read_differentials(path: str | Path) -> list[DifferentialTextSet]:
    by_cluster: dict[int, DifferentialTextSet] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            ds = by_cluster.setdefault(
                obj["cluster_id"], DifferentialTextSet(cluster_id=obj["cluster_id"]),
            )
            ds.entries.append(DifferentialEntry(
                page_id=obj["page_id"],
                path=NodePath.parse(obj["path"]),
                text=obj["text"],
            ))
    return [by_cluster[cid] for cid in sorted(by_cluster)]
