"""Structural clustering of page digests.

Two schemes are provided: the single-pass greedy leader algorithm (the
pipeline default) and average-linkage hierarchical agglomeration with a
similarity stopping threshold. Both produce a deterministic partition.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .lsh import DIGEST_BITS, StructuralDigest, hamming_distance, similarity

__all__ = [
    "Cluster",
    "ClusterSet",
    "cluster_greedy",
    "cluster_hierarchical",
    "avg_similarity",
    "write_clusters",
    "read_clusters",
]


@dataclass
class Cluster:
    cluster_id: int
    representative: StructuralDigest
    members: list[str]  # page_ids, in join order

    @property
    def is_singleton(self) -> bool:
        return len(self.members) == 1


@dataclass
class ClusterSet:
    clusters: list[Cluster]
    threshold: float
    algorithm: str  # "greedy" | "hierarchical"

    def member_ids(self) -> set[str]:
        out: set[str] = set()
        for c in self.clusters:
            out.update(c.members)
        return out

    def assignments(self) -> dict[str, int]:
        """Map page_id -> cluster_id."""
        return {pid: c.cluster_id for c in self.clusters for pid in c.members}


def cluster_greedy(
    digests: list[tuple[str, StructuralDigest]],
    threshold: int,
    nearest: bool = False,
) -> ClusterSet:
    """Single-pass leader clustering at Hamming distance *threshold*.

    Each page joins the first existing cluster whose representative digest
    is within the threshold (or the nearest such cluster when
    ``nearest=True``), else founds a new cluster represented by its own
    digest. Input order is preserved; callers wanting the canonical
    ordering pass digests sorted by page_id.
    """
    if not 0 <= threshold <= DIGEST_BITS:
        raise ValueError(f"threshold must be in [0, {DIGEST_BITS}], got {threshold}")
    clusters: list[Cluster] = []
    for page_id, digest in digests:
        chosen: Cluster | None = None
        best_d = threshold + 1
        for c in clusters:
            d = hamming_distance(c.representative, digest)
            if d <= threshold:
                if not nearest:
                    chosen = c
                    break
                if d < best_d:
                    chosen, best_d = c, d
        if chosen is None:
            clusters.append(Cluster(
                cluster_id=len(clusters), representative=digest, members=[page_id],
            ))
        else:
            chosen.members.append(page_id)
    return ClusterSet(clusters=clusters, threshold=threshold, algorithm="greedy")


def avg_similarity(a: Cluster, b: Cluster, lookup: dict[str, StructuralDigest]) -> float:
    """Mean pairwise similarity over all cross pairs of two clusters."""
    total = 0.0
    for x in a.members:
        dx = lookup[x]
        for y in b.members:
            total += similarity(dx, lookup[y])
    return total / (len(a.members) * len(b.members))


def cluster_hierarchical(
    digests: list[tuple[str, StructuralDigest]],
    threshold: float,
) -> ClusterSet:
    """Average-linkage agglomeration, merging while max AvgSim >= *threshold*.

    Ties on the maximum are broken by the lexicographically smallest
    (cluster_id, cluster_id) pair; a merged cluster keeps the smaller id,
    so the merge sequence is fully deterministic. Linkage similarities are
    maintained with the exact running-mean update, so they always equal
    the mean pairwise similarity of the member digests.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"similarity threshold must be in [0, 1], got {threshold}")
    n = len(digests)
    if n == 0:
        return ClusterSet(clusters=[], threshold=threshold, algorithm="hierarchical")

    members: dict[int, list[str]] = {i: [digests[i][0]] for i in range(n)}
    sizes: dict[int, int] = {i: 1 for i in range(n)}
    sim: dict[tuple[int, int], float] = {}
    for i in range(n):
        for j in range(i + 1, n):
            sim[(i, j)] = similarity(digests[i][1], digests[j][1])

    active = sorted(members)
    while len(active) > 1:
        best_pair: tuple[int, int] | None = None
        best_sim = -1.0
        for ai in range(len(active)):
            for aj in range(ai + 1, len(active)):
                pair = (active[ai], active[aj])
                s = sim[pair]
                if s > best_sim or (s == best_sim and pair < best_pair):
                    best_sim, best_pair = s, pair
        if best_sim < threshold:
            break
        a, b = best_pair
        # merged cluster keeps id a (the smaller); fold b into it
        for other in active:
            if other in (a, b):
                continue
            pa = (a, other) if a < other else (other, a)
            pb = (b, other) if b < other else (other, b)
            sim[pa] = (sizes[a] * sim[pa] + sizes[b] * sim[pb]) / (sizes[a] + sizes[b])
            del sim[pb]
        del sim[(a, b)]
        members[a] = members[a] + members[b]
        sizes[a] += sizes[b]
        del members[b], sizes[b]
        active.remove(b)

    by_digest = dict(digests)
    clusters = []
    for new_id, old_id in enumerate(sorted(members)):
        mem = members[old_id]
        clusters.append(Cluster(
            cluster_id=new_id,
            representative=by_digest[mem[0]],
            members=mem,
        ))
    return ClusterSet(clusters=clusters, threshold=threshold, algorithm="hierarchical")


def write_clusters(cs: ClusterSet, path: str | Path) -> None:
    """Export one cluster per JSON line."""
    with open(path, "w", encoding="utf-8") as fh:
        for c in cs.clusters:
            fh.write(json.dumps({
                "cluster_id": c.cluster_id,
                "algorithm": cs.algorithm,
                "threshold": cs.threshold,
                "representative_hex": c.representative.hex(),
                "members": c.members,
                "is_singleton": c.is_singleton,
            }, sort_keys=True) + "\n")


def read_clusters(path: str | Path) -> ClusterSet:
    clusters = []
    algorithm = "greedy"
    threshold = 0.0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            algorithm = obj["algorithm"]
            threshold = obj["threshold"]
            clusters.append(Cluster(
                cluster_id=obj["cluster_id"],
                representative=StructuralDigest.from_hex(obj["representative_hex"]),
                members=list(obj["members"]),
            ))
    return ClusterSet(clusters=clusters, threshold=threshold, algorithm=algorithm)
