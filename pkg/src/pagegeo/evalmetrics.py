"""Clustering-quality and extraction metrics plus the threshold sweep.

Clustering metrics (purity, adjusted Rand index, NMI, homogeneity,
completeness, V-measure) are computed from the contingency table with
natural-log entropies. Degenerate partitions follow explicit
conventions so no metric ever divides by zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .cluster import cluster_greedy
from .ensemble import canonicalize_entity
from .lsh import StructuralDigest

__all__ = [
    "LabeledPartition",
    "GoldRecord",
    "ExtractionTally",
    "SweepRow",
    "purity",
    "adjusted_rand_index",
    "info_metrics",
    "extraction_metrics",
    "threshold_sweep",
    "load_gold",
    "load_labels",
]


@dataclass
class LabeledPartition:
    assignments: dict  # item -> cluster_id
    truths: dict  # item -> class_id

    def __post_init__(self) -> None:
        if set(self.assignments) != set(self.truths):
            raise ValueError("assignments and truths must cover identical items")
        if not self.assignments:
            raise ValueError("partition must contain at least one item")

    @property
    def n(self) -> int:
        return len(self.assignments)

    def contingency(self) -> dict[tuple, int]:
        """(cluster_id, class_id) -> joint count."""
        table: dict[tuple, int] = {}
        for item, cid in self.assignments.items():
            key = (cid, self.truths[item])
            table[key] = table.get(key, 0) + 1
        return table


@dataclass(frozen=True)
class GoldRecord:
    page_id: str
    country: str
    city: str | None = None
    street: str | None = None
    expected_diff_texts: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.street is not None and self.city is None:
            raise ValueError(f"gold {self.page_id}: street requires city")

    def value_at(self, level: str) -> str | None:
        return {"country": self.country, "city": self.city, "street": self.street}[level]


@dataclass
class ExtractionTally:
    level: str
    total: int  # |P_total|: gold pages carrying a value at this level
    extracted_pages: int  # |P_geo|
    extracted: int  # |G_extracted|
    correct: int  # |G_correct|

    @property
    def coverage(self) -> float:
        return 100.0 * self.extracted_pages / self.total if self.total else 0.0

    @property
    def accuracy(self) -> float | None:
        """Percent correct among extracted; None (undefined) when nothing extracted."""
        if self.extracted == 0:
            return None
        return 100.0 * self.correct / self.extracted


def purity(p: LabeledPartition) -> float:
    """Mean over clusters of their dominant-class overlap, in [0, 1]."""
    table = p.contingency()
    best: dict = {}
    for (cid, _), count in table.items():
        best[cid] = max(best.get(cid, 0), count)
    return sum(best.values()) / p.n


def _comb2(n: int) -> int:
    return n * (n - 1) // 2


def adjusted_rand_index(p: LabeledPartition) -> float:
    """Chance-adjusted Rand index from contingency binomials; 0 when degenerate."""
    table = p.contingency()
    a: dict = {}
    b: dict = {}
    for (cid, tid), count in table.items():
        a[cid] = a.get(cid, 0) + count
        b[tid] = b.get(tid, 0) + count
    sum_ij = sum(_comb2(c) for c in table.values())
    sum_a = sum(_comb2(c) for c in a.values())
    sum_b = sum(_comb2(c) for c in b.values())
    total = _comb2(p.n)
    if total == 0:
        return 0.0
    expected = sum_a * sum_b / total
    maximum = (sum_a + sum_b) / 2
    if maximum == expected:
        return 0.0
    return (sum_ij - expected) / (maximum - expected)


def _entropy(counts, n: int) -> float:
    h = 0.0
    for c in counts:
        if c > 0:
            pr = c / n
            h -= pr * math.log(pr)
    return h


def info_metrics(p: LabeledPartition) -> dict[str, float]:
    """NMI, homogeneity, completeness and V-measure with natural logs.

    Conventions: H(T)=0 gives homogeneity 1; H(C)=0 gives completeness 1;
    hom+comp=0 gives V=0; NMI is 0 when exactly one entropy vanishes and
    1 when both do (the partitions are then identical).
    """
    table = p.contingency()
    n = p.n
    a: dict = {}
    b: dict = {}
    for (cid, tid), count in table.items():
        a[cid] = a.get(cid, 0) + count
        b[tid] = b.get(tid, 0) + count
    h_c = _entropy(a.values(), n)
    h_t = _entropy(b.values(), n)
    h_joint = _entropy(table.values(), n)
    mutual = h_c + h_t - h_joint
    h_t_given_c = h_joint - h_c
    h_c_given_t = h_joint - h_t

    homogeneity = 1.0 if h_t == 0.0 else 1.0 - h_t_given_c / h_t
    completeness = 1.0 if h_c == 0.0 else 1.0 - h_c_given_t / h_c
    if homogeneity + completeness == 0.0:
        v_measure = 0.0
    else:
        v_measure = 2.0 * homogeneity * completeness / (homogeneity + completeness)
    if h_c == 0.0 and h_t == 0.0:
        nmi = 1.0
    elif h_c == 0.0 or h_t == 0.0:
        nmi = 0.0
    else:
        nmi = mutual / math.sqrt(h_c * h_t)
    return {
        "nmi": nmi,
        "homogeneity": homogeneity,
        "completeness": completeness,
        "v_measure": v_measure,
    }


def _inferred_value(record: dict, level: str) -> str | None:
    """Location value an inference carries at a hierarchy level, if any."""
    value = record.get(level) or ""
    if not value and record.get("level") == level:
        value = record.get("entity") or ""
    return value or None


def extraction_metrics(
    inferences: list[dict],
    gold: list[GoldRecord],
    level: str,
) -> ExtractionTally:
    """Coverage and accuracy at one hierarchy level against gold records.

    A gold page counts as covered when its inference carries any value at
    the level; correctness is canonicalized exact-match (alias-free, so
    conservative). Gold pages absent from the inferences hurt coverage only.
    """
    relevant = [g for g in gold if g.value_at(level) is not None]
    if not relevant:
        raise ValueError(f"gold contains no entries at level {level!r}")
    by_page = {r["page_id"]: r for r in inferences}
    extracted_pages = 0
    extracted = 0
    correct = 0
    for g in relevant:
        record = by_page.get(g.page_id)
        if record is None:
            continue
        value = _inferred_value(record, level)
        if value is None:
            continue
        extracted_pages += 1
        extracted += 1
        truth = g.value_at(level)
        if level == "country":
            ok = value.strip().upper() == truth.strip().upper()
        else:
            ok = canonicalize_entity(value) == canonicalize_entity(truth)
        if ok:
            correct += 1
    return ExtractionTally(
        level=level, total=len(relevant),
        extracted_pages=extracted_pages, extracted=extracted, correct=correct,
    )


@dataclass
class SweepRow:
    threshold: int
    total_clusters: int
    valid_clusters: int  # size >= 2
    singletons: int
    metrics: dict[str, float]
    metrics_nosingleton: dict[str, float] = field(default_factory=dict)


def _all_metrics(p: LabeledPartition) -> dict[str, float]:
    out = {"purity": purity(p), "ari": adjusted_rand_index(p)}
    out.update(info_metrics(p))
    return out


def threshold_sweep(
    digests: list[tuple[str, StructuralDigest]],
    truths: dict[str, object],
    thresholds: list[int],
) -> list[SweepRow]:
    """Greedy clustering swept over distance thresholds, fully scored.

    Every page must carry a truth label. Metrics are reported on the full
    partition and, separately, with pages in singleton clusters removed
    (the noise-filtered view); the second set is empty when nothing
    remains after filtering.
    """
    missing = [pid for pid, _ in digests if pid not in truths]
    if missing:
        raise ValueError(f"truth labels missing for {len(missing)} pages, e.g. {missing[:3]}")
    rows = []
    for threshold in thresholds:
        cs = cluster_greedy(digests, threshold)
        assignments = cs.assignments()
        p = LabeledPartition(
            assignments=assignments,
            truths={pid: truths[pid] for pid in assignments},
        )
        singleton_ids = {c.cluster_id for c in cs.clusters if c.is_singleton}
        kept = {pid for pid, cid in assignments.items() if cid not in singleton_ids}
        nosingleton: dict[str, float] = {}
        if kept:
            p2 = LabeledPartition(
                assignments={pid: assignments[pid] for pid in kept},
                truths={pid: truths[pid] for pid in kept},
            )
            nosingleton = _all_metrics(p2)
        rows.append(SweepRow(
            threshold=threshold,
            total_clusters=len(cs.clusters),
            valid_clusters=sum(1 for c in cs.clusters if not c.is_singleton),
            singletons=len(singleton_ids),
            metrics=_all_metrics(p),
            metrics_nosingleton=nosingleton,
        ))
    return rows


def load_gold(path: str | Path) -> list[GoldRecord]:
    """Gold file: JSON-lines {page_id, country, city?, street?, expected_diff_texts?}."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            records.append(GoldRecord(
                page_id=obj["page_id"],
                country=obj["country"],
                city=obj.get("city"),
                street=obj.get("street"),
                expected_diff_texts=tuple(obj.get("expected_diff_texts", [])),
            ))
    return records


def load_labels(path: str | Path) -> dict[str, str]:
    """Clustering truth labels: JSON-lines {page_id, class_id}."""
    labels = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            labels[obj["page_id"]] = str(obj["class_id"])
    return labels
