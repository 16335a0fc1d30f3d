"""Deterministic geographic keyword matching and clue routing.

Texts hitting at least one keyword carry strong location signal and go
straight to geocoding; everything else is routed to the search-augmented
model path. The default keyword set is seven categories, 65 keywords.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .diffext import DifferentialEntry, DifferentialTextSet, mining_text

__all__ = [
    "KeywordSet",
    "KeywordHit",
    "ClueRecord",
    "DEFAULT_KEYWORDS",
    "CATEGORY_LEVEL",
    "default_keyword_set",
    "load_keyword_file",
    "match_keywords",
    "route_clue",
    "route_differentials",
    "write_clues",
    "read_clues",
]

DETERMINISTIC = "deterministic"
NEEDS_AUGMENTATION = "needs_augmentation"

DEFAULT_KEYWORDS: dict[str, list[str]] = {
    "Common Road Types": [
        "street", "avenue", "road", "boulevard", "highway", "lane", "way",
        "drive", "path", "expressway", "parkway", "alley",
    ],
    "Venue and Business Types": [
        "market", "shop", "store", "boutique", "supermarket", "pharmacy",
        "bank", "library", "museum", "restaurant", "hotel", "inn", "resort",
        "mall", "plaza", "center", "square", "park", "garden", "stadium",
        "theater", "cinema", "arena", "club",
    ],
    "Administrative and Community Places": [
        "city_hall", "courthouse", "police_station", "fire_station",
        "community_center",
    ],
    "Transportation Venues": [
        "airport", "station", "terminal", "bus_stop", "subway", "metro",
    ],
    "Special Types": [
        "bridge", "castle", "monument", "landmark", "district", "neighborhood",
    ],
    "Administrative Divisions": [
        "city", "town", "village", "county", "state", "province", "region",
        "municipality",
    ],
    "Country and Continental Levels": [
        "country", "nation", "continent", "territory",
    ],
}

# Granularity implied by a keyword's category, used to tag the level of
# clue texts resolved on the deterministic route.
CATEGORY_LEVEL: dict[str, str] = {
    "Common Road Types": "street",
    "Venue and Business Types": "street",
    "Administrative and Community Places": "street",
    "Transportation Venues": "street",
    "Special Types": "street",
    "Administrative Divisions": "city",
    "Country and Continental Levels": "country",
}


@dataclass(frozen=True)
class KeywordHit:
    keyword: str
    category: str
    offset: int  # byte offset into the UTF-8 encoding of the matched text


@dataclass
class KeywordSet:
    categories: dict[str, list[str]]
    _patterns: list[tuple[re.Pattern, str, str]] = field(
        default_factory=list, repr=False, compare=False,
    )

    def __post_init__(self) -> None:
        for category, keywords in self.categories.items():
            for kw in keywords:
                forms = {kw}
                if "_" in kw:
                    forms.add(kw.replace("_", " "))
                for form in sorted(forms):
                    pattern = re.compile(
                        r"(?<![0-9a-z])" + re.escape(form) + r"(?![0-9a-z])",
                    )
                    self._patterns.append((pattern, kw, category))

    @property
    def size(self) -> int:
        return sum(len(v) for v in self.categories.values())

    def all_keywords(self) -> list[str]:
        return [kw for kws in self.categories.values() for kw in kws]


def default_keyword_set() -> KeywordSet:
    return KeywordSet(categories={k: list(v) for k, v in DEFAULT_KEYWORDS.items()})


def load_keyword_file(path: str | Path) -> KeywordSet:
    """Parse a keyword file: `# Category Name` headers, one keyword per line."""
    categories: dict[str, list[str]] = {}
    current: str | None = None
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            current = line.lstrip("#").strip()
            categories.setdefault(current, [])
            continue
        if current is None:
            raise ValueError(f"{path}:{lineno}: keyword before any category header")
        categories[current].append(line.lower())
    return KeywordSet(categories=categories)


@dataclass
class ClueRecord:
    page_id: str
    cluster_id: int
    text: str  # normalized differential text, mining form
    route: str  # DETERMINISTIC | NEEDS_AUGMENTATION
    hits: list[KeywordHit] = field(default_factory=list)
    empty_text: bool = False
    path: str = ""

    @property
    def level(self) -> str | None:
        """Granularity of the first hit's category (deterministic route only)."""
        if not self.hits:
            return None
        return CATEGORY_LEVEL.get(self.hits[0].category, "street")


def match_keywords(text: str, kw: KeywordSet) -> list[KeywordHit]:
    """Whole-word, case-insensitive keyword hits with category and offset.

    Word boundaries are non-alphanumeric characters, so "streets" never
    matches "street". All hits are reported, ordered by offset then keyword.
    """
    lowered = text.lower()
    hits: list[KeywordHit] = []
    for pattern, keyword, category in kw._patterns:
        for m in pattern.finditer(lowered):
            offset = len(lowered[: m.start()].encode("utf-8"))
            hits.append(KeywordHit(keyword=keyword, category=category, offset=offset))
    hits.sort(key=lambda h: (h.offset, h.keyword))
    return hits


def route_clue(
    entry: DifferentialEntry,
    cluster_id: int,
    kw: KeywordSet,
) -> ClueRecord:
    """Partition one differential text into the deterministic or augmented path."""
    text = mining_text(entry.text)
    if not text:
        return ClueRecord(
            page_id=entry.page_id, cluster_id=cluster_id, text="",
            route=NEEDS_AUGMENTATION, empty_text=True, path=str(entry.path),
        )
    hits = match_keywords(text, kw)
    return ClueRecord(
        page_id=entry.page_id,
        cluster_id=cluster_id,
        text=text,
        route=DETERMINISTIC if hits else NEEDS_AUGMENTATION,
        hits=hits,
        path=str(entry.path),
    )


def route_differentials(
    sets: list[DifferentialTextSet],
    kw: KeywordSet,
) -> list[ClueRecord]:
    return [
        route_clue(entry, ds.cluster_id, kw)
        for ds in sets
        for entry in ds.entries
    ]


def write_clues(clues: list[ClueRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in clues:
            fh.write(json.dumps({
                "page_id": c.page_id,
                "cluster_id": c.cluster_id,
                "path": c.path,
                "text": c.text,
                "route": c.route,
                "empty_text": c.empty_text,
                "hits": [
                    {"keyword": h.keyword, "category": h.category, "offset": h.offset}
                    for h in c.hits
                ],
            }, sort_keys=True) + "\n")


def read_clues(path: str | Path) -> list[ClueRecord]:
    clues = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            clues.append(ClueRecord(
                page_id=obj["page_id"],
                cluster_id=obj["cluster_id"],
                text=obj["text"],
                route=obj["route"],
                empty_text=obj.get("empty_text", False),
                hits=[KeywordHit(**h) for h in obj.get("hits", [])],
                path=obj.get("path", ""),
            ))
    return clues
