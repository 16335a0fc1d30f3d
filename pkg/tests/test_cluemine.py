import pytest

from pagegeo.cluemine import (
    DEFAULT_KEYWORDS,
    DETERMINISTIC,
    NEEDS_AUGMENTATION,
    default_keyword_set,
    load_keyword_file,
    match_keywords,
    route_clue,
    read_clues,
    write_clues,
)
from pagegeo.diffext import DifferentialEntry, NodePath

PATH = NodePath(steps=(("html", 0), ("body", 0), ("p", 0)))


def entry(text: str, page_id: str = "p1") -> DifferentialEntry:
    return DifferentialEntry(page_id=page_id, path=PATH, text=text)


class TestKeywordSet:
    def test_default_has_65_keywords_in_7_categories(self):
        kw = default_keyword_set()
        assert len(kw.categories) == 7
        assert kw.size == 65

    def test_all_keywords_lowercase(self):
        for kws in DEFAULT_KEYWORDS.values():
            for k in kws:
                assert k == k.lower()

    def test_every_keyword_self_matches(self):
        kw = default_keyword_set()
        for category, kws in DEFAULT_KEYWORDS.items():
            for k in kws:
                probe = k.replace("_", " ")
                hits = match_keywords(probe, kw)
                assert any(h.keyword == k and h.category == category for h in hits), k

    def test_self_match_case_insensitive(self):
        kw = default_keyword_set()
        for kws in DEFAULT_KEYWORDS.values():
            for k in kws:
                probe = k.replace("_", " ").upper()
                assert any(h.keyword == k for h in match_keywords(probe, kw)), k


class TestMatchKeywords:
    def test_convention_center_example(self):
        kw = default_keyword_set()
        hits = match_keywords("georgia intercountry convention center", kw)
        assert any(
            h.keyword == "center" and h.category == "Venue and Business Types"
            for h in hits
        )

    def test_main_street(self):
        kw = default_keyword_set()
        hits = match_keywords("123 main street", kw)
        assert [(h.keyword, h.category) for h in hits] == [
            ("street", "Common Road Types"),
        ]
        assert hits[0].offset == len("123 main ".encode("utf-8"))

    def test_no_hits(self):
        kw = default_keyword_set()
        assert match_keywords("acme-plc-07 fw 2.1", kw) == []

    def test_streets_does_not_match_street(self):
        kw = default_keyword_set()
        assert not any(
            h.keyword == "street" for h in match_keywords("streets of fire", kw)
        )

    def test_substring_false_positives_excluded(self):
        kw = default_keyword_set()
        # "way" inside "gateway", "inn" inside "inner", "park" inside "parking"
        assert match_keywords("gateway inner parking", kw) == []

    def test_gilbert_high_school_no_hits(self):
        kw = default_keyword_set()
        assert match_keywords("gilbert high school", kw) == []

    def test_underscore_keyword_matches_spaced_form(self):
        kw = default_keyword_set()
        hits = match_keywords("next to the city hall building", kw)
        assert any(h.keyword == "city_hall" for h in hits)

    def test_multiple_hits_all_reported_in_offset_order(self):
        kw = default_keyword_set()
        hits = match_keywords("hotel near the airport on main street", kw)
        assert [h.keyword for h in hits] == ["hotel", "airport", "street"]


class TestRouting:
    def test_hit_routes_deterministic(self):
        kw = default_keyword_set()
        clue = route_clue(entry("5 market square"), 3, kw)
        assert clue.route == DETERMINISTIC
        assert clue.cluster_id == 3
        assert clue.hits

    def test_no_hit_routes_augmentation(self):
        kw = default_keyword_set()
        clue = route_clue(entry("gicc bldg 3"), 0, kw)
        assert clue.route == NEEDS_AUGMENTATION
        assert clue.hits == []

    def test_empty_text_flagged(self):
        kw = default_keyword_set()
        clue = route_clue(entry(""), 0, kw)
        assert clue.route == NEEDS_AUGMENTATION
        assert clue.empty_text

    def test_partition_exactly_one_route(self):
        kw = default_keyword_set()
        for text in ["main street", "zxqj", "", "park", "no clue at all"]:
            clue = route_clue(entry(text), 0, kw)
            assert clue.route in (DETERMINISTIC, NEEDS_AUGMENTATION)
            assert (clue.route == DETERMINISTIC) == bool(clue.hits)

    def test_level_from_first_hit_category(self):
        kw = default_keyword_set()
        assert route_clue(entry("main street"), 0, kw).level == "street"
        assert route_clue(entry("jefferson county"), 0, kw).level == "city"
        assert route_clue(entry("nation of islands"), 0, kw).level == "country"
        assert route_clue(entry("zxqj"), 0, kw).level is None

    def test_long_text_truncated_before_matching(self):
        kw = default_keyword_set()
        long_text = "x " * 400 + "street"
        clue = route_clue(entry(long_text.strip()), 0, kw)
        # the keyword sits beyond the 512-char mining cut, so no hit
        assert clue.route == NEEDS_AUGMENTATION
        assert len(clue.text) <= 512


def test_keyword_file_roundtrip(tmp_path):
    path = tmp_path / "kw.txt"
    path.write_text(
        "# Rivers\nriver\ncreek\n\n# Peaks\nsummit\n",
        encoding="utf-8",
    )
    kw = load_keyword_file(path)
    assert kw.categories == {"Rivers": ["river", "creek"], "Peaks": ["summit"]}
    hits = match_keywords("by the river summit", kw)
    assert {h.keyword for h in hits} == {"river", "summit"}


def test_keyword_file_requires_header(tmp_path):
    path = tmp_path / "kw.txt"
    path.write_text("orphan\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_keyword_file(path)


def test_clues_export_roundtrip(tmp_path):
    kw = default_keyword_set()
    clues = [
        route_clue(entry("main street"), 1, kw),
        route_clue(entry("zxqj"), 1, kw),
        route_clue(entry(""), 2, kw),
    ]
    path = tmp_path / "clues.jsonl"
    write_clues(clues, path)
    loaded = read_clues(path)
    assert [(c.page_id, c.route, c.empty_text) for c in loaded] == \
           [(c.page_id, c.route, c.empty_text) for c in clues]
    assert loaded[0].hits[0].keyword == "street"
