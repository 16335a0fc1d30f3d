import json
from pathlib import Path

import pytest

from pagegeo.pipeline import (
    ConfigError,
    PipelineConfig,
    emit_report,
    run_pipeline,
    sweep,
)


def golden_config(golden_dir: Path, out: Path, **overrides) -> PipelineConfig:
    config = PipelineConfig.from_file(golden_dir / "config.json",
                                      overrides={"output_dir": str(out), **overrides})
    config.output_dir = out
    return config


class TestConfig:
    def test_threshold_bounds(self):
        config = PipelineConfig(threshold=300)
        with pytest.raises(ConfigError):
            config.validate(require_manifest=False)

    def test_missing_manifest(self, tmp_path):
        config = PipelineConfig(manifest=tmp_path / "nope.jsonl")
        with pytest.raises(ConfigError):
            config.validate()

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text('{"no_such_option": 1}', encoding="utf-8")
        with pytest.raises(ConfigError):
            PipelineConfig.from_file(path)

    def test_relative_paths_resolve_against_config(self, tmp_path):
        (tmp_path / "m.jsonl").write_text("", encoding="utf-8")
        path = tmp_path / "config.json"
        path.write_text('{"manifest": "m.jsonl"}', encoding="utf-8")
        config = PipelineConfig.from_file(path)
        assert config.manifest == tmp_path / "m.jsonl"

    def test_fixture_backend_requires_fixture_path(self):
        config = PipelineConfig(search_backend="fixture")
        with pytest.raises(ConfigError):
            config.validate(require_manifest=False)


class TestGoldenRun:
    def test_matches_checked_in_golden(self, golden_dir, tmp_path):
        config = golden_config(golden_dir, tmp_path / "out")
        run_pipeline(config)
        produced = (tmp_path / "out" / "inferences.jsonl").read_bytes()
        assert produced == (golden_dir / "inferences.golden.jsonl").read_bytes()

    def test_two_runs_byte_identical(self, golden_dir, tmp_path):
        config1 = golden_config(golden_dir, tmp_path / "one")
        config2 = golden_config(golden_dir, tmp_path / "two")
        run_pipeline(config1)
        run_pipeline(config2)
        assert (tmp_path / "one" / "inferences.jsonl").read_bytes() == \
               (tmp_path / "two" / "inferences.jsonl").read_bytes()

    def test_all_artifacts_written(self, golden_dir, tmp_path):
        out = tmp_path / "out"
        run_pipeline(golden_config(golden_dir, out))
        for name in ("digests.jsonl", "clusters.jsonl", "diff.jsonl",
                     "clues.jsonl", "augmentations.jsonl", "candidates.jsonl",
                     "inferences.jsonl"):
            assert (out / name).exists(), name
        for name in ("country_histogram.csv", "top_cities.csv",
                     "as_histogram.csv", "stage_attribution.csv"):
            assert (out / "report" / name).exists(), name

    def test_conservation_every_page_terminal(self, golden_dir, tmp_path):
        out = tmp_path / "out"
        run_pipeline(golden_config(golden_dir, out))
        lines = (out / "inferences.jsonl").read_text().splitlines()
        records = [json.loads(l) for l in lines]
        manifest_ids = sorted(
            json.loads(l)["page_id"]
            for l in (golden_dir / "corpus" / "manifest.jsonl").read_text().splitlines()
        )
        assert sorted(r["page_id"] for r in records) == manifest_ids
        assert all(r["status"] in ("resolved", "ambiguous", "unresolved")
                   for r in records)

    def test_stage_attribution_partition(self, golden_dir, tmp_path):
        out = tmp_path / "out"
        bundle = run_pipeline(golden_config(golden_dir, out))
        counts = bundle.stage_counts
        assert sum(counts.values()) == 10
        assert counts == {
            "keyword_resolved": 3, "llm_resolved": 5, "ambiguous": 0,
            "unresolved_with_clues": 2, "no_clues": 0,
        }

    def test_country_histogram_totals_match_resolved(self, golden_dir, tmp_path):
        out = tmp_path / "out"
        bundle = run_pipeline(golden_config(golden_dir, out))
        records = [json.loads(l) for l in
                   (out / "inferences.jsonl").read_text().splitlines()]
        resolved = sum(1 for r in records if r["status"] == "resolved")
        assert sum(n for _, n in bundle.country_counts) == resolved

    def test_constraint_off_disables_filtering(self, golden_dir, tmp_path):
        out = tmp_path / "out"
        run_pipeline(golden_config(golden_dir, out, geo_constraint=False))
        records = {r["page_id"]: r for r in
                   (json.loads(l) for l in (out / "inferences.jsonl").read_text().splitlines())}
        assert all(not r["constraint_used"] for r in records.values())
        # b1 now takes the top-ranked candidate instead of the albany one
        assert records["b1"]["city"] == "albany"  # albany is rank 1 anyway
        assert records["b4"]["city"] == "atlanta"

    def test_search_cache_reused_within_run(self, golden_dir, tmp_path):
        out = tmp_path / "out"
        run_pipeline(golden_config(golden_dir, out))
        cache_lines = (out / "search_cache.jsonl").read_text().splitlines()
        hashes = [json.loads(l)["query_hash"] for l in cache_lines]
        assert len(hashes) == len(set(hashes))

    def test_hierarchical_algorithm_same_resolution(self, golden_dir, tmp_path):
        out = tmp_path / "out"
        bundle = run_pipeline(golden_config(golden_dir, out, algorithm="hierarchical"))
        clusters = [json.loads(l) for l in
                    (out / "clusters.jsonl").read_text().splitlines()]
        assert len(clusters) == 2
        assert {frozenset(c["members"]) for c in clusters} == {
            frozenset({"a1", "a2", "a3", "a4", "a5"}),
            frozenset({"b1", "b2", "b3", "b4", "b5"}),
        }
        assert bundle.stage_counts["keyword_resolved"] == 3
        assert bundle.stage_counts["llm_resolved"] == 5

    def test_null_backends_still_terminal(self, golden_dir, tmp_path):
        out = tmp_path / "out"
        config = golden_config(
            golden_dir, out,
            search_backend="null", geocoder_backend="null",
        )
        config.search_fixture = None
        config.geocoder_fixture = None
        run_pipeline(config)
        records = [json.loads(l) for l in
                   (out / "inferences.jsonl").read_text().splitlines()]
        assert len(records) == 10
        assert all(r["status"] == "unresolved" for r in records)
        # augmentations recorded as unavailable, clues still routed
        augs = [json.loads(l) for l in
                (out / "augmentations.jsonl").read_text().splitlines()]
        assert augs and all(a["status"] == "unavailable" for a in augs)


class TestEmptyCorpus:
    def test_empty_corpus_empty_reports(self, tmp_path):
        manifest = tmp_path / "manifest.jsonl"
        manifest.write_text("", encoding="utf-8")
        config = PipelineConfig(manifest=manifest, output_dir=tmp_path / "out",
                                search_backend="null", geocoder_backend="null")
        bundle = run_pipeline(config)
        assert (tmp_path / "out" / "inferences.jsonl").read_text() == ""
        assert bundle.country_counts == []


class TestEmitReport:
    def test_three_country_ordering(self, tmp_path):
        records = []
        for country, count in [("AA", 5), ("BB", 3), ("CC", 2)]:
            for i in range(count):
                records.append({
                    "page_id": f"{country}{i}", "ip": "", "country": country,
                    "city": "x", "status": "resolved", "stage": "keyword",
                })
        bundle = emit_report(records, tmp_path / "report")
        assert bundle.country_counts == [("AA", 5), ("BB", 3), ("CC", 2)]

    def test_missing_asn_table_omits_section(self, tmp_path):
        records = [{"page_id": "p", "ip": "10.0.0.1", "country": "US",
                    "city": "", "status": "resolved", "stage": "llm"}]
        bundle = emit_report(records, tmp_path / "report", asn_table=None)
        assert bundle.as_counts is None
        assert not (tmp_path / "report" / "as_histogram.csv").exists()

    def test_single_country(self, tmp_path):
        records = [{"page_id": "p", "ip": "", "country": "US", "city": "",
                    "status": "resolved", "stage": "llm"}]
        bundle = emit_report(records, tmp_path / "report")
        assert bundle.country_counts == [("US", 1)]


class TestSweep:
    def test_sweep_writes_rows_and_best(self, tmp_path):
        from synth import build_corpus

        manifest, truths = build_corpus(tmp_path / "corpus", per_template=6)
        labels = tmp_path / "labels.jsonl"
        labels.write_text(
            "\n".join(json.dumps({"page_id": pid, "class_id": cls})
                      for pid, cls in sorted(truths.items())) + "\n",
            encoding="utf-8",
        )
        config = PipelineConfig(
            manifest=manifest, output_dir=tmp_path / "out", labels=labels,
            search_backend="null", geocoder_backend="null",
        )
        csv_path = sweep(config, [20, 30, 40, 50, 60, 70, 80])
        rows = csv_path.read_text().splitlines()
        assert len(rows) == 8  # header + 7 thresholds
        best = json.loads((tmp_path / "out" / "sweep_best.json").read_text())
        assert best["v_measure"] >= 0.9
        assert best["best_threshold"] in (20, 30, 40, 50, 60, 70, 80)

    def test_sweep_tie_prefers_smaller_threshold(self, tmp_path):
        from synth import build_corpus

        manifest, truths = build_corpus(tmp_path / "corpus", per_template=4)
        labels = tmp_path / "labels.jsonl"
        labels.write_text(
            "\n".join(json.dumps({"page_id": pid, "class_id": cls})
                      for pid, cls in sorted(truths.items())) + "\n",
            encoding="utf-8",
        )
        config = PipelineConfig(
            manifest=manifest, output_dir=tmp_path / "out", labels=labels,
            search_backend="null", geocoder_backend="null",
        )
        # 60 and 70 both give the perfect partition: tie on V-measure
        sweep(config, [60, 70])
        best = json.loads((tmp_path / "out" / "sweep_best.json").read_text())
        assert best["best_threshold"] == 60

    def test_sweep_requires_labels(self, tmp_path):
        manifest = tmp_path / "manifest.jsonl"
        manifest.write_text("", encoding="utf-8")
        config = PipelineConfig(manifest=manifest, output_dir=tmp_path / "out")
        with pytest.raises(ConfigError):
            sweep(config, [40])
