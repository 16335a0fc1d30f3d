"""Command-line interface: stage subcommands plus the full pipeline run.

Exit codes: 0 success, 2 configuration error, 3 stage-fatal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import cluemine, diffext, pipeline
from .cluster import read_clusters, write_clusters
from .corpus import PageUnparseable, load_corpus, parse_dom
from .evalmetrics import extraction_metrics, load_gold
from .pipeline import ConfigError, PipelineConfig, StageError

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--manifest", type=Path, help="corpus manifest (JSON-lines)")
    parser.add_argument("--output-dir", type=Path, help="artifact directory")
    parser.add_argument("--threshold", type=int, help="Hamming distance threshold (default 40)")
    parser.add_argument("--algorithm", choices=["greedy", "hierarchical"])
    parser.add_argument("--keyword-file", type=Path)
    parser.add_argument("--search-backend", choices=["fixture", "http", "null"])
    parser.add_argument("--search-fixture", type=Path)
    parser.add_argument("--geocoder-backend", choices=["fixture", "http", "null"])
    parser.add_argument("--geocoder-fixture", type=Path)
    parser.add_argument("--model-roster", type=Path)
    parser.add_argument("--provider-table", type=Path, action="append", dest="provider_tables")
    parser.add_argument("--asn-table", type=Path)
    parser.add_argument("--gold", type=Path)
    parser.add_argument("--labels", type=Path)
    parser.add_argument("--geo-constraint", choices=["on", "off"])
    parser.add_argument("--jobs", type=int, help="worker bound for parallel stages")


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    overrides = {}
    for name in ("manifest", "output_dir", "threshold", "algorithm", "keyword_file",
                 "search_backend", "search_fixture", "geocoder_backend",
                 "geocoder_fixture", "model_roster", "asn_table", "gold",
                 "labels", "jobs"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "provider_tables", None):
        overrides["provider_tables"] = list(args.provider_tables)
    if getattr(args, "geo_constraint", None) is not None:
        overrides["geo_constraint"] = args.geo_constraint == "on"

    if args.config is not None:
        config = PipelineConfig.from_file(args.config, overrides=overrides)
    else:
        known = {f.name for f in PipelineConfig.__dataclass_fields__.values()}
        config = PipelineConfig(**{k: v for k, v in overrides.items() if k in known})
    for name in ("manifest", "output_dir", "keyword_file", "search_fixture",
                 "geocoder_fixture", "model_roster", "asn_table", "gold", "labels"):
        value = getattr(config, name)
        if value is not None:
            setattr(config, name, Path(value))
    config.output_dir = Path(config.output_dir)
    return config


def _out(config: PipelineConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(config: PipelineConfig) -> int:
    config.validate()
    out = _out(config)
    load, _, digests, unparseable = pipeline.ingest(config)
    pipeline.write_digests(digests, load, unparseable, out / "digests.jsonl")
    print(f"ingest: {len(digests)} pages digested, "
          f"{len(load.skipped)} manifest entries skipped, "
          f"{len(unparseable)} unparseable")
    return EXIT_OK


def cmd_cluster(config: PipelineConfig) -> int:
    config.validate(require_manifest=False)
    out = _out(config)
    digests_path = out / "digests.jsonl"
    if not digests_path.exists():
        raise StageError("cluster", f"missing {digests_path}; run ingest first")
    digests, _ = pipeline.read_digests(digests_path)
    cs = pipeline.run_clustering(config, digests)
    write_clusters(cs, out / "clusters.jsonl")
    singletons = sum(1 for c in cs.clusters if c.is_singleton)
    print(f"cluster: {len(cs.clusters)} clusters "
          f"({singletons} singletons) at threshold {config.threshold} "
          f"[{config.algorithm}]")
    return EXIT_OK


def _parse_trees(config: PipelineConfig):
    load = load_corpus(config.manifest)
    trees = {}
    for record in load.records:
        try:
            trees[record.page_id] = parse_dom(record)
        except PageUnparseable:
            continue
    return load, trees


def cmd_diff(config: PipelineConfig) -> int:
    config.validate()
    out = _out(config)
    clusters_path = out / "clusters.jsonl"
    if not clusters_path.exists():
        raise StageError("diff", f"missing {clusters_path}; run cluster first")
    _, trees = _parse_trees(config)
    cluster_set = read_clusters(clusters_path)
    diff_sets = [diffext.extract_differential(c, trees) for c in cluster_set.clusters]
    diffext.write_differentials(diff_sets, out / "diff.jsonl")
    entries = sum(len(ds.entries) for ds in diff_sets)
    print(f"diff: {entries} differential entries from "
          f"{sum(1 for ds in diff_sets if not ds.skipped_singleton)} comparable clusters")
    return EXIT_OK


def cmd_mine(config: PipelineConfig) -> int:
    config.validate()
    out = _out(config)
    diff_path = out / "diff.jsonl"
    if not diff_path.exists():
        raise StageError("mine", f"missing {diff_path}; run diff first")
    load = load_corpus(config.manifest)
    page_ips = {r.page_id: r.ip for r in load.records}
    all_page_ids = [r.page_id for r in load.records]

    diff_sets = diffext.read_differentials(diff_path)
    keyword_set = (cluemine.load_keyword_file(config.keyword_file)
                   if config.keyword_file else cluemine.default_keyword_set())
    clues = cluemine.route_differentials(diff_sets, keyword_set)
    cluemine.write_clues(clues, out / "clues.jsonl")

    outcomes = pipeline.mine(config, clues, page_ips)
    pipeline.write_augmentations(outcomes, out / "augmentations.jsonl")
    pipeline.write_candidates(outcomes, out / "candidates.jsonl")
    inferences = pipeline.reduce_inferences(all_page_ids, outcomes)
    pipeline.write_inferences(inferences, page_ips, out / "inferences.jsonl")

    resolved = sum(1 for i in inferences if i.status == "resolved")
    print(f"mine: {len(clues)} clues -> {resolved}/{len(inferences)} pages resolved")
    return EXIT_OK


def cmd_eval(config: PipelineConfig) -> int:
    config.validate(require_manifest=False)
    if config.gold is None:
        raise ConfigError("eval requires --gold")
    out = _out(config)
    inf_path = out / "inferences.jsonl"
    if not inf_path.exists():
        raise StageError("eval", f"missing {inf_path}; run mine first")
    inferences = pipeline.read_inferences(inf_path)
    gold = load_gold(config.gold)
    rows = []
    for level in ("country", "city", "street"):
        try:
            tally = extraction_metrics(inferences, gold, level)
        except ValueError:
            continue
        rows.append(tally)
    eval_path = out / "eval.csv"
    with open(eval_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "total", "covered", "extracted", "correct",
                    "coverage_pct", "accuracy_pct"])
        for t in rows:
            w.writerow([
                t.level, t.total, t.extracted_pages, t.extracted, t.correct,
                f"{t.coverage:.2f}",
                "" if t.accuracy is None else f"{t.accuracy:.2f}",
            ])
    for t in rows:
        acc = "undefined" if t.accuracy is None else f"{t.accuracy:.2f}%"
        print(f"eval[{t.level}]: coverage {t.coverage:.2f}%  accuracy {acc}")
    return EXIT_OK


def cmd_sweep(config: PipelineConfig, thresholds: list[int]) -> int:
    csv_path = pipeline.sweep(config, thresholds)
    best = json.loads((Path(config.output_dir) / "sweep_best.json").read_text())
    print(f"sweep: wrote {csv_path}; best threshold "
          f"{best['best_threshold']} (V-measure {best['v_measure']:.6f})")
    return EXIT_OK


def cmd_report(config: PipelineConfig) -> int:
    config.validate(require_manifest=False)
    out = _out(config)
    inf_path = out / "inferences.jsonl"
    if not inf_path.exists():
        raise StageError("report", f"missing {inf_path}; run mine first")
    inferences = pipeline.read_inferences(inf_path)
    bundle = pipeline.emit_report(inferences, out / "report", config.asn_table)
    print(f"report: {len(bundle.country_counts)} countries, "
          f"stage counts {bundle.stage_counts}")
    if bundle.as_counts is None:
        print("report: AS histogram omitted (no ip->ASN table)")
    return EXIT_OK


def cmd_run(config: PipelineConfig) -> int:
    bundle = pipeline.run_pipeline(config)
    print(f"run: inferences at {bundle.inferences_path}")
    print(f"run: stage counts {bundle.stage_counts}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pagegeo",
        description="Infer device locations from management-page corpora by "
                    "structural clustering and differential text mining.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("ingest", "parse and digest the corpus"),
        ("cluster", "cluster page digests"),
        ("diff", "extract differential texts per cluster"),
        ("mine", "route clues and run the mining cascade"),
        ("eval", "score inferences against a gold file"),
        ("sweep", "sweep clustering thresholds against truth labels"),
        ("report", "emit distribution reports"),
        ("run", "run the full pipeline"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "sweep":
            p.add_argument(
                "--thresholds", default="20,30,40,50,60,70,80",
                help="comma-separated distance thresholds",
            )
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    handlers = {
        "ingest": cmd_ingest,
        "cluster": cmd_cluster,
        "diff": cmd_diff,
        "mine": cmd_mine,
        "eval": cmd_eval,
        "report": cmd_report,
        "run": cmd_run,
    }
    try:
        config = _build_config(args)
        if args.command == "sweep":
            thresholds = [int(t) for t in str(args.thresholds).split(",") if t.strip()]
            return cmd_sweep(config, thresholds)
        return handlers[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except FileNotFoundError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
