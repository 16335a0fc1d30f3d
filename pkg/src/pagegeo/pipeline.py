"""End-to-end pipeline orchestration and report emission.

Stages: corpus -> digests -> clusters -> differential texts -> clue
routing -> (augmentation -> model ensemble) -> geocoding/disambiguation
-> per-page inferences -> distribution reports. Every stage persists its
artifact so stages can be re-run independently from files.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import augment as aug_mod
from . import cluemine, diffext, disambig, ensemble
from .cluster import ClusterSet, cluster_greedy, cluster_hierarchical, write_clusters
from .corpus import CorpusLoad, DomTree, PageRecord, PageUnparseable, load_corpus, parse_dom, serialize_page
from .disambig import GeoInference, RegionConstraint
from .lsh import DIGEST_BITS, StructuralDigest, nilsimsa_digest

log = logging.getLogger(__name__)

__all__ = [
    "PipelineConfig",
    "ReportBundle",
    "ConfigError",
    "StageError",
    "run_pipeline",
    "sweep",
    "emit_report",
]

STATUS_RANK = {disambig.RESOLVED: 2, disambig.AMBIGUOUS: 1, disambig.UNRESOLVED: 0}
STAGE_RANK = {"keyword": 0, "llm": 1}
LEVEL_RANK = {"street": 3, "city": 2, "country": 1}


class ConfigError(Exception):
    """Invalid pipeline configuration (CLI exit code 2)."""


class StageError(Exception):
    """A pipeline stage failed fatally (CLI exit code 3)."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    manifest: Path | None = None
    output_dir: Path = Path("out")
    threshold: int = 40
    algorithm: str = "greedy"  # greedy | hierarchical
    greedy_nearest: bool = False  # join nearest cluster instead of first
    keyword_file: Path | None = None
    search_backend: str = "null"  # fixture | http | null
    search_fixture: Path | None = None
    geocoder_backend: str = "null"
    geocoder_fixture: Path | None = None
    model_roster: Path | None = None
    provider_tables: list[Path] = field(default_factory=list)
    asn_table: Path | None = None
    gold: Path | None = None
    labels: Path | None = None
    geo_constraint: bool = True
    jobs: int = 1
    max_snippets: int = 10
    prompt_budget: int = ensemble.DEFAULT_PROMPT_BUDGET
    search_retries: int = aug_mod.DEFAULT_RETRIES
    search_rate_per_sec: float = 1.0

    _PATH_FIELDS = (
        "manifest", "output_dir", "keyword_file", "search_fixture",
        "geocoder_fixture", "model_roster", "asn_table", "gold", "labels",
    )

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict | None = None) -> "PipelineConfig":
        """Load a JSON config; relative paths resolve against the config file."""
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        raw.update(overrides or {})
        known = {f.name for f in fields(cls) if not f.name.startswith("_")}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        base = path.parent
        for name in cls._PATH_FIELDS:
            value = getattr(cfg, name)
            if value is not None:
                p = Path(value)
                setattr(cfg, name, p if p.is_absolute() else base / p)
        cfg.provider_tables = [
            p if (p := Path(t)).is_absolute() else base / p
            for t in cfg.provider_tables
        ]
        return cfg

    def validate(self, require_manifest: bool = True) -> None:
        if not 0 <= self.threshold <= DIGEST_BITS:
            raise ConfigError(f"threshold must be in [0, {DIGEST_BITS}]")
        if self.algorithm not in ("greedy", "hierarchical"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.search_backend not in ("fixture", "http", "null"):
            raise ConfigError(f"unknown search backend {self.search_backend!r}")
        if self.geocoder_backend not in ("fixture", "http", "null"):
            raise ConfigError(f"unknown geocoder backend {self.geocoder_backend!r}")
        if require_manifest:
            if self.manifest is None:
                raise ConfigError("a corpus manifest is required")
            if not Path(self.manifest).exists():
                raise ConfigError(f"manifest not found: {self.manifest}")
        for name in ("keyword_file", "search_fixture", "geocoder_fixture",
                     "model_roster", "asn_table", "gold", "labels"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{name} not found: {value}")
        for table in self.provider_tables:
            if not Path(table).exists():
                raise ConfigError(f"provider table not found: {table}")
        if self.search_backend == "fixture" and self.search_fixture is None:
            raise ConfigError("search_backend=fixture requires search_fixture")
        if self.geocoder_backend == "fixture" and self.geocoder_fixture is None:
            raise ConfigError("geocoder_backend=fixture requires geocoder_fixture")


@dataclass
class ReportBundle:
    inferences_path: Path
    report_dir: Path
    country_counts: list[tuple[str, int]]
    stage_counts: dict[str, int]
    as_counts: list[tuple[str, str, int]] | None
    top_cities: list[tuple[str, str, int]]


# ---------------------------------------------------------------------------
# stage helpers
# ---------------------------------------------------------------------------

def _keyword_set(config: PipelineConfig) -> cluemine.KeywordSet:
    if config.keyword_file is not None:
        return cluemine.load_keyword_file(config.keyword_file)
    return cluemine.default_keyword_set()


def _search_backend(config: PipelineConfig) -> aug_mod.SearchBackend:
    import os

    if config.search_backend == "fixture":
        return aug_mod.FixtureSearchBackend(config.search_fixture)
    if config.search_backend == "http":
        endpoint = os.environ.get("SEARCH_API_ENDPOINT", "")
        if not endpoint:
            raise ConfigError("http search backend requires SEARCH_API_ENDPOINT")
        return aug_mod.HttpSearchBackend(
            endpoint, os.environ.get("SEARCH_API_KEY", ""),
            rate_per_sec=config.search_rate_per_sec,
        )
    return aug_mod.NullSearchBackend()


def _geocoder_backend(config: PipelineConfig) -> disambig.GeocoderBackend:
    import os

    if config.geocoder_backend == "fixture":
        return disambig.FixtureGeocoder(config.geocoder_fixture)
    if config.geocoder_backend == "http":
        endpoint = os.environ.get("GEOCODER_ENDPOINT", "")
        if not endpoint:
            raise ConfigError("http geocoder requires GEOCODER_ENDPOINT")
        return disambig.HttpGeocoder(endpoint, os.environ.get("GEOCODER_API_KEY", ""))
    return disambig.NullGeocoder()


def _models(config: PipelineConfig) -> list[ensemble.ModelClient]:
    if config.model_roster is None:
        return ensemble.load_roster(ensemble.default_roster())
    entries = json.loads(Path(config.model_roster).read_text(encoding="utf-8"))
    return ensemble.load_roster(entries, base_dir=Path(config.model_roster).parent)


def ingest(config: PipelineConfig) -> tuple[CorpusLoad, dict[str, DomTree],
                                            list[tuple[str, StructuralDigest]], list[str]]:
    """Load, parse, serialize and digest the corpus.

    Returns the load result, parseable trees, (page_id, digest) pairs in
    page_id order, and the ids of unparseable pages.
    """
    load = load_corpus(config.manifest)

    def build(record: PageRecord):
        try:
            tree = parse_dom(record)
        except PageUnparseable:
            return record.page_id, None, None
        serialized = serialize_page(tree, record.page_id)
        return record.page_id, tree, nilsimsa_digest(serialized.composite)

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            built = list(pool.map(build, load.records))
    else:
        built = [build(r) for r in load.records]

    trees: dict[str, DomTree] = {}
    digests: list[tuple[str, StructuralDigest]] = []
    unparseable: list[str] = []
    for page_id, tree, digest in built:
        if tree is None:
            unparseable.append(page_id)
            continue
        trees[page_id] = tree
        digests.append((page_id, digest))
    return load, trees, digests, unparseable


def write_digests(digests, load: CorpusLoad, unparseable: list[str], path: Path) -> None:
    by_id = {r.page_id: r for r in load.records}
    with open(path, "w", encoding="utf-8") as fh:
        for page_id, digest in digests:
            record = by_id[page_id]
            fh.write(json.dumps({
                "page_id": page_id,
                "ip": record.ip,
                "port": record.port,
                "digest_hex": digest.hex(),
            }, sort_keys=True) + "\n")
    skips = path.parent / "ingest_skips.jsonl"
    with open(skips, "w", encoding="utf-8") as fh:
        for msg in load.skipped:
            fh.write(json.dumps({"kind": "manifest", "detail": msg}) + "\n")
        for page_id in unparseable:
            fh.write(json.dumps({"kind": "unparseable", "page_id": page_id}) + "\n")


def read_digests(path: Path) -> tuple[list[tuple[str, StructuralDigest]], dict[str, str]]:
    digests = []
    ips = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            digests.append((obj["page_id"], StructuralDigest.from_hex(obj["digest_hex"])))
            ips[obj["page_id"]] = obj["ip"]
    return digests, ips


def run_clustering(config: PipelineConfig, digests) -> ClusterSet:
    if config.algorithm == "hierarchical":
        return cluster_hierarchical(digests, 1.0 - config.threshold / DIGEST_BITS)
    return cluster_greedy(digests, config.threshold, nearest=config.greedy_nearest)


# ---------------------------------------------------------------------------
# mining
# ---------------------------------------------------------------------------

@dataclass
class _ClueOutcome:
    clue: cluemine.ClueRecord
    seq: int
    augmentation: aug_mod.Augmentation | None = None
    aug_status: str = "not_needed"  # not_needed | ok | cached | skipped | unavailable
    fragment: GeoInference | None = None
    candidates: list[ensemble.GeoCandidate] = field(default_factory=list)
    winners: dict[str, ensemble.EnsembleResult] = field(default_factory=dict)


def _augment_clue(outcome: _ClueOutcome, backend, cache, config) -> aug_mod.Augmentation | None:
    clue = outcome.clue
    if clue.empty_text:
        outcome.aug_status = "skipped"
        return None
    try:
        query = aug_mod.build_query(clue)
    except aug_mod.QuerySkipped:
        outcome.aug_status = "skipped"
        return None
    try:
        augmentation = aug_mod.fetch_augmentation(
            query, backend, cache=cache,
            retries=config.search_retries, max_snippets=config.max_snippets,
        )
    except aug_mod.AugmentationUnavailable:
        outcome.aug_status = "unavailable"
        return None
    outcome.aug_status = "cached" if augmentation.backend_tag == "cache" else "ok"
    return augmentation


def _geocode_fragment(page_id, entity, level, geocoder, constraint, stage, confidence):
    try:
        candidates = disambig.geocode_entity(entity, geocoder)
    except disambig.GeocodeUnavailable:
        return GeoInference(
            page_id=page_id, entity=entity, level=level, stage=stage,
            status=disambig.UNRESOLVED, confidence=confidence,
        )
    return disambig.disambiguate(
        page_id, entity, level, candidates, constraint, stage, confidence,
    )


def mine(
    config: PipelineConfig,
    clues: list[cluemine.ClueRecord],
    page_ips: dict[str, str],
) -> list[_ClueOutcome]:
    """Run stages 2-4 over routed clues, producing one outcome per clue."""
    search = _search_backend(config)
    geocoder = _geocoder_backend(config)
    models = _models(config)
    cache = aug_mod.AugmentationCache(Path(config.output_dir) / "search_cache.jsonl")
    providers = (
        disambig.load_provider_tables(config.provider_tables)
        if config.geo_constraint and config.provider_tables else []
    )
    constraints: dict[str, RegionConstraint] = {}

    def constraint_for(page_id: str) -> RegionConstraint:
        if page_id not in constraints:
            ip = page_ips.get(page_id, "")
            records = disambig.resolve_ip_region(ip, providers) if (providers and ip) else []
            constraints[page_id] = disambig.majority_vote(records)
        return constraints[page_id]

    outcomes = []
    for seq, clue in enumerate(clues):
        outcome = _ClueOutcome(clue=clue, seq=seq)
        outcomes.append(outcome)
        if clue.route == cluemine.DETERMINISTIC:
            outcome.fragment = _geocode_fragment(
                clue.page_id, clue.text, clue.level, geocoder,
                constraint_for(clue.page_id), "keyword", 1.0,
            )
            continue
        # augmentation path
        if clue.empty_text:
            outcome.aug_status = "skipped"
            continue
        outcome.augmentation = _augment_clue(outcome, search, cache, config)
        winners, candidates = ensemble.run_ensemble(
            clue, outcome.augmentation, models, budget=config.prompt_budget,
        )
        outcome.winners = winners
        outcome.candidates = candidates
        chosen = None
        for level in ("street", "city", "country"):
            if not winners[level].abstained:
                chosen = winners[level]
                break
        if chosen is None:
            outcome.fragment = GeoInference(
                page_id=clue.page_id, entity=None, level=None,
                stage="llm", status=disambig.UNRESOLVED,
            )
            continue
        outcome.fragment = _geocode_fragment(
            clue.page_id, chosen.entity, chosen.level, geocoder,
            constraint_for(clue.page_id), "llm", chosen.score,
        )
    return outcomes


def reduce_inferences(
    all_page_ids: list[str],
    outcomes: list[_ClueOutcome],
) -> list[GeoInference]:
    """One terminal inference per page.

    Among a page's fragments the best is chosen by resolution status,
    then keyword-stage preference, then level fineness, then clue order.
    Pages with no fragment at all end unresolved.
    """
    by_page: dict[str, list[tuple[tuple, GeoInference]]] = {}
    for outcome in outcomes:
        frag = outcome.fragment
        if frag is None:
            frag = GeoInference(
                page_id=outcome.clue.page_id, entity=None, level=None,
                stage="llm" if outcome.clue.route == cluemine.NEEDS_AUGMENTATION else "keyword",
                status=disambig.UNRESOLVED,
            )
        rank = (
            -STATUS_RANK.get(frag.status, 0),
            STAGE_RANK.get(frag.stage, 2),
            -LEVEL_RANK.get(frag.level, 0),
            outcome.seq,
        )
        by_page.setdefault(frag.page_id, []).append((rank, frag))

    final = []
    for page_id in all_page_ids:
        ranked = by_page.get(page_id)
        if not ranked:
            final.append(GeoInference(page_id=page_id, entity=None, level=None))
            continue
        ranked.sort(key=lambda pair: pair[0])
        final.append(ranked[0][1])
    return final


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def write_augmentations(outcomes: list[_ClueOutcome], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for o in outcomes:
            if o.clue.route != cluemine.NEEDS_AUGMENTATION:
                continue
            record = {
                "page_id": o.clue.page_id,
                "cluster_id": o.clue.cluster_id,
                "path": o.clue.path,
                "status": o.aug_status,
                "query": o.augmentation.query.query_text if o.augmentation else None,
                "backend_tag": o.augmentation.backend_tag if o.augmentation else None,
                "retrieved_at": o.augmentation.retrieved_at if o.augmentation else None,
                "snippets": [
                    {"title": s.title, "snippet": s.snippet, "url": s.url}
                    for s in (o.augmentation.snippets if o.augmentation else [])
                ],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def write_candidates(outcomes: list[_ClueOutcome], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for o in outcomes:
            for c in o.candidates:
                fh.write(json.dumps({
                    "page_id": o.clue.page_id,
                    "cluster_id": o.clue.cluster_id,
                    "path": o.clue.path,
                    "model_id": c.model_id,
                    "level": c.level,
                    "entity": c.entity,
                    "confidence": c.confidence,
                }, sort_keys=True) + "\n")


def inference_record(inf: GeoInference, ip: str = "") -> dict:
    return {
        "page_id": inf.page_id,
        "ip": ip,
        "entity": inf.entity,
        "level": inf.level,
        "lat": inf.lat,
        "lon": inf.lon,
        "country": inf.country,
        "region": inf.region,
        "city": inf.city,
        "street": inf.street,
        "stage": inf.stage,
        "status": inf.status,
        "constraint_used": inf.constraint_used,
        "confidence": inf.confidence,
    }


def write_inferences(inferences: list[GeoInference], page_ips: dict[str, str],
                     path: Path) -> None:
    ordered = sorted(inferences, key=lambda i: i.page_id)
    with open(path, "w", encoding="utf-8") as fh:
        for inf in ordered:
            fh.write(json.dumps(
                inference_record(inf, page_ips.get(inf.page_id, "")),
                sort_keys=True,
            ) + "\n")


def read_inferences(path: Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

class AsnTable:
    """Static ip->ASN attribution: CSV rows `cidr,asn,org_name`."""

    def __init__(self, path: Path):
        import ipaddress as _ip

        self._rows: list[tuple] = []
        self.org_names: dict[str, str] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().lower() == "cidr":
                    continue
                cidr = _ip.ip_network(row[0].strip(), strict=False)
                asn = row[1].strip() if len(row) > 1 else ""
                org = row[2].strip() if len(row) > 2 else ""
                self._rows.append((cidr, asn))
                self.org_names[asn] = org

    def lookup(self, ip: str) -> str | None:
        import ipaddress as _ip

        addr = _ip.ip_address(ip)
        best = None
        best_len = -1
        for net, asn in self._rows:
            if addr.version == net.version and addr in net and net.prefixlen > best_len:
                best, best_len = asn, net.prefixlen
        return best


def emit_report(
    inferences: list[dict],
    report_dir: Path,
    asn_table: Path | None = None,
) -> ReportBundle:
    """Write the distribution CSVs for a set of inference records."""
    report_dir.mkdir(parents=True, exist_ok=True)
    resolved = [r for r in inferences if r["status"] == disambig.RESOLVED]

    country_counts: dict[str, int] = {}
    city_counts: dict[tuple[str, str], int] = {}
    for r in resolved:
        country = r.get("country") or "??"
        country_counts[country] = country_counts.get(country, 0) + 1
        city = r.get("city") or ""
        if city:
            key = (country, city)
            city_counts[key] = city_counts.get(key, 0) + 1

    countries = sorted(country_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    with open(report_dir / "country_histogram.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["country", "count"])
        w.writerows(countries)

    top_cities: list[tuple[str, str, int]] = []
    for country, _ in countries[:10]:
        cities = sorted(
            ((city, n) for (c, city), n in city_counts.items() if c == country),
            key=lambda kv: (-kv[1], kv[0]),
        )[:3]
        top_cities.extend((country, city, n) for city, n in cities)
    with open(report_dir / "top_cities.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["country", "city", "count"])
        w.writerows(top_cities)

    stage_counts = {
        "keyword_resolved": 0, "llm_resolved": 0, "ambiguous": 0,
        "unresolved_with_clues": 0, "no_clues": 0,
    }
    for r in inferences:
        if r["status"] == disambig.RESOLVED:
            stage_counts["keyword_resolved" if r["stage"] == "keyword" else "llm_resolved"] += 1
        elif r["status"] == disambig.AMBIGUOUS:
            stage_counts["ambiguous"] += 1
        elif r["stage"] is None:
            stage_counts["no_clues"] += 1
        else:
            stage_counts["unresolved_with_clues"] += 1
    with open(report_dir / "stage_attribution.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bucket", "count"])
        for bucket in ("keyword_resolved", "llm_resolved", "ambiguous",
                       "unresolved_with_clues", "no_clues"):
            w.writerow([bucket, stage_counts[bucket]])

    as_counts = None
    if asn_table is not None and Path(asn_table).exists():
        table = AsnTable(Path(asn_table))
        tally: dict[str, int] = {}
        for r in resolved:
            ip = r.get("ip") or ""
            if not ip:
                continue
            asn = table.lookup(ip)
            if asn:
                tally[asn] = tally.get(asn, 0) + 1
        as_counts = sorted(
            ((asn, table.org_names.get(asn, ""), n) for asn, n in tally.items()),
            key=lambda t: (-t[2], t[0]),
        )
        with open(report_dir / "as_histogram.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["asn", "org_name", "count"])
            w.writerows(as_counts)
    else:
        log.info("no ip->ASN table; AS histogram omitted")

    return ReportBundle(
        inferences_path=Path(),
        report_dir=report_dir,
        country_counts=countries,
        stage_counts=stage_counts,
        as_counts=as_counts,
        top_cities=top_cities,
    )


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def run_pipeline(config: PipelineConfig) -> ReportBundle:
    """Execute the full pipeline; artifacts land in config.output_dir."""
    config.validate()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    try:
        load, trees, digests, unparseable = ingest(config)
    except FileNotFoundError as exc:
        raise StageError("ingest", str(exc)) from exc
    write_digests(digests, load, unparseable, out / "digests.jsonl")
    page_ips = {r.page_id: r.ip for r in load.records}
    all_page_ids = [r.page_id for r in load.records]

    cluster_set = run_clustering(config, digests)
    write_clusters(cluster_set, out / "clusters.jsonl")

    diff_sets = [
        diffext.extract_differential(c, trees) for c in cluster_set.clusters
    ]
    diffext.write_differentials(diff_sets, out / "diff.jsonl")

    keyword_set = _keyword_set(config)
    clues = cluemine.route_differentials(diff_sets, keyword_set)
    cluemine.write_clues(clues, out / "clues.jsonl")

    outcomes = mine(config, clues, page_ips)
    write_augmentations(outcomes, out / "augmentations.jsonl")
    write_candidates(outcomes, out / "candidates.jsonl")

    inferences = reduce_inferences(all_page_ids, outcomes)
    write_inferences(inferences, page_ips, out / "inferences.jsonl")

    records = read_inferences(out / "inferences.jsonl")
    bundle = emit_report(records, out / "report", config.asn_table)
    bundle.inferences_path = out / "inferences.jsonl"
    return bundle


def sweep(config: PipelineConfig, thresholds: list[int]) -> Path:
    """Threshold sweep over greedy clustering, written as CSV plus a best line."""
    from .evalmetrics import load_labels, threshold_sweep

    config.validate()
    if config.labels is None:
        raise ConfigError("sweep requires a labels file (truth classes per page)")
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    _, _, digests, _ = ingest(config)
    truths = load_labels(config.labels)
    rows = threshold_sweep(digests, truths, thresholds)

    metric_names = ["purity", "ari", "nmi", "homogeneity", "completeness", "v_measure"]
    csv_path = out / "sweep.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["threshold", "total_clusters", "valid_clusters", "singletons"]
            + metric_names + [f"{m}_nosingleton" for m in metric_names],
        )
        for row in rows:
            w.writerow(
                [row.threshold, row.total_clusters, row.valid_clusters, row.singletons]
                + [f"{row.metrics[m]:.9f}" for m in metric_names]
                + [
                    f"{row.metrics_nosingleton[m]:.9f}" if row.metrics_nosingleton else ""
                    for m in metric_names
                ],
            )
    best = min(rows, key=lambda r: (-r.metrics["v_measure"], r.threshold))
    (out / "sweep_best.json").write_text(json.dumps({
        "best_threshold": best.threshold,
        "v_measure": best.metrics["v_measure"],
    }, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path
