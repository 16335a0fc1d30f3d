"""Geocoding and region-constrained disambiguation.

Winning entities are geocoded into coordinate candidates; when several
candidates compete, a region constraint derived by majority vote across
offline IP-geolocation provider tables picks the plausible one.
"""

from __future__ import annotations

import csv
import ipaddress
import json
from dataclasses import dataclass, field
from pathlib import Path

from .ensemble import canonicalize_entity

__all__ = [
    "CoordinateCandidate",
    "IpGeoRecord",
    "RegionConstraint",
    "GeoInference",
    "GeocodeUnavailable",
    "GeocoderBackend",
    "FixtureGeocoder",
    "HttpGeocoder",
    "NullGeocoder",
    "ProviderTable",
    "load_provider_tables",
    "geocode_entity",
    "resolve_ip_region",
    "majority_vote",
    "disambiguate",
]

RESOLVED = "resolved"
AMBIGUOUS = "ambiguous"
UNRESOLVED = "unresolved"


class GeocodeUnavailable(Exception):
    """Geocoder backend failed after retries."""


@dataclass(frozen=True)
class CoordinateCandidate:
    entity: str
    lat: float
    lon: float
    country: str  # ISO 3166-1 alpha-2, uppercase ("" when unknown)
    region: str
    city: str
    source: str = "fixture"

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class IpGeoRecord:
    ip: str
    provider: str
    country: str | None  # ISO alpha-2
    region: str | None
    city: str | None


@dataclass
class RegionConstraint:
    country: str | None = None
    region: str | None = None
    city: str | None = None
    vote_detail: dict[str, dict] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.country is None and self.region is None and self.city is None

    def finest(self) -> tuple[str, str] | None:
        """(granularity, value) of the finest constrained level."""
        if self.city is not None:
            return ("city", self.city)
        if self.region is not None:
            return ("region", self.region)
        if self.country is not None:
            return ("country", self.country)
        return None


@dataclass
class GeoInference:
    """Terminal per-page inference fragment."""

    page_id: str
    entity: str | None
    level: str | None
    lat: float | None = None
    lon: float | None = None
    country: str = ""
    region: str = ""
    city: str = ""
    street: str = ""
    stage: str | None = None  # "keyword" | "llm"
    status: str = UNRESOLVED
    constraint_used: bool = False
    confidence: float | None = None


class GeocoderBackend:
    """Contract: entity string -> ordered CoordinateCandidate list."""

    tag = "abstract"

    def geocode(self, entity: str) -> list[CoordinateCandidate]:
        raise NotImplementedError


class FixtureGeocoder(GeocoderBackend):
    """Offline geocoder: JSON map canonical entity -> candidate list."""

    tag = "fixture"

    def __init__(self, path: str | Path):
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        self._table: dict[str, list[CoordinateCandidate]] = {}
        for entity, items in raw.items():
            key = canonicalize_entity(entity)
            self._table[key] = [
                CoordinateCandidate(
                    entity=key,
                    lat=float(it["lat"]),
                    lon=float(it["lon"]),
                    country=str(it.get("country", "")).upper(),
                    region=str(it.get("region", "")),
                    city=str(it.get("city", "")),
                    source="fixture",
                )
                for it in items
            ]
        self.calls = 0

    def geocode(self, entity: str) -> list[CoordinateCandidate]:
        self.calls += 1
        return list(self._table.get(canonicalize_entity(entity), []))


class HttpGeocoder(GeocoderBackend):
    """Generic HTTP geocoder: GET endpoint?q=..., bearer-key auth.

    Expects {"candidates": [{"lat", "lon", "country", "region", "city"}]}.
    """

    tag = "http"

    def __init__(self, endpoint: str, api_key: str = "", timeout: float = 15.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout

    def geocode(self, entity: str) -> list[CoordinateCandidate]:
        import requests

        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.get(
            self.endpoint, params={"q": entity}, headers=headers,
            timeout=self.timeout,
        )
        resp.raise_for_status()
        body = resp.json()
        return [
            CoordinateCandidate(
                entity=canonicalize_entity(entity),
                lat=float(it["lat"]),
                lon=float(it["lon"]),
                country=str(it.get("country", "")).upper(),
                region=str(it.get("region", "")),
                city=str(it.get("city", "")),
                source="http",
            )
            for it in body.get("candidates", [])
        ]


class NullGeocoder(GeocoderBackend):
    tag = "null"

    def geocode(self, entity: str) -> list[CoordinateCandidate]:
        raise GeocodeUnavailable("null geocoder configured")


def geocode_entity(
    entity: str,
    backend: GeocoderBackend,
    retries: int = 3,
) -> list[CoordinateCandidate]:
    """Ordered candidate list for an entity; empty when the entity is unknown."""
    if not entity:
        raise ValueError("cannot geocode an empty entity")
    last: Exception | None = None
    for _ in range(retries):
        try:
            return backend.geocode(entity)
        except GeocodeUnavailable:
            raise
        except Exception as exc:
            last = exc
    raise GeocodeUnavailable(f"geocoder failed after {retries} retries: {last}")


class ProviderTable:
    """One provider's CIDR -> (country, region, city) table."""

    def __init__(self, provider: str,
                 rows: list[tuple[ipaddress._BaseNetwork, str, str, str]]):
        self.provider = provider
        self._rows = rows

    @classmethod
    def from_csv(cls, path: str | Path) -> "ProviderTable":
        path = Path(path)
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().lower() == "cidr":
                    continue
                cidr = ipaddress.ip_network(row[0].strip(), strict=False)
                country = row[1].strip().upper() if len(row) > 1 else ""
                region = row[2].strip() if len(row) > 2 else ""
                city = row[3].strip() if len(row) > 3 else ""
                rows.append((cidr, country, region, city))
        return cls(provider=path.stem, rows=rows)

    def lookup(self, ip: str) -> IpGeoRecord | None:
        """Longest-prefix match; None when the ip is not covered."""
        addr = ipaddress.ip_address(ip)
        best = None
        best_len = -1
        for net, country, region, city in self._rows:
            if addr.version == net.version and addr in net and net.prefixlen > best_len:
                best = (country, region, city)
                best_len = net.prefixlen
        if best is None:
            return None
        country, region, city = best
        return IpGeoRecord(
            ip=ip, provider=self.provider,
            country=country or None, region=region or None, city=city or None,
        )


def load_provider_tables(paths: list[str | Path]) -> list[ProviderTable]:
    return [ProviderTable.from_csv(p) for p in sorted(Path(p) for p in paths)]


def resolve_ip_region(ip: str, providers: list[ProviderTable]) -> list[IpGeoRecord]:
    """One record per provider covering the ip (longest-prefix match each)."""
    records = []
    for table in providers:
        rec = table.lookup(ip)
        if rec is not None:
            records.append(rec)
    return records


def _vote(values: list[str]) -> str | None:
    """Value held by a strict majority of ballots, else None."""
    if not values:
        return None
    counts: dict[str, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    top = max(counts, key=lambda k: (counts[k], k))
    return top if counts[top] * 2 > len(values) else None


def majority_vote(records: list[IpGeoRecord]) -> RegionConstraint:
    """Refine country -> region -> city by strict majority of non-absent ballots.

    The country level must win a real majority; deeper levels with zero
    ballots are skipped, but a contested level stops further refinement.
    Voting is order-independent.
    """
    constraint = RegionConstraint()
    constraint.vote_detail = {
        r.provider: {"country": r.country, "region": r.region, "city": r.city}
        for r in records
    }
    countries = [r.country.upper() for r in records if r.country]
    country = _vote(countries)
    if country is None:
        return constraint
    constraint.country = country

    regions = [canonicalize_entity(r.region) for r in records if r.region]
    if regions:
        region = _vote(regions)
        if region is None:
            return constraint
        constraint.region = region

    cities = [canonicalize_entity(r.city) for r in records if r.city]
    if cities:
        city = _vote(cities)
        if city is not None:
            constraint.city = city
    return constraint


def _admin_value(candidate: CoordinateCandidate, granularity: str) -> str:
    if granularity == "country":
        return candidate.country.upper()
    if granularity == "region":
        return canonicalize_entity(candidate.region)
    return canonicalize_entity(candidate.city)


def disambiguate(
    page_id: str,
    entity: str,
    level: str,
    candidates: list[CoordinateCandidate],
    constraint: RegionConstraint,
    stage: str,
    confidence: float | None = None,
) -> GeoInference:
    """Pick one coordinate candidate under the region constraint.

    A unique candidate is trusted as-is. Otherwise candidates are
    filtered at the finest constrained granularity: one survivor resolves
    it, several resolve to the highest-ranked survivor, zero fall back to
    the unfiltered top candidate flagged ambiguous. No candidates at all
    means the inference stays unresolved.
    """
    inference = GeoInference(
        page_id=page_id, entity=entity, level=level, stage=stage,
        status=UNRESOLVED, confidence=confidence,
    )
    if not candidates:
        return inference

    chosen: CoordinateCandidate
    if len(candidates) == 1:
        chosen = candidates[0]
        inference.status = RESOLVED
    else:
        finest = constraint.finest()
        if finest is None:
            chosen = candidates[0]
            inference.status = RESOLVED
        else:
            granularity, value = finest
            survivors = [
                c for c in candidates if _admin_value(c, granularity) == value
            ]
            if survivors:
                chosen = survivors[0]
                inference.status = RESOLVED
                inference.constraint_used = True
            else:
                chosen = candidates[0]
                inference.status = AMBIGUOUS

    inference.lat = chosen.lat
    inference.lon = chosen.lon
    inference.country = chosen.country.upper()
    inference.region = canonicalize_entity(chosen.region) if chosen.region else ""
    inference.city = canonicalize_entity(chosen.city) if chosen.city else ""
    if level == "street":
        inference.street = entity
    elif level == "city" and not inference.city:
        inference.city = entity
    elif level == "country" and not inference.country:
        inference.country = entity.upper()
    return inference
