"""Layer-2 node: metadata harvest, duplicate resolution, overlap ranking.

A layer-2 node never fetches pages. It pulls metadata records from its
layer-3 children. Because each layer-3 spider also records the pages its
sites link to on other sites, the same URL arrives once from its own site
and once per linking occurrence elsewhere. The number of distinct other
sites that delivered a copy is the page's rank at this layer.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

from dris import protocol
from dris.index3 import MAX_RESULTS, normalize_query
from dris.records import MetadataRecord, RankedResult
from dris.webgraph import DomainName, Url, parse_domain

log = logging.getLogger(__name__)

OVERLAP_MODES = ("sites", "occurrences")
STORE_FORMAT = "dris-l2-store"
STORE_VERSION = 1


class HarvestError(RuntimeError):
    def __init__(self, warnings: Sequence[str]):
        super().__init__("every child failed: " + "; ".join(warnings))
        self.warnings = tuple(warnings)


@dataclass(frozen=True)
class OverlapRecord:
    record: MetadataRecord
    overlap_score: int
    seen_from: frozenset[str]
    # raw copies delivered by other sites, before collapsing to distinct sites
    occurrences: int = 0


@dataclass(frozen=True)
class HarvestResult:
    records: tuple[tuple[str, MetadataRecord], ...]
    cursors: Mapping[str, int]
    warnings: tuple[str, ...] = ()
    bytes_received: int = 0
    # children harvested without a cursor; their earlier copies are superseded
    full: frozenset[str] = frozenset()


def harvest(
    children: Mapping[str, object],
    cursors: Mapping[str, int | None],
    page_limit: int = protocol.HARVEST_PAGE_LIMIT,
) -> HarvestResult:
    """Pull every child's export newer than its cursor.

    ``children`` maps a child id to anything with
    ``metadata(since, limit) -> HarvestResponse``. A failing child is skipped
    with a warning and keeps its cursor; if all fail, :class:`HarvestError`.
    """
    records: list[tuple[str, MetadataRecord]] = []
    new_cursors = {k: v for k, v in cursors.items() if v is not None}
    warnings = []
    received = 0
    full = set()
    ok = 0
    for child_id in sorted(children):
        since = cursors.get(child_id)
        got: list[MetadataRecord] = []
        cursor = since
        try:
            while True:
                resp = children[child_id].metadata(cursor, page_limit)
                received += len(protocol.encode(resp))
                got.extend(resp.records)
                cursor = max(cursor or 0, resp.max_timestamp)
                if not resp.truncated:
                    break
        except Exception as e:  # noqa: BLE001 - any child fault is reported, never fatal
            log.warning("harvest from %s failed: %s", child_id, e)
            warnings.append(f"{child_id}: {type(e).__name__}: {e}")
            continue
        ok += 1
        if since is None:
            full.add(child_id)
        records.extend((child_id, r) for r in got)
        new_cursors[child_id] = cursor
    if children and not ok:
        raise HarvestError(warnings)
    return HarvestResult(tuple(records), dict(sorted(new_cursors.items())), tuple(warnings), received, frozenset(full))


def _url_key(url: str) -> str:
    return str(Url.parse(url))


def dedupe_overlap(records: Iterable[MetadataRecord], mode: str = "sites") -> list[OverlapRecord]:
    """Collapse harvested copies to one entry per URL, scored by overlap.

    The retained copy is the one delivered by the page's own site, else the
    one from the smallest origin. With ``mode="occurrences"`` the score counts
    every copy from another site instead of distinct sites.
    """
    if mode not in OVERLAP_MODES:
        raise ValueError(f"overlap mode must be one of {OVERLAP_MODES}")
    groups: dict[str, list[MetadataRecord]] = defaultdict(list)
    for r in records:
        groups[_url_key(r.url)].append(r)
    out = []
    for url in sorted(groups):
        copies = groups[url]
        host = Url.parse(url).host
        seen = frozenset(c.origin_site for c in copies)
        foreign = [c for c in copies if c.origin_site != host]
        own = [c for c in copies if c.origin_site == host]
        pool = own or [c for c in copies if c.origin_site == min(seen)]
        retained = max(pool, key=lambda c: c.last_modified)
        score = len(seen - {host}) if mode == "sites" else len(foreign)
        out.append(OverlapRecord(retained, score, seen, len(foreign)))
    return out


@dataclass(frozen=True, eq=False)
class Layer2Store:
    """Snapshot of a layer-2 node's database.

    ``copies`` keeps one record per (child, url, origin site) together with
    the number of link occurrences it stands for; ``entries`` is derived.
    """

    domain: DomainName
    children: tuple[str, ...] = ()
    cursors: Mapping[str, int] = field(default_factory=dict)
    copies: Mapping[tuple[str, str, str], tuple[MetadataRecord, int]] = field(default_factory=dict)
    overlap_mode: str = "sites"
    entries: Mapping[str, OverlapRecord] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(sorted(self.children)))
        object.__setattr__(self, "cursors", MappingProxyType(dict(sorted(self.cursors.items()))))
        object.__setattr__(self, "copies", MappingProxyType(dict(sorted(self.copies.items()))))
        flat = [rec for rec, n in self.copies.values() for _ in range(n)]
        entries = {o.record.url: o for o in dedupe_overlap(flat, self.overlap_mode)}
        object.__setattr__(self, "entries", MappingProxyType(entries))

    def __eq__(self, other):
        if not isinstance(other, Layer2Store):
            return NotImplemented
        return (
            self.domain == other.domain
            and self.children == other.children
            and dict(self.cursors) == dict(other.cursors)
            and dict(self.copies) == dict(other.copies)
            and self.overlap_mode == other.overlap_mode
        )

    @property
    def record_count(self) -> int:
        return sum(n for _, n in self.copies.values())

    def apply(self, result: HarvestResult) -> Layer2Store:
        copies = {k: v for k, v in self.copies.items() if k[0] not in result.full}
        delivered: dict[tuple[str, str, str], list[MetadataRecord]] = defaultdict(list)
        for child_id, r in result.records:
            delivered[(child_id, _url_key(r.url), r.origin_site)].append(r)
        for key, recs in delivered.items():
            copies[key] = (max(recs, key=lambda r: r.last_modified), len(recs))
        cursors = dict(self.cursors)
        cursors.update(result.cursors)
        return Layer2Store(self.domain, self.children, cursors, copies, self.overlap_mode)


def search_l2(store: Layer2Store, query: Sequence[str], max_results: int = MAX_RESULTS) -> list[RankedResult]:
    """Pages whose retained keywords hold every query term.

    Ordered by overlap, then by summed keyword score, then URL. The score
    reported upward is the overlap alone.
    """
    terms = normalize_query(query)
    hits = []
    for url, entry in store.entries.items():
        kw = entry.record.keyword_map()
        if all(t in kw for t in terms):
            hits.append((-entry.overlap_score, -sum(kw[t] for t in terms), url, entry))
    hits.sort(key=lambda h: h[:3])
    source = str(store.domain)
    return [
        RankedResult(url, e.overlap_score, (source,), e.record.title, e.record.abstract)
        for _, _, url, e in hits[:max_results]
    ]


def export_store(store: Layer2Store, since: int | None = None) -> list[MetadataRecord]:
    """Retained records with their overlap score attached, for a parent node."""
    out = [e.record.with_overlap(e.overlap_score) for e in store.entries.values()]
    if since is not None:
        out = [r for r in out if r.last_modified > since]
    return sorted(out, key=lambda r: (r.url, r.origin_site))


# -- persistence -------------------------------------------------------------

def dump_store(store: Layer2Store) -> str:
    header = {
        "format": STORE_FORMAT,
        "version": STORE_VERSION,
        "domain": str(store.domain),
        "children": list(store.children),
        "cursors": dict(store.cursors),
        "overlap": store.overlap_mode,
    }
    lines = [header]
    for (child, _, _), (rec, n) in store.copies.items():
        lines.append({"child": child, "count": n, "record": protocol.record_to_dict(rec)})
    return "".join(json.dumps(line, sort_keys=True, ensure_ascii=False) + "\n" for line in lines)


def save_store(store: Layer2Store, path: str | Path) -> None:
    Path(path).write_text(dump_store(store), encoding="utf-8")


def load_store(path: str | Path) -> Layer2Store:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0]) if lines else {}
    if header.get("format") != STORE_FORMAT or header.get("version") != STORE_VERSION:
        raise ValueError(f"{path} is not a version {STORE_VERSION} layer-2 store")
    copies = {}
    for line in lines[1:]:
        obj = json.loads(line)
        rec = protocol.record_from_dict(obj["record"])
        copies[(obj["child"], _url_key(rec.url), rec.origin_site)] = (rec, obj["count"])
    return Layer2Store(
        parse_domain(header["domain"]), tuple(header["children"]), header["cursors"], copies, header["overlap"]
    )


# -- node --------------------------------------------------------------------

class Layer2Node:
    """Aggregator for a second-level domain.

    ``run_harvest`` is the only writer and holds a lock; searches read the
    current store snapshot, which is replaced whole.
    """

    def __init__(
        self,
        domain: DomainName,
        children: Mapping[str, object] | None = None,
        store: Layer2Store | None = None,
        *,
        overlap_mode: str = "sites",
        page_limit: int = protocol.HARVEST_PAGE_LIMIT,
    ):
        self.domain = domain
        self.children = dict(children or {})
        self.page_limit = page_limit
        self.store = store if store is not None else Layer2Store(domain, tuple(self.children), overlap_mode=overlap_mode)
        self._lock = threading.Lock()
        self.last_harvest: HarvestResult | None = None

    @property
    def node_id(self) -> str:
        return str(self.domain)

    def attach(self, children: Mapping[str, object]) -> None:
        with self._lock:
            self.children = dict(children)
            s = self.store
            self.store = Layer2Store(s.domain, tuple(self.children), s.cursors, s.copies, s.overlap_mode)

    def run_harvest(self) -> protocol.HarvestReport:
        with self._lock:
            cursors = {c: self.store.cursors.get(c) for c in self.children}
            result = harvest(self.children, cursors, self.page_limit)
            self.store = self.store.apply(result)
            self.last_harvest = result
            return protocol.HarvestReport(len(result.records), result.warnings, dict(self.store.cursors))

    def search(self, request: protocol.QueryRequest) -> protocol.QueryResponse:
        start = time.perf_counter()
        results = search_l2(self.store, request.query, request.max_results)
        return protocol.QueryResponse(
            request_id=request.request_id,
            results=tuple(results),
            elapsed_ms=int((time.perf_counter() - start) * 1000),
        )

    def metadata(self, since: int | None = None, limit: int = protocol.HARVEST_PAGE_LIMIT) -> protocol.HarvestResponse:
        return protocol.paginate(export_store(self.store, since), since, limit)
