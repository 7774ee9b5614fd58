"""Layer-3 node: keyword scoring, metadata extraction, inverted index, search.

A page's score for a term weighs where the term occurs:

    score = 5 * (occurrences in title)
          + 2 * (occurrences in the first ceil(L/2) body tokens)
          + 1 * (occurrences in the remaining body tokens)

with ``L`` the body length. Multi-term queries use AND semantics and rank by
the sum of per-term scores, ties broken by URL.
"""

from __future__ import annotations

import json
import math
import re
import threading
import time
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

from dris import protocol
from dris.records import KeywordScore, MetadataRecord, RankedResult
from dris.spider import CrawlResult, crawl_hosts, scan_addresses
from dris.webgraph import Corpus, DomainName, Page, Url, is_under, parse_domain

TITLE_WEIGHT = 5
FRONT_WEIGHT = 2
BACK_WEIGHT = 1

ABSTRACT_TOKEN_LIMIT = 30
KEYWORDS_PER_PAGE = 50
MAX_RESULTS = 100

INDEX_FORMAT = "dris-l3-index"
INDEX_VERSION = 1

_SPLIT_RE = re.compile(r"[^0-9a-z]+")


class IndexBuildError(ValueError):
    """Corpus invariant broken while building an index."""


class QueryError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    return [t for t in _SPLIT_RE.split(text.lower()) if t]


def normalize_query(query: Iterable[str]) -> list[str]:
    """Tokenize every query word and drop repeats, keeping first-seen order."""
    terms = tokenize(" ".join(query))
    if not terms:
        raise QueryError("query is empty")
    return list(dict.fromkeys(terms))


def _term_scores(page: Page) -> Counter:
    scores: Counter = Counter()
    for t in tokenize(page.title):
        scores[t] += TITLE_WEIGHT
    half = math.ceil(len(page.body) / 2)
    for i, t in enumerate(page.body):
        scores[t] += FRONT_WEIGHT if i < half else BACK_WEIGHT
    return scores


def keyword_score(page: Page, term: str) -> int:
    return _term_scores(page).get(term, 0)


def extract_metadata(
    page: Page,
    origin_site: str | None = None,
    *,
    abstract_token_limit: int = ABSTRACT_TOKEN_LIMIT,
    keywords_per_page: int = KEYWORDS_PER_PAGE,
    last_modified: int | None = None,
) -> MetadataRecord:
    scores = _term_scores(page)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:keywords_per_page]
    return MetadataRecord(
        url=str(page.url),
        origin_site=origin_site or page.host,
        title=page.title,
        encoding=page.encoding,
        abstract=" ".join(page.body[:abstract_token_limit]),
        keywords=tuple(KeywordScore(t, s) for t, s in ranked),
        last_modified=page.last_modified if last_modified is None else last_modified,
    )


@dataclass(frozen=True)
class Layer3Index:
    domain: DomainName
    # term -> ((url, score), ...) sorted by (score desc, url asc)
    postings: dict[str, tuple[tuple[str, int], ...]]
    records: dict[str, MetadataRecord]
    built_at: int
    # copies of off-site pages fetched by this domain's spiders, one per link occurrence
    external: tuple[MetadataRecord, ...] = ()

    def __len__(self):
        return len(self.records)


def external_records(
    origin_site: str, own_pages: Iterable[Page], external_pages: Iterable[tuple[Url, Page]]
) -> list[MetadataRecord]:
    """Metadata for each off-site link occurrence found by ``origin_site``.

    All copies of one target share a timestamp: the newest of the target
    itself and the origin's pages linking to it, so an incremental export
    notices new links as well as changed targets.
    """
    referrer_time: dict[Url, int] = {}
    for p in own_pages:
        for link in p.links:
            if link.host != origin_site:
                referrer_time[link] = max(referrer_time.get(link, 0), p.last_modified)
    return [
        extract_metadata(page, origin_site, last_modified=max(page.last_modified, referrer_time.get(url, 0)))
        for url, page in external_pages
    ]


def build_index(
    own_pages: Iterable[Page],
    d: DomainName,
    *,
    external: Iterable[MetadataRecord] = (),
    scanned_hosts: Iterable[str] = (),
    built_at: int | None = None,
) -> Layer3Index:
    """Index pages owned by domain ``d``.

    Pages must sit on hosts named under ``d`` or on hosts found by the address
    scan (``scanned_hosts``).
    """
    extra = frozenset(scanned_hosts)
    records: dict[str, MetadataRecord] = {}
    raw: dict[str, list[tuple[str, int]]] = {}
    newest = 0
    for page in own_pages:
        if page.host not in extra and not _host_under(page.host, d):
            raise IndexBuildError(f"{page.url} is outside {d}")
        key = str(page.url)
        if key in records:
            raise IndexBuildError(f"duplicate page {key}")
        records[key] = extract_metadata(page)
        newest = max(newest, page.last_modified)
        for term, score in _term_scores(page).items():
            raw.setdefault(term, []).append((key, score))
    postings = {
        term: tuple(sorted(plist, key=lambda us: (-us[1], us[0]))) for term, plist in sorted(raw.items())
    }
    return Layer3Index(
        domain=d,
        postings=postings,
        records=dict(sorted(records.items())),
        built_at=newest if built_at is None else built_at,
        external=tuple(sorted(external, key=lambda r: (r.url, r.origin_site))),
    )


def _host_under(host: str, d: DomainName) -> bool:
    try:
        return is_under(parse_domain(host), d)
    except ValueError:
        return False


def index_crawls(crawls: Sequence[CrawlResult], d: DomainName, scanned_hosts: Iterable[str] = ()) -> Layer3Index:
    own = [p for c in crawls for p in c.own_pages]
    ext = [r for c in crawls for r in external_records(c.origin_site, c.own_pages, c.external_pages)]
    return build_index(own, d, external=ext, scanned_hosts=scanned_hosts)


def search_l3(index: Layer3Index, query: Sequence[str], max_results: int = MAX_RESULTS) -> list[RankedResult]:
    terms = normalize_query(query)
    totals: dict[str, int] | None = None
    for term in terms:
        plist = dict(index.postings.get(term, ()))
        if totals is None:
            totals = plist
        else:
            totals = {u: s + plist[u] for u, s in totals.items() if u in plist}
        if not totals:
            return []
    ranked = sorted(totals.items(), key=lambda us: (-us[1], us[0]))[:max_results]
    source = str(index.domain)
    return [
        RankedResult(url, score, (source,), index.records[url].title, index.records[url].abstract)
        for url, score in ranked
    ]


def export_metadata(index: Layer3Index, since: int | None = None) -> list[MetadataRecord]:
    """Own-page records plus one record per external link occurrence."""
    records = [*index.records.values(), *index.external]
    if since is not None:
        records = [r for r in records if r.last_modified > since]
    return sorted(records, key=lambda r: (r.url, r.origin_site))


# -- persistence -------------------------------------------------------------

def save_index(index: Layer3Index, path: str | Path) -> None:
    Path(path).write_text(dump_index(index), encoding="utf-8")


def dump_index(index: Layer3Index) -> str:
    lines = [
        {"format": INDEX_FORMAT, "version": INDEX_VERSION, "domain": str(index.domain), "built_at": index.built_at}
    ]
    lines += [{"record": protocol.record_to_dict(r)} for r in index.records.values()]
    lines += [{"external": protocol.record_to_dict(r)} for r in index.external]
    lines += [{"term": t, "postings": [list(p) for p in plist]} for t, plist in index.postings.items()]
    return "".join(json.dumps(line, sort_keys=True, ensure_ascii=False) + "\n" for line in lines)


def load_index(path: str | Path) -> Layer3Index:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise IndexBuildError(f"{path} is empty")
    header = json.loads(lines[0])
    if header.get("format") != INDEX_FORMAT or header.get("version") != INDEX_VERSION:
        raise IndexBuildError(f"{path} is not a version {INDEX_VERSION} layer-3 index")
    records, external, postings = {}, [], {}
    for line in lines[1:]:
        obj = json.loads(line)
        if "record" in obj:
            r = protocol.record_from_dict(obj["record"])
            records[r.url] = r
        elif "external" in obj:
            external.append(protocol.record_from_dict(obj["external"]))
        else:
            postings[obj["term"]] = tuple((u, s) for u, s in obj["postings"])
    return Layer3Index(parse_domain(header["domain"]), postings, records, header["built_at"], tuple(external))


# -- node --------------------------------------------------------------------

class Layer3Node:
    """Search engine for one organisational domain.

    ``refresh`` recrawls and swaps in a fresh index; readers keep whatever
    index they picked up, so a search never sees a half-built one.
    """

    def __init__(self, domain: DomainName, index: Layer3Index | None = None, *, scan: bool = True):
        self.domain = domain
        self.scan = scan
        self._index = build_index((), domain) if index is None else index
        self._lock = threading.Lock()
        self.last_crawl: list[CrawlResult] = []

    @property
    def node_id(self) -> str:
        return str(self.domain)

    @property
    def index(self) -> Layer3Index:
        return self._index

    def refresh(self, corpus: Corpus) -> list[CrawlResult]:
        with self._lock:
            hosts = scan_addresses(corpus, self.domain) if self.scan else corpus.dns_lookup(self.domain)
            crawls = crawl_hosts(hosts, corpus.fetch)
            self._index = index_crawls(crawls, self.domain, scanned_hosts=hosts)
            self.last_crawl = crawls
            return crawls

    def search(self, request: protocol.QueryRequest) -> protocol.QueryResponse:
        start = time.perf_counter()
        results = search_l3(self._index, request.query, request.max_results)
        return protocol.QueryResponse(
            request_id=request.request_id,
            results=tuple(results),
            child_status=(),
            elapsed_ms=int((time.perf_counter() - start) * 1000),
        )

    def metadata(self, since: int | None = None, limit: int = protocol.HARVEST_PAGE_LIMIT) -> protocol.HarvestResponse:
        return protocol.paginate(export_metadata(self._index, since), since, limit)
