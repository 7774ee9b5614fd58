"""Desk-scale scenarios: stand up all three layers over a synthetic corpus.

A scenario builds the corpus, one layer-3 node per organisational domain,
one layer-2 node per configured second-level domain and a single top node,
then runs harvest cycles. One cycle means every layer-3 node recrawls and
reindexes, then every layer-2 node harvests incrementally.
"""

from __future__ import annotations

import json
import random
import time
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from dris import protocol
from dris.federation import Registry, TopNode
from dris.harvest2 import Layer2Node
from dris.index3 import Layer3Node, extract_metadata
from dris.records import ServiceDescriptor
from dris.server import NodeServer
from dris.transport import InProcessNetwork, connect_endpoint
from dris.webgraph import (
    Corpus,
    CorpusConfig,
    Page,
    generate_corpus,
    is_under,
    make_vocabulary,
    page_bytes,
    parse_domain,
)

TRANSPORTS = ("inprocess", "loopback")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    seed: int = 0
    top: str = "cn"
    # second-level domains served by layer-2 nodes; defaults to the corpus parents
    layer2: tuple[str, ...] = ()
    cycles: int = 3
    modifications: int = 1
    queries: tuple[tuple[str, ...], ...] = ()
    query_count: int = 5
    transport: str = "inprocess"
    timeout: float = 2.0
    scan: bool = True
    overlap: str = "sites"
    page_limit: int = protocol.HARVEST_PAGE_LIMIT

    def __post_init__(self):
        if not self.layer2:
            object.__setattr__(self, "layer2", tuple(self.corpus.parent_domains))
        object.__setattr__(self, "layer2", tuple(self.layer2))
        object.__setattr__(self, "queries", tuple(tuple(q) for q in self.queries))
        if self.transport not in TRANSPORTS:
            raise ConfigError(f"transport must be one of {TRANSPORTS}")
        if self.cycles < 1:
            raise ConfigError("cycles must be at least 1")
        top = parse_domain(self.top)
        for name in self.layer2:
            if not is_under(parse_domain(name), top) or parse_domain(name) == top:
                raise ConfigError(f"layer-2 domain {name} is not below top domain {self.top}")
        for parent in self.corpus.parent_domains:
            if parent not in self.layer2:
                raise ConfigError(f"corpus domains under {parent} have no layer-2 node")

    @classmethod
    def from_dict(cls, data: Mapping) -> ScenarioConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        kwargs = dict(data)
        try:
            if "corpus" in kwargs:
                kwargs["corpus"] = CorpusConfig.from_dict(kwargs["corpus"])
            if "layer2" in kwargs:
                kwargs["layer2"] = tuple(kwargs["layer2"])
            return cls(**kwargs)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path: str | Path) -> ScenarioConfig:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["corpus"] = self.corpus.to_dict()
        d["layer2"] = list(self.layer2)
        d["queries"] = [list(q) for q in self.queries]
        return d


@dataclass(frozen=True)
class MetricsReport:
    pages: int
    coverage_fraction: float
    crawl_bytes: int
    harvest_bytes: int
    recrawl_bytes_equivalent: int
    metadata_ratio: float
    # harvest cycles between a page change and its appearance at the top node
    update_latency: int | None
    cycles_run: int
    result_counts: tuple[int, ...]
    query_latency_ms: tuple[float, ...] = field(default=(), compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["result_counts"] = list(self.result_counts)
        d["query_latency_ms"] = list(self.query_latency_ms)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def metadata_ratio(pages) -> float:
    """Serialized metadata bytes over serialized page bytes."""
    meta = page = 0
    for p in pages:
        meta += len(json.dumps(protocol.record_to_dict(extract_metadata(p)), separators=(",", ":")).encode())
        page += page_bytes(p)
    return meta / page if page else 0.0


class Deployment:
    """Every node of one scenario, wired through the chosen transport."""

    def __init__(self, corpus: Corpus, cfg: ScenarioConfig):
        self.cfg = cfg
        self.corpus = corpus
        self.registry = Registry()
        self.network = InProcessNetwork()
        self.servers: list[NodeServer] = []
        loopback = cfg.transport == "loopback"

        self.layer3: dict[str, Layer3Node] = {}
        for name in corpus.dns:
            self.layer3[name] = Layer3Node(parse_domain(name), scan=cfg.scan)
        unplaced = [n for n in self.layer3 if not any(is_under(parse_domain(n), parse_domain(p)) for p in cfg.layer2)]
        if unplaced:
            raise ConfigError(f"domains {unplaced} fall under no layer-2 node")

        self.layer2: dict[str, Layer2Node] = {}
        for name in cfg.layer2:
            self.layer2[name] = Layer2Node(parse_domain(name), overlap_mode=cfg.overlap, page_limit=cfg.page_limit)
        self.top = TopNode(parse_domain(cfg.top), self.registry, timeout=cfg.timeout)

        for kind, nodes in (("layer3", self.layer3), ("layer2", self.layer2), ("top", {cfg.top: self.top})):
            for name, node in nodes.items():
                if loopback:
                    server = NodeServer(node).start()
                    self.servers.append(server)
                    endpoint = server.url
                else:
                    endpoint = self.network.add(f"inproc://{name}", node)
                self.registry.register(ServiceDescriptor.for_domain(parse_domain(name), endpoint, kind))

        self.connect = connect_endpoint if loopback else self.network.connect
        self.top.connect = self.connect
        for name, node in self.layer2.items():
            d = parse_domain(name)
            node.attach(
                {str(desc.domain): self.connect(desc) for desc in self.registry.under(d) if desc.kind == "layer3"}
            )
        self.top_client = self.connect(self.registry.resolve(cfg.top))

    def close(self):
        for s in self.servers:
            s.close()
        self.servers = []

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def cycle(self, corpus: Corpus | None = None) -> tuple[int, int]:
        """One recrawl + harvest round; returns (crawl bytes, harvest bytes)."""
        if corpus is not None:
            self.corpus = corpus
        crawled = 0
        for node in self.layer3.values():
            crawled += sum(c.bytes_fetched for c in node.refresh(self.corpus))
        harvested = 0
        for name, node in self.layer2.items():
            self.connect(self.registry.resolve(name)).run_harvest()
            harvested += node.last_harvest.bytes_received
        return crawled, harvested

    def query(self, terms, request_id: str = "q", scope: str | None = None, max_results: int = 100):
        req = protocol.QueryRequest(tuple(terms), request_id, max_results, scope or self.cfg.top)
        return self.top_client.search(req, timeout=self.cfg.timeout + 1)

    def indexed_urls(self) -> set[str]:
        return {u for node in self.layer3.values() for u in node.index.records}


def fresh_edit(page: Page, token: str, stamp: int) -> Page:
    """``page`` with ``token`` in its title and enough body copies to be a top keyword."""
    body = list(page.body)
    while True:
        edited = replace(page, title=f"{token} {page.title}", body=tuple(body), last_modified=stamp)
        if token in extract_metadata(edited).keyword_map():
            return edited
        body.insert(0, token)


def _workload(cfg: ScenarioConfig) -> list[tuple[str, ...]]:
    if cfg.queries:
        return list(cfg.queries)
    rng = random.Random(cfg.seed * 7919 + 1)
    head = make_vocabulary(cfg.corpus.vocabulary_size)[:20]
    return [tuple(rng.sample(head, rng.randint(1, min(2, len(head))))) for _ in range(cfg.query_count)]


def run_scenario(cfg: ScenarioConfig) -> MetricsReport:
    corpus = generate_corpus(cfg.corpus, cfg.seed)
    with Deployment(corpus, cfg) as dep:
        crawl_bytes, harvest_bytes = dep.cycle()
        recrawl = crawl_bytes
        cycles = 1
        all_urls = {str(p.url) for p in corpus.pages()}
        indexed = dep.indexed_urls()
        coverage = len(indexed & all_urls) / len(all_urls) if all_urls else 1.0
        ratio = metadata_ratio(corpus.pages())

        latency = None
        if cfg.modifications:
            rng = random.Random(cfg.seed)
            clock = max(p.last_modified for p in corpus.pages()) + 1
            targets = rng.sample(sorted(p.url for p in corpus.pages()), min(cfg.modifications, len(all_urls)))
            edits = []
            for n, url in enumerate(targets):
                token = f"zfresh{n}"
                page = fresh_edit(corpus.fetch(url), token, clock)
                corpus = corpus.with_page(page)
                edits.append((token, page))
            for c in range(1, cfg.cycles + 1):
                crawled, harvested = dep.cycle(corpus)
                crawl_bytes += crawled
                recrawl += crawled
                harvest_bytes += harvested
                cycles += 1
                if all(_visible(dep, token, page) for token, page in edits):
                    latency = c
                    break

        counts, latencies = [], []
        for i, terms in enumerate(_workload(cfg)):
            start = time.perf_counter()
            try:
                resp = dep.query(terms, request_id=f"q{i}")
                counts.append(len(resp.results))
            except Exception:  # noqa: BLE001 - a failed query counts as zero results
                counts.append(0)
            latencies.append(round((time.perf_counter() - start) * 1000, 3))

    return MetricsReport(
        pages=len(all_urls),
        coverage_fraction=coverage,
        crawl_bytes=crawl_bytes,
        harvest_bytes=harvest_bytes,
        recrawl_bytes_equivalent=recrawl,
        metadata_ratio=round(ratio, 6),
        update_latency=latency,
        cycles_run=cycles,
        result_counts=tuple(counts),
        query_latency_ms=tuple(latencies),
    )


def _visible(dep: Deployment, token: str, page: Page) -> bool:
    resp = dep.query([token], request_id=f"fresh-{token}")
    return any(r.url == str(page.url) and r.title == page.title for r in resp.results)
