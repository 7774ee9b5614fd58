"""Top layer: the class-tree registry, fan-out search and score-sum merging."""

from __future__ import annotations

import threading
import time
import uuid
from collections import defaultdict
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path

from dris import protocol
from dris.index3 import MAX_RESULTS
from dris.protocol import ChildStatus, QueryRequest, QueryResponse
from dris.records import RankedResult, ServiceDescriptor
from dris.webgraph import (
    CLASS_PREFIX,
    DomainName,
    domain_from_class_name,
    is_under,
    parse_domain,
    reverse_class_name,
)

DEFAULT_TIMEOUT = 2.0


class RegistryError(ValueError):
    pass


class NotFound(LookupError):
    pass


class MergeError(ValueError):
    pass


class FederatedSearchError(RuntimeError):
    def __init__(self, message: str, child_status: Sequence[ChildStatus] = ()):
        super().__init__(message)
        self.child_status = tuple(child_status)


class Registry:
    """Every known search service, arranged as the DNS tree arranges domains.

    A node's children are the registered descriptors whose nearest registered
    ancestor is that node, so a node can always enumerate everything under
    its domain. Reads take a snapshot; registration is exclusive.
    """

    def __init__(self, descriptors: Iterable[ServiceDescriptor] = ()):
        self._lock = threading.Lock()
        self._by_class: dict[str, ServiceDescriptor] = {}
        for d in descriptors:
            self.register(d)

    def register(self, desc: ServiceDescriptor) -> Registry:
        if desc.class_name != reverse_class_name(desc.domain):
            raise RegistryError(
                f"class name {desc.class_name!r} does not match domain {desc.domain} "
                f"(expected {reverse_class_name(desc.domain)!r})"
            )
        if desc.kind not in protocol.KINDS:
            raise RegistryError(f"unknown node kind {desc.kind!r}")
        if not desc.endpoint:
            raise RegistryError(f"{desc.domain} has no endpoint")
        with self._lock:
            if desc.class_name in self._by_class:
                raise RegistryError(f"{desc.domain} is already registered")
            nodes = dict(self._by_class)
            nodes[desc.class_name] = desc
            self._by_class = nodes
        return self

    def __len__(self):
        return len(self._by_class)

    def __iter__(self):
        nodes = self._by_class
        return iter([nodes[k] for k in sorted(nodes)])

    def __contains__(self, name: str) -> bool:
        try:
            self.resolve(name)
        except NotFound:
            return False
        return True

    def resolve(self, name: str | DomainName) -> ServiceDescriptor:
        """Look up by domain (``hust.edu.cn``), address (``DRIS.hust.edu.cn``)
        or class name (``DRIS.cn.edu.hust``)."""
        nodes = self._by_class
        if isinstance(name, DomainName):
            found = nodes.get(reverse_class_name(name))
        elif name.startswith(CLASS_PREFIX + "."):
            found = nodes.get(name)
            if found is None:
                try:
                    found = nodes.get(reverse_class_name(parse_domain(name[len(CLASS_PREFIX) + 1:])))
                except ValueError:
                    found = None
        else:
            try:
                found = nodes.get(reverse_class_name(parse_domain(name)))
            except ValueError:
                found = None
        if found is None:
            raise NotFound(f"no service registered for {name}")
        return found

    def parent(self, desc: ServiceDescriptor) -> ServiceDescriptor | None:
        nodes = self._by_class
        for anc in desc.domain.ancestors():
            hit = nodes.get(reverse_class_name(anc))
            if hit is not None:
                return hit
        return None

    def children(self, name: str | DomainName) -> list[ServiceDescriptor]:
        node = self.resolve(name)
        return [d for d in self if d is not node and self.parent(d) == node]

    def descendants(self, name: str | DomainName) -> list[ServiceDescriptor]:
        root = self.resolve(name).domain
        return [d for d in self if d.domain != root and is_under(d.domain, root)]

    def under(self, scope: DomainName) -> list[ServiceDescriptor]:
        """Registered services at or below ``scope``, registered or not itself."""
        return [d for d in self if is_under(d.domain, scope)]

    def listing(self) -> protocol.RegistryListing:
        entries = []
        for d in self:
            parent = self.parent(d)
            entries.append(
                protocol.RegistryEntry(
                    d, parent.class_name if parent else None, tuple(c.class_name for c in self.children(d.domain))
                )
            )
        return protocol.RegistryListing(tuple(entries))

    def dump(self) -> str:
        rows = ["# class_name\tendpoint\tkind\n"]
        rows += [f"{d.class_name}\t{d.endpoint}\t{d.kind}\n" for d in self]
        return "".join(rows)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dump(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> Registry:
        reg = cls()
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise RegistryError(f"{path}:{n}: expected 3 tab-separated columns")
            class_name, endpoint, kind = parts
            reg.register(ServiceDescriptor(domain_from_class_name(class_name), class_name, endpoint, kind))
        return reg


def register_child(reg: Registry, desc: ServiceDescriptor) -> Registry:
    return reg.register(desc)


def resolve(reg: Registry, name: str | DomainName) -> ServiceDescriptor:
    return reg.resolve(name)


def merge_results(lists: Sequence[tuple[str, Sequence[RankedResult]]]) -> list[RankedResult]:
    """Sum each URL's scores across databases.

    Title and abstract come from the database that scored the page highest
    (ties: smallest database id). A result's sources are the union of the
    sources its contributors declared.
    """
    contribs: dict[str, list[tuple[str, RankedResult]]] = defaultdict(list)
    seen_dbs = set()
    for db_id, results in lists:
        if db_id in seen_dbs:
            raise MergeError(f"database {db_id} listed twice")
        seen_dbs.add(db_id)
        urls = set()
        for r in results:
            if r.url in urls:
                raise MergeError(f"database {db_id} returned {r.url} twice")
            urls.add(r.url)
            contribs[r.url].append((db_id, r))
    merged = []
    for url, items in contribs.items():
        _, best = min(items, key=lambda item: (-item[1].score, item[0]))
        sources = sorted({s for db_id, r in items for s in (r.sources or (db_id,))})
        merged.append(RankedResult(url, sum(r.score for _, r in items), tuple(sources), best.title, best.abstract))
    merged.sort(key=lambda r: (-r.score, r.url))
    return merged


@dataclass(frozen=True)
class FanoutResult:
    results: tuple[RankedResult, ...]
    child_status: tuple[ChildStatus, ...]


def search_targets(reg: Registry, scope: DomainName) -> list[ServiceDescriptor]:
    """Layer-2 services under ``scope``; layer-3 ones when the scope sits below layer 2."""
    nodes = reg.under(scope)
    layer2 = [d for d in nodes if d.kind == "layer2"]
    return layer2 or [d for d in nodes if d.kind == "layer3"]


Connector = Callable[[ServiceDescriptor], object]


def fanout_search(
    reg: Registry,
    scope: DomainName | str,
    query: Sequence[str],
    timeout: float = DEFAULT_TIMEOUT,
    connect: Connector | None = None,
    *,
    max_results: int = MAX_RESULTS,
    request_id: str | None = None,
) -> FanoutResult:
    """Query every searchable service under ``scope`` at once and merge.

    Children that fail or miss the deadline are left out of the merge and
    reported in ``child_status``. If none answer, :class:`FederatedSearchError`.
    """
    if connect is None:
        from dris.transport import connect_endpoint as connect
    if isinstance(scope, str):
        scope = parse_domain(scope[len(CLASS_PREFIX) + 1:] if scope.startswith(CLASS_PREFIX + ".") else scope)
    targets = search_targets(reg, scope)
    if not targets:
        raise FederatedSearchError(f"nothing searchable under {scope}")
    request = QueryRequest(tuple(query), request_id or uuid.uuid4().hex, max_results, str(scope))

    def call(desc: ServiceDescriptor) -> QueryResponse:
        return connect(desc).search(request, timeout=timeout)

    pool = ThreadPoolExecutor(max_workers=len(targets), thread_name_prefix="fanout")
    futures = {pool.submit(call, d): d for d in targets}
    done, _ = wait(futures, timeout=timeout)
    pool.shutdown(wait=False, cancel_futures=True)

    statuses = []
    lists = []
    for fut, desc in sorted(futures.items(), key=lambda fd: fd[1].class_name):
        node = str(desc.domain)
        if fut not in done:
            statuses.append(ChildStatus(node, "timeout", f"no answer within {timeout:g}s"))
            continue
        err = fut.exception()
        if err is not None:
            statuses.append(ChildStatus(node, "failed", f"{type(err).__name__}: {err}"))
            continue
        resp = fut.result()
        if resp.request_id != request.request_id:
            statuses.append(ChildStatus(node, "failed", "request_id mismatch"))
            continue
        statuses.append(ChildStatus(node, "ok"))
        lists.append((node, resp.results))
    if not lists:
        raise FederatedSearchError(f"no service under {scope} answered", statuses)
    return FanoutResult(tuple(merge_results(lists)[:max_results]), tuple(statuses))


class TopNode:
    """Meta-search node: holds no pages, only the registry."""

    def __init__(
        self,
        domain: DomainName,
        registry: Registry | None = None,
        connect: Connector | None = None,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        self.domain = domain
        self.registry = Registry() if registry is None else registry
        self.connect = connect
        self.timeout = timeout

    @property
    def node_id(self) -> str:
        return str(self.domain)

    def search(self, request: QueryRequest, timeout: float | None = None) -> QueryResponse:
        start = time.perf_counter()
        out = fanout_search(
            self.registry,
            request.scope or self.domain,
            request.query,
            self.timeout if timeout is None else timeout,
            self.connect,
            max_results=request.max_results,
            request_id=request.request_id,
        )
        return QueryResponse(
            request_id=request.request_id,
            results=out.results,
            child_status=out.child_status,
            elapsed_ms=int((time.perf_counter() - start) * 1000),
        )

    def register(self, desc: ServiceDescriptor) -> ServiceDescriptor:
        self.registry.register(desc)
        return desc
