"""Site-scoped crawling with one-hop external fetch, plus the address scan."""

from __future__ import annotations

import ipaddress
from collections import deque
from collections.abc import Callable, Iterable
from dataclasses import dataclass

from dris.webgraph import Corpus, DomainName, Page, Url, page_bytes

Fetcher = Callable[[Url], "Page | None"]


class CrawlError(RuntimeError):
    pass


@dataclass(frozen=True)
class CrawlResult:
    origin_site: str
    own_pages: tuple[Page, ...]
    # one entry per off-site link occurrence, in crawl order
    external_pages: tuple[tuple[Url, Page], ...]
    fetch_count: int
    bytes_fetched: int
    dead_links: int = 0

    def __post_init__(self):
        assert all(p.host == self.origin_site for p in self.own_pages)
        assert all(p.host != self.origin_site for _, p in self.external_pages)
        assert self.fetch_count == len(self.own_pages) + len(self.external_pages)


def crawl_site(site_host: str, fetcher: Fetcher) -> CrawlResult:
    """Breadth-first crawl of one site.

    Same-host links are followed (document order, visited set on the
    normalized URL). Each off-site link occurrence fetches its target once and
    the crawl goes no further from there.
    """
    root = Url.root(site_host)
    root_page = fetcher(root)
    if root_page is None:
        raise CrawlError(f"root page of {site_host} is unreachable")

    own: list[Page] = []
    external: list[tuple[Url, Page]] = []
    fetched_bytes = 0
    dead = 0
    visited = {root}
    frontier: deque[tuple[Url, Page]] = deque([(root, root_page)])
    while frontier:
        _, page = frontier.popleft()
        own.append(page)
        fetched_bytes += page_bytes(page)
        for link in page.links:
            if link.host == site_host:
                if link in visited:
                    continue
                visited.add(link)
                target = fetcher(link)
                if target is None:
                    dead += 1
                else:
                    frontier.append((link, target))
            else:
                target = fetcher(link)
                if target is None:
                    dead += 1
                    continue
                external.append((link, target))
                fetched_bytes += page_bytes(target)
    return CrawlResult(
        origin_site=site_host,
        own_pages=tuple(own),
        external_pages=tuple(external),
        fetch_count=len(own) + len(external),
        bytes_fetched=fetched_bytes,
        dead_links=dead,
    )


def scan_addresses(corpus: Corpus, d: DomainName) -> frozenset[str]:
    """Registered hosts under ``d`` plus unregistered hosts inside its subnets."""
    nets = corpus.subnets_under(d)
    found = set()
    for host in corpus.unregistered:
        try:
            addr = ipaddress.ip_address(host)
        except ValueError:
            continue
        if any(addr in net for net in nets):
            found.add(host)
    return corpus.dns_lookup(d) | found


def crawl_hosts(hosts: Iterable[str], fetcher: Fetcher) -> list[CrawlResult]:
    return [crawl_site(h, fetcher) for h in sorted(hosts)]


def crawl_domain(d: DomainName, corpus: Corpus, scan: bool = False) -> list[CrawlResult]:
    """One crawl per host of ``d`` in sorted host order.

    Hosts come from the DNS table, or from :func:`scan_addresses` when ``scan``
    is set.
    """
    hosts = scan_addresses(corpus, d) if scan else corpus.dns_lookup(d)
    return crawl_hosts(hosts, corpus.fetch)
