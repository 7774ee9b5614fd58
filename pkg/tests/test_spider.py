from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_corpus
from dris.spider import CrawlError, crawl_domain, crawl_hosts, crawl_site, scan_addresses
from dris.webgraph import CorpusConfig, Url, generate_corpus, page_bytes, parse_domain


@pytest.fixture
def two_sites():
    return make_corpus({
        "www.a.edu.cn": {
            "/": ("home", "alpha", ["http://www.a.edu.cn/x", "http://www.b.edu.cn/p"]),
            "/x": ("x", "beta", ["http://www.b.edu.cn/p", "http://www.a.edu.cn/", "http://www.a.edu.cn/gone"]),
        },
        "www.b.edu.cn": {
            "/": ("b home", "gamma", ["http://www.b.edu.cn/p"]),
            "/p": ("p", "delta", ["http://www.b.edu.cn/hidden"]),
            "/hidden": ("hidden", "eps", []),
        },
    })


def test_single_page_site():
    corpus = make_corpus({"www.a.edu.cn": {"/": ("t", "b", [])}})
    result = crawl_site("www.a.edu.cn", corpus.fetch)
    assert len(result.own_pages) == 1
    assert result.external_pages == ()
    assert result.fetch_count == 1


def test_external_copy_per_link_occurrence(two_sites):
    result = crawl_site("www.a.edu.cn", two_sites.fetch)
    assert [str(u) for u, _ in result.external_pages] == ["http://www.b.edu.cn/p"] * 2


def test_external_pages_are_not_followed(two_sites):
    result = crawl_site("www.a.edu.cn", two_sites.fetch)
    fetched = {p.url for p in result.own_pages} | {u for u, _ in result.external_pages}
    assert Url.parse("http://www.b.edu.cn/hidden") not in fetched
    assert all(p.host == "www.a.edu.cn" for p in result.own_pages)


def test_dead_link_is_tallied(two_sites):
    result = crawl_site("www.a.edu.cn", two_sites.fetch)
    assert result.dead_links == 1
    assert len(result.own_pages) == 2


def test_breadth_first_order():
    corpus = make_corpus({"www.a.edu.cn": {
        "/": ("r", "", ["http://www.a.edu.cn/1", "http://www.a.edu.cn/2"]),
        "/1": ("1", "", ["http://www.a.edu.cn/3"]),
        "/2": ("2", "", ["http://www.a.edu.cn/1"]),
        "/3": ("3", "", []),
    }})
    result = crawl_site("www.a.edu.cn", corpus.fetch)
    assert [p.url.path for p in result.own_pages] == ["/", "/1", "/2", "/3"]


def test_unreachable_root():
    corpus = make_corpus({"www.a.edu.cn": {"/x": ("t", "b", [])}})
    with pytest.raises(CrawlError):
        crawl_site("www.a.edu.cn", corpus.fetch)


def test_bytes_fetched(two_sites):
    result = crawl_site("www.a.edu.cn", two_sites.fetch)
    expected = sum(map(page_bytes, result.own_pages)) + sum(page_bytes(p) for _, p in result.external_pages)
    assert result.bytes_fetched == expected


def test_crawl_is_idempotent(tiny_corpus):
    for host in tiny_corpus.sites:
        assert crawl_site(host, tiny_corpus.fetch) == crawl_site(host, tiny_corpus.fetch)


class TestCrawlDomain:
    def test_sorted_host_order(self):
        corpus = make_corpus({
            "b.u.edu.cn": {"/": ("b", "", [])},
            "a.u.edu.cn": {"/": ("a", "", [])},
        })
        assert [r.origin_site for r in crawl_domain(parse_domain("u.edu.cn"), corpus)] == ["a.u.edu.cn", "b.u.edu.cn"]

    def test_absent_domain(self, tiny_corpus):
        assert crawl_domain(parse_domain("nowhere.cn"), tiny_corpus) == []

    def test_page_count(self):
        corpus = generate_corpus(
            CorpusConfig(domains=1, sites_per_domain=2, pages_per_site=3, cross_site_link_prob=0), 0
        )
        results = crawl_domain(parse_domain("u0.edu.cn"), corpus)
        assert sum(len(r.own_pages) for r in results) == 6


class TestScanAddresses:
    def test_no_unregistered_hosts(self, tiny_corpus):
        for d in tiny_corpus.dns:
            assert scan_addresses(tiny_corpus, parse_domain(d)) == tiny_corpus.dns[d]

    def test_finds_unregistered_host(self):
        corpus = generate_corpus(CorpusConfig(domains=2, sites_per_domain=2, unregistered_fraction=0.25), 1)
        (ip,) = corpus.unregistered
        found = [d for d in corpus.dns if ip in scan_addresses(corpus, parse_domain(d))]
        assert len(found) == 1
        d = found[0]
        assert scan_addresses(corpus, parse_domain(d)) == corpus.dns[d] | {ip}

    def test_parent_scan_covers_children(self):
        corpus = generate_corpus(CorpusConfig(domains=3, unregistered_fraction=0.5), 2)
        assert scan_addresses(corpus, parse_domain("edu.cn")) == frozenset(corpus.sites)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    domains=st.integers(1, 3),
    sites=st.integers(1, 3),
    pages=st.integers(1, 8),
    frac=st.sampled_from([0.0, 0.25, 0.5]),
    dead=st.sampled_from([0.0, 0.2]),
)
def test_scan_crawl_covers_corpus(seed, domains, sites, pages, frac, dead):
    corpus = generate_corpus(
        CorpusConfig(domains=domains, sites_per_domain=sites, pages_per_site=pages,
                     unregistered_fraction=frac, dead_link_prob=dead), seed)
    crawled = set()
    for d in corpus.dns:
        for r in crawl_domain(parse_domain(d), corpus, scan=True):
            crawled.update(p.url for p in r.own_pages)
            assert all(link.host != r.origin_site for link, _ in r.external_pages)
    assert crawled == {p.url for p in corpus.pages()}


def test_crawl_hosts_matches_per_site(tiny_corpus):
    hosts = list(tiny_corpus.sites)
    assert crawl_hosts(hosts, tiny_corpus.fetch) == [crawl_site(h, tiny_corpus.fetch) for h in sorted(hosts)]
