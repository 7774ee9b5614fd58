from __future__ import annotations

from pathlib import Path
from types import MappingProxyType

import pytest

from dris.webgraph import Corpus, CorpusConfig, Page, Site, Url, generate_corpus, parse_domain

GOLDEN = Path(__file__).parent / "golden"


def make_corpus(sites: dict, unregistered=(), subnets=None) -> Corpus:
    """Hand-built corpus.

    ``sites`` maps host -> {path: (title, body text, [link urls])}. Named hosts
    are registered under their last three labels.
    """
    built = {}
    dns: dict[str, set[str]] = {}
    for host, pages in sites.items():
        entries = {}
        for n, (path, (title, body, links)) in enumerate(pages.items()):
            url = Url(host, path)
            entries[url] = Page(
                url=url,
                title=title,
                body=tuple(body.split()),
                links=tuple(Url.parse(u) for u in links),
                last_modified=1000 + n,
            )
        built[host] = Site(host, MappingProxyType(entries))
        if host not in unregistered:
            domain = ".".join(host.split(".")[-3:])
            dns.setdefault(domain, set()).add(host)
    return Corpus(built, dns, frozenset(unregistered), subnets or {})


def link_graph_overlap(corpus: Corpus, scope_hosts=None) -> dict[str, int]:
    """Distinct other sites holding at least one live link to each page.

    Brute force over the raw link graph; ``scope_hosts`` limits which linking
    sites count.
    """
    linkers: dict[str, set[str]] = {str(p.url): set() for p in corpus.pages()}
    for page in corpus.pages():
        if scope_hosts is not None and page.host not in scope_hosts:
            continue
        for link in page.links:
            if link.host != page.host and str(link) in linkers:
                linkers[str(link)].add(page.host)
    return {u: len(s) for u, s in linkers.items()}


@pytest.fixture
def tiny_corpus() -> Corpus:
    return generate_corpus(CorpusConfig(domains=2, sites_per_domain=2, pages_per_site=3), seed=7)


@pytest.fixture
def edu():
    return parse_domain("edu.cn")


# -- acceptance summary --------------------------------------------------------

# criterion label -> outcome of each test carrying it
_ACCEPTANCE: dict[str, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE.setdefault(marker.args[0], []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcomes in _ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if all(outcomes) else 'FAIL'}  {label}")
