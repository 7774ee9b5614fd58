"""Domains, URLs, pages and synthetic corpora.

A corpus stands in for the part of the web owned by a set of organisations.
Every site belongs to exactly one organisational (third-level) domain, either
as a host registered under that domain's name or as a bare address inside the
domain's subnet that only an address scan will find.
"""

from __future__ import annotations

import ipaddress
import itertools
import random
import re
from collections.abc import Iterator, Mapping
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from types import MappingProxyType
from urllib.parse import quote, unquote

CLASS_PREFIX = "DRIS"

_LABEL_RE = re.compile(r"^[a-z0-9-]+$")


class DomainError(ValueError):
    """A domain name with an empty or illegal label."""

    def __init__(self, name: str, label: str, reason: str):
        super().__init__(f"bad domain {name!r}: label {label!r} {reason}")
        self.name = name
        self.label = label


class CorpusError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class DomainName:
    """Dotted name stored most-specific label first (``hust.edu.cn``)."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.labels:
            raise DomainError("", "", "is empty")
        for label in self.labels:
            if not label:
                raise DomainError(".".join(self.labels), label, "is empty")
            if not _LABEL_RE.match(label):
                raise DomainError(".".join(self.labels), label, "has an illegal character")

    @property
    def level(self) -> int:
        return len(self.labels)

    def parent(self) -> DomainName | None:
        if len(self.labels) == 1:
            return None
        return DomainName(self.labels[1:])

    def ancestors(self) -> Iterator[DomainName]:
        node = self.parent()
        while node is not None:
            yield node
            node = node.parent()

    def __str__(self) -> str:
        return ".".join(self.labels)


def parse_domain(name: str) -> DomainName:
    if not isinstance(name, str) or not name:
        raise DomainError(str(name), "", "is empty")
    labels = name.lower().split(".")
    for label in labels:
        if not label:
            raise DomainError(name, label, "is empty")
        if not _LABEL_RE.match(label):
            raise DomainError(name, label, "has an illegal character")
    return DomainName(tuple(labels))


def reverse_class_name(d: DomainName) -> str:
    """``hust.edu.cn`` -> ``DRIS.cn.edu.hust``."""
    return ".".join((CLASS_PREFIX, *reversed(d.labels)))


def service_name(d: DomainName) -> str:
    """The address spelling of a node: ``DRIS.hust.edu.cn``."""
    return f"{CLASS_PREFIX}.{d}"


def domain_from_class_name(class_name: str) -> DomainName:
    prefix = CLASS_PREFIX + "."
    if not class_name.startswith(prefix):
        raise DomainError(class_name, class_name.split(".")[0], f"is not {CLASS_PREFIX!r}")
    rest = class_name[len(prefix):]
    return parse_domain(".".join(reversed(rest.split("."))))


def is_under(child: DomainName, parent: DomainName) -> bool:
    n = len(parent.labels)
    return len(child.labels) >= n and child.labels[len(child.labels) - n:] == parent.labels


@dataclass(frozen=True, order=True)
class Url:
    """Normalized URL: lowercase host, no fragment, no trailing slash except root."""

    host: str
    path: str = "/"

    def __post_init__(self):
        host = self.host.lower().strip()
        if not host or "/" in host:
            raise ValueError(f"bad host {self.host!r}")
        path = self.path.split("#", 1)[0] or "/"
        if not path.startswith("/"):
            path = "/" + path
        if len(path) > 1:
            path = path.rstrip("/") or "/"
        object.__setattr__(self, "host", host)
        object.__setattr__(self, "path", path)

    @classmethod
    def parse(cls, text: str) -> Url:
        rest = text.strip()
        if "://" in rest:
            scheme, rest = rest.split("://", 1)
            if scheme.lower() not in ("http", "https"):
                raise ValueError(f"unsupported scheme in {text!r}")
        rest = rest.split("#", 1)[0]
        host, sep, path = rest.partition("/")
        return cls(host, "/" + path if sep else "/")

    @classmethod
    def root(cls, host: str) -> Url:
        return cls(host, "/")

    def __str__(self) -> str:
        return f"http://{self.host}{self.path}"


@dataclass(frozen=True)
class Page:
    url: Url
    title: str
    body: tuple[str, ...]
    links: tuple[Url, ...] = ()
    encoding: str = "utf-8"
    last_modified: int = 0

    @property
    def host(self) -> str:
        return self.url.host


@dataclass(frozen=True)
class Site:
    id: str
    pages: Mapping[Url, Page]

    def __post_init__(self):
        for url in self.pages:
            if url.host != self.id:
                raise CorpusError(f"page {url} does not belong to site {self.id}")

    @property
    def root(self) -> Url:
        return Url.root(self.id)


@dataclass(frozen=True)
class CorpusConfig:
    """Size and shape knobs for :func:`generate_corpus`."""

    domains: int = 2
    sites_per_domain: int = 2
    pages_per_site: int = 3
    vocabulary_size: int = 200
    cross_site_link_prob: float = 0.3
    unregistered_fraction: float = 0.0
    parent_domains: tuple[str, ...] = ("edu.cn",)
    body_tokens: tuple[int, int] = (20, 60)
    title_tokens: tuple[int, int] = (2, 4)
    external_link_slots: int = 2
    extra_internal_links: int = 1
    dead_link_prob: float = 0.0
    zipf_exponent: float = 1.1
    base_time: int = 1_000_000

    def __post_init__(self):
        for name in ("domains", "sites_per_domain", "pages_per_site", "vocabulary_size"):
            if getattr(self, name) < 1:
                raise CorpusError(f"{name} must be at least 1")
        if not self.parent_domains:
            raise CorpusError("parent_domains must not be empty")
        if not 0.0 <= self.unregistered_fraction <= 1.0:
            raise CorpusError("unregistered_fraction must lie in [0, 1]")
        if self.domains > 65536 or self.sites_per_domain > 250:
            raise CorpusError("too many domains or sites for the address plan")
        lo, hi = self.body_tokens
        if lo < 0 or hi < lo:
            raise CorpusError("body_tokens must be an increasing non-negative pair")
        object.__setattr__(self, "parent_domains", tuple(self.parent_domains))
        object.__setattr__(self, "body_tokens", tuple(self.body_tokens))
        object.__setattr__(self, "title_tokens", tuple(self.title_tokens))

    @classmethod
    def from_dict(cls, data: Mapping) -> CorpusConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise CorpusError(f"unknown corpus config keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


@dataclass(frozen=True, eq=False)
class Corpus:
    """Immutable snapshot of every site plus the naming data used to find them.

    ``dns`` maps each organisational domain to its registered hosts.
    ``subnets`` maps the same domains to the address block an address scan
    sweeps; ``unregistered`` hosts are addresses inside those blocks.
    """

    sites: Mapping[str, Site]
    dns: Mapping[str, frozenset[str]]
    unregistered: frozenset[str] = frozenset()
    subnets: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sites", MappingProxyType(dict(sorted(self.sites.items()))))
        object.__setattr__(
            self, "dns", MappingProxyType({k: frozenset(v) for k, v in sorted(self.dns.items())})
        )
        object.__setattr__(self, "unregistered", frozenset(self.unregistered))
        object.__setattr__(self, "subnets", MappingProxyType(dict(sorted(self.subnets.items()))))
        registered = set().union(*self.dns.values()) if self.dns else set()
        if registered & self.unregistered:
            raise CorpusError("a host is both registered and unregistered")
        for domain, hosts in self.dns.items():
            d = parse_domain(domain)
            for host in hosts:
                if not is_under(parse_domain(host), d):
                    raise CorpusError(f"host {host} is registered under {domain} but not named under it")
        pages = {}
        for site in self.sites.values():
            pages.update(site.pages)
        object.__setattr__(self, "_pages", pages)

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            dict(self.sites) == dict(other.sites)
            and dict(self.dns) == dict(other.dns)
            and self.unregistered == other.unregistered
            and dict(self.subnets) == dict(other.subnets)
        )

    def fetch(self, url: Url) -> Page | None:
        return self._pages.get(url)

    def pages(self) -> Iterator[Page]:
        for site in self.sites.values():
            yield from (site.pages[u] for u in sorted(site.pages))

    @property
    def page_count(self) -> int:
        return len(self._pages)

    def registered_hosts(self) -> frozenset[str]:
        return frozenset().union(*self.dns.values()) if self.dns else frozenset()

    def dns_lookup(self, d: DomainName) -> frozenset[str]:
        """Registered hosts named under ``d``."""
        return frozenset(h for h in self.registered_hosts() if is_under(parse_domain(h), d))

    def subnets_under(self, d: DomainName) -> list[ipaddress.IPv4Network]:
        return [
            ipaddress.ip_network(net)
            for domain, net in self.subnets.items()
            if is_under(parse_domain(domain), d)
        ]

    def with_page(self, page: Page) -> Corpus:
        """A new corpus where ``page`` replaces the page at the same URL."""
        site = self.sites.get(page.host)
        if site is None or page.url not in site.pages:
            raise CorpusError(f"no page at {page.url} to replace")
        pages = dict(site.pages)
        pages[page.url] = page
        sites = dict(self.sites)
        sites[site.id] = Site(site.id, MappingProxyType(pages))
        return Corpus(sites, self.dns, self.unregistered, self.subnets)


_WORDS = (
    "red fox dog cat river mountain library student campus network search engine "
    "page index domain server paper science history music water energy city market "
    "course lecture exam physics chemistry biology computer software data model "
    "system theory report news sport health medicine art design language culture "
    "garden forest ocean bridge road train station light sound color number graph "
    "tree query result rank link spider web school teacher research project grant "
    "winter summer spring autumn north south east west green blue yellow black white"
).split()


def make_vocabulary(size: int) -> list[str]:
    words = _WORDS[:size]
    words.extend(f"w{n}" for n in range(len(words), size))
    return words


def _host_name(domain: str, j: int) -> str:
    return f"www.{domain}" if j == 0 else f"s{j}.{domain}"


def generate_corpus(config: CorpusConfig, seed: int) -> Corpus:
    """Deterministic synthetic web for ``(config, seed)``.

    Domains are named ``u<i>.<parent>`` with parents taken round-robin from
    ``config.parent_domains``; domain ``i`` owns subnet ``10.<i//256>.<i%256>.0/24``.
    Each site's pages hang off a random spanning tree rooted at ``/`` so every
    page is reachable by internal links. Body and title tokens follow a
    Zipf-like law over the vocabulary.
    """
    rng = random.Random(seed)
    vocab = make_vocabulary(config.vocabulary_size)
    cum_weights = list(
        itertools.accumulate(1.0 / (rank ** config.zipf_exponent) for rank in range(1, len(vocab) + 1))
    )

    def draw(n: int) -> list[str]:
        return rng.choices(vocab, cum_weights=cum_weights, k=n)

    domains = []
    subnets = {}
    for i in range(config.domains):
        parent = parse_domain(config.parent_domains[i % len(config.parent_domains)])
        name = f"u{i}.{parent}"
        domains.append(name)
        subnets[name] = f"10.{i // 256}.{i % 256}.0/24"

    slots = [(i, j) for i in range(config.domains) for j in range(config.sites_per_domain)]
    n_unreg = round(config.unregistered_fraction * len(slots))
    unreg_slots = set(rng.sample(slots, n_unreg))

    hosts: list[str] = []
    dns: dict[str, set[str]] = {d: set() for d in domains}
    unregistered = set()
    for i, j in slots:
        if (i, j) in unreg_slots:
            net = ipaddress.ip_network(subnets[domains[i]])
            host = str(net.network_address + j + 1)
            unregistered.add(host)
        else:
            host = _host_name(domains[i], j)
            dns[domains[i]].add(host)
        hosts.append(host)

    urls = {
        host: [Url(host, "/")] + [Url(host, f"/p{k}") for k in range(1, config.pages_per_site)]
        for host in hosts
    }
    links: dict[Url, list[Url]] = {u: [] for site_urls in urls.values() for u in site_urls}
    dead = 0
    for host in hosts:
        site_urls = urls[host]
        others = [h for h in hosts if h != host]
        for k in range(1, len(site_urls)):
            links[site_urls[rng.randrange(k)]].append(site_urls[k])
        for u in site_urls:
            for _ in range(rng.randint(0, config.extra_internal_links)):
                links[u].append(rng.choice(site_urls))
            if others:
                for _ in range(config.external_link_slots):
                    if rng.random() < config.cross_site_link_prob:
                        links[u].append(rng.choice(urls[rng.choice(others)]))
            if config.dead_link_prob and rng.random() < config.dead_link_prob:
                dead += 1
                links[u].append(Url(host, f"/missing{dead}"))
            rng.shuffle(links[u])

    encodings = ("utf-8", "gb2312", "iso-8859-1")
    sites = {}
    for host in hosts:
        pages = {}
        for u in urls[host]:
            pages[u] = Page(
                url=u,
                title=" ".join(draw(rng.randint(*config.title_tokens))),
                body=tuple(draw(rng.randint(*config.body_tokens))),
                links=tuple(links[u]),
                encoding=rng.choices(encodings, weights=(8, 1, 1))[0],
                last_modified=config.base_time + rng.randrange(86_400),
            )
        sites[host] = Site(host, MappingProxyType(pages))
    return Corpus(sites, dns, frozenset(unregistered), subnets)


# -- on-disk layout ---------------------------------------------------------

_HEADER_FIELDS = ("url", "title", "encoding", "last_modified", "links")


def serialize_page(page: Page) -> str:
    if "\n" in page.title:
        raise CorpusError(f"title of {page.url} contains a newline")
    header = [
        f"url: {page.url}",
        f"title: {page.title}",
        f"encoding: {page.encoding}",
        f"last_modified: {page.last_modified}",
        "links: " + " ".join(str(u) for u in page.links),
    ]
    return "\n".join(header) + "\n\n" + " ".join(page.body) + "\n"


def page_bytes(page: Page) -> int:
    return len(serialize_page(page).encode("utf-8"))


def parse_page(text: str) -> Page:
    head, sep, body = text.partition("\n\n")
    if not sep:
        raise CorpusError("page file has no blank line after its header")
    values = {}
    for line in head.split("\n"):
        key, colon, value = line.partition(":")
        if not colon or key not in _HEADER_FIELDS:
            raise CorpusError(f"bad page header line {line!r}")
        values[key] = value[1:] if value.startswith(" ") else value
    missing = [k for k in _HEADER_FIELDS if k not in values]
    if missing:
        raise CorpusError(f"page header missing {missing}")
    return Page(
        url=Url.parse(values["url"]),
        title=values["title"],
        body=tuple(body.split()),
        links=tuple(Url.parse(u) for u in values["links"].split()),
        encoding=values["encoding"],
        last_modified=int(values["last_modified"]),
    )


def page_filename(url: Url) -> str:
    return quote(url.path, safe="") + ".page"


def save_corpus(corpus: Corpus, directory: str | Path) -> Path:
    root = Path(directory)
    (root / "pages").mkdir(parents=True, exist_ok=True)
    for site in corpus.sites.values():
        site_dir = root / "pages" / site.id
        site_dir.mkdir(exist_ok=True)
        for url in sorted(site.pages):
            (site_dir / page_filename(url)).write_text(serialize_page(site.pages[url]), encoding="utf-8")
    dns_lines = [f"{d}\t{h}\n" for d, hosts in corpus.dns.items() for h in sorted(hosts)]
    # domains with no registered host still need a row so the domain list survives
    dns_lines += [f"{d}\t\n" for d, hosts in corpus.dns.items() if not hosts]
    (root / "dns.tsv").write_text("".join(sorted(dns_lines)), encoding="utf-8")
    (root / "unregistered.txt").write_text(
        "".join(f"{h}\n" for h in sorted(corpus.unregistered)), encoding="utf-8"
    )
    (root / "subnets.tsv").write_text(
        "".join(f"{d}\t{net}\n" for d, net in corpus.subnets.items()), encoding="utf-8"
    )
    return root


def load_corpus(directory: str | Path) -> Corpus:
    root = Path(directory)
    if not (root / "dns.tsv").is_file():
        raise CorpusError(f"{root} is not a corpus directory (no dns.tsv)")
    dns: dict[str, set[str]] = {}
    for line in (root / "dns.tsv").read_text(encoding="utf-8").splitlines():
        domain, _, host = line.partition("\t")
        dns.setdefault(domain, set())
        if host:
            dns[domain].add(host)
    unreg_file = root / "unregistered.txt"
    unregistered = set(unreg_file.read_text(encoding="utf-8").split()) if unreg_file.exists() else set()
    subnets = {}
    subnet_file = root / "subnets.tsv"
    if subnet_file.exists():
        for line in subnet_file.read_text(encoding="utf-8").splitlines():
            domain, _, net = line.partition("\t")
            subnets[domain] = net
    sites = {}
    for site_dir in sorted(p for p in (root / "pages").iterdir() if p.is_dir()):
        pages = {}
        for f in sorted(site_dir.glob("*.page")):
            page = parse_page(f.read_text(encoding="utf-8"))
            if page.url.path != unquote(f.name[: -len(".page")]):
                raise CorpusError(f"{f} holds {page.url}")
            pages[page.url] = page
        sites[site_dir.name] = Site(site_dir.name, MappingProxyType(pages))
    return Corpus(sites, dns, frozenset(unregistered), subnets)

