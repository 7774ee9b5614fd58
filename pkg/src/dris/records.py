"""Value types that travel between layers."""

from __future__ import annotations

from dataclasses import dataclass, replace

from dris.webgraph import DomainName, reverse_class_name


@dataclass(frozen=True, order=True)
class KeywordScore:
    term: str
    score: int


@dataclass(frozen=True)
class MetadataRecord:
    """Harvestable surrogate of a page as seen by one crawling site.

    ``origin_site`` is the site whose crawl produced the copy, which differs
    from the URL's host for pages fetched through an off-site link.
    ``overlap_score`` is only set on records re-exported by a layer-2 node.
    """

    url: str
    origin_site: str
    title: str
    encoding: str
    abstract: str
    keywords: tuple[KeywordScore, ...]
    last_modified: int
    overlap_score: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "keywords", tuple(self.keywords))

    def keyword_map(self) -> dict[str, int]:
        return {k.term: k.score for k in self.keywords}

    def with_overlap(self, score: int) -> MetadataRecord:
        return replace(self, overlap_score=score)


@dataclass(frozen=True)
class RankedResult:
    url: str
    score: int
    sources: tuple[str, ...]
    title: str = ""
    abstract: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))


def sort_results(results):
    return sorted(results, key=lambda r: (-r.score, r.url))


@dataclass(frozen=True)
class ServiceDescriptor:
    """A search endpoint in the class tree.

    ``kind`` is one of ``layer3``, ``layer2`` or ``top``. The class name is
    not checked here; the registry refuses inconsistent descriptors.
    """

    domain: DomainName
    class_name: str
    endpoint: str
    kind: str

    @classmethod
    def for_domain(cls, domain: DomainName, endpoint: str, kind: str) -> ServiceDescriptor:
        return cls(domain, reverse_class_name(domain), endpoint, kind)
