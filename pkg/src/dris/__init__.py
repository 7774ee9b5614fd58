"""Domain-partitioned federated search: crawl, index, harvest, federate."""

from dris.webgraph import (
    Corpus,
    CorpusConfig,
    DomainName,
    Page,
    Site,
    Url,
    generate_corpus,
    is_under,
    parse_domain,
    reverse_class_name,
)

__all__ = [
    "Corpus",
    "CorpusConfig",
    "DomainName",
    "Page",
    "Site",
    "Url",
    "generate_corpus",
    "is_under",
    "parse_domain",
    "reverse_class_name",
]

__version__ = "0.1.0"
