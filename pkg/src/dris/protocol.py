"""Wire messages spoken by every node, and their JSON codec.

Every message is a JSON object carrying ``type`` and ``version``. Encoding
is canonical (sorted keys, no insignificant whitespace, UTF-8) so equal
messages always produce equal bytes. ``docs/protocol.md`` is the reference.
"""

from __future__ import annotations

import json
import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from dris.records import KeywordScore, MetadataRecord, RankedResult, ServiceDescriptor
from dris.webgraph import parse_domain, reverse_class_name

PROTOCOL_VERSION = "1.0"
SUPPORTED_MAJOR = 1
HARVEST_PAGE_LIMIT = 1000
STATUSES = ("ok", "failed", "timeout")
KINDS = ("layer3", "layer2", "top")

_VERSION_RE = re.compile(r"^(\d+)\.(\d+)$")


class DecodeError(ValueError):
    """Raised for malformed messages; ``field`` names the offending field."""

    def __init__(self, field: str, message: str, violations: list[Violation] | None = None):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.violations = violations or []


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def __str__(self):
        return f"{self.field}: {self.message}"


@dataclass(frozen=True)
class QueryRequest:
    query: tuple[str, ...]
    request_id: str
    max_results: int = 100
    scope: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "query", tuple(self.query))


@dataclass(frozen=True)
class ChildStatus:
    node: str
    status: str
    detail: str = ""


@dataclass(frozen=True)
class QueryResponse:
    request_id: str
    results: tuple[RankedResult, ...]
    child_status: tuple[ChildStatus, ...] = ()
    elapsed_ms: int = 0

    def __post_init__(self):
        object.__setattr__(self, "results", tuple(self.results))
        object.__setattr__(self, "child_status", tuple(self.child_status))


@dataclass(frozen=True)
class HarvestResponse:
    records: tuple[MetadataRecord, ...]
    max_timestamp: int
    truncated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))


@dataclass(frozen=True)
class RegistryEntry:
    descriptor: ServiceDescriptor
    parent: str | None
    children: tuple[str, ...]


@dataclass(frozen=True)
class RegistryListing:
    entries: tuple[RegistryEntry, ...]


@dataclass(frozen=True)
class HarvestReport:
    records: int
    warnings: tuple[str, ...] = ()
    cursors: Mapping[str, int] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, HarvestReport):
            return NotImplemented
        return (self.records, self.warnings, dict(self.cursors)) == (
            other.records, other.warnings, dict(other.cursors))


@dataclass(frozen=True)
class ErrorMessage:
    code: str
    message: str
    child_status: tuple[ChildStatus, ...] = ()


_TYPE_NAMES = {
    QueryRequest: "query_request",
    QueryResponse: "query_response",
    HarvestResponse: "harvest_response",
    ServiceDescriptor: "service_descriptor",
    RegistryListing: "registry",
    HarvestReport: "harvest_report",
    ErrorMessage: "error",
}


# -- to plain data ------------------------------------------------------------

def record_to_dict(r: MetadataRecord) -> dict:
    d = {
        "url": r.url,
        "origin_site": r.origin_site,
        "title": r.title,
        "encoding": r.encoding,
        "abstract": r.abstract,
        "keywords": [{"term": k.term, "score": k.score} for k in r.keywords],
        "last_modified": r.last_modified,
    }
    if r.overlap_score is not None:
        d["overlap_score"] = r.overlap_score
    return d


def result_to_dict(r: RankedResult) -> dict:
    return {"url": r.url, "score": r.score, "sources": list(r.sources), "title": r.title, "abstract": r.abstract}


def descriptor_to_dict(d: ServiceDescriptor) -> dict:
    return {"domain": str(d.domain), "class_name": d.class_name, "endpoint": d.endpoint, "kind": d.kind}


def _status_to_dict(s: ChildStatus) -> dict:
    return {"node": s.node, "status": s.status, "detail": s.detail}


def to_dict(message) -> dict:
    name = _TYPE_NAMES.get(type(message))
    if name is None:
        raise TypeError(f"not a protocol message: {type(message).__name__}")
    body: dict
    if isinstance(message, QueryRequest):
        body = {
            "query": list(message.query),
            "request_id": message.request_id,
            "max_results": message.max_results,
            "scope": message.scope,
        }
    elif isinstance(message, QueryResponse):
        body = {
            "request_id": message.request_id,
            "results": [result_to_dict(r) for r in message.results],
            "child_status": [_status_to_dict(s) for s in message.child_status],
            "elapsed_ms": message.elapsed_ms,
        }
    elif isinstance(message, HarvestResponse):
        body = {
            "records": [record_to_dict(r) for r in message.records],
            "max_timestamp": message.max_timestamp,
            "truncated": message.truncated,
        }
    elif isinstance(message, ServiceDescriptor):
        body = descriptor_to_dict(message)
    elif isinstance(message, RegistryListing):
        body = {
            "entries": [
                {**descriptor_to_dict(e.descriptor), "parent": e.parent, "children": list(e.children)}
                for e in message.entries
            ]
        }
    elif isinstance(message, HarvestReport):
        body = {"records": message.records, "warnings": list(message.warnings), "cursors": dict(message.cursors)}
    else:
        body = {
            "code": message.code,
            "message": message.message,
            "child_status": [_status_to_dict(s) for s in message.child_status],
        }
    return {"type": name, "version": PROTOCOL_VERSION, **body}


def encode(message) -> bytes:
    return json.dumps(to_dict(message), sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


# -- from plain data -----------------------------------------------------------

_MISSING = object()


def _get(obj: Mapping, name: str, path: str, kind, *, optional=False):
    value = obj.get(name, _MISSING)
    where = f"{path}.{name}" if path else name
    if value is _MISSING:
        if optional:
            return None
        raise DecodeError(where, "missing required field")
    if value is None and optional:
        return None
    ok = isinstance(value, kind) and not (kind in (int, (int,)) and isinstance(value, bool))
    if not ok:
        want = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise DecodeError(where, f"expected {want}, got {type(value).__name__}")
    return value


def _list_of(obj: Mapping, name: str, path: str, kind) -> list:
    items = _get(obj, name, path, list)
    where = f"{path}.{name}" if path else name
    for i, item in enumerate(items):
        if not isinstance(item, kind) or (kind is int and isinstance(item, bool)):
            raise DecodeError(f"{where}[{i}]", f"expected {kind.__name__}")
    return items


def record_from_dict(d: Mapping, path: str = "") -> MetadataRecord:
    if not isinstance(d, Mapping):
        raise DecodeError(path or "record", "expected object")
    keywords = []
    for i, k in enumerate(_list_of(d, "keywords", path, dict)):
        kp = f"{path}.keywords[{i}]" if path else f"keywords[{i}]"
        keywords.append(KeywordScore(_get(k, "term", kp, str), _get(k, "score", kp, int)))
    return MetadataRecord(
        url=_get(d, "url", path, str),
        origin_site=_get(d, "origin_site", path, str),
        title=_get(d, "title", path, str),
        encoding=_get(d, "encoding", path, str),
        abstract=_get(d, "abstract", path, str),
        keywords=tuple(keywords),
        last_modified=_get(d, "last_modified", path, int),
        overlap_score=_get(d, "overlap_score", path, int, optional=True),
    )


def _result_from_dict(d: Mapping, path: str) -> RankedResult:
    if not isinstance(d, Mapping):
        raise DecodeError(path, "expected object")
    return RankedResult(
        url=_get(d, "url", path, str),
        score=_get(d, "score", path, int),
        sources=tuple(_list_of(d, "sources", path, str)),
        title=_get(d, "title", path, str),
        abstract=_get(d, "abstract", path, str),
    )


def _status_from_dict(d: Mapping, path: str) -> ChildStatus:
    if not isinstance(d, Mapping):
        raise DecodeError(path, "expected object")
    return ChildStatus(_get(d, "node", path, str), _get(d, "status", path, str), _get(d, "detail", path, str))


def _descriptor_from_dict(d: Mapping, path: str = "") -> ServiceDescriptor:
    name = _get(d, "domain", path, str)
    try:
        domain = parse_domain(name)
    except ValueError as e:
        raise DecodeError(f"{path}.domain" if path else "domain", str(e)) from None
    return ServiceDescriptor(
        domain=domain,
        class_name=_get(d, "class_name", path, str),
        endpoint=_get(d, "endpoint", path, str),
        kind=_get(d, "kind", path, str),
    )


def _objects(obj: Mapping, name: str) -> list[tuple[str, Mapping]]:
    return [(f"{name}[{i}]", item) for i, item in enumerate(_get(obj, name, "", list))]


def from_dict(obj) -> object:
    if not isinstance(obj, Mapping):
        raise DecodeError("$", "message must be a JSON object")
    version = _get(obj, "version", "", str)
    m = _VERSION_RE.match(version)
    if not m:
        raise DecodeError("version", f"malformed version {version!r}")
    if int(m.group(1)) > SUPPORTED_MAJOR:
        raise DecodeError("version", f"unsupported major version {m.group(1)}")
    kind = _get(obj, "type", "", str)
    if kind == "query_request":
        msg = QueryRequest(
            query=tuple(_list_of(obj, "query", "", str)),
            request_id=_get(obj, "request_id", "", str),
            max_results=_get(obj, "max_results", "", int),
            scope=_get(obj, "scope", "", str, optional=True),
        )
    elif kind == "query_response":
        msg = QueryResponse(
            request_id=_get(obj, "request_id", "", str),
            results=tuple(_result_from_dict(d, p) for p, d in _objects(obj, "results")),
            child_status=tuple(_status_from_dict(d, p) for p, d in _objects(obj, "child_status")),
            elapsed_ms=_get(obj, "elapsed_ms", "", int),
        )
    elif kind == "harvest_response":
        msg = HarvestResponse(
            records=tuple(record_from_dict(d, p) for p, d in _objects(obj, "records")),
            max_timestamp=_get(obj, "max_timestamp", "", int),
            truncated=_get(obj, "truncated", "", bool),
        )
    elif kind == "service_descriptor":
        msg = _descriptor_from_dict(obj)
    elif kind == "registry":
        entries = []
        for p, d in _objects(obj, "entries"):
            entries.append(
                RegistryEntry(
                    _descriptor_from_dict(d, p),
                    _get(d, "parent", p, str, optional=True),
                    tuple(_list_of(d, "children", p, str)),
                )
            )
        msg = RegistryListing(tuple(entries))
    elif kind == "harvest_report":
        cursors = _get(obj, "cursors", "", dict)
        for k, v in cursors.items():
            if not isinstance(v, int) or isinstance(v, bool):
                raise DecodeError(f"cursors.{k}", "expected int")
        msg = HarvestReport(
            records=_get(obj, "records", "", int),
            warnings=tuple(_list_of(obj, "warnings", "", str)),
            cursors=dict(sorted(cursors.items())),
        )
    elif kind == "error":
        msg = ErrorMessage(
            code=_get(obj, "code", "", str),
            message=_get(obj, "message", "", str),
            child_status=tuple(_status_from_dict(d, p) for p, d in _objects(obj, "child_status")),
        )
    else:
        raise DecodeError("type", f"unknown message type {kind!r}")
    violations = validate(msg)
    if violations:
        raise DecodeError(violations[0].field, violations[0].message, violations)
    return msg


def decode(data: bytes | str) -> object:
    try:
        obj = json.loads(data)
    except (ValueError, UnicodeDecodeError) as e:
        raise DecodeError("$", f"not valid JSON: {e}") from None
    return from_dict(obj)


def decode_as(data: bytes | str, cls):
    msg = decode(data)
    if isinstance(msg, ErrorMessage) and cls is not ErrorMessage:
        raise DecodeError("type", f"peer answered with error {msg.code}: {msg.message}")
    if not isinstance(msg, cls):
        raise DecodeError("type", f"expected {_TYPE_NAMES[cls]}, got {_TYPE_NAMES[type(msg)]}")
    return msg


# -- invariants ----------------------------------------------------------------

def _check_results(results, out: list[Violation], name="results"):
    # ties may be ordered by a node-specific secondary key, so only the score order is checked
    urls = set()
    for i, r in enumerate(results):
        if r.score < 0:
            out.append(Violation(f"{name}[{i}].score", "must be >= 0"))
        if not r.sources:
            out.append(Violation(f"{name}[{i}].sources", "must not be empty"))
        if r.url in urls:
            out.append(Violation(f"{name}[{i}].url", f"{r.url} repeated"))
        urls.add(r.url)
    for i in range(len(results) - 1):
        a, b = results[i], results[i + 1]
        if a.score < b.score:
            out.append(
                Violation(name, f"{name}[{i}] ({a.url}, {a.score}) and {name}[{i + 1}] ({b.url}, {b.score}) out of order")
            )


def _check_statuses(statuses, out: list[Violation]):
    for i, s in enumerate(statuses):
        if s.status not in STATUSES:
            out.append(Violation(f"child_status[{i}].status", f"must be one of {', '.join(STATUSES)}"))


def _check_record(r: MetadataRecord, where: str, out: list[Violation]):
    for j, k in enumerate(r.keywords):
        if k.score <= 0:
            out.append(Violation(f"{where}.keywords[{j}].score", "must be > 0"))
    for j in range(len(r.keywords) - 1):
        a, b = r.keywords[j], r.keywords[j + 1]
        if (-a.score, a.term) >= (-b.score, b.term):
            out.append(Violation(f"{where}.keywords", f"keywords[{j}] and keywords[{j + 1}] out of order"))
    if r.overlap_score is not None and r.overlap_score < 0:
        out.append(Violation(f"{where}.overlap_score", "must be >= 0"))


def validate(message) -> list[Violation]:
    """Every broken invariant of ``message``; empty when it is valid."""
    out: list[Violation] = []
    if isinstance(message, QueryRequest):
        if not message.query:
            out.append(Violation("query", "must not be empty"))
        for i, t in enumerate(message.query):
            if not t.strip():
                out.append(Violation(f"query[{i}]", "must not be blank"))
        if message.max_results < 1:
            out.append(Violation("max_results", "must be >= 1"))
    elif isinstance(message, QueryResponse):
        _check_results(message.results, out)
        _check_statuses(message.child_status, out)
        if message.elapsed_ms < 0:
            out.append(Violation("elapsed_ms", "must be >= 0"))
    elif isinstance(message, HarvestResponse):
        for i, r in enumerate(message.records):
            if r.last_modified > message.max_timestamp:
                out.append(Violation(f"records[{i}].last_modified", "exceeds max_timestamp"))
            _check_record(r, f"records[{i}]", out)
    elif isinstance(message, ServiceDescriptor):
        _check_descriptor(message, "", out)
    elif isinstance(message, RegistryListing):
        for i, e in enumerate(message.entries):
            _check_descriptor(e.descriptor, f"entries[{i}].", out)
    elif isinstance(message, HarvestReport):
        if message.records < 0:
            out.append(Violation("records", "must be >= 0"))
    elif isinstance(message, ErrorMessage):
        if not message.code:
            out.append(Violation("code", "must not be empty"))
        _check_statuses(message.child_status, out)
    else:
        raise TypeError(f"not a protocol message: {type(message).__name__}")
    return out


def _check_descriptor(d: ServiceDescriptor, prefix: str, out: list[Violation]):
    if d.class_name != reverse_class_name(d.domain):
        out.append(Violation(f"{prefix}class_name", f"{d.class_name!r} does not match domain {d.domain}"))
    if d.kind not in KINDS:
        out.append(Violation(f"{prefix}kind", f"must be one of {', '.join(KINDS)}"))
    if not d.endpoint:
        out.append(Violation(f"{prefix}endpoint", "must not be empty"))


# -- harvest paging -------------------------------------------------------------

def paginate(records: Iterable[MetadataRecord], since: int | None, limit: int = HARVEST_PAGE_LIMIT) -> HarvestResponse:
    """Cut one page of an incremental export.

    Pages end on a timestamp boundary so a client resuming with
    ``since=max_timestamp`` loses nothing. A single timestamp group larger
    than ``limit`` is sent whole. Records at or before ``since`` are skipped.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    if since is not None:
        records = [r for r in records if r.last_modified > since]
    ordered = sorted(records, key=lambda r: (r.last_modified, r.url, r.origin_site))
    page = ordered
    if len(ordered) > limit:
        edge = ordered[limit - 1].last_modified
        if ordered[limit].last_modified == edge:
            page = [r for r in ordered[:limit] if r.last_modified < edge]
            if not page:
                page = [r for r in ordered if r.last_modified <= edge]
        else:
            page = ordered[:limit]
    max_ts = page[-1].last_modified if page else (since or 0)
    return HarvestResponse(
        records=tuple(sorted(page, key=lambda r: (r.url, r.origin_site))),
        max_timestamp=max_ts,
        truncated=len(page) < len(ordered),
    )
