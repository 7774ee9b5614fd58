"""Frozen message values behind the golden protocol fixtures."""

from __future__ import annotations

from dris.protocol import (
    ChildStatus,
    ErrorMessage,
    HarvestReport,
    HarvestResponse,
    QueryRequest,
    QueryResponse,
    RegistryEntry,
    RegistryListing,
)
from dris.records import KeywordScore, MetadataRecord, RankedResult, ServiceDescriptor
from dris.webgraph import parse_domain

HUST = ServiceDescriptor.for_domain(parse_domain("hust.edu.cn"), "http://127.0.0.1:8003", "layer3")
RECORD = MetadataRecord(
    "http://www.hust.edu.cn/p1", "www.hust.edu.cn", "Library hours", "utf-8", "library opens at eight",
    (KeywordScore("library", 7), KeywordScore("hours", 5), KeywordScore("eight", 1)), 1_000_123,
)

GOLDEN_MESSAGES = {
    "query_request": QueryRequest(("library", "hours"), "req-1", 20, "edu.cn"),
    "query_response": QueryResponse(
        "req-1",
        (
            RankedResult("http://www.hust.edu.cn/p1", 3, ("ac.cn", "edu.cn"), "Library hours", "library opens"),
            RankedResult("http://www.pku.edu.cn/", 1, ("edu.cn",), "Peking", ""),
        ),
        (ChildStatus("edu.cn", "ok"), ChildStatus("ac.cn", "timeout", "no answer within 2s")),
        12,
    ),
    "harvest_response": HarvestResponse((RECORD, RECORD.with_overlap(2)), 1_000_123, True),
    "service_descriptor": HUST,
    "registry": RegistryListing((
        RegistryEntry(ServiceDescriptor.for_domain(parse_domain("cn"), "http://127.0.0.1:8000", "top"),
                      None, ("DRIS.cn.edu",)),
        RegistryEntry(ServiceDescriptor.for_domain(parse_domain("edu.cn"), "http://127.0.0.1:8001", "layer2"),
                      "DRIS.cn", ("DRIS.cn.edu.hust",)),
        RegistryEntry(HUST, "DRIS.cn.edu", ()),
    )),
    "harvest_report": HarvestReport(14, ("pku.edu.cn: ConnectionError: refused",), {"hust.edu.cn": 1_000_123}),
    "error": ErrorMessage("federated_search_failed", "no service under cn answered",
                          (ChildStatus("edu.cn", "failed", "ConnectionError: refused"),)),
    "unicode_title": QueryResponse(
        "r", (RankedResult("http://www.hust.edu.cn/", 2, ("edu.cn",), "华中科技大学", "武汉"),)
    ),
}
