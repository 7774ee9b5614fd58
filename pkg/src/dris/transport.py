"""Clients for talking to nodes, in-process or over HTTP.

Both clients push every message through the wire codec, so a scenario run
in-process exercises exactly the bytes a loopback run would send.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.parse
import urllib.request
from pathlib import Path

from dris import protocol
from dris.records import ServiceDescriptor


class RemoteError(RuntimeError):
    """A node answered with an error message."""

    def __init__(self, status: int, error: protocol.ErrorMessage):
        super().__init__(f"{error.code}: {error.message}")
        self.status = status
        self.error = error


class LocalClient:
    def __init__(self, node):
        self.node = node
        self.bytes_sent = 0
        self.bytes_received = 0

    def _round_trip(self, message, cls):
        data = protocol.encode(message)
        self.bytes_received += len(data)
        return protocol.decode_as(data, cls)

    def search(self, request: protocol.QueryRequest, timeout: float | None = None) -> protocol.QueryResponse:
        wire = protocol.encode(request)
        self.bytes_sent += len(wire)
        resp = self.node.search(protocol.decode_as(wire, protocol.QueryRequest))
        return self._round_trip(resp, protocol.QueryResponse)

    def metadata(self, since: int | None = None, limit: int = protocol.HARVEST_PAGE_LIMIT) -> protocol.HarvestResponse:
        return self._round_trip(self.node.metadata(since, limit), protocol.HarvestResponse)

    def run_harvest(self) -> protocol.HarvestReport:
        return self._round_trip(self.node.run_harvest(), protocol.HarvestReport)


class HttpClient:
    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _call(self, method: str, path: str, body: bytes | None, cls, timeout: float | None = None):
        req = urllib.request.Request(self.base_url + path, data=body, method=method)
        if body is not None:
            req.add_header("Content-Type", "application/json")
        try:
            with urllib.request.urlopen(req, timeout=timeout or self.timeout) as resp:
                data = resp.read()
        except urllib.error.HTTPError as e:
            data = e.read()
            try:
                err = protocol.decode_as(data, protocol.ErrorMessage)
            except protocol.DecodeError:
                err = protocol.ErrorMessage("http_error", f"HTTP {e.code}")
            raise RemoteError(e.code, err) from None
        except urllib.error.URLError as e:
            reason = e.reason
            if isinstance(reason, OSError):
                raise reason from None
            raise ConnectionError(str(reason)) from None
        return protocol.decode_as(data, cls)

    def search(self, request: protocol.QueryRequest, timeout: float | None = None) -> protocol.QueryResponse:
        return self._call("POST", "/search", protocol.encode(request), protocol.QueryResponse, timeout)

    def metadata(self, since: int | None = None, limit: int = protocol.HARVEST_PAGE_LIMIT) -> protocol.HarvestResponse:
        params = {"limit": limit}
        if since is not None:
            params["since"] = since
        return self._call("GET", "/metadata?" + urllib.parse.urlencode(params), None, protocol.HarvestResponse)

    def run_harvest(self) -> protocol.HarvestReport:
        return self._call("POST", "/harvest/run", b"", protocol.HarvestReport)

    def registry(self) -> protocol.RegistryListing:
        return self._call("GET", "/registry", None, protocol.RegistryListing)

    def register(self, desc: ServiceDescriptor) -> ServiceDescriptor:
        return self._call("POST", "/register", protocol.encode(desc), ServiceDescriptor)


class InProcessNetwork:
    """Endpoint table for nodes living in this process (``inproc://<name>``)."""

    def __init__(self):
        self.nodes = {}

    def add(self, endpoint: str, node) -> str:
        self.nodes[endpoint] = node
        return endpoint

    def connect(self, desc: ServiceDescriptor) -> LocalClient:
        try:
            return LocalClient(self.nodes[desc.endpoint])
        except KeyError:
            raise ConnectionError(f"nothing listening at {desc.endpoint}") from None


def load_node(path: str | Path):
    """Open a saved layer-3 index or layer-2 store as an in-process node."""
    from dris.harvest2 import STORE_FORMAT, Layer2Node, load_store
    from dris.index3 import INDEX_FORMAT, Layer3Node, load_index

    with open(path, encoding="utf-8") as f:
        header = json.loads(f.readline() or "{}")
    if header.get("format") == INDEX_FORMAT:
        index = load_index(path)
        return Layer3Node(index.domain, index)
    if header.get("format") == STORE_FORMAT:
        store = load_store(path)
        return Layer2Node(store.domain, store=store)
    raise ValueError(f"{path} is neither a layer-3 index nor a layer-2 store")


def client_for(endpoint: str, timeout: float = 10.0):
    """Client for an ``http://`` or ``file://`` endpoint."""
    if endpoint.startswith(("http://", "https://")):
        return HttpClient(endpoint, timeout)
    if endpoint.startswith("file://"):
        return LocalClient(load_node(urllib.request.url2pathname(urllib.parse.urlparse(endpoint).path)))
    raise ConnectionError(f"cannot connect to {endpoint}")


def connect_endpoint(desc: ServiceDescriptor, timeout: float = 10.0):
    return client_for(desc.endpoint, timeout)
