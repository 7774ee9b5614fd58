"""HTTP front end shared by all three node kinds.

Routes (bodies are protocol messages):

    POST /search          QueryRequest -> QueryResponse
    GET  /metadata        ?since=&limit= -> HarvestResponse      (layer 3, layer 2)
    POST /harvest/run     -> HarvestReport                      (layer 2)
    GET  /registry        -> RegistryListing                    (top)
    POST /register        ServiceDescriptor -> ServiceDescriptor (top)

Failures answer with an ``error`` message and a 4xx/5xx status.
"""

from __future__ import annotations

import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from dris import protocol
from dris.federation import FederatedSearchError, NotFound, RegistryError
from dris.harvest2 import HarvestError
from dris.index3 import QueryError
from dris.records import ServiceDescriptor

log = logging.getLogger(__name__)


class _Handler(BaseHTTPRequestHandler):
    server_version = "dris/1"
    protocol_version = "HTTP/1.1"

    @property
    def node(self):
        return self.server.node

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send(self, status: int, message) -> None:
        body = protocol.encode(message)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, code: str, message: str, child_status=()) -> None:
        self._send(status, protocol.ErrorMessage(code, message, tuple(child_status)))

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def do_GET(self):
        url = urlparse(self.path)
        try:
            if url.path == "/metadata" and hasattr(self.node, "metadata"):
                params = parse_qs(url.query)
                since = int(params["since"][0]) if "since" in params else None
                limit = int(params.get("limit", [protocol.HARVEST_PAGE_LIMIT])[0])
                if limit < 1:
                    raise ValueError("limit must be >= 1")
                self._send(200, self.node.metadata(since, limit))
            elif url.path == "/registry" and hasattr(self.node, "registry"):
                self._send(200, self.node.registry.listing())
            else:
                self._error(404, "not_found", f"no route GET {url.path}")
        except ValueError as e:
            self._error(400, "bad_request", str(e))

    def do_POST(self):
        url = urlparse(self.path)
        body = self._body()
        try:
            if url.path == "/search":
                request = protocol.decode_as(body, protocol.QueryRequest)
                self._send(200, self.node.search(request))
            elif url.path == "/harvest/run" and hasattr(self.node, "run_harvest"):
                self._send(200, self.node.run_harvest())
            elif url.path == "/register" and hasattr(self.node, "register"):
                desc = protocol.decode_as(body, ServiceDescriptor)
                self._send(200, self.node.register(desc))
            else:
                self._error(404, "not_found", f"no route POST {url.path}")
        except protocol.DecodeError as e:
            self._error(400, "bad_request", str(e))
        except QueryError as e:
            self._error(400, "bad_query", str(e))
        except RegistryError as e:
            self._error(409, "conflict", str(e))
        except NotFound as e:
            self._error(404, "not_found", str(e))
        except FederatedSearchError as e:
            self._error(502, "federated_search_failed", str(e), e.child_status)
        except HarvestError as e:
            self._error(502, "harvest_failed", str(e))


class NodeServer:
    """A node served on ``host:port`` from a background thread."""

    def __init__(self, node, host: str = "127.0.0.1", port: int = 0):
        self.httpd = ThreadingHTTPServer((host, port), _Handler)
        self.httpd.daemon_threads = True
        self.httpd.node = node
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> NodeServer:
        self._thread = threading.Thread(
            target=self.httpd.serve_forever, kwargs={"poll_interval": 0.05}, name=f"dris-{self.url}", daemon=True
        )
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def close(self) -> None:
        if self._thread is not None:
            self.httpd.shutdown()
            self._thread.join()
            self._thread = None
        self.httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()
