"""Small threaded HTTP layer the agents are hosted on.

One thread per connection, JSON request/response bodies, and incremental
reading of chunked uploads so tuple streams can be consumed as they
arrive. Errors map onto status codes per PROTOCOL.md and carry their
exception type so clients can re-raise them faithfully.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Iterator
from urllib.parse import parse_qs, urlsplit

from gridmon import errors

log = logging.getLogger(__name__)

_STATUS_FOR = {
    errors.ParseError: 400,
    errors.BindError: 400,
    errors.ValidationError: 400,
    errors.ViewViolationError: 400,
    errors.ConfigError: 400,
    errors.UnknownTableError: 404,
    errors.UnknownIdError: 404,
    errors.SchemaConflictError: 409,
    errors.KindMismatchError: 409,
    errors.OwnershipError: 409,
}

_ERROR_TYPES = {cls.__name__: cls for cls in _STATUS_FOR}

SOCKET_TIMEOUT_SEC = 90.0


def status_for(exc: Exception) -> int:
    for cls, status in _STATUS_FOR.items():
        if isinstance(exc, cls):
            return status
    if isinstance(exc, ValueError):
        return 400
    return 500


def raise_for_error_body(body: dict, status: int) -> None:
    """Re-raise a peer's error payload as the matching exception type."""
    info = body.get("error", {}) if isinstance(body, dict) else {}
    message = info.get("message", f"HTTP {status}")
    cls = _ERROR_TYPES.get(info.get("type", ""))
    if cls is not None:
        raise cls(message) if cls is not errors.ParseError else cls(message, info.get("position", 0))
    raise errors.ProtocolError(message, status=status)


@dataclass
class Request:
    method: str
    path: str
    params: dict[str, str]          # named path segments
    query: dict[str, str]           # first value per query key
    handler: BaseHTTPRequestHandler = field(repr=False)

    def json(self) -> dict:
        data = b"".join(self.iter_body())
        if not data:
            return {}
        try:
            parsed = json.loads(data)
        except json.JSONDecodeError as exc:
            raise errors.ValidationError(f"request body is not valid JSON: {exc}")
        if not isinstance(parsed, dict):
            raise errors.ValidationError("request body must be a JSON object")
        return parsed

    def iter_body(self) -> Iterator[bytes]:
        """Raw body pieces, decoded from chunked framing when present."""
        h = self.handler
        if h.headers.get("Transfer-Encoding", "").lower() == "chunked":
            while True:
                size_line = h.rfile.readline(1024)
                if not size_line:
                    return
                try:
                    size = int(size_line.split(b";")[0].strip() or b"0", 16)
                except ValueError:
                    raise errors.ValidationError("bad chunk framing")
                if size == 0:
                    while True:  # trailers until blank line
                        trailer = h.rfile.readline(1024)
                        if trailer in (b"\r\n", b"\n", b""):
                            return
                remaining = size
                while remaining:
                    piece = h.rfile.read(min(remaining, 65536))
                    if not piece:
                        return
                    remaining -= len(piece)
                    yield piece
                h.rfile.read(2)  # CRLF after the chunk
        else:
            remaining = int(h.headers.get("Content-Length", 0) or 0)
            while remaining:
                piece = h.rfile.read(min(remaining, 65536))
                if not piece:
                    return
                remaining -= len(piece)
                yield piece

    def iter_lines(self) -> Iterator[bytes]:
        """Complete newline-terminated lines, as they arrive."""
        pending = bytearray()
        for piece in self.iter_body():
            pending.extend(piece)
            while True:
                idx = pending.find(b"\n")
                if idx < 0:
                    break
                yield bytes(pending[: idx + 1])
                del pending[: idx + 1]
        if pending:
            yield bytes(pending)


Handler = Callable[[Request], dict]


class Router:
    """Maps (method, /path/{param}/...) patterns to handlers."""

    def __init__(self):
        self._routes: list[tuple[str, re.Pattern, Handler]] = []

    def add(self, method: str, pattern: str, handler: Handler) -> None:
        regex = re.sub(r"\{(\w+)\}", r"(?P<\1>[^/]+)", pattern)
        self._routes.append((method.upper(), re.compile(f"^{regex}$"), handler))

    def dispatch(self, request: Request) -> dict:
        for method, regex, handler in self._routes:
            if method != request.method:
                continue
            m = regex.match(request.path)
            if m:
                request.params = m.groupdict()
                return handler(request)
        raise errors.UnknownIdError(f"no route {request.method} {request.path}")


class _AgentHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    router: Router = None  # set by server factory

    def setup(self):
        super().setup()
        self.connection.settimeout(SOCKET_TIMEOUT_SEC)

    def _respond(self, status: int, body: dict) -> None:
        payload = json.dumps(body).encode("utf-8")
        try:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(payload)
        except (BrokenPipeError, ConnectionResetError):
            self.close_connection = True

    def do_OPTIONS(self):
        # CORS preflight for browser clients
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _handle(self) -> None:
        parts = urlsplit(self.path)
        query = {k: v[0] for k, v in parse_qs(parts.query).items()}
        request = Request(self.command, parts.path, {}, query, self)
        try:
            body = self.router.dispatch(request)
            self._respond(200, body if body is not None else {})
        except Exception as exc:
            status = status_for(exc)
            if status == 500:
                log.exception("%s %s failed", self.command, self.path)
            info = {"type": type(exc).__name__, "message": str(exc)}
            if isinstance(exc, errors.ParseError):
                info["position"] = exc.position
            self._respond(status, {"error": info})
            self.close_connection = True

    do_GET = _handle
    do_POST = _handle
    do_DELETE = _handle
    do_PUT = _handle

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)


class AgentServer(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 128
    allow_reuse_address = True


def start_server(router: Router, host: str = "127.0.0.1", port: int = 0) -> tuple[AgentServer, threading.Thread, str]:
    """Bind, serve on a background thread, return (server, thread, base_url)."""
    handler = type("BoundHandler", (_AgentHandler,), {"router": router})
    server = AgentServer((host, port), handler)
    actual_port = server.server_address[1]
    thread = threading.Thread(target=server.serve_forever, name=f"http-{actual_port}", daemon=True)
    thread.start()
    return server, thread, f"http://{host}:{actual_port}"
