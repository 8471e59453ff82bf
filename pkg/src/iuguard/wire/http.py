"""Minimal HTTP/1.1 over pinned mutual TLS.

Only what the services need: Content-Length bodies, keep-alive, one request
in flight per connection. Servers run on asyncio; clients come in a blocking
flavour (CLI, end-to-end bench) and an asyncio flavour (load generator, IIC
forwarding).
"""

from __future__ import annotations

import asyncio
import http.client
import logging
import socket
import ssl
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Awaitable, Callable

from .envelope import MAX_BODY_BYTES, Envelope, EnvelopeError, ServiceError, error_envelope
from .pki import check_pin, peer_fingerprint

log = logging.getLogger(__name__)

CORRELATION_HEADER = "x-correlation-id"
MAX_HEADER_BYTES = 16 * 1024
REASONS = {200: "OK", 400: "Bad Request", 401: "Unauthorized", 403: "Forbidden", 404: "Not Found",
           405: "Method Not Allowed", 409: "Conflict", 413: "Payload Too Large", 422: "Unprocessable Entity",
           429: "Too Many Requests", 500: "Internal Server Error", 502: "Bad Gateway"}


class TransportError(Exception):
    """Connection, TLS, framing or timeout failure. Distinct from protocol denials."""


@dataclass
class Request:
    method: str
    path: str
    headers: dict[str, str]
    body: bytes
    peer: str | None = None  # client certificate fingerprint
    remote: str | None = None  # client IP, for rate limiting
    arg: str | None = None  # captured trailing path segment

    def envelope(self) -> Envelope:
        return Envelope.from_bytes(self.body)


@dataclass
class Response:
    status: int
    envelope: Envelope
    headers: dict[str, str] = field(default_factory=dict)


Handler = Callable[[Request], Awaitable[Envelope]]


class Router:
    def __init__(self):
        self._routes: list[tuple[str, str, Handler]] = []

    def add(self, method: str, path: str, handler: Handler) -> None:
        """``path`` may end in ``/{}`` to capture one trailing segment."""
        self._routes.append((method, path, handler))

    def match(self, method: str, path: str) -> tuple[Handler | None, str | None, bool]:
        path_known = False
        for m, p, h in self._routes:
            arg = None
            if p.endswith("/{}"):
                prefix = p[:-2]
                if not path.startswith(prefix) or "/" in path[len(prefix):] or len(path) == len(prefix):
                    continue
                arg = path[len(prefix):]
            elif p != path:
                continue
            path_known = True
            if m == method:
                return h, arg, True
        return None, None, path_known


# -- server -----------------------------------------------------------------


def _framing_error(code: str, message: str, corr: str | None) -> ServiceError:
    exc = ServiceError(code, message)
    exc.corr = corr
    return exc


async def _read_request(reader: asyncio.StreamReader) -> tuple[str, str, dict[str, str], bytes] | None:
    try:
        head = await reader.readuntil(b"\r\n\r\n")
    except asyncio.IncompleteReadError as exc:
        if exc.partial:
            raise ServiceError("BAD_REQUEST", "truncated request head") from None
        return None
    except asyncio.LimitOverrunError:
        raise ServiceError("BAD_REQUEST", "request head too large") from None
    lines = head[:-4].decode("latin-1").split("\r\n")
    try:
        method, target, version = lines[0].split(" ")
    except ValueError:
        raise ServiceError("BAD_REQUEST", "bad request line") from None
    if version != "HTTP/1.1":
        raise ServiceError("BAD_REQUEST", "HTTP/1.1 only")
    headers = {}
    for ln in lines[1:]:
        k, sep, v = ln.partition(":")
        if not sep:
            raise ServiceError("BAD_REQUEST", "bad header line")
        headers[k.strip().lower()] = v.strip()
    corr = valid_correlation_id(headers.get(CORRELATION_HEADER))
    if "transfer-encoding" in headers:
        raise _framing_error("BAD_REQUEST", "chunked bodies are not supported", corr)
    try:
        n = int(headers.get("content-length", "0"))
    except ValueError:
        raise _framing_error("BAD_REQUEST", "bad content-length", corr) from None
    if n < 0 or n > MAX_BODY_BYTES:
        raise _framing_error("PAYLOAD_TOO_LARGE", f"body limit is {MAX_BODY_BYTES} bytes", corr)
    body = await reader.readexactly(n) if n else b""
    return method, target, headers, body


def _encode_response(resp: Response, keep_alive: bool) -> bytes:
    body = resp.envelope.to_bytes()
    head = [
        f"HTTP/1.1 {resp.status} {REASONS.get(resp.status, 'Unknown')}",
        "Content-Type: application/json",
        f"Content-Length: {len(body)}",
        f"Connection: {'keep-alive' if keep_alive else 'close'}",
    ]
    head += [f"{k}: {v}" for k, v in resp.headers.items()]
    return ("\r\n".join(head) + "\r\n\r\n").encode("latin-1") + body


class HttpServer:
    def __init__(self, router: Router, ssl_context: ssl.SSLContext, host: str = "127.0.0.1", port: int = 0, name: str = "svc"):
        self.router = router
        self.ssl_context = ssl_context
        self.host = host
        self.port = port
        self.name = name
        self._server: asyncio.base_events.Server | None = None
        self.connections = 0

    async def start(self) -> None:
        self._server = await asyncio.start_server(
            self._serve_conn, self.host, self.port, ssl=self.ssl_context, backlog=8192, limit=MAX_HEADER_BYTES
        )
        self.port = self._server.sockets[0].getsockname()[1]
        log.info("%s listening on %s:%d", self.name, self.host, self.port)

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def _serve_conn(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        self.connections += 1
        peer = peer_fingerprint(writer.get_extra_info("ssl_object"))
        peername = writer.get_extra_info("peername")
        remote = peername[0] if peername else None
        try:
            while True:
                try:
                    parsed = await _read_request(reader)
                except ServiceError as exc:
                    env = error_envelope(exc.code, exc.message, getattr(exc, "corr", None))
                    writer.write(_encode_response(Response(exc.status, env), False))
                    await writer.drain()
                    return
                if parsed is None:
                    return
                method, path, headers, body = parsed
                resp = await self._dispatch(Request(method, path, headers, body, peer, remote))
                keep = headers.get("connection", "keep-alive").lower() != "close"
                writer.write(_encode_response(resp, keep))
                await writer.drain()
                if not keep:
                    return
        except (ConnectionError, asyncio.IncompleteReadError, ssl.SSLError):
            pass
        finally:
            self.connections -= 1
            writer.close()

    async def _dispatch(self, req: Request) -> Response:
        corr = valid_correlation_id(req.headers.get(CORRELATION_HEADER))
        handler, arg, known = self.router.match(req.method, req.path)
        if handler is None:
            code = "METHOD_NOT_ALLOWED" if known else "NOT_FOUND"
            return Response(404 if code == "NOT_FOUND" else 405, error_envelope(code, req.path, corr))
        try:
            req.arg = arg
            env = await handler(req)
            return Response(200, env)
        except EnvelopeError as exc:
            return Response(400, error_envelope(exc.code, str(exc), corr))
        except ServiceError as exc:
            return Response(exc.status, error_envelope(exc.code, exc.message, _corr_of(req, corr)))
        except Exception:
            # message deliberately generic: payload contents never reach logs or peers
            log.exception("%s: unhandled error on %s %s", self.name, req.method, req.path)
            return Response(500, error_envelope("INTERNAL", "internal error", _corr_of(req, corr)))


def valid_correlation_id(value: str | None) -> str | None:
    if value and len(value) <= 64 and value.isascii() and value.isprintable():
        return value
    return None


def _corr_of(req: Request, fallback: str | None) -> str | None:
    if fallback:
        return fallback
    try:
        return req.envelope().id
    except Exception:
        return None


class ServiceThread:
    """Runs one or more servers on a private event loop in a daemon thread."""

    def __init__(self, servers: list[HttpServer], workers: int = 2, on_loop: Callable[[asyncio.AbstractEventLoop], None] | None = None):
        self.servers = servers
        self.loop = asyncio.new_event_loop()
        self.loop.set_default_executor(ThreadPoolExecutor(max_workers=workers, thread_name_prefix="iuguard-work"))
        self._on_loop = on_loop
        self.on_stop: list[Callable[[], Awaitable[None]]] = []
        self._thread = threading.Thread(target=self._run, daemon=True, name="iuguard-services")
        self._ready = threading.Event()
        self._error: BaseException | None = None

    def _run(self) -> None:
        asyncio.set_event_loop(self.loop)
        try:
            for s in self.servers:
                self.loop.run_until_complete(s.start())
            if self._on_loop:
                self._on_loop(self.loop)
        except BaseException as exc:  # surfaced to start()
            self._error = exc
            self._ready.set()
            return
        self._ready.set()
        self.loop.run_forever()

    def start(self) -> "ServiceThread":
        self._thread.start()
        self._ready.wait(30)
        if self._error:
            raise self._error
        return self

    def run(self, coro, timeout: float = 30.0):
        """Run a coroutine on the service loop from another thread."""
        return asyncio.run_coroutine_threadsafe(coro, self.loop).result(timeout)

    def stop(self) -> None:
        async def _shutdown():
            for s in self.servers:
                await s.close()
            for hook in self.on_stop:
                await hook()
            me = asyncio.current_task()
            tasks = [t for t in asyncio.all_tasks() if t is not me]
            for t in tasks:
                t.cancel()
            await asyncio.gather(*tasks, return_exceptions=True)

        if self.loop.is_running():
            asyncio.run_coroutine_threadsafe(_shutdown(), self.loop).result(10)
            self.loop.call_soon_threadsafe(self.loop.stop)
        self._thread.join(10)
        if not self._thread.is_alive() and not self.loop.is_closed():
            self.loop.run_until_complete(self.loop.shutdown_default_executor())
            self.loop.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


# -- blocking client -----------------------------------------------------------


class _PinnedHTTPSConnection(http.client.HTTPSConnection):
    def __init__(self, host, port, context, pin, timeout):
        super().__init__(host, port, context=context, timeout=timeout)
        self._pin = pin

    def connect(self):
        super().connect()
        check_pin(self.sock, self._pin)


@dataclass
class Endpoint:
    host: str
    port: int
    pin: str


def _decode_reply(status: int, body: bytes, sent_id: str | None) -> Envelope:
    try:
        env = Envelope.from_bytes(body)
    except EnvelopeError as exc:
        raise TransportError(f"malformed response envelope (HTTP {status}): {exc}") from None
    if sent_id is not None and env.id != sent_id:
        raise TransportError(f"correlation mismatch: sent {sent_id}, got {env.id}")
    return env


class Client:
    """Blocking keep-alive client bound to one pinned endpoint."""

    def __init__(self, endpoint: Endpoint, context: ssl.SSLContext, timeout: float = 30.0):
        self.endpoint = endpoint
        self.context = context
        self.timeout = timeout
        self._conn: _PinnedHTTPSConnection | None = None

    def _connection(self) -> _PinnedHTTPSConnection:
        if self._conn is None:
            self._conn = _PinnedHTTPSConnection(self.endpoint.host, self.endpoint.port, self.context, self.endpoint.pin, self.timeout)
        return self._conn

    def call(self, method: str, path: str, env: Envelope | None = None, corr: str | None = None) -> Envelope:
        body = env.to_bytes() if env is not None else b""
        sent_id = env.id if env is not None else corr
        headers = {"Content-Type": "application/json"}
        if sent_id:
            headers[CORRELATION_HEADER] = sent_id
        for attempt in (0, 1):
            conn = self._connection()
            try:
                conn.request(method, path, body=body, headers=headers)
                resp = conn.getresponse()
                data = resp.read()
                status = resp.status
                if resp.getheader("connection", "").lower() == "close":
                    self.close()
                break
            except http.client.RemoteDisconnected:
                # the server closed an idle keep-alive connection; reconnect once
                self.close()
                if attempt:
                    raise TransportError("server closed the connection") from None
            except ssl.SSLError as exc:
                self.close()
                raise TransportError(f"TLS failure: {exc}") from exc
            except (OSError, http.client.HTTPException) as exc:
                self.close()
                if isinstance(exc, (socket.timeout, TimeoutError)):
                    raise TransportError(f"timeout after {self.timeout}s") from exc
                raise TransportError(f"{type(exc).__name__}: {exc}") from exc
        return _decode_reply(status, data, sent_id)

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- asyncio client ---------------------------------------------------------------


class AsyncClient:
    """One keep-alive connection; callers serialize their requests on it."""

    def __init__(self, endpoint: Endpoint, context: ssl.SSLContext, timeout: float = 60.0):
        self.endpoint = endpoint
        self.context = context
        self.timeout = timeout
        self._reader: asyncio.StreamReader | None = None
        self._writer: asyncio.StreamWriter | None = None
        self._lock = asyncio.Lock()

    async def connect(self) -> None:
        try:
            self._reader, self._writer = await asyncio.wait_for(
                asyncio.open_connection(
                    self.endpoint.host, self.endpoint.port, ssl=self.context,
                    server_hostname=self.endpoint.host, limit=MAX_BODY_BYTES + MAX_HEADER_BYTES,
                ),
                self.timeout,
            )
        except (OSError, asyncio.TimeoutError, ssl.SSLError) as exc:
            raise TransportError(f"connect to {self.endpoint.host}:{self.endpoint.port} failed: {exc!r}") from exc
        try:
            check_pin(self._writer.get_extra_info("ssl_object"), self.endpoint.pin)
        except ssl.SSLError as exc:
            await self.close()
            raise TransportError(f"TLS failure: {exc}") from exc

    async def call(self, method: str, path: str, env: Envelope | None = None, corr: str | None = None) -> Envelope:
        async with self._lock:
            if self._writer is None:
                await self.connect()
            body = env.to_bytes() if env is not None else b""
            sent_id = env.id if env is not None else corr
            head = [f"{method} {path} HTTP/1.1", f"Host: {self.endpoint.host}", f"Content-Length: {len(body)}"]
            if sent_id:
                head.append(f"{CORRELATION_HEADER}: {sent_id}")
            try:
                self._writer.write(("\r\n".join(head) + "\r\n\r\n").encode("latin-1") + body)
                status, data, close = await asyncio.wait_for(self._read_response(), self.timeout)
            except (OSError, asyncio.IncompleteReadError, ssl.SSLError, asyncio.TimeoutError, ValueError) as exc:
                await self.close()
                raise TransportError(f"{type(exc).__name__}: {exc}") from exc
            if close:
                await self.close()
            return _decode_reply(status, data, sent_id)

    async def _read_response(self) -> tuple[int, bytes, bool]:
        await self._writer.drain()
        head = await self._reader.readuntil(b"\r\n\r\n")
        lines = head[:-4].decode("latin-1").split("\r\n")
        status = int(lines[0].split(" ")[1])
        headers = {}
        for ln in lines[1:]:
            k, _, v = ln.partition(":")
            headers[k.strip().lower()] = v.strip()
        n = int(headers.get("content-length", "0"))
        data = await self._reader.readexactly(n)
        return status, data, headers.get("connection", "").lower() == "close"

    async def close(self) -> None:
        w, self._writer, self._reader = self._writer, None, None
        if w is not None:
            w.close()
            try:
                await w.wait_closed()
            except (OSError, ssl.SSLError):
                pass
