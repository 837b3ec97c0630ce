"""HTTP/1.1 + JSON wire layer over the game host.

Endpoints (documented bit-exactly in ``docs/protocol.md``):

- ``POST /games`` create a session
- ``GET/PUT /games/{id}/save`` fetch/submit the latest save (gzip supported)
- ``POST/GET /games/{id}/chat/{channel}`` post / poll messages
- ``POST /games/{id}/ratings`` submit a decision rating
- ``POST /games/{id}/run`` drive the turn pipeline

Decision requests flow the other way: the host POSTs a decision context to
``{module-base}/games/{id}/decision`` on whatever module a civ registered.
"""

from __future__ import annotations

import gzip
import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any

from microciv.server.host import GameHost, HostError, RatingRecord

logger = logging.getLogger(__name__)

_SAVE_RE = re.compile(r"^/games/([^/]+)/save$")
_CHAT_RE = re.compile(r"^/games/([^/]+)/chat/([^/?]+)$")
_RATINGS_RE = re.compile(r"^/games/([^/]+)/ratings$")
_RUN_RE = re.compile(r"^/games/([^/]+)/run$")


def _make_handler(host: GameHost):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # route through logging, not stderr
            logger.debug("http: " + fmt, *args)

        # -- plumbing -----------------------------------------------------

        def _read_body(self) -> bytes:
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length) if length else b""
            if self.headers.get("Content-Encoding") == "gzip":
                body = gzip.decompress(body)
            return body

        def _read_json(self) -> dict[str, Any]:
            body = self._read_body()
            try:
                return json.loads(body.decode("utf-8")) if body else {}
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise HostError(400, "bad_json", str(exc)) from exc

        def _send(self, status: int, payload: dict[str, Any] | bytes,
                  headers: dict[str, str] | None = None) -> None:
            if isinstance(payload, bytes):
                body = payload
                content_type = "application/json"
            else:
                body = json.dumps(payload, sort_keys=True).encode("utf-8")
                content_type = "application/json"
            if "gzip" in (self.headers.get("Accept-Encoding") or "") and len(body) > 256:
                body = gzip.compress(body, mtime=0)
                headers = dict(headers or {})
                headers["Content-Encoding"] = "gzip"
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            for key, value in (headers or {}).items():
                self.send_header(key, value)
            self.end_headers()
            self.wfile.write(body)

        def _guard(self, fn) -> None:
            try:
                fn()
            except HostError as exc:
                self._send(exc.status, {"error": exc.code, "message": str(exc)})
            except Exception as exc:  # noqa: BLE001 - wire boundary
                logger.exception("internal error")
                self._send(500, {"error": "internal", "message": str(exc)})

        # -- routes ----------------------------------------------------------

        def do_POST(self) -> None:  # noqa: N802 - http.server API
            self._guard(self._post)

        def do_GET(self) -> None:  # noqa: N802
            self._guard(self._get)

        def do_PUT(self) -> None:  # noqa: N802
            self._guard(self._put)

        def _post(self) -> None:
            if self.path == "/games":
                config = self._read_json()
                game_id = host.create_game(config)
                self._send(201, {"game_id": game_id})
                return
            match = _CHAT_RE.match(self.path)
            if match:
                payload = self._read_json()
                index = host.post_chat(match.group(1), match.group(2),
                                       str(payload.get("sender", "")),
                                       str(payload.get("text", "")))
                self._send(200, {"index": index})
                return
            match = _RATINGS_RE.match(self.path)
            if match:
                payload = self._read_json()
                payload.setdefault("game_id", match.group(1))
                host.submit_rating(RatingRecord.from_dict(payload))
                self._send(200, {"ok": True})
                return
            match = _RUN_RE.match(self.path)
            if match:
                payload = self._read_json()
                winner = host.run_game(match.group(1),
                                       max_turns=int(payload.get("max_turns", 250)),
                                       use_simulator=bool(payload.get("use_simulator", False)))
                self._send(200, {"winner": winner})
                return
            raise HostError(404, "unknown_endpoint", self.path)

        def _get(self) -> None:
            match = _SAVE_RE.match(self.path.split("?")[0])
            if match:
                data, version = host.fetch_save(match.group(1))
                self._send(200, data, headers={"X-Save-Version": str(version)})
                return
            match = _CHAT_RE.match(self.path.split("?")[0])
            if match:
                params = _query_params(self.path)
                messages = host.poll_chat(
                    match.group(1), match.group(2),
                    since=int(params.get("since", 0)),
                    reader=params.get("reader", ""),
                )
                self._send(200, {"messages": messages})
                return
            raise HostError(404, "unknown_endpoint", self.path)

        def _put(self) -> None:
            match = _SAVE_RE.match(self.path)
            if match:
                version = int(self.headers.get("X-Save-Version", 0))
                stored = host.submit_save(match.group(1), self._read_body(), version)
                self._send(200, {"version": stored})
                return
            raise HostError(404, "unknown_endpoint", self.path)

    return Handler


def make_server(host: GameHost, port: int = 0,
                address: str = "127.0.0.1") -> ThreadingHTTPServer:
    """Build (but do not start) an HTTP server bound to the host."""
    return ThreadingHTTPServer((address, port), _make_handler(host))


def serve_host(host: GameHost, port: int, address: str = "0.0.0.0") -> None:
    """Serve until interrupted."""
    server = ThreadingHTTPServer((address, port), _make_handler(host))
    logger.info("listening on %s:%d", address, server.server_address[1])
    try:
        server.serve_forever()
    finally:
        server.server_close()


class BackgroundServer:
    """Context manager running a host server on an ephemeral port (tests)."""

    def __init__(self, host: GameHost):
        self.server = make_server(host)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        addr, port = self.server.server_address[:2]
        return f"http://{addr}:{port}"

    def __enter__(self) -> "BackgroundServer":
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.server.shutdown()
        self.server.server_close()


def _query_params(path: str) -> dict[str, str]:
    if "?" not in path:
        return {}
    out: dict[str, str] = {}
    for pair in path.split("?", 1)[1].split("&"):
        if "=" in pair:
            key, value = pair.split("=", 1)
            out[key] = value
    return out
