"""Minimal JSON-over-HTTP plumbing shared by the node, portal, and cutout
services: a threaded server with routed handlers, structured error bodies,
and per-request transfer-size accounting."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

import requests


class ServiceError(Exception):
    """An error meant for the wire: {"error": {code, message, hop?}}."""

    def __init__(self, code: str, message: str, status: int = 400,
                 hop: str | None = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status = status
        self.hop = hop

    def to_json_obj(self) -> dict:
        err = {"code": self.code, "message": self.message}
        if self.hop:
            err["hop"] = self.hop
        return {"error": err}


class TransferLog:
    """Thread-safe log of request/response payload sizes."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: list[dict] = []

    def record(self, plan_id: str | None, url: str, endpoint: str,
               request_bytes: int, response_bytes: int):
        with self._lock:
            self._entries.append({
                "plan_id": plan_id,
                "url": url,
                "endpoint": endpoint,
                "request_bytes": request_bytes,
                "response_bytes": response_bytes,
            })

    def entries(self, plan_id: str | None = None) -> list[dict]:
        with self._lock:
            if plan_id is None:
                return list(self._entries)
            return [e for e in self._entries if e["plan_id"] == plan_id]


def post_json(url: str, body: dict, timeout: float,
              log: TransferLog | None = None,
              plan_id: str | None = None) -> dict:
    """POST a JSON body; return the decoded response.

    Transport failures and structured error bodies both become
    ServiceError with the failing url as the hop (downstream hops are
    preserved when the error body already names one)."""
    payload = json.dumps(body).encode("utf-8")
    try:
        resp = requests.post(
            url, data=payload, timeout=timeout,
            headers={"Content-Type": "application/json"})
    except requests.RequestException as exc:
        raise ServiceError("unreachable", f"{url}: {exc}", 502, hop=url)
    if log is not None:
        log.record(plan_id, url, urlsplit(url).path,
                   len(payload), len(resp.content))
    return _decode_response(url, resp)


def get_json(url: str, params: dict | None, timeout: float,
             log: TransferLog | None = None,
             plan_id: str | None = None) -> dict:
    try:
        resp = requests.get(url, params=params or {}, timeout=timeout)
    except requests.RequestException as exc:
        raise ServiceError("unreachable", f"{url}: {exc}", 502, hop=url)
    if log is not None:
        log.record(plan_id, url, urlsplit(url).path,
                   len(resp.request.url or url), len(resp.content))
    return _decode_response(url, resp)


def _decode_response(url: str, resp) -> dict:
    try:
        obj = resp.json()
    except ValueError:
        raise ServiceError(
            "bad_response", f"{url}: non-JSON response "
            f"(status {resp.status_code})", 502, hop=url)
    if resp.status_code >= 300 or "error" in obj:
        err = obj.get("error", {})
        status = resp.status_code if resp.status_code >= 300 else 502
        raise ServiceError(
            err.get("code", "remote_error"),
            err.get("message", f"status {resp.status_code}"),
            status, hop=err.get("hop") or url)
    return obj


class JsonHttpService:
    """Route table plus a threaded HTTP server.

    Handlers receive (query_params, body_obj) and return either a dict
    (sent as JSON) or a (content_type, bytes, headers) triple for binary
    responses. They raise ServiceError for structured failures.
    """

    def __init__(self):
        self.routes: dict[tuple[str, str], callable] = {}
        self.server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    def route(self, method: str, path: str, handler):
        self.routes[(method, path)] = handler

    def start(self, host: str = "127.0.0.1", port: int = 0) -> str:
        service = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def _dispatch(self, method: str):
                parts = urlsplit(self.path)
                params = {k: v[0] for k, v in
                          parse_qs(parts.query).items()}
                handler = service.routes.get((method, parts.path))
                if handler is None:
                    self._send_error(ServiceError(
                        "not_found", f"no such endpoint: {parts.path}", 404))
                    return
                body = None
                if method == "POST":
                    length = int(self.headers.get("Content-Length") or 0)
                    raw = self.rfile.read(length)
                    try:
                        body = json.loads(raw) if raw else None
                    except ValueError:
                        self._send_error(ServiceError(
                            "bad_request", "request body is not JSON", 400))
                        return
                try:
                    result = handler(params, body)
                except ServiceError as exc:
                    self._send_error(exc)
                    return
                except Exception as exc:  # pragma: no cover - last resort
                    self._send_error(ServiceError(
                        "internal", f"{type(exc).__name__}: {exc}", 500))
                    return
                if isinstance(result, tuple):
                    ctype, data, headers = result
                    self._send_bytes(200, ctype, data, headers)
                else:
                    self._send_bytes(
                        200, "application/json",
                        json.dumps(result).encode("utf-8"), {})

            def _send_error(self, exc: ServiceError):
                data = json.dumps(exc.to_json_obj()).encode("utf-8")
                self._send_bytes(exc.status, "application/json", data, {})

            def _send_bytes(self, status, ctype, data, headers):
                self.send_response(status)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(data)))
                for k, v in headers.items():
                    self.send_header(k, v)
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                self._dispatch("GET")

            def do_POST(self):
                self._dispatch("POST")

        self.server = ThreadingHTTPServer((host, port), Handler)
        self.server.daemon_threads = True
        self._thread = threading.Thread(
            target=self.server.serve_forever, daemon=True)
        self._thread.start()
        actual_host, actual_port = self.server.server_address[:2]
        return f"http://{actual_host}:{actual_port}"

    def stop(self):
        if self.server is not None:
            self.server.shutdown()
            self.server.server_close()
            self.server = None
