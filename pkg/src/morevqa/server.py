"""Newline-delimited JSON server exposing a backend over TCP.

One request object per line, one response object per line. Malformed lines
produce an `invalid:`-prefixed error response and leave the connection open.
"""

from __future__ import annotations

import json
import socketserver
import threading

from .tools import ToolRequest


def _error_line(req_id: int, message: str) -> bytes:
    payload = {"id": req_id, "ok": False, "result": None, "error": f"invalid: {message}"}
    return (json.dumps(payload) + "\n").encode("utf-8")


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        while True:
            line = self.rfile.readline()
            if not line:
                return
            text = line.decode("utf-8", errors="replace").strip()
            if not text:
                continue
            req_id = 0
            try:
                obj = json.loads(text)
                if not isinstance(obj, dict):
                    raise ValueError("request must be a JSON object")
                if isinstance(obj.get("id"), int):
                    req_id = obj["id"]
                req = ToolRequest.from_json_dict(obj)
            except (ValueError, KeyError, TypeError) as exc:
                self.wfile.write(_error_line(req_id, f"bad request line ({exc})"))
                self.wfile.flush()
                continue
            resp = self.server.backend.dispatch(req)
            self.wfile.write((json.dumps(resp.to_json_dict()) + "\n").encode("utf-8"))
            self.wfile.flush()


class ToolServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], backend):
        super().__init__(address, _Handler)
        self.backend = backend


def start_server(backend, host: str = "127.0.0.1", port: int = 0) -> ToolServer:
    """Start a server thread; the caller owns shutdown()."""
    server = ToolServer((host, port), backend)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def parse_listen_address(listen: str) -> tuple[str, int]:
    host, _, port_text = listen.rpartition(":")
    if not host or not port_text.isdigit():
        raise ValueError(f"listen address must be HOST:PORT, got {listen!r}")
    return host, int(port_text)
