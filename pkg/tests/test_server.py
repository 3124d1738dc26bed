from __future__ import annotations

import json
import socket
import threading

import pytest

from morevqa.server import parse_listen_address, start_server
from morevqa.tools import RemoteBackend, ToolRequest


@pytest.fixture()
def server(mock_backend):
    srv = start_server(mock_backend)
    yield srv
    srv.shutdown()
    srv.server_close()


def _addr(server):
    host, port = server.server_address[:2]
    return host, port


def test_remote_matches_in_process(server, mock_backend):
    host, port = _addr(server)
    remote = RemoteBackend(host, port)
    requests = [
        ToolRequest(1, "caption", "v000", 3),
        ToolRequest(2, "score", "v000", 3, {"text": "grey cat"}),
        ToolRequest(3, "localize", "v000", None, {"object": "cat", "frames": list(range(32))}),
        ToolRequest(4, "verify_action", "v000", 3, {"action": "anything"}),
        ToolRequest(5, "caption", "v000", 99),  # backend error passes through
    ]
    for req in requests:
        assert remote.dispatch(req) == mock_backend.dispatch(req)
    remote.close()


def test_malformed_line_keeps_connection_open(server):
    host, port = _addr(server)
    sock = socket.create_connection((host, port), timeout=5)
    fh = sock.makefile("rwb")
    fh.write(b"this is not json\n")
    fh.flush()
    reply = json.loads(fh.readline())
    assert reply["ok"] is False
    assert reply["error"].startswith("invalid:")
    # the same connection still serves valid requests
    fh.write((json.dumps(ToolRequest(7, "caption", "v000", 1).to_json_dict()) + "\n").encode())
    fh.flush()
    reply = json.loads(fh.readline())
    assert reply["ok"] is True and reply["id"] == 7
    sock.close()


def test_concurrent_clients_get_matching_ids(server):
    host, port = _addr(server)
    errors = []

    def worker(offset):
        try:
            remote = RemoteBackend(host, port)
            for i in range(20):
                req_id = offset * 1000 + i
                resp = remote.dispatch(ToolRequest(req_id, "caption", "v000", i % 32))
                assert resp.id == req_id, (resp.id, req_id)
                assert resp.ok
            remote.close()
        except Exception as exc:  # surface across the thread boundary
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors


def test_transport_error_reported():
    remote = RemoteBackend("127.0.0.1", 1, timeout_s=0.5)  # nothing listens there
    resp = remote.dispatch(ToolRequest(1, "caption", "v000", 0))
    assert not resp.ok and resp.error.startswith("transport:")


def test_parse_listen_address():
    assert parse_listen_address("127.0.0.1:9000") == ("127.0.0.1", 9000)
    with pytest.raises(ValueError):
        parse_listen_address("no-port")
