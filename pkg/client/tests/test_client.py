import io
import json
import socket
import threading

import pytest

import nbbclient
from nbbclient import ProtocolError, RemoteError, SessionConnectionError


def test_connect_and_ping(tcp_server):
    host, port = tcp_server
    with nbbclient.connect(host, port) as session:
        assert session.ping() is True
        info = session.info()
        assert info["rows"] == 8 and info["cols"] == 4


def test_connect_refused():
    # grab a port and close it so nothing listens there
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    with pytest.raises(ConnectionError):
        nbbclient.connect("127.0.0.1", port, timeout=2.0)


def test_ids_restart_per_session(tcp_server):
    host, port = tcp_server
    for _ in range(2):
        with nbbclient.connect(host, port) as session:
            # connect() already spent id 1 on its ping round-trip
            assert session.next_id == 2
            session.ping()
            assert session.next_id == 3


def test_ids_strictly_increasing(stdio_session):
    start = stdio_session.next_id
    stdio_session.ping()
    stdio_session.info()
    assert stdio_session.next_id == start + 2


def test_read_cell_roundtrip(stdio_session):
    stdio_session.calibrate()
    payload = stdio_session.read_cell(0, 0)
    assert "resistance_ohm" in payload
    assert payload["stage_id"] in (0, 1, 2, 3)
    assert len(payload["codes"]) == 50


def test_unknown_op_raises_remote_error(stdio_session):
    with pytest.raises(RemoteError) as exc:
        stdio_session.call("nope")
    assert exc.value.code == "unknown_op"


def test_remote_error_codes_surface(stdio_session):
    with pytest.raises(RemoteError) as exc:
        stdio_session.read_cell(0, 0)  # not calibrated yet
    assert exc.value.code == "calibration_error"
    stdio_session.calibrate()
    with pytest.raises(RemoteError) as exc:
        stdio_session.measure_reference(1e9)
    assert exc.value.code == "range_error"
    with pytest.raises(RemoteError) as exc:
        stdio_session.write_cell(0, 0, (5_000.0, 1.0))
    assert exc.value.code == "write_failed"
    assert exc.value.payload is not None


def test_write_then_read(stdio_session):
    stdio_session.calibrate()
    result = stdio_session.write_cell(0, 0, "set_lrs")
    assert result["reached"] is True
    reading = stdio_session.read_cell(0, 0)
    assert reading["resistance_ohm"] < 15_000


def test_mvm_wrapper(stdio_session):
    stdio_session.calibrate()
    out = stdio_session.mvm([0.1] * 8, col_subset=[0, 2])
    assert [c["col"] for c in out["columns"]] == [0, 2]
    assert all(c["error"] is None for c in out["columns"])


def test_protocol_error_on_id_mismatch():
    rfile = io.StringIO('{"id": 999, "ok": true, "payload": {}}\n')
    wfile = io.StringIO()
    session = nbbclient.ClientSession(rfile, wfile)
    with pytest.raises(ProtocolError):
        session.call("ping")


def test_protocol_error_on_bad_json():
    rfile = io.StringIO("not json\n")
    session = nbbclient.ClientSession(rfile, io.StringIO())
    with pytest.raises(ProtocolError):
        session.call("ping")


def test_connection_error_on_eof():
    session = nbbclient.ClientSession(io.StringIO(""), io.StringIO())
    with pytest.raises(SessionConnectionError):
        session.call("ping")


def test_closed_session_rejects_calls():
    session = nbbclient.ClientSession(io.StringIO(""), io.StringIO())
    session.close()
    with pytest.raises(SessionConnectionError):
        session.ping()


def test_timeout_raises(config_path):
    # a listener that accepts but never answers
    silent = socket.socket()
    silent.bind(("127.0.0.1", 0))
    silent.listen(1)
    port = silent.getsockname()[1]
    accepted = []
    t = threading.Thread(target=lambda: accepted.append(silent.accept()),
                         daemon=True)
    t.start()
    with pytest.raises(TimeoutError):
        nbbclient.connect("127.0.0.1", port, timeout=0.5)
    silent.close()


def test_requests_are_well_formed():
    rfile = io.StringIO('{"id": 1, "ok": true, "payload": {"pong": true}}\n')
    wfile = io.StringIO()
    session = nbbclient.ClientSession(rfile, wfile)
    session.ping()
    sent = json.loads(wfile.getvalue())
    assert sent == {"id": 1, "op": "ping", "params": {}}
