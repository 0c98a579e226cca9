"""Synchronous NDJSON session against a served simulator.

One request in flight at a time; request ids count up from 1 within a
session. All measurement numbers originate server-side; the client only
frames requests and unwraps responses.
"""

from __future__ import annotations

import json
import socket

from .errors import ProtocolError, RemoteError, SessionConnectionError


class ClientSession:
    """Request/response session over a pair of text streams."""

    def __init__(self, rfile, wfile, closer=None):
        self._rfile = rfile
        self._wfile = wfile
        self._closer = closer
        self._next_id = 1
        self._closed = False

    # -- lifecycle -----------------------------------------------------------

    @property
    def next_id(self) -> int:
        return self._next_id

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for stream in (self._wfile, self._rfile):
            try:
                stream.close()
            except OSError:
                pass
        if self._closer is not None:
            try:
                self._closer()
            except OSError:
                pass

    def __enter__(self) -> "ClientSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- core call -------------------------------------------------------------

    def call(self, op: str, params: dict | None = None):
        """Issue one operation and return its payload.

        Raises RemoteError on ok=false responses, ProtocolError on
        malformed or mismatched responses, TimeoutError if the socket
        timeout elapses, SessionConnectionError if the link drops.
        """
        if self._closed:
            raise SessionConnectionError("session is closed")
        req_id = self._next_id
        self._next_id += 1
        line = json.dumps({"id": req_id, "op": op, "params": params or {}})
        try:
            self._wfile.write(line + "\n")
            self._wfile.flush()
            raw = self._rfile.readline()
        except TimeoutError:
            raise
        except (BrokenPipeError, ConnectionError, OSError) as exc:
            raise SessionConnectionError(f"transport failed: {exc}") from exc
        if raw == "":
            raise SessionConnectionError("server closed the connection")
        try:
            response = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"response is not valid JSON: {raw!r}") from exc
        if not isinstance(response, dict) or "ok" not in response:
            raise ProtocolError(f"response lacks protocol fields: {response!r}")
        if response.get("id") != req_id:
            raise ProtocolError(
                f"response id {response.get('id')!r} does not match request {req_id}")
        if not response["ok"]:
            raise RemoteError(response.get("error", "unknown_error"),
                              response.get("message", ""),
                              payload=response.get("payload"))
        return response.get("payload")

    # -- convenience wrappers -----------------------------------------------------

    def ping(self) -> bool:
        return bool(self.call("ping").get("pong"))

    def info(self) -> dict:
        return self.call("info")

    def calibrate(self, references: dict | None = None,
                  n_samples: int | None = None) -> dict:
        params = {}
        if references is not None:
            params["references"] = {str(k): list(v) for k, v in references.items()}
        if n_samples is not None:
            params["n_samples"] = n_samples
        return self.call("calibrate", params)

    def get_calibration(self) -> dict:
        return self.call("get_calibration")

    def read_cell(self, row: int, col: int, n_samples: int = 50,
                  gate_on: bool = True) -> dict:
        return self.call("read_cell", {"row": row, "col": col,
                                       "n_samples": n_samples,
                                       "gate_on": gate_on})

    def write_cell(self, row: int, col: int, target,
                   max_pulses: int | None = None,
                   single_shot: bool = False) -> dict:
        if isinstance(target, tuple):
            target = {"r_ohm": target[0], "tol_pct": target[1]}
        params = {"row": row, "col": col, "target": target,
                  "single_shot": single_shot}
        if max_pulses is not None:
            params["max_pulses"] = max_pulses
        return self.call("write_cell", params)

    def measure_reference(self, r_ohm: float, n_samples: int | None = None) -> dict:
        params = {"r_ohm": r_ohm}
        if n_samples is not None:
            params["n_samples"] = n_samples
        return self.call("measure_reference", params)

    def mvm(self, inputs, col_subset=None, n_samples: int = 1) -> dict:
        params = {"inputs": list(inputs), "n_samples": n_samples}
        if col_subset is not None:
            params["col_subset"] = list(col_subset)
        return self.call("mvm", params)

    def magic_nor(self, row: int, in_cols, out_col: int) -> dict:
        return self.call("magic_nor", {"row": row, "in_cols": list(in_cols),
                                       "out_col": out_col})


def connect(host: str, port: int, timeout: float = 10.0) -> ClientSession:
    """Open a TCP session and verify it with a ping round-trip."""
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise SessionConnectionError(
            f"cannot connect to {host}:{port}: {exc}") from exc
    sock.settimeout(timeout)
    fh = sock.makefile("rw", encoding="utf-8", newline="\n")
    session = ClientSession(fh, fh, closer=sock.close)
    session.ping()
    return session


def connect_pipes(rfile, wfile, closer=None, ping: bool = True) -> ClientSession:
    """Session over existing pipe/file handles (stdio transport)."""
    session = ClientSession(rfile, wfile, closer=closer)
    if ping:
        session.ping()
    return session
