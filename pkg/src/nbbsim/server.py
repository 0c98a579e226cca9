"""NDJSON wire protocol for the controller.

Requests {"id", "op", "params"} map one-to-one onto the controller
operations plus calibration management; each request yields exactly one
response {"id", "ok", "payload"|"error"}. Requests execute strictly in
arrival order; one client session at a time.
"""

from __future__ import annotations

import json
import logging
import socketserver

from .controller import Controller
from .errors import (CalibrationError, LogicError, NbbError, OutOfRangeError,
                     RangeError, SingularNetworkError, WriteFailed)
from .signal_chain import CalibrationTable

log = logging.getLogger(__name__)

_ERROR_CODES = {
    OutOfRangeError: "out_of_range",
    RangeError: "range_error",
    CalibrationError: "calibration_error",
    WriteFailed: "write_failed",
    LogicError: "logic_error",
    SingularNetworkError: "singular_network",
}


class ProtocolSession:
    """Dispatches decoded requests against one controller instance."""

    def __init__(self, controller: Controller):
        self.controller = controller
        self._ops = {
            "ping": self._op_ping,
            "info": self._op_info,
            "calibrate": self._op_calibrate,
            "get_calibration": self._op_get_calibration,
            "load_calibration": self._op_load_calibration,
            "read_cell": self._op_read_cell,
            "write_cell": self._op_write_cell,
            "measure_reference": self._op_measure_reference,
            "mvm": self._op_mvm,
            "magic_nor": self._op_magic_nor,
        }

    # -- framing ---------------------------------------------------------

    def handle_line(self, line: str) -> dict:
        line = line.strip()
        try:
            request = json.loads(line)
        except json.JSONDecodeError:
            return {"id": None, "ok": False, "error": "malformed_request"}
        if not isinstance(request, dict) or "op" not in request:
            return {"id": None, "ok": False, "error": "malformed_request"}
        req_id = request.get("id")
        op = request.get("op")
        params = request.get("params", {})
        if not isinstance(params, dict):
            return {"id": req_id, "ok": False, "error": "malformed_request"}
        handler = self._ops.get(op)
        if handler is None:
            return {"id": req_id, "ok": False, "error": "unknown_op"}
        try:
            payload = handler(params)
        except NbbError as exc:
            code = _ERROR_CODES.get(type(exc), "operation_error")
            response = {"id": req_id, "ok": False, "error": code,
                        "message": str(exc)}
            if isinstance(exc, WriteFailed):
                response["payload"] = {
                    "pulses_used": exc.pulses_used,
                    "last_resistance_ohm": exc.last_resistance_ohm,
                }
            return response
        except (TypeError, ValueError, KeyError, IndexError) as exc:
            return {"id": req_id, "ok": False, "error": "invalid_params",
                    "message": str(exc)}
        return {"id": req_id, "ok": True, "payload": payload}

    def serve_stream(self, rfile, wfile) -> None:
        """Request/response loop over text file objects (stdio transport)."""
        for line in rfile:
            if not line.strip():
                continue
            response = self.handle_line(line)
            wfile.write(json.dumps(response) + "\n")
            wfile.flush()

    # -- operations ---------------------------------------------------------

    def _op_ping(self, params: dict) -> dict:
        return {"pong": True}

    def _op_info(self, params: dict) -> dict:
        cfg = self.controller.config
        return {
            "schema_version": cfg.schema_version,
            "seed": cfg.seed,
            "rows": cfg.array.rows,
            "cols": cfg.array.cols,
            "topology": cfg.array.topology,
            "calibrated": self.controller.calibration is not None,
        }

    def _op_calibrate(self, params: dict) -> dict:
        refs = params.get("references")
        if refs is not None:
            refs = {int(k): [float(r) for r in v] for k, v in refs.items()}
        n = params.get("n_samples")
        table = self.controller.calibrate(refs, n_samples=n)
        return table.to_dict()

    def _op_get_calibration(self, params: dict) -> dict:
        table = self.controller.calibration
        if table is None:
            raise CalibrationError("no calibration loaded")
        return table.to_dict()

    def _op_load_calibration(self, params: dict) -> dict:
        table = CalibrationTable.from_dict(params["table"])
        self.controller.load_calibration(table)
        return {"loaded": True}

    def _op_read_cell(self, params: dict) -> dict:
        record = self.controller.read_cell(
            int(params["row"]), int(params["col"]),
            n_samples=int(params.get("n_samples", 50)),
            gate_on=bool(params.get("gate_on", True)))
        return record.to_dict()

    def _op_measure_reference(self, params: dict) -> dict:
        record = self.controller.measure_reference(
            float(params["r_ohm"]),
            n_samples=params.get("n_samples"))
        return record.to_dict()

    def _op_write_cell(self, params: dict) -> dict:
        target = params["target"]
        if isinstance(target, dict):
            target = (float(target["r_ohm"]), float(target["tol_pct"]))
        elif target not in ("set_lrs", "reset_hrs"):
            raise ValueError(f"unrecognized write target {target!r}")
        result = self.controller.write_cell(
            int(params["row"]), int(params["col"]), target,
            max_pulses=params.get("max_pulses"),
            single_shot=bool(params.get("single_shot", False)))
        return {
            "pulses_used": result.pulses_used,
            "final_resistance_ohm": result.final_resistance_ohm,
            "reached": result.reached,
            "trace": result.trace,
        }

    def _op_mvm(self, params: dict) -> dict:
        inputs = params["inputs"]
        subset = params.get("col_subset")
        result = self.controller.mvm(inputs, col_subset=subset,
                                     n_samples=int(params.get("n_samples", 1)))
        return {
            "v_actual": [float(v) for v in result.v_actual],
            "columns": [
                {"col": c.col, "current_a": c.current_a, "code": c.code,
                 "stage_id": c.stage_id, "error": c.error}
                for c in result.columns
            ],
        }

    def _op_magic_nor(self, params: dict) -> dict:
        result = self.controller.magic_nor(
            int(params["row"]),
            [int(c) for c in params["in_cols"]],
            int(params["out_col"]))
        return {
            "value": result.value,
            "output_resistance_ohm": result.output_resistance_ohm,
            "input_resistances_ohm": result.input_resistances_ohm,
        }


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        session = ProtocolSession(self.server.controller)  # type: ignore[attr-defined]
        rfile = self.rfile
        wfile = self.wfile
        try:
            for raw in rfile:
                line = raw.decode("utf-8", errors="replace")
                if not line.strip():
                    continue
                response = session.handle_line(line)
                wfile.write((json.dumps(response) + "\n").encode("utf-8"))
                wfile.flush()
        except (ConnectionError, BrokenPipeError):
            log.info("client connection lost; session closed")


class ControllerServer(socketserver.TCPServer):
    """Sequential TCP server: connections are served one at a time."""

    allow_reuse_address = True

    def __init__(self, controller: Controller, host: str = "127.0.0.1",
                 port: int = 0):
        super().__init__((host, port), _Handler)
        self.controller = controller

    @property
    def port(self) -> int:
        return self.server_address[1]


def serve_stdio(controller: Controller, rfile, wfile) -> None:
    ProtocolSession(controller).serve_stream(rfile, wfile)
