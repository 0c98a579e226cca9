"""Experiment runner: accuracy histogram, reference sweep, endurance cycling.

Every experiment is driven by an ExperimentSpec with a mandatory seed,
writes a CSV, and returns a summary dict. Identical spec + config yield
byte-identical CSV output.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .config import SimConfig
from .controller import Controller, PulsePurpose
from .device import logic_device_params
from .errors import RangeError, SchemaError, WriteFailed

log = logging.getLogger(__name__)

HISTOGRAM_HEADER = ["measurement_index", "resistance_ohm"]
SWEEP_HEADER = ["r_ref_ohm", "relative_error_pct", "relative_sigma_pct", "status"]
ENDURANCE_HEADER = ["measurement_no", "resistance_ohm", "op"]

DEFAULT_SWEEP_REFS_OHM = [1e3, 50e3, 100e3, 200e3, 300e3, 400e3,
                          500e3, 600e3, 700e3, 800e3, 1000e3]
VALIDITY_WINDOW_OHM = (1e3, 1e6)


class ExperimentKind(Enum):
    HISTOGRAM = "histogram"
    ERROR_SWEEP = "error_sweep"
    ENDURANCE = "endurance"
    MVM_DEMO = "mvm_demo"
    LOGIC_DEMO = "logic_demo"


@dataclass
class ExperimentSpec:
    kind: ExperimentKind
    seed: int
    out_path: str
    repeats: int = 1000
    samples_per_measurement: int = 50
    reference_values: list = field(default_factory=list)
    truth_ohm: float = 99_896.0

    def __post_init__(self):
        if self.repeats < 0:
            raise ValueError("repeats must be non-negative")
        if self.seed is None:
            raise ValueError("a seed is mandatory; wall-clock seeding is not allowed")


def _write_csv(path: str, header: list, rows: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def two_pass_stats(values) -> tuple[int, float | None, float | None]:
    """Count, mean and sample standard deviation (n-1), two-pass form."""
    vals = list(values)
    n = len(vals)
    if n == 0:
        return 0, None, None
    mean = math.fsum(vals) / n
    if n == 1:
        return 1, mean, None
    if min(vals) == max(vals):  # identical samples: zero spread, no float residue
        return n, vals[0], 0.0
    var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1)
    return n, mean, math.sqrt(var)


def _substreams(seed: int, n: int) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def run_histogram(spec: ExperimentSpec, config: SimConfig) -> dict:
    """Repeated measurements of one known reference resistor."""
    cal_rng, meas_rng = _substreams(spec.seed, 2)
    controller = Controller(config, rng=cal_rng)
    controller.calibrate()

    rows = []
    failed = 0
    values = []
    for k in range(spec.repeats):
        try:
            record = controller.measure_reference(
                spec.truth_ohm, n_samples=spec.samples_per_measurement,
                rng=meas_rng)
        except RangeError as exc:
            failed += 1
            log.warning("measurement %d failed: %s", k, exc)
            continue
        values.append(record.resistance_ohm)
        rows.append([k, repr(record.resistance_ohm)])
    _write_csv(spec.out_path, HISTOGRAM_HEADER, rows)

    n, mean, sigma = two_pass_stats(values)
    summary = {
        "kind": spec.kind.value,
        "truth_ohm": spec.truth_ohm,
        "count": n,
        "failed": failed,
        "mean_ohm": mean,
        "sigma_ohm": sigma,
        "relative_error_pct": (abs(mean - spec.truth_ohm) / spec.truth_ohm * 100.0
                               if mean is not None else None),
        "relative_sigma_pct": (sigma / mean * 100.0
                               if sigma is not None and mean else None),
    }
    return summary


def run_error_sweep(spec: ExperimentSpec, config: SimConfig) -> dict:
    """Relative error and sigma across a set of reference resistances."""
    refs = spec.reference_values or list(DEFAULT_SWEEP_REFS_OHM)
    streams = _substreams(spec.seed, 1 + len(refs))
    controller = Controller(config, rng=streams[0])
    controller.calibrate()

    rows = []
    points = []
    for r_ref, rng in zip(refs, streams[1:]):
        values = []
        failed = 0
        for _ in range(spec.repeats):
            try:
                record = controller.measure_reference(
                    r_ref, n_samples=spec.samples_per_measurement, rng=rng)
            except RangeError:
                failed += 1
                continue
            values.append(record.resistance_ohm)
        n, mean, sigma = two_pass_stats(values)
        if n == 0:
            rows.append([repr(float(r_ref)), "", "", "out_of_range"])
            points.append({"r_ref_ohm": r_ref, "status": "out_of_range",
                           "failed": failed})
            continue
        err_pct = abs(mean - r_ref) / r_ref * 100.0
        sig_pct = (sigma / mean * 100.0) if sigma is not None else 0.0
        rows.append([repr(float(r_ref)), repr(err_pct), repr(sig_pct), "ok"])
        points.append({"r_ref_ohm": r_ref, "status": "ok", "count": n,
                       "failed": failed, "relative_error_pct": err_pct,
                       "relative_sigma_pct": sig_pct})
    _write_csv(spec.out_path, SWEEP_HEADER, rows)
    return {"kind": spec.kind.value, "points": points,
            "repeats": spec.repeats,
            "samples_per_measurement": spec.samples_per_measurement}


def run_endurance(spec: ExperimentSpec, config: SimConfig) -> dict:
    """Alternating RESET/SET cycling of one cell with a read after each pulse."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    controller = Controller(config, rng=rng)
    controller.calibrate()
    ec = config.endurance
    row, col = ec.target_row, ec.target_col

    rows = []
    reset_reads = []
    set_reads = []
    failures = 0
    no = 0
    for _ in range(spec.repeats):
        for op_name, amplitude in (("RESET", ec.reset_amplitude),
                                   ("SET", ec.set_amplitude)):
            no += 1
            try:
                purpose = (PulsePurpose.RESET if op_name == "RESET"
                           else PulsePurpose.SET)
                controller.pulse(row, col, amplitude, ec.pulse_width, purpose)
                record = controller.read_cell(
                    row, col, n_samples=spec.samples_per_measurement)
            except (WriteFailed, RangeError) as exc:
                failures += 1
                log.warning("cycle %d %s failed: %s", no, op_name, exc)
                continue
            r = record.resistance_ohm
            rows.append([no, repr(r), op_name])
            (reset_reads if op_name == "RESET" else set_reads).append(r)
    _write_csv(spec.out_path, ENDURANCE_HEADER, rows)

    _, hrs_mean, _ = two_pass_stats(reset_reads)
    _, lrs_mean, _ = two_pass_stats(set_reads)
    summary = {
        "kind": spec.kind.value,
        "cycles": spec.repeats,
        "failures": failures,
        "post_reset_mean_ohm": hrs_mean,
        "post_set_mean_ohm": lrs_mean,
        "post_reset_min_ohm": min(reset_reads) if reset_reads else None,
        "post_set_max_ohm": max(set_reads) if set_reads else None,
        "median_ratio": (float(np.median(reset_reads) / np.median(set_reads))
                         if reset_reads and set_reads else None),
    }
    return summary


def run_mvm_demo(spec: ExperimentSpec, config: SimConfig,
                 rows_n: int = 8, cols_n: int = 4) -> dict:
    """Random-matrix MVM compared against the exact conductance oracle."""
    config = replace(config, array=replace(
        config.array, rows=rows_n, cols=cols_n, topology="passive_1r",
        r_wire_segment=0.0))
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    controller = Controller(config, rng=rng)
    for i in range(rows_n):
        for j in range(cols_n):
            controller.array.cells[i][j].x = float(rng.uniform(0.0, 1.0))
    v_in = rng.uniform(0.05, 0.5, rows_n)

    result = controller.mvm(list(v_in))
    g = controller.array.branch_conductances()
    oracle = g.T @ result.v_actual

    out_rows = []
    max_err = 0.0
    for c, exact in zip(result.columns, oracle):
        if c.error is not None:
            out_rows.append([c.col, "", repr(float(exact)), c.error])
            continue
        err = abs(c.current_a - exact)
        max_err = max(max_err, err)
        out_rows.append([c.col, repr(c.current_a), repr(float(exact)), "ok"])
    _write_csv(spec.out_path, ["col", "current_a", "oracle_a", "status"], out_rows)
    return {"kind": spec.kind.value, "max_abs_error_a": max_err,
            "columns": len(out_rows)}


def run_logic_demo(spec: ExperimentSpec, config: SimConfig) -> dict:
    """Truth table of the stateful NOR on a logic-tuned array."""
    config = replace(config, device=logic_device_params(config.device),
                     array=replace(config.array, rows=4, cols=8))
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    controller = Controller(config, rng=rng)
    controller.calibrate()

    rows = []
    all_ok = True
    for a in (0, 1):
        for b in (0, 1):
            controller.write_cell(0, 0, "set_lrs" if a else "reset_hrs")
            controller.write_cell(0, 1, "set_lrs" if b else "reset_hrs")
            result = controller.magic_nor(0, [0, 1], 2)
            expected = int(not (a or b))
            ok = result.value == expected
            all_ok = all_ok and ok
            rows.append([a, b, result.value, expected, "pass" if ok else "FAIL"])
    _write_csv(spec.out_path, ["a", "b", "nor", "expected", "status"], rows)
    return {"kind": spec.kind.value, "all_pass": all_ok, "cases": len(rows)}


def report(csv_path: str) -> dict:
    """Aggregate a harness CSV into per-group statistics."""
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{csv_path}: empty file, no header")
        rows = list(reader)

    if header == HISTOGRAM_HEADER:
        values = [float(r[1]) for r in rows]
        n, mean, sigma = two_pass_stats(values)
        return {"schema": "histogram", "count": n, "mean_ohm": mean,
                "sigma_ohm": sigma}
    if header == ENDURANCE_HEADER:
        groups: dict[str, list] = {}
        for r in rows:
            groups.setdefault(r[2], []).append(float(r[1]))
        out = {}
        for op, values in sorted(groups.items()):
            n, mean, sigma = two_pass_stats(values)
            out[op] = {"count": n, "mean_ohm": mean, "sigma_ohm": sigma}
        return {"schema": "endurance", "groups": out}
    if header == SWEEP_HEADER:
        ok_rows = [r for r in rows if r[3] == "ok"]
        errs = [float(r[1]) for r in ok_rows]
        sigs = [float(r[2]) for r in ok_rows]
        return {
            "schema": "error_sweep",
            "points": len(rows),
            "ok_points": len(ok_rows),
            "max_relative_error_pct": max(errs) if errs else None,
            "max_relative_sigma_pct": max(sigs) if sigs else None,
        }
    raise SchemaError(f"{csv_path}: unknown CSV header {header!r}")
