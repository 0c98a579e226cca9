"""Firmware twin: write/read/compute operations on the simulated board.

The controller owns all mutable state (array, calibration, RNG stream,
measurement counter) and serializes every operation, mirroring a single
shared physical instrument.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .config import SimConfig
from .crossbar import CrossbarArray, RailDrive, Topology, solve_ideal, solve_nodal
from .device import MemristorCell
from .errors import CalibrationError, LogicError, RangeError, WriteFailed
from .signal_chain import (CalibrationTable, MeasurementRecord, ReferenceResistor,
                           RoutingMatrix, SignalChain, TiaStage, AdcConfig,
                           DacConfig)


class PulsePurpose(Enum):
    SET = "set"
    RESET = "reset"
    READ = "read"
    LOGIC_STEP = "logic_step"


@dataclass(frozen=True)
class PulseSpec:
    """One scheduled pulse after DAC quantization."""

    target: tuple[int, int]
    amplitude_v: float
    width_s: float
    gate_on: bool
    purpose: PulsePurpose

    def __post_init__(self):
        if self.width_s <= 0.0:
            raise ValueError("pulse width must be positive")


@dataclass
class WriteResult:
    pulses_used: int
    final_resistance_ohm: float
    reached: bool
    trace: list = field(default_factory=list)  # resistance after each verify


@dataclass
class MvmColumn:
    col: int
    current_a: float | None
    code: int | None
    stage_id: int | None
    error: str | None = None


@dataclass
class MvmResult:
    v_actual: np.ndarray
    columns: list

    @property
    def currents(self) -> list:
        return [c.current_a for c in self.columns]


@dataclass
class LogicResult:
    value: int
    output_resistance_ohm: float
    input_resistances_ohm: list
    pulses_for_init: int


class _CellProbe:
    """DUT adapter: instantaneous conductance of one cell with read noise."""

    def __init__(self, cell: MemristorCell):
        self.cell = cell

    def conductance_samples(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.cell.read_conductance(rng, n)


class _OpenSelector:
    """DUT adapter for a disabled 1T1R selector (leakage floor only)."""

    def conductance_samples(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.full(n, 1e-15)


class _PassiveColumnProbe:
    """Apparent conductance of a half-selected passive-array read.

    Every cell's conductance is jittered per sample and the sensed
    column current recomputed through the nodal solver, so sneak paths
    show up in the measurement exactly as they would on hardware.
    """

    def __init__(self, array: CrossbarArray, row: int, col: int, v_probe: float = 0.2):
        self.array = array
        self.row = row
        self.col = col
        self.v_probe = v_probe

    def conductance_samples(self, n: int, rng: np.random.Generator) -> np.ndarray:
        arr = self.array
        drive = RailDrive(
            row_voltages=tuple(self.v_probe if i == self.row else None
                               for i in range(arr.rows)),
            col_voltages=tuple(0.0 if j == self.col else None
                               for j in range(arr.cols)),
        )
        out = np.empty(n)
        sigma_read = arr.cells[self.row][self.col].params.sigma_read
        base_g = arr.conductances()
        for k in range(n):
            noise = 1.0 + sigma_read * rng.standard_normal((arr.rows, arr.cols))
            sol = solve_nodal(_JitteredView(arr, base_g * noise), drive)
            out[k] = sol.col_currents[self.col] / self.v_probe
        return out


class _JitteredView(CrossbarArray):
    """Read-only view of an array with overridden cell conductances."""

    def __init__(self, base: CrossbarArray, g: np.ndarray):
        self.rows = base.rows
        self.cols = base.cols
        self.topology = base.topology
        self.cells = base.cells
        self.r_wire_segment = base.r_wire_segment
        self.r_transistor_on = base.r_transistor_on
        self.gate_mask = base.gate_mask
        self._g = g

    def conductances(self) -> np.ndarray:
        return self._g


class Controller:
    """Single-owner interface to the simulated board."""

    def __init__(self, config: SimConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        cc = config.signal_chain
        stages = tuple(TiaStage(i, g, v_out_max=cc.tia_v_out_max,
                                input_noise_sigma=cc.tia_input_noise_sigma)
                       for i, g in enumerate(cc.tia_gains))
        self.chain = SignalChain(
            dac=DacConfig(),
            stages=stages,
            adc=AdcConfig(noise_sigma_v=cc.adc_noise_sigma_v),
            routing=RoutingMatrix(r_path_ohm=cc.r_path_ohm),
            autorange_window=tuple(cc.autorange_window),
            estimate_samples=cc.estimate_samples,
        )
        ac = config.array
        self.array = CrossbarArray.build(
            ac.rows, ac.cols, ac.topology_enum(), config.device, self.rng,
            r_wire_segment=ac.r_wire_segment,
            r_transistor_on=ac.r_transistor_on,
        )
        self.calibration: CalibrationTable | None = None
        self.timestamp = 0

    # -- pulse scheduling ---------------------------------------------------

    def _set_pulse_levels(self, cell: MemristorCell) -> tuple[float, float]:
        w = self.config.write
        amp = w.set_amplitude
        if amp is None:
            amp = cell.params.v_set + w.set_overdrive
        return amp, w.set_width

    def _reset_pulse_levels(self, cell: MemristorCell) -> tuple[float, float]:
        w = self.config.write
        amp = w.reset_amplitude
        if amp is None:
            amp = -(abs(cell.params.v_reset) + w.reset_overdrive)
        return amp, w.reset_width

    def pulse(self, row: int, col: int, amplitude: float, width: float,
              purpose: PulsePurpose = PulsePurpose.SET) -> PulseSpec:
        """Apply one write pulse to the addressed cell.

        1T1R: only the target selector conducts, so no other cell sees
        any bias. Passive 1R: V/2 half-select scheme; same-row and
        same-column neighbours see half the amplitude and may disturb
        if that exceeds their thresholds.
        """
        cell = self.array.cell(row, col)
        _, v_actual = self.chain.dac.quantize(amplitude, (-5.0, 5.0))
        spec = PulseSpec((row, col), v_actual, width, gate_on=True, purpose=purpose)
        if self.array.topology is Topology.ACTIVE_1T1R:
            self.array.select_only(row, col)
            cell.apply_pulse(v_actual, width, self.rng)
        else:
            half = v_actual / 2.0
            for i, cells_row in enumerate(self.array.cells):
                for j, c in enumerate(cells_row):
                    if i == row and j == col:
                        c.apply_pulse(v_actual, width, self.rng)
                    elif i == row or j == col:
                        c.apply_pulse(half, width, self.rng)
        return spec

    # -- calibration ---------------------------------------------------------

    def calibrate(self, references_per_stage: dict | None = None,
                  n_samples: int | None = None) -> CalibrationTable:
        refs = references_per_stage or self.config.references()
        n = n_samples or self.config.measure.n_samples
        self.timestamp += 1
        self.calibration = self.chain.calibrate(
            refs, self.rng, n_samples=n, seed=self.config.seed,
            timestamp=self.timestamp)
        return self.calibration

    def load_calibration(self, table: CalibrationTable) -> None:
        self.calibration = table

    def _require_calibration(self) -> CalibrationTable:
        if self.calibration is None:
            raise CalibrationError("no calibration loaded; run calibrate first")
        return self.calibration

    # -- measurements ----------------------------------------------------------

    def measure_reference(self, r_ohm: float, n_samples: int | None = None,
                          rng: np.random.Generator | None = None
                          ) -> MeasurementRecord:
        """Measure a precision resistor on the external bench port."""
        cal = self._require_calibration()
        n = n_samples or self.config.measure.n_samples
        self.timestamp += 1
        return self.chain.measure_resistance(
            ReferenceResistor(r_ohm), self.config.measure.v_read, n, cal,
            rng if rng is not None else self.rng, timestamp=self.timestamp)

    def read_cell(self, row: int, col: int, n_samples: int = 50,
                  gate_on: bool = True) -> MeasurementRecord:
        """Non-destructive resistance read of one cell.

        The read voltage stays sub-threshold, so the state variable is
        untouched. Known series constants (selector, wire segments) are
        compensated; routing resistance is handled by the calibration.
        With gate_on=False on a 1T1R array the selector stays open and
        the read fails with RangeError (no current path).
        """
        cal = self._require_calibration()
        cell = self.array.cell(row, col)
        p = self.config.device
        if self.config.measure.v_read >= min(p.v_set, abs(p.v_reset)):
            raise ValueError(
                f"read voltage {self.config.measure.v_read} V is not "
                f"sub-threshold; reads would disturb the state")
        self.timestamp += 1
        extra = 0.0
        if self.array.topology is Topology.ACTIVE_1T1R:
            if gate_on:
                self.array.select_only(row, col)
                extra = (self.array.r_transistor_on
                         + self.array.series_wire_ohm(row, col))
                dut = _CellProbe(cell)
            else:
                self.array.all_gates(False)
                dut = _OpenSelector()
        else:
            dut = _PassiveColumnProbe(self.array, row, col,
                                      v_probe=self.config.measure.v_read)
        return self.chain.measure_resistance(
            dut, self.config.measure.v_read, n_samples, cal, self.rng,
            extra_series_ohm=extra, series_compensation_ohm=extra,
            timestamp=self.timestamp)

    # -- write -----------------------------------------------------------------

    def _target_band(self, target) -> tuple[float, float, str]:
        p = self.config.device
        w = self.config.write
        if target == "set_lrs":
            return (0.0, w.lrs_band_factor * p.r_lrs_ohm, "set_lrs")
        if target == "reset_hrs":
            return (w.hrs_band_factor * p.r_hrs_ohm, float("inf"), "reset_hrs")
        try:
            r_target, tol_pct = target
        except (TypeError, ValueError) as exc:
            raise ValueError(f"unrecognized write target {target!r}") from exc
        lo = r_target * (1.0 - tol_pct / 100.0)
        hi = r_target * (1.0 + tol_pct / 100.0)
        if lo < p.r_lrs_ohm or hi > p.r_hrs_ohm:
            raise WriteFailed(
                f"band [{lo:.0f}, {hi:.0f}] Ohm outside the achievable window "
                f"[{p.r_lrs_ohm:.0f}, {p.r_hrs_ohm:.0f}] Ohm")
        return (lo, hi, "band")

    def write_cell(self, row: int, col: int, target,
                   max_pulses: int | None = None,
                   single_shot: bool = False) -> WriteResult:
        """Program-and-verify write to a state or resistance band.

        Verifies first; already-in-band cells cost zero pulses. Raises
        WriteFailed when the pulse budget is exhausted.
        """
        lo, hi, kind = self._target_band(target)
        budget = max_pulses if max_pulses is not None else self.config.write.max_pulses
        cell = self.array.cell(row, col)

        if single_shot:
            if kind == "reset_hrs":
                amp, width = self._reset_pulse_levels(cell)
                self.pulse(row, col, amp, width, PulsePurpose.RESET)
            else:
                amp, width = self._set_pulse_levels(cell)
                self.pulse(row, col, amp, width, PulsePurpose.SET)
            r = self.read_cell(row, col).resistance_ohm
            return WriteResult(1, r, lo <= r <= hi, [r])

        trace = []
        r = self.read_cell(row, col).resistance_ohm
        trace.append(r)
        pulses = 0
        while not lo <= r <= hi:
            if pulses >= budget:
                raise WriteFailed(
                    f"target band [{lo:.0f}, {hi:.0f}] Ohm not reached after "
                    f"{pulses} pulses (last read {r:.0f} Ohm)",
                    pulses_used=pulses, last_resistance_ohm=r)
            if r > hi:
                amp, width = self._set_pulse_levels(cell)
                if kind == "band":
                    width = self._band_pulse_width(r, (lo + hi) / 2.0, amp, width)
                self.pulse(row, col, amp, width, PulsePurpose.SET)
            else:
                amp, width = self._reset_pulse_levels(cell)
                if kind == "band":
                    width = self._band_pulse_width(r, (lo + hi) / 2.0, amp, width)
                self.pulse(row, col, amp, width, PulsePurpose.RESET)
            pulses += 1
            r = self.read_cell(row, col).resistance_ohm
            trace.append(r)
        return WriteResult(pulses, r, True, trace)

    def _band_pulse_width(self, r_now: float, r_target: float,
                          amplitude: float, full_width: float) -> float:
        """Proportional pulse width toward a mid-band target.

        Estimates the state step needed from the nominal conductance map
        and shortens the pulse accordingly; full fixed-width pulses would
        overshoot intermediate bands in a single step.
        """
        p = self.config.device
        span = p.g_lrs - p.g_hrs

        def x_of(r):
            return min(1.0, max(0.0, (1.0 / r - p.g_hrs) / span))

        needed = abs(x_of(r_target) - x_of(r_now))
        if amplitude > 0:
            rate = p.k_set * (amplitude - p.v_set) ** p.alpha
        else:
            rate = p.k_reset * (abs(amplitude) - abs(p.v_reset)) ** p.alpha
        if rate <= 0.0:
            return full_width
        width = needed / rate
        return min(full_width, max(full_width / 100.0, width))

    # -- compute -----------------------------------------------------------------

    def mvm(self, inputs, col_subset=None, n_samples: int = 1) -> MvmResult:
        """Analog matrix-vector multiply through the sensing chain.

        Integer inputs are taken as DAC codes, floats as requested
        voltages; all inputs must stay sub-threshold. Columns autorange
        independently; a saturated column reports a range error without
        aborting the others.
        """
        cols = list(range(self.array.cols)) if col_subset is None else list(col_subset)
        inputs = list(inputs)
        if len(inputs) != self.array.rows:
            raise ValueError(
                f"need {self.array.rows} inputs, got {len(inputs)}")
        self.chain.routing.require_capacity(self.array.rows + len(cols))

        dac_range = (0.0, 5.0)
        lo, hi = dac_range
        v_actual = np.empty(self.array.rows)
        for i, value in enumerate(inputs):
            if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
                code = int(value)
                if not 0 <= code <= self.chain.dac.code_max:
                    raise ValueError(f"DAC code {code} out of range")
                v_actual[i] = lo + code / self.chain.dac.code_max * (hi - lo)
            else:
                _, v_actual[i] = self.chain.dac.quantize(float(value), dac_range)
        p = self.config.device
        v_limit = min(p.v_set, abs(p.v_reset))
        if np.any(np.abs(v_actual) >= v_limit):
            raise ValueError(
                f"inputs must stay below the switching threshold {v_limit} V")

        self.timestamp += 1
        if self.array.topology is Topology.ACTIVE_1T1R:
            self.array.all_gates(True)
        drive = RailDrive(row_voltages=tuple(v_actual),
                          col_voltages=tuple(0.0 if j in set(cols) else None
                                             for j in range(self.array.cols)))
        base = self.array.branch_conductances()
        sigma_read = p.sigma_read

        results = []
        for j in cols:
            def sample_currents(n, _j=j):
                noise = 1.0 + sigma_read * self.rng.standard_normal(
                    (n, self.array.rows))
                return (base[:, _j] * noise) @ v_actual

            def code_fn(stage, _sample=sample_currents):
                codes = self.chain.sample_codes(_sample(self.chain.estimate_samples),
                                          stage, self.rng)
                return float(codes.mean())

            try:
                stage = self.chain.autorange(code_fn, underrange="highest_gain")
            except RangeError as exc:
                results.append(MvmColumn(j, None, None, None, str(exc)))
                continue
            codes = self.chain.sample_codes(sample_currents(n_samples), stage, self.rng)
            mean_code = float(codes.mean())
            current = self.chain.code_to_voltage(mean_code) / stage.r_feedback_ohm
            results.append(MvmColumn(j, current, int(round(mean_code)),
                                     stage.stage_id))
        return MvmResult(v_actual=v_actual, columns=results)

    def magic_nor(self, row: int, in_cols, out_col: int) -> LogicResult:
        """Stateful NOR within one row: LRS encodes 1, HRS encodes 0.

        The output cell is first forced to LRS, then the input columns
        are driven while the output column is grounded and the row
        floats; the resulting divider resets the output exactly when at
        least one input is low-resistive. Input states are unchanged
        for parameter sets honoring the gate margins (see LogicConfig).
        """
        in_cols = list(in_cols)
        if not in_cols:
            raise ValueError("the gate needs at least one input column")
        involved = in_cols + [out_col]
        if len(set(involved)) != len(involved):
            raise ValueError("input and output columns must be distinct")
        for c in involved:
            self.array.cell(row, c)

        init = self.write_cell(row, out_col, "set_lrs")

        lc = self.config.logic
        _, v_in = self.chain.dac.quantize(-lc.v0, (-2.5, 2.5))
        out_cell = self.array.cell(row, out_col)
        in_cells = [self.array.cell(row, c) for c in in_cols]

        if self.array.topology is Topology.ACTIVE_1T1R:
            self.array.all_gates(False)
            for c in involved:
                self.array.set_gate(row, c, True)
            r_on = self.array.r_transistor_on
        else:
            r_on = 0.0

        dt = lc.width / lc.steps
        for _ in range(lc.steps):
            g_in = np.array([1.0 / (1.0 / c.conductance() + r_on)
                             for c in in_cells])
            g_out = 1.0 / (1.0 / out_cell.conductance() + r_on)
            v_row = v_in * g_in.sum() / (g_in.sum() + g_out)
            stresses = [v_row - v_in] * len(in_cells) + [v_row]
            for cell, stress in zip(in_cells + [out_cell], stresses):
                cell.apply_pulse(stress, dt, self.rng)

        out_r = self.read_cell(row, out_col).resistance_ohm
        in_rs = [self.read_cell(row, c).resistance_ohm for c in in_cols]
        value = self._resistance_to_logic(out_r)
        return LogicResult(value=value, output_resistance_ohm=out_r,
                           input_resistances_ohm=in_rs,
                           pulses_for_init=init.pulses_used)

    def _resistance_to_logic(self, r_ohm: float) -> int:
        lc = self.config.logic
        if r_ohm <= lc.lrs_max_ohm:
            return 1
        if r_ohm >= lc.hrs_min_ohm:
            return 0
        raise LogicError(
            f"output at {r_ohm:.0f} Ohm sits in neither logic band "
            f"(<= {lc.lrs_max_ohm:.0f} or >= {lc.hrs_min_ohm:.0f})")

    def solve_columns(self, drive: RailDrive, ideal: bool = True) -> np.ndarray:
        """Direct network solve, bypassing the sensing chain."""
        if ideal:
            return solve_ideal(self.array, drive)
        return solve_nodal(self.array, drive).col_currents
