"""Analog front-end model: DAC, routing parasitics, programmable TIAs, ADC.

The measurement pipeline drives a quantized read voltage through the
routing path into the device under test, senses the return current with
one of four transimpedance stages, digitizes with a noisy 14-bit ADC,
averages raw codes, and converts back through the per-stage calibration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import CalibrationError, OutOfRangeError, RangeError, SchemaError

CALIBRATION_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DacConfig:
    """Multi-range voltage DAC, 12 bit by default.

    Each output channel carries its own selected range; quantization can
    be addressed either by explicit range or by channel.
    """

    resolution_bits: int = 12
    ranges: tuple = ((0.0, 5.0), (0.0, 10.0), (-2.5, 2.5), (-5.0, 5.0), (-10.0, 10.0))
    channels: int = 8
    selected_range: dict = field(default_factory=dict)  # channel -> range

    def __post_init__(self):
        if self.channels < 5:
            raise ValueError("the board provides at least five DAC channels")
        for ch, rng in self.selected_range.items():
            self._check_channel(ch)
            if tuple(rng) not in self.ranges:
                raise OutOfRangeError(f"unsupported DAC range {rng}")

    def _check_channel(self, channel: int) -> None:
        if not 0 <= channel < self.channels:
            raise ValueError(f"channel {channel} outside 0..{self.channels - 1}")

    def select_range(self, channel: int, vrange: tuple[float, float]) -> None:
        self._check_channel(channel)
        if tuple(vrange) not in self.ranges:
            raise OutOfRangeError(f"unsupported DAC range {vrange}")
        self.selected_range[channel] = tuple(vrange)

    def range_of(self, channel: int) -> tuple[float, float]:
        self._check_channel(channel)
        return self.selected_range.get(channel, (0.0, 5.0))

    @property
    def code_max(self) -> int:
        return (1 << self.resolution_bits) - 1

    def quantize(self, v_request: float, vrange: tuple[float, float] = (0.0, 5.0)
                 ) -> tuple[int, float]:
        """Quantize a requested output to (code, actual output voltage)."""
        if tuple(vrange) not in self.ranges:
            raise OutOfRangeError(f"unsupported DAC range {vrange}")
        lo, hi = vrange
        if not lo <= v_request <= hi:
            raise OutOfRangeError(
                f"requested {v_request} V outside DAC range [{lo}, {hi}] V")
        code = int(math.floor((v_request - lo) / (hi - lo) * self.code_max + 0.5))
        v_actual = lo + code / self.code_max * (hi - lo)
        return code, v_actual

    def quantize_channel(self, channel: int, v_request: float) -> tuple[int, float]:
        return self.quantize(v_request, self.range_of(channel))


@dataclass(frozen=True)
class TiaStage:
    """One transimpedance sensitivity level."""

    stage_id: int
    r_feedback_ohm: float
    v_out_max: float = 5.0
    input_noise_sigma: float = 5e-9  # A, per sample


def default_tia_stages(input_noise_sigma: float = 5e-9) -> tuple[TiaStage, ...]:
    gains = (2.5e3, 2.5e4, 2.5e5, 2.5e6)
    return tuple(TiaStage(i, g, input_noise_sigma=input_noise_sigma)
                 for i, g in enumerate(gains))


def validate_stages(stages: tuple[TiaStage, ...]) -> None:
    if len(stages) != 4:
        raise ValueError("the sensing module has exactly four sensitivity levels")
    gains = [s.r_feedback_ohm for s in stages]
    if any(b <= a for a, b in zip(gains, gains[1:])):
        raise ValueError("stage gains must be strictly increasing")
    if [s.stage_id for s in stages] != [0, 1, 2, 3]:
        raise ValueError("stage ids must be 0..3 in order")


@dataclass(frozen=True)
class AdcConfig:
    """Sensing ADC, 14 bit over 0..5 V by default."""

    resolution_bits: int = 14
    v_range: tuple[float, float] = (0.0, 5.0)
    noise_sigma_v: float = 3e-4

    @property
    def code_max(self) -> int:
        return (1 << self.resolution_bits) - 1

    @property
    def full_scale(self) -> float:
        return self.v_range[1] - self.v_range[0]


# Line sources selectable through the interconnection matrix.
LINE_SOURCES = ("P1", "P2", "P3", "P4", "P5", "EXT", "GND", "SENSE")


@dataclass
class RoutingMatrix:
    """Interconnection matrix: line-to-source assignment plus path resistance."""

    total_lines: int = 68
    r_path_ohm: float = 60.0
    line_assignment: dict = field(default_factory=dict)
    sense_tia: dict = field(default_factory=dict)  # SENSE line -> TIA channel

    def __post_init__(self):
        if self.total_lines > 68:
            raise ValueError("the board controls at most 68 lines")
        if self.r_path_ohm < 0.0:
            raise ValueError("path resistance must be non-negative")
        for line, source in self.line_assignment.items():
            self._check(line, source)

    def _check(self, line: int, source: str) -> None:
        if not 0 <= line < self.total_lines:
            raise ValueError(f"line {line} outside 0..{self.total_lines - 1}")
        if source not in LINE_SOURCES:
            raise ValueError(f"unknown line source {source!r}")

    def assign(self, line: int, source: str, tia_channel: int | None = None) -> None:
        self._check(line, source)
        if source == "SENSE":
            if tia_channel is None:
                raise ValueError("a SENSE line must map to exactly one TIA channel")
            self.sense_tia[line] = tia_channel
        else:
            self.sense_tia.pop(line, None)
        self.line_assignment[line] = source

    def require_capacity(self, lines_needed: int) -> None:
        if lines_needed > self.total_lines:
            raise ValueError(
                f"operation needs {lines_needed} simultaneous lines, "
                f"board supports {self.total_lines}")


@dataclass
class CalibrationEntry:
    """Per-stage linear conductance correction plus series-resistance estimate."""

    stage_id: int
    a: float
    b: float
    r_series_est: float

    def __post_init__(self):
        if not 0.5 < self.a < 2.0:
            raise CalibrationError(
                f"stage {self.stage_id}: gain correction {self.a} outside (0.5, 2.0)")


@dataclass
class CalibrationTable:
    """Calibration entries for all four stages."""

    entries: dict = field(default_factory=dict)
    calibration_timestamp: int = 0
    seed: int | None = None

    @classmethod
    def identity(cls) -> "CalibrationTable":
        table = cls()
        for s in range(4):
            table.entries[s] = CalibrationEntry(s, 1.0, 0.0, 0.0)
        return table

    def add(self, entry: CalibrationEntry) -> None:
        self.entries[entry.stage_id] = entry

    def require(self, stage_id: int) -> CalibrationEntry:
        if stage_id not in self.entries:
            raise CalibrationError(f"stage {stage_id} is not calibrated")
        return self.entries[stage_id]

    @property
    def complete(self) -> bool:
        return all(s in self.entries for s in range(4))

    def to_dict(self) -> dict:
        return {
            "schema_version": CALIBRATION_SCHEMA_VERSION,
            "seed": self.seed,
            "calibration_timestamp": self.calibration_timestamp,
            "stages": [asdict(self.entries[s]) for s in sorted(self.entries)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CalibrationTable":
        if doc.get("schema_version") != CALIBRATION_SCHEMA_VERSION:
            raise SchemaError(
                f"unsupported calibration schema {doc.get('schema_version')!r}")
        table = cls(calibration_timestamp=doc.get("calibration_timestamp", 0),
                    seed=doc.get("seed"))
        for s in doc.get("stages", []):
            table.add(CalibrationEntry(int(s["stage_id"]), float(s["a"]),
                                       float(s["b"]), float(s["r_series_est"])))
        return table

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "CalibrationTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class MeasurementRecord:
    """One averaged resistance measurement with its raw evidence."""

    codes: np.ndarray
    stage_id: int
    mean_code: float
    v_drive: float
    resistance_ohm: float
    saturated: int
    timestamp: int

    def to_dict(self) -> dict:
        return {
            "resistance_ohm": self.resistance_ohm,
            "stage_id": self.stage_id,
            "mean_code": self.mean_code,
            "v_drive": self.v_drive,
            "saturated": self.saturated,
            "timestamp": self.timestamp,
            "codes": [int(c) for c in self.codes],
        }


class ReferenceResistor:
    """Noise-free precision resistor attached to the external bench port."""

    def __init__(self, r_ohm: float):
        if r_ohm <= 0.0:
            raise ValueError("reference resistance must be positive")
        self.r_ohm = r_ohm

    def conductance_samples(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.full(n, 1.0 / self.r_ohm)


def fit_conductance_correction(stage_id: int, g_raw: np.ndarray,
                               g_true: np.ndarray) -> CalibrationEntry:
    """Fit the per-stage correction from raw/true conductance pairs.

    The mean apparent excess resistance becomes r_series_est; the
    gain/offset pair is a least-squares fit on the series-corrected
    conductances. Exact inputs yield the exact identity entry.
    """
    g_raw = np.asarray(g_raw, dtype=float)
    g_true = np.asarray(g_true, dtype=float)
    if g_raw.size < 2:
        raise CalibrationError("need at least 2 reference points for the fit")
    r_series = float(np.mean(1.0 / g_raw - 1.0 / g_true))
    denom = 1.0 / g_raw - r_series
    if np.any(denom <= 0.0):
        raise CalibrationError(
            f"stage {stage_id}: series estimate exceeds a reference")
    g_corr = 1.0 / denom
    design = np.column_stack([g_corr, np.ones_like(g_corr)])
    (a, b), *_ = np.linalg.lstsq(design, g_true, rcond=None)
    residual = np.abs(a * g_corr + b - g_true) / g_true
    if residual.max() > 0.02:
        raise CalibrationError(
            f"stage {stage_id}: fit residual {residual.max():.3%} exceeds 2%")
    return CalibrationEntry(stage_id, float(a), float(b), r_series)


class SignalChain:
    """Complete sensing path from DAC output to calibrated resistance."""

    def __init__(self, dac: DacConfig | None = None,
                 stages: tuple[TiaStage, ...] | None = None,
                 adc: AdcConfig | None = None,
                 routing: RoutingMatrix | None = None,
                 autorange_window: tuple[float, float] = (0.05, 0.90),
                 estimate_samples: int = 4):
        self.dac = dac or DacConfig()
        self.stages = stages or default_tia_stages()
        validate_stages(self.stages)
        self.adc = adc or AdcConfig()
        self.routing = routing or RoutingMatrix()
        lo, hi = autorange_window
        if not 0.0 < lo < hi <= 1.0:
            raise ValueError(f"bad autorange window {autorange_window}")
        self.autorange_window = (lo, hi)
        self.estimate_samples = estimate_samples

    # -- elementary conversions -------------------------------------------

    def sample_codes(self, currents: np.ndarray, stage: TiaStage,
                     rng: np.random.Generator) -> np.ndarray:
        """TIA + ADC conversion of a batch of input currents."""
        n = len(currents)
        i_noise = rng.normal(0.0, stage.input_noise_sigma, n)
        v_out = np.clip((currents + i_noise) * stage.r_feedback_ohm,
                        0.0, stage.v_out_max)
        v_noise = rng.normal(0.0, self.adc.noise_sigma_v, n)
        codes = np.floor((v_out + v_noise) / self.adc.full_scale
                         * self.adc.code_max + 0.5)
        return np.clip(codes, 0, self.adc.code_max).astype(np.int64)

    def tia_adc_read(self, i_in: float, stage: TiaStage,
                     rng: np.random.Generator) -> tuple[int, float]:
        """Single conversion; returns (adc_code, analog TIA output)."""
        i_noise = rng.normal(0.0, stage.input_noise_sigma)
        v_out = min(max((i_in + i_noise) * stage.r_feedback_ohm, 0.0),
                    stage.v_out_max)
        v_noise = rng.normal(0.0, self.adc.noise_sigma_v)
        code = int(math.floor((v_out + v_noise) / self.adc.full_scale
                              * self.adc.code_max + 0.5))
        return min(max(code, 0), self.adc.code_max), v_out

    def code_to_voltage(self, code: float) -> float:
        return code / self.adc.code_max * self.adc.full_scale

    # -- range selection ----------------------------------------------------

    def autorange(self, code_fn, underrange: str = "error") -> TiaStage:
        """Pick the highest-gain stage whose averaged code sits in the window.

        Sweeps from the least sensitive stage upward and stops as soon
        as a stage saturates. `underrange` selects the policy when every
        stage reads below the window: "error" raises RangeError (reads),
        "highest_gain" falls back to the most sensitive stage (MVM,
        where a near-zero output is a legal result).
        """
        lo = self.autorange_window[0] * self.adc.code_max
        hi = self.autorange_window[1] * self.adc.code_max
        chosen = None
        saturated = False
        for stage in self.stages:
            mean_code = code_fn(stage)
            if mean_code > hi:
                saturated = True
                break
            if mean_code >= lo:
                chosen = stage
        if chosen is not None:
            return chosen
        if saturated:
            raise RangeError("signal saturates every usable sensitivity stage")
        if underrange == "highest_gain":
            return self.stages[-1]
        raise RangeError("signal below the usable window on every stage")

    # -- calibration ----------------------------------------------------------

    def _measure_raw_conductance(self, dut, stage: TiaStage, v_drive: float,
                                 n_samples: int, rng: np.random.Generator
                                 ) -> tuple[float, np.ndarray]:
        """Averaged raw conductance seen through routing at a fixed stage."""
        g = dut.conductance_samples(n_samples, rng)
        currents = v_drive / (self.routing.r_path_ohm + 1.0 / g)
        codes = self.sample_codes(currents, stage, rng)
        mean_code = float(codes.mean())
        v_sensed = self.code_to_voltage(mean_code)
        i_raw = v_sensed / stage.r_feedback_ohm
        return i_raw / v_drive, codes

    def calibrate_stage(self, stage: TiaStage, reference_resistors,
                        rng: np.random.Generator, n_samples: int = 50
                        ) -> CalibrationEntry:
        """Fit the stage correction against known precision resistors.

        Each reference is driven at a level placing the TIA output near
        half scale. The mean apparent excess resistance over the
        references becomes r_series_est; a linear gain/offset pair is
        then fit on the series-corrected conductances.
        """
        refs = list(reference_resistors)
        if len(refs) < 2:
            raise CalibrationError(
                f"stage {stage.stage_id}: need at least 2 references, got {len(refs)}")
        lo_code = self.autorange_window[0] * self.adc.code_max
        hi_code = self.autorange_window[1] * self.adc.code_max

        g_raw = []
        for r_ref in refs:
            v_target = 0.5 * self.adc.full_scale * r_ref / stage.r_feedback_ohm
            rng_lo, rng_hi = 0.0, 5.0
            _, v_drive = self.dac.quantize(min(max(v_target, rng_lo), rng_hi),
                                           (rng_lo, rng_hi))
            if v_drive <= 0.0:
                raise CalibrationError(
                    f"stage {stage.stage_id}: reference {r_ref} Ohm below the "
                    f"stage's usable window")
            predicted = (v_drive / (self.routing.r_path_ohm + r_ref)
                         * stage.r_feedback_ohm / self.adc.full_scale
                         * self.adc.code_max)
            if not lo_code <= predicted <= hi_code:
                raise CalibrationError(
                    f"stage {stage.stage_id}: reference {r_ref} Ohm outside the "
                    f"stage's usable window")
            g, _ = self._measure_raw_conductance(
                ReferenceResistor(r_ref), stage, v_drive, n_samples, rng)
            g_raw.append(g)

        g_true = 1.0 / np.array(refs, dtype=float)
        return fit_conductance_correction(stage.stage_id, np.array(g_raw), g_true)

    def calibrate(self, references_per_stage: dict, rng: np.random.Generator,
                  n_samples: int = 50, seed: int | None = None,
                  timestamp: int = 0) -> CalibrationTable:
        """Calibrate all four stages; references keyed by stage id."""
        table = CalibrationTable(calibration_timestamp=timestamp, seed=seed)
        for stage in self.stages:
            if stage.stage_id not in references_per_stage:
                raise CalibrationError(f"no references for stage {stage.stage_id}")
            table.add(self.calibrate_stage(
                stage, references_per_stage[stage.stage_id], rng, n_samples))
        return table

    # -- measurement ---------------------------------------------------------

    def measure_resistance(self, dut, v_read: float, n_samples: int,
                           cal: CalibrationTable, rng: np.random.Generator,
                           extra_series_ohm: float = 0.0,
                           series_compensation_ohm: float = 0.0,
                           timestamp: int = 0,
                           stage_id: int | None = None) -> MeasurementRecord:
        """Autoranged, averaged, calibrated resistance measurement.

        extra_series_ohm adds known path resistance beyond the routing
        matrix (selector, wire segments); series_compensation_ohm is
        subtracted from the calibrated result (the firmware knows its
        own path constants). Passing stage_id pins the sensitivity
        stage instead of autoranging (manual range).
        """
        if not cal.complete:
            raise CalibrationError("calibration table incomplete")
        if n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        _, v_drive = self.dac.quantize(v_read, (0.0, 5.0))

        r_fixed = self.routing.r_path_ohm + extra_series_ohm

        def sample_currents(n):
            g = dut.conductance_samples(n, rng)
            return v_drive / (r_fixed + 1.0 / g)

        def code_fn(stage):
            codes = self.sample_codes(sample_currents(self.estimate_samples), stage, rng)
            return float(codes.mean())

        if stage_id is None:
            stage = self.autorange(code_fn)
        else:
            stage = self.stages[stage_id]
        codes = self.sample_codes(sample_currents(n_samples), stage, rng)
        mean_code = float(codes.mean())
        saturated = int(np.count_nonzero(
            (codes == 0) | (codes == self.adc.code_max)))

        v_sensed = self.code_to_voltage(mean_code)
        i_raw = v_sensed / stage.r_feedback_ohm
        if i_raw <= 0.0:
            raise RangeError("no measurable current at the sensing input")
        g_raw = i_raw / v_drive
        entry = cal.require(stage.stage_id)
        denom = 1.0 / g_raw - entry.r_series_est
        if denom <= 0.0:
            raise RangeError("series correction exceeds the measured resistance")
        g_cal = entry.a / denom + entry.b
        if g_cal <= 0.0:
            raise RangeError("calibrated conductance is not positive")
        resistance = 1.0 / g_cal - series_compensation_ohm
        return MeasurementRecord(
            codes=codes,
            stage_id=stage.stage_id,
            mean_code=mean_code,
            v_drive=v_drive,
            resistance_ohm=resistance,
            saturated=saturated,
            timestamp=timestamp,
        )


def default_calibration_references() -> dict:
    """Per-stage precision resistors spanning each stage's decade."""
    return {
        0: [500.0, 1_000.0, 2_000.0],
        1: [5_000.0, 10_000.0, 20_000.0],
        2: [50_000.0, 100_000.0, 200_000.0],
        3: [500_000.0, 1_000_000.0, 2_000_000.0],
    }
