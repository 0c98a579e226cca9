"""Versioned JSON configuration for the simulated board.

A config file fixes the device parameters, array shape/topology, signal
chain constants and the master seed, so a run is fully reproducible
from the file plus the CLI arguments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, asdict, replace

from .crossbar import Topology
from .device import DeviceParams
from .errors import ConfigError

CONFIG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ArrayConfig:
    rows: int = 512
    cols: int = 32
    topology: str = "active_1t1r"
    r_wire_segment: float = 1.0
    r_transistor_on: float = 500.0

    def topology_enum(self) -> Topology:
        try:
            return Topology(self.topology)
        except ValueError as exc:
            raise ConfigError(f"unknown topology {self.topology!r}") from exc


@dataclass(frozen=True)
class ChainConfig:
    tia_gains: tuple = (2.5e3, 2.5e4, 2.5e5, 2.5e6)
    tia_input_noise_sigma: float = 5e-9
    tia_v_out_max: float = 5.0
    adc_noise_sigma_v: float = 3e-4
    r_path_ohm: float = 60.0
    autorange_window: tuple = (0.05, 0.90)
    estimate_samples: int = 4


@dataclass(frozen=True)
class MeasureConfig:
    v_read: float = 0.2
    n_samples: int = 50


@dataclass(frozen=True)
class WriteConfig:
    # Pulse amplitudes default to threshold + overdrive when left None.
    set_amplitude: float | None = None
    reset_amplitude: float | None = None
    set_overdrive: float = 0.5
    reset_overdrive: float = 1.0
    set_width: float = 1e-6
    reset_width: float = 1e-6
    max_pulses: int = 20
    lrs_band_factor: float = 1.2   # SetLRS done when R <= factor * r_lrs
    hrs_band_factor: float = 0.8   # ResetHRS done when R >= factor * r_hrs


@dataclass(frozen=True)
class LogicConfig:
    v0: float = 2.4
    width: float = 5e-5
    steps: int = 100
    lrs_max_ohm: float = 30_000.0
    hrs_min_ohm: float = 50_000.0


@dataclass(frozen=True)
class EnduranceConfig:
    set_amplitude: float = 1.4
    reset_amplitude: float = -1.9
    pulse_width: float = 1e-5
    target_row: int = 0
    target_col: int = 0


@dataclass(frozen=True)
class SimConfig:
    schema_version: int = CONFIG_SCHEMA_VERSION
    seed: int = 1
    device: DeviceParams = field(default_factory=DeviceParams)
    array: ArrayConfig = field(default_factory=ArrayConfig)
    signal_chain: ChainConfig = field(default_factory=ChainConfig)
    measure: MeasureConfig = field(default_factory=MeasureConfig)
    write: WriteConfig = field(default_factory=WriteConfig)
    logic: LogicConfig = field(default_factory=LogicConfig)
    endurance: EnduranceConfig = field(default_factory=EnduranceConfig)
    calibration_references: dict = field(default_factory=dict)

    def references(self) -> dict:
        from .signal_chain import default_calibration_references
        if not self.calibration_references:
            return default_calibration_references()
        return {int(k): [float(r) for r in v]
                for k, v in self.calibration_references.items()}

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["signal_chain"]["tia_gains"] = list(self.signal_chain.tia_gains)
        doc["signal_chain"]["autorange_window"] = list(self.signal_chain.autorange_window)
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_SECTIONS = {
    "device": DeviceParams,
    "array": ArrayConfig,
    "signal_chain": ChainConfig,
    "measure": MeasureConfig,
    "write": WriteConfig,
    "logic": LogicConfig,
    "endurance": EnduranceConfig,
}


def _build_section(cls, doc: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    coerced = dict(doc)
    for f in fields(cls):
        if f.name in coerced and isinstance(coerced[f.name], list):
            coerced[f.name] = tuple(coerced[f.name])
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name!r} section: {exc}") from exc


def config_from_dict(doc: dict) -> SimConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    version = doc.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version!r}")
    known = set(_SECTIONS) | {"schema_version", "seed", "calibration_references"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs = {"schema_version": version}
    if "seed" in doc:
        kwargs["seed"] = int(doc["seed"])
    for name, cls in _SECTIONS.items():
        if name in doc:
            kwargs[name] = _build_section(cls, doc[name], name)
    if "calibration_references" in doc:
        kwargs["calibration_references"] = {
            int(k): [float(r) for r in v]
            for k, v in doc["calibration_references"].items()}
    return SimConfig(**kwargs)


def load_config(path: str) -> SimConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def save_config(cfg: SimConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cfg.dumps())
        fh.write("\n")


def with_zero_noise(cfg: SimConfig, zero_parasitics: bool = False) -> SimConfig:
    """Copy of the config with every noise source silenced.

    With zero_parasitics the routing path, wire segments and selector
    resistance are removed too, giving the pure quantization-only chain.
    """
    device = replace(cfg.device, sigma_c2c=0.0, sigma_d2d=0.0, sigma_read=0.0)
    chain = replace(cfg.signal_chain, tia_input_noise_sigma=0.0, adc_noise_sigma_v=0.0)
    array = cfg.array
    if zero_parasitics:
        chain = replace(chain, r_path_ohm=0.0)
        array = replace(array, r_wire_segment=0.0, r_transistor_on=0.0)
    return replace(cfg, device=device, signal_chain=chain, array=array)
