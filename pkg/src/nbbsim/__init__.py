"""Behavioral twin of a memristive-crossbar instrumentation board."""

from .config import SimConfig, config_from_dict, load_config, save_config, with_zero_noise
from .controller import Controller, MvmResult, PulseSpec, WriteResult
from .crossbar import (CrossbarArray, NodalSolution, RailDrive, Topology,
                       sneak_current_demo, solve_ideal, solve_nodal)
from .device import DeviceParams, MemristorCell, logic_device_params, sample_device
from .errors import (CalibrationError, ConfigError, LogicError, NbbError,
                     OutOfRangeError, RangeError, SchemaError,
                     SingularNetworkError, WriteFailed)
from .signal_chain import (AdcConfig, CalibrationEntry, CalibrationTable,
                           DacConfig, MeasurementRecord, ReferenceResistor,
                           RoutingMatrix, SignalChain, TiaStage,
                           default_calibration_references, default_tia_stages,
                           fit_conductance_correction)

__version__ = "0.1.0"
