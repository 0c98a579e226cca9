"""Exception types shared across the simulator."""


class NbbError(Exception):
    """Base class for all simulator errors."""


class OutOfRangeError(NbbError):
    """A requested DAC output lies outside the selected range."""


class RangeError(NbbError):
    """No TIA sensitivity stage can place the signal in the usable ADC window."""


class CalibrationError(NbbError):
    """Calibration is missing, underdetermined, or its fit is out of tolerance."""


class SingularNetworkError(NbbError):
    """The resistive network has no uniquely solvable operating point."""


class WriteFailed(NbbError):
    """A program-and-verify write did not reach the target band.

    Carries the last measured resistance and the number of pulses spent.
    """

    def __init__(self, message: str, pulses_used: int = 0,
                 last_resistance_ohm: float | None = None):
        super().__init__(message)
        self.pulses_used = pulses_used
        self.last_resistance_ohm = last_resistance_ohm


class LogicError(NbbError):
    """A stateful-logic output landed in neither logic resistance band."""


class SchemaError(NbbError):
    """A CSV or JSON document does not match any known schema."""


class ConfigError(NbbError):
    """The simulator configuration file is invalid."""
