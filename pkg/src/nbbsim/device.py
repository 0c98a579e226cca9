"""Voltage-threshold memristor model with SET/RESET dynamics and variability.

One cell carries a single internal state variable x in [0, 1] (0 = HRS,
1 = LRS) and switches only above its voltage thresholds; sub-threshold
bias leaves the state untouched. Conductance interpolates linearly
between the HRS and LRS levels.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class DeviceParams:
    """Nominal cell parameters plus variability magnitudes.

    sigma_c2c is the lognormal sigma of the multiplicative cycle-to-cycle
    factor on each state update; sigma_d2d the relative sigma of the
    per-device perturbation of thresholds and resistance bounds;
    sigma_read the relative sigma of conductance read noise.
    """

    r_lrs_ohm: float = 10_000.0
    r_hrs_ohm: float = 100_000.0
    v_set: float = 0.9
    v_reset: float = -0.9
    k_set: float = 1e6
    k_reset: float = 1e6
    alpha: float = 2.0
    sigma_c2c: float = 0.05
    sigma_d2d: float = 0.03
    sigma_read: float = 0.002

    def __post_init__(self):
        if not self.r_lrs_ohm < self.r_hrs_ohm:
            raise ValueError(
                f"r_lrs_ohm ({self.r_lrs_ohm}) must be below r_hrs_ohm ({self.r_hrs_ohm})")
        if self.r_lrs_ohm <= 0.0:
            raise ValueError("resistance bounds must be positive")
        if not (self.v_reset < 0.0 < self.v_set):
            raise ValueError(
                f"thresholds must satisfy v_reset < 0 < v_set, got {self.v_reset}, {self.v_set}")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if min(self.sigma_c2c, self.sigma_d2d, self.sigma_read) < 0.0:
            raise ValueError("noise sigmas must be non-negative")
        if self.k_set < 0.0 or self.k_reset < 0.0:
            raise ValueError("rate coefficients must be non-negative")

    @property
    def g_lrs(self) -> float:
        return 1.0 / self.r_lrs_ohm

    @property
    def g_hrs(self) -> float:
        return 1.0 / self.r_hrs_ohm


def logic_device_params(base: DeviceParams | None = None) -> DeviceParams:
    """Parameter set tuned for stateful-NOR execution.

    The gate needs a SET threshold well above the divider stress seen by
    high-resistive inputs while the output cell still resets; symmetric
    thresholds cannot satisfy both, so logic arrays raise v_set.
    """
    base = base or DeviceParams()
    return replace(base, v_set=2.5)


@dataclass
class MemristorCell:
    """One memristive cell: state variable plus its device-specific params."""

    x: float = 0.0
    params: DeviceParams = DeviceParams()

    def __post_init__(self):
        if not 0.0 <= self.x <= 1.0:
            raise ValueError(f"state x must lie in [0, 1], got {self.x}")

    def conductance(self) -> float:
        """Linear conductance map: G = G_hrs + x * (G_lrs - G_hrs)."""
        p = self.params
        return p.g_hrs + self.x * (p.g_lrs - p.g_hrs)

    def resistance(self) -> float:
        return 1.0 / self.conductance()

    def read_conductance(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        """Instantaneous conductance samples with multiplicative read noise."""
        g = self.conductance()
        return g * (1.0 + self.params.sigma_read * rng.standard_normal(n))

    def apply_pulse(self, v: float, width: float, rng: np.random.Generator) -> None:
        """Apply one rectangular voltage pulse of the given width (s).

        Above v_set the state moves up, below v_reset down, scaled by a
        lognormal cycle-to-cycle factor; sub-threshold pulses are no-ops
        and consume no randomness. The state is clamped to [0, 1].
        """
        if width <= 0.0:
            raise ValueError(f"pulse width must be positive, got {width}")
        p = self.params
        if v > p.v_set:
            m = rng.lognormal(0.0, p.sigma_c2c)
            dx = p.k_set * (v - p.v_set) ** p.alpha * width * m
        elif v < p.v_reset:
            m = rng.lognormal(0.0, p.sigma_c2c)
            dx = -p.k_reset * (abs(v) - abs(p.v_reset)) ** p.alpha * width * m
        else:
            return
        self.x = min(1.0, max(0.0, self.x + dx))


def sample_device(params: DeviceParams, rng: np.random.Generator,
                  max_attempts: int = 100) -> MemristorCell:
    """Draw one device instance with device-to-device variability.

    Thresholds and resistance bounds are each scaled by independent
    (1 + N(0, sigma_d2d)) factors; draws violating the parameter
    invariants are rejected and resampled.
    """
    for _ in range(max_attempts):
        f = 1.0 + params.sigma_d2d * rng.standard_normal(4)
        try:
            perturbed = replace(
                params,
                v_set=params.v_set * f[0],
                v_reset=params.v_reset * f[1],
                r_lrs_ohm=params.r_lrs_ohm * f[2],
                r_hrs_ohm=params.r_hrs_ohm * f[3],
            )
        except ValueError:
            continue
        return MemristorCell(x=0.0, params=perturbed)
    raise ValueError(
        f"could not sample a valid device in {max_attempts} attempts "
        f"(sigma_d2d={params.sigma_d2d})")
