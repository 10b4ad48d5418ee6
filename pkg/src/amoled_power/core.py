"""Shared domain types for the wearable AMOLED power-delivery model.

Units are fixed across the package: V, mA, mW, Hz, MHz, nits (cd/m^2),
mm^2 and Ohm. Everything here is immutable after construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class PowerModelError(Exception):
    """Base class for all errors raised by this package."""


class InputError(PowerModelError, ValueError):
    """Malformed or inconsistent input data."""


class DomainError(PowerModelError, ValueError):
    """Argument outside the domain of an operation."""


class ConfigurationError(PowerModelError, ValueError):
    """A model is missing a parameter it needs."""


class ConstraintError(PowerModelError, ValueError):
    """An electrical or process constraint is violated.

    ``violations`` holds the offending rules (strings or Violation records).
    """

    def __init__(self, message: str, violations: Sequence = ()):
        super().__init__(message)
        self.violations = list(violations)


class InfeasibleError(PowerModelError):
    """No candidate in a search space satisfies the constraints."""

    def __init__(self, message: str, binding: dict | None = None):
        super().__init__(message)
        self.binding = binding or {}


class Process(str, enum.Enum):
    LTPS = "LTPS"
    LTPO = "LTPO"


DEFAULT_MIN_REFRESH = {Process.LTPS: 10.0, Process.LTPO: 1.0}


class Mode(str, enum.Enum):
    NORMAL = "Normal"
    BOOST = "Boost"
    IDLE = "Idle"
    STANDBY = "Standby"


class Source(str, enum.Enum):
    DRIVER_CHIP = "DriverChip"
    POWER_CHIP = "PowerChip"


RAILS = (
    "VDDIO", "VBT", "VCI", "PVDD", "PVEE", "AVDD", "VGMP", "VGSP",
    "VGH", "VGHR", "VCL", "VREF", "VGL", "VGLR",
)
NEGATIVE_RAILS = frozenset({"PVEE", "VCL", "VGL", "VGLR"})
POSITIVE_RAILS = frozenset({"PVDD", "AVDD", "VGH"})


@dataclass(frozen=True)
class PanelSpec:
    name: str
    active_area: float  # mm^2
    efficacy: float  # cd/A, aggregate white
    transmittance: float = 1.0
    emit_area_factor: float = 1.0
    process: Process = Process.LTPS
    min_refresh: float | None = None
    rail_names: frozenset = frozenset({"VDDIO", "VCI", "PVDD", "PVEE"})

    def __post_init__(self):
        object.__setattr__(self, "process", Process(self.process))
        object.__setattr__(self, "rail_names", frozenset(self.rail_names))
        if self.min_refresh is None:
            object.__setattr__(self, "min_refresh", DEFAULT_MIN_REFRESH[self.process])
        if not self.active_area > 0:
            raise InputError(f"active_area must be > 0, got {self.active_area}")
        if not 0 < self.transmittance <= 1:
            raise InputError(f"transmittance must be in (0, 1], got {self.transmittance}")
        if not 0 < self.emit_area_factor <= 1:
            raise InputError(f"emit_area_factor must be in (0, 1], got {self.emit_area_factor}")
        if not self.efficacy > 0:
            raise InputError(f"efficacy must be > 0, got {self.efficacy}")
        if not self.min_refresh > 0:
            raise InputError(f"min_refresh must be > 0, got {self.min_refresh}")

    def check_refresh(self, mode: ModeSpec) -> None:
        """Raise ConstraintError when an active mode refreshes below the process floor."""
        if mode.mode is Mode.STANDBY:
            return
        if mode.refresh < self.min_refresh:
            raise ConstraintError(
                f"refresh floor: {mode.refresh:g} Hz below {self.process.value} "
                f"minimum {self.min_refresh:g} Hz",
                [f"refresh >= {self.min_refresh:g} Hz"],
            )


@dataclass(frozen=True)
class RailMeasurement:
    rail: str
    voltage: float  # V
    current: float  # mA

    def __post_init__(self):
        if self.rail not in RAILS:
            raise InputError(f"unknown rail {self.rail!r}")
        if self.current < 0:
            raise InputError(f"{self.rail}: supply current must be >= 0")
        if self.rail in NEGATIVE_RAILS and self.voltage > 0:
            raise InputError(f"{self.rail}: voltage must be <= 0, got {self.voltage}")
        if self.rail in POSITIVE_RAILS and self.voltage < 0:
            raise InputError(f"{self.rail}: voltage must be >= 0, got {self.voltage}")

    @property
    def power(self) -> float:
        return self.voltage * self.current


@dataclass(frozen=True)
class ModeSpec:
    mode: Mode
    luminance: float = 0.0  # nits
    pixel_on_ratio: float = 0.0
    refresh: float = 0.0  # Hz
    osc_freq: float = 0.0  # MHz
    modules_enabled: frozenset = frozenset()
    duty: float = 1.0
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "modules_enabled", frozenset(self.modules_enabled))
        if not self.label:
            object.__setattr__(self, "label", self.mode.value)
        if self.luminance < 0:
            raise InputError("luminance must be >= 0")
        if not 0 <= self.pixel_on_ratio <= 1:
            raise InputError("pixel_on_ratio must be in [0, 1]")
        if not 0 <= self.duty <= 1:
            raise InputError("duty must be in [0, 1]")
        if self.refresh < 0 or self.osc_freq < 0:
            raise InputError("frequencies must be >= 0")
        if self.mode is Mode.STANDBY and (self.luminance != 0 or self.refresh != 0):
            raise InputError("Standby mode requires luminance = 0 and refresh = 0")

    @property
    def active(self) -> bool:
        return self.mode is not Mode.STANDBY


@dataclass(frozen=True)
class PowerReport:
    """Itemized loss ledger; ``total`` always equals the sum of ``items``."""

    items: tuple
    inputs_echo: str = ""
    flags: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)
    total: float = field(init=False)

    def __post_init__(self):
        items = tuple((str(k), float(v)) for k, v in self.items)
        for label, value in items:
            if value < 0 or math.isnan(value):
                raise PowerModelError(f"ledger item {label!r} is negative: {value}")
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "flags", tuple(self.flags))
        object.__setattr__(self, "total", math.fsum(v for _, v in items))

    def item(self, label: str) -> float:
        return math.fsum(v for k, v in self.items if k == label)

    def group(self, prefix: str) -> float:
        """Sum of all items whose label starts with ``prefix``."""
        return math.fsum(v for k, v in self.items if k.startswith(prefix))

    def to_dict(self) -> dict:
        return {
            "total_mw": self.total,
            "items": [{"label": k, "mw": v} for k, v in self.items],
            "flags": list(self.flags),
            "inputs_echo": self.inputs_echo,
            "meta": dict(self.meta),
        }


def weighted_scenario_power(reports: Iterable[tuple[ModeSpec, PowerReport]]) -> float:
    """Duty-weighted average power of a usage scenario in mW."""
    pairs = list(reports)
    duty_sum = math.fsum(m.duty for m, _ in pairs)
    if abs(duty_sum - 1.0) > 1e-9:
        raise InputError(
            f"mode duties sum to {duty_sum!r}, deficit {1.0 - duty_sum:+.3g} from 1"
        )
    return math.fsum(m.duty * r.total for m, r in pairs)
