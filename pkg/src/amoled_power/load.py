"""Optical target -> electrical load of the light-emitting structure."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import DomainError, InputError, ModeSpec, PanelSpec


@dataclass(frozen=True)
class OledDiodeModel:
    """Lumped diode for the whole panel at full white.

    ``i_sat`` and ``r_series`` describe all pixels in parallel, so the current
    argument is the panel current with every pixel lit at the frame's
    luminance.
    """

    i_sat: float  # mA
    n_vt: float  # V
    r_series: float  # Ohm

    def __post_init__(self):
        if not (self.i_sat > 0 and self.n_vt > 0):
            raise InputError("i_sat and n_vt must be > 0")
        if self.r_series < 0:
            raise InputError("r_series must be >= 0")


@dataclass(frozen=True)
class TftModel:
    v_sat_margin: float  # V of drain headroom keeping the driver TFT saturated

    def __post_init__(self):
        if not self.v_sat_margin > 0:
            raise InputError("v_sat_margin must be > 0")


def emission_current(panel: PanelSpec, mode: ModeSpec) -> float:
    """Panel emission current in mA for the mode's luminance and pixel-on ratio."""
    if mode.luminance == 0 or mode.pixel_on_ratio == 0:
        return 0.0
    area_m2 = panel.active_area * 1e-6
    amps = (mode.luminance * area_m2 * mode.pixel_on_ratio) / (
        panel.efficacy * panel.transmittance * panel.emit_area_factor
    )
    return amps * 1e3


def full_white_current(panel: PanelSpec, luminance: float) -> float:
    """Emission current with every pixel lit at ``luminance`` (drives the rail span)."""
    if luminance < 0:
        raise DomainError("luminance must be >= 0")
    area_m2 = panel.active_area * 1e-6
    return luminance * area_m2 / (panel.efficacy * panel.transmittance * panel.emit_area_factor) * 1e3


def oled_forward_voltage(model: OledDiodeModel, i: float) -> float:
    if i < 0:
        raise DomainError(f"current must be >= 0, got {i}")
    if i == 0:
        return 0.0
    return model.n_vt * math.log1p(i / model.i_sat) + i * 1e-3 * model.r_series


def required_rail_span(model: OledDiodeModel, tft: TftModel, i: float) -> float:
    """Smallest PVDD - PVEE that keeps the operating point in TFT saturation."""
    return oled_forward_voltage(model, i) + tft.v_sat_margin
