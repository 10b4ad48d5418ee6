"""Packaged reference data: a calibrated 1.19-inch round panel and its inputs.

Efficiency curves and boost defaults shipped here are synthetic. They follow
the qualitative shapes of measured power-chip and driver-chip curves (poor at
light load, peaking in the tens of mA) but are not measurements.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .chain import ChainConfig
from .curves import EfficiencyCurve, load_curve
from .io import PanelBundle, load_chains, load_measurements, load_panel, load_timeline, load_trace

CASES = ("case_a", "case_b", "case_c")


def data_dir() -> Path:
    return Path(str(resources.files("amoled_power") / "data"))


def path(name: str) -> Path:
    p = data_dir() / name
    if not p.exists():
        raise FileNotFoundError(f"no packaged data file {name!r}")
    return p


def panel() -> PanelBundle:
    return load_panel(path("reference_panel.json"))


def chains(name: str) -> ChainConfig:
    return load_chains(path(f"chains/{name}.json"))


def curve(name: str) -> EfficiencyCurve:
    return load_curve(path(f"curves/{name}.csv"))


def measurements(name: str = "mode_specs"):
    return load_measurements(path(f"{name}.csv"), panel().mode_defaults)


def timeline(name: str):
    return load_timeline(path(f"timelines/{name}.json"))


def trace(name: str = "day_sample"):
    return load_trace(path(f"traces/{name}.csv"), panel().mode_defaults)
