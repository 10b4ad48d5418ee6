"""File formats: panel/model JSON, chain JSON, modes, measurements, traces, timelines.

All JSON readers reject unknown keys so that typos fail loudly.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any, Mapping

from .chain import ChainConfig, parse_config
from .core import InputError, Mode, ModeSpec, PanelSpec
from .curves import EfficiencyCurve, load_curve
from .load import OledDiodeModel, TftModel
from .optimizer import SearchSpace, SupplyPlan, TraceSample, WorkloadTrace
from .power import DigitalModel, Inductor, ModelSet, QuiescentModel, RailLoad
from .sequence import DiodeRemovable, DiodeRequired, RailTimeline


class JsonFormatError(InputError):
    def __init__(self, path, line: int, col: int, msg: str):
        super().__init__(f"{path}: line {line}, column {col}: {msg}")
        self.path, self.line, self.col = str(path), line, col


def read_json(path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"{path}: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise JsonFormatError(path, e.lineno, e.colno, e.msg) from None


def _keys(obj, where: str, required=(), optional=()) -> dict:
    if not isinstance(obj, Mapping):
        raise InputError(f"{where}: expected an object")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise InputError(f"{where}: unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise InputError(f"{where}: missing keys {missing}")
    return dict(obj)


def _build(cls, obj, where, required=(), optional=(), **extra):
    d = _keys(obj, where, required, optional)
    try:
        return cls(**d, **extra)
    except (TypeError, ValueError) as e:
        raise InputError(f"{where}: {e}") from None


def _resolve(base: Path | None, ref: str) -> Path:
    p = Path(ref)
    if not p.is_absolute() and base is not None:
        p = base / p
    return p


# --- panel bundle -------------------------------------------------------------

PANEL_KEYS = ("panel", "chains", "oled", "tft", "digital", "quiescent", "inductors", "rail_loads",
              "supply", "curves", "vci_efficiency", "vbat", "vddio", "mode_defaults")


def panel_from_dict(d) -> PanelSpec:
    return _build(PanelSpec, d, "panel", ("name", "active_area", "efficacy"),
                  ("transmittance", "emit_area_factor", "process", "min_refresh", "rail_names"))


def supply_from_dict(d) -> SupplyPlan:
    d = _keys(d, "supply", (), ("emission_source", "rail_symmetry", "diode_vf", "pvee_steps"))
    vf = d.pop("diode_vf", None)
    try:
        diode = DiodeRequired(vf) if vf else DiodeRemovable()
        return SupplyPlan(diode=diode, **d)
    except ValueError as e:
        raise InputError(f"supply: {e}") from None


def supply_to_dict(s: SupplyPlan) -> dict:
    return {"emission_source": s.emission_source.value, "rail_symmetry": s.rail_symmetry.value,
            "diode_vf": s.diode.drop or None, "pvee_steps": list(s.pvee_steps)}


def chains_from(ref, base: Path | None, curves: Mapping[str, EfficiencyCurve]) -> ChainConfig:
    """Chain config given inline or as a path relative to ``base``."""
    if isinstance(ref, str):
        path = _resolve(base, ref)
        doc = read_json(path)
        if not isinstance(doc, Mapping):
            raise InputError(f"{path}: expected a chain config object")
        return parse_config(doc, curves, doc.get("name") or path.stem)
    return parse_config(ref, curves, ref.get("name", "inline") if isinstance(ref, Mapping) else "")


def load_chains(path, curves: Mapping[str, EfficiencyCurve] | None = None) -> ChainConfig:
    return chains_from(str(path), None, curves or {})


class PanelBundle:
    """Everything a panel file describes: panel, default chains, supply plan, models."""

    def __init__(self, panel: PanelSpec, chains: ChainConfig | None, supply: SupplyPlan,
                 models: ModelSet, curves: dict, source: Path | None = None,
                 mode_defaults: dict | None = None):
        self.panel, self.chains, self.supply, self.models = panel, chains, supply, models
        self.curves, self.source = curves, source
        # oscillator and module settings per mode name, for CSV rows that omit them
        self.mode_defaults = mode_defaults or {}


def bundle_from_dict(doc, base: Path | None = None) -> PanelBundle:
    d = _keys(doc, "panel file", ("panel",), PANEL_KEYS)
    curves = {}
    # "pmic" and "ddic" feed the emission path; other keys are boost curves for chains
    for key, ref in _keys(d.get("curves", {}), "curves", (), tuple(d.get("curves") or ())).items():
        p = _resolve(base, ref)
        try:
            curves[key] = load_curve(p, chip_id=key)
        except OSError as e:
            raise InputError(f"curves.{key}: {p}: {e.strerror}") from None
    panel = panel_from_dict(d["panel"])
    chains = chains_from(d["chains"], base, curves) if "chains" in d else None
    oled = _build(OledDiodeModel, d["oled"], "oled", ("i_sat", "n_vt", "r_series")) if "oled" in d else None
    tft = _build(TftModel, d["tft"], "tft", ("v_sat_margin",)) if "tft" in d else None
    digital = _build(DigitalModel, d.get("digital", {}), "digital", (),
                     ("p_static", "k_osc", "k_refresh", "module_power"))
    quiescent = _build(QuiescentModel, d.get("quiescent", {}), "quiescent", (), ("draw", "supply_v"))
    inductors = {slot: _build(Inductor, v, f"inductors.{slot}", ("part", "inductance", "i_rms", "dcr"))
                 for slot, v in d.get("inductors", {}).items()}
    rail_loads = {rail: _build(RailLoad, v, f"rail_loads.{rail}", (), ("i_static", "i_per_hz"))
                  for rail, v in d.get("rail_loads", {}).items()}
    supply = supply_from_dict(d.get("supply", {}))
    try:
        models = ModelSet(digital, quiescent, oled, tft, inductors, rail_loads,
                          curves.get("pmic"), curves.get("ddic"),
                          d.get("vci_efficiency", 1.0), d.get("vbat", 3.7), d.get("vddio", 1.8))
    except ValueError as e:
        raise InputError(f"panel file: {e}") from None
    defaults = {}
    for name, v in _keys(d.get("mode_defaults", {}), "mode_defaults", (),
                         tuple(m.value for m in Mode)).items():
        defaults[name] = _build(ModeSpec, v, f"mode_defaults.{name}", (),
                                ("osc_freq", "modules_enabled"), mode=name)
    return PanelBundle(panel, chains, supply, models, curves, base, defaults)


def load_panel(path) -> PanelBundle:
    path = Path(path)
    b = bundle_from_dict(read_json(path), path.parent)
    b.source = path
    return b


# --- modes ----------------------------------------------------------------------

MODE_KEYS = ("mode", "luminance", "pixel_on_ratio", "refresh", "osc_freq", "modules_enabled", "duty", "label")


def mode_from_dict(d, where="mode") -> ModeSpec:
    return _build(ModeSpec, d, where, ("mode",), MODE_KEYS[1:])


def load_modes(path) -> list[ModeSpec]:
    """A modes file holds one mode object, a list of them, or ``{"modes": [...]}``."""
    doc = read_json(path)
    if isinstance(doc, Mapping) and set(doc) == {"modes"}:
        doc = doc["modes"]
    if isinstance(doc, Mapping):
        doc = [doc]
    if not isinstance(doc, list) or not doc:
        raise InputError(f"{path}: expected a mode object or a non-empty list of them")
    return [mode_from_dict(m, f"{path}[{i}]") for i, m in enumerate(doc)]


# --- CSV inputs -----------------------------------------------------------------

def _csv_rows(text: str, header: tuple, where: str):
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows or tuple(c.strip() for c in rows[0]) != header:
        raise InputError(f"{where}: expected header {','.join(header)!r}")
    for n, r in enumerate(rows[1:], start=1):
        if len(r) != len(header):
            raise InputError(f"{where}: row {n}: expected {len(header)} columns, got {len(r)}")
        yield n, dict(zip(header, (c.strip() for c in r)))


def _num(v: str, where: str) -> float:
    try:
        return float(v)
    except ValueError:
        raise InputError(f"{where}: not a number: {v!r}") from None


MEASUREMENT_HEADER = ("mode", "luminance_nits", "apl", "refresh_hz", "measured_mw")


def parse_measurements(text: str, defaults: Mapping[str, ModeSpec] | None = None,
                       where="measurements") -> list[tuple[ModeSpec, float]]:
    """Rows of (ModeSpec, measured mW).

    Oscillator frequency and enabled modules come from ``defaults[mode]``
    when given, since the CSV only carries the optical and timing settings.
    """
    out = []
    defaults = defaults or {}
    for n, r in _csv_rows(text, MEASUREMENT_HEADER, where):
        at = f"{where}: row {n}"
        try:
            mode = Mode(r["mode"])
        except ValueError:
            raise InputError(f"{at}: unknown mode {r['mode']!r}") from None
        base = defaults.get(mode.value)
        try:
            spec = ModeSpec(mode, _num(r["luminance_nits"], at), _num(r["apl"], at), _num(r["refresh_hz"], at),
                            base.osc_freq if base and mode is not Mode.STANDBY else 0.0,
                            base.modules_enabled if base else frozenset(),
                            label=f"row{n}")
        except ValueError as e:
            raise InputError(f"{at}: {e}") from None
        out.append((spec, _num(r["measured_mw"], at)))
    if not out:
        raise InputError(f"{where}: no measurement rows")
    return out


def load_measurements(path, defaults=None):
    return parse_measurements(Path(path).read_text(encoding="utf-8"), defaults, str(path))


TRACE_HEADER = ("t_ms", "mode", "max_luminance_nits", "apl", "refresh_hz", "battery_v")


def parse_trace(text: str, defaults: Mapping[str, ModeSpec] | None = None, where="trace") -> WorkloadTrace:
    samples = []
    defaults = defaults or {}
    for n, r in _csv_rows(text, TRACE_HEADER, where):
        at = f"{where}: row {n}"
        try:
            mode = Mode(r["mode"])
            base = defaults.get(mode.value)
            lum = _num(r["max_luminance_nits"], at)
            spec = ModeSpec(mode, lum if mode is not Mode.STANDBY else 0.0, _num(r["apl"], at),
                            _num(r["refresh_hz"], at),
                            base.osc_freq if base and mode is not Mode.STANDBY else 0.0,
                            base.modules_enabled if base else frozenset())
            samples.append(TraceSample(_num(r["t_ms"], at), spec, lum, _num(r["battery_v"], at)))
        except ValueError as e:
            raise InputError(f"{at}: {e}") from None
    return WorkloadTrace(tuple(samples))


def load_trace(path, defaults=None) -> WorkloadTrace:
    return parse_trace(Path(path).read_text(encoding="utf-8"), defaults, str(path))


# --- timelines and search spaces ------------------------------------------------

def load_timeline(path) -> RailTimeline:
    doc = read_json(path)
    if not isinstance(doc, list):
        raise InputError(f"{path}: expected an array of events")
    return RailTimeline.from_records(doc)


def load_search_space(path, curves: Mapping[str, EfficiencyCurve] | None = None) -> tuple[SearchSpace, dict]:
    """Search space JSON; chain configs are file paths relative to the space file.

    Returns the space and the raw document (for the ``panel``/``modes`` paths
    it may name).
    """
    path = Path(path)
    doc = _keys(read_json(path), str(path), ("chain_configs", "supplies"),
                ("panel", "modes", "inductor_sets", "refresh_options", "osc_options", "module_options"))
    base = path.parent
    configs = {k: chains_from(ref, base, curves or {}) for k, ref in doc["chain_configs"].items()}
    supplies = {k: supply_from_dict(v) for k, v in doc["supplies"].items()}
    # a null set keeps the panel's own inductors
    inductor_sets = {
        k: None if s is None else {
            slot: _build(Inductor, v, f"inductor_sets.{k}.{slot}", ("part", "inductance", "i_rms", "dcr"))
            for slot, v in s.items()}
        for k, s in doc.get("inductor_sets", {"model": None}).items()
    }
    try:
        space = SearchSpace(configs, supplies, inductor_sets, doc.get("refresh_options", {}),
                            doc.get("osc_options", ()),
                            {k: [frozenset(m) for m in v] for k, v in doc.get("module_options", {}).items()})
    except ValueError as e:
        raise InputError(f"{path}: {e}") from None
    refs = {k: str(_resolve(base, doc[k])) for k in ("panel", "modes") if k in doc}
    return space, refs

