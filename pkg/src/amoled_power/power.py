"""Power formulas, per-mode evaluation with an itemized ledger, and calibration.

Ledger labels produced by :func:`evaluate_mode`:

``emission:load``           PVDD-PVEE span x emission current
``emission:diode``          forward drop x emission current (diode plans only)
``emission:conversion``     source-chip loss when a measured curve is used
``array:<RAIL>``            power the panel draws from a driver-chip rail
``conversion:<RAIL>``       loss of that rail's conversion chain
``conversion:VCI``          loss of the power chip's VCI output
``dcr:<slot>``              inductor conduction loss
``quiescent:<chip>``        chip quiescent draw
``digital:static|osc|refresh|module:<name>``  driver-chip digital section
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .chain import ChainConfig, InductiveBoost, config_to_dict, evaluate_chain, q, validate_config
from .core import (
    ConfigurationError,
    ConstraintError,
    DomainError,
    InputError,
    Mode,
    ModeSpec,
    PanelSpec,
    PowerReport,
    RailMeasurement,
    Source,
)
from .curves import EfficiencyCurve, efficiency_at
from .load import (
    OledDiodeModel,
    TftModel,
    emission_current,
    full_white_current,
    required_rail_span,
)


@dataclass(frozen=True)
class DigitalModel:
    p_static: float = 0.0  # mW
    k_osc: float = 0.0  # mW/MHz
    k_refresh: float = 0.0  # mW/Hz
    module_power: Mapping[str, float] = field(default_factory=dict)  # mW

    def __post_init__(self):
        object.__setattr__(self, "module_power", dict(self.module_power))
        if min([self.p_static, self.k_osc, self.k_refresh, *self.module_power.values()]) < 0:
            raise InputError("digital coefficients must be >= 0")

    def power(self, mode: ModeSpec) -> dict[str, float]:
        if not mode.active:
            return {}
        out = {
            "digital:static": self.p_static,
            "digital:osc": self.k_osc * mode.osc_freq,
            "digital:refresh": self.k_refresh * mode.refresh,
        }
        for name in sorted(mode.modules_enabled):
            if name not in self.module_power:
                raise ConfigurationError(f"no power figure for function module {name!r}")
            out[f"digital:module:{name}"] = self.module_power[name]
        return out


@dataclass(frozen=True)
class Inductor:
    part: str
    inductance: float  # uH
    i_rms: float  # A
    dcr: float  # Ohm

    def __post_init__(self):
        if not (self.inductance > 0 and self.i_rms > 0 and self.dcr > 0):
            raise InputError(f"inductor {self.part}: inductance, i_rms and dcr must be > 0")


@dataclass(frozen=True)
class QuiescentModel:
    """Per-chip quiescent draw in mA keyed by mode name.

    The key ``"*"`` is the fallback for modes not listed. Each chip's draw is
    referred to ``supply_v[chip]`` (default: the battery voltage).
    """

    draw: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    supply_v: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "draw", {c: dict(m) for c, m in self.draw.items()})
        object.__setattr__(self, "supply_v", dict(self.supply_v))
        for chip, per_mode in self.draw.items():
            for mode, ma in per_mode.items():
                if ma < 0:
                    raise InputError(f"quiescent {chip}/{mode} must be >= 0")
                if mode != "*" and mode not in {m.value for m in Mode}:
                    raise InputError(f"quiescent {chip}: unknown mode {mode!r}")
            sb = per_mode.get(Mode.STANDBY.value)
            active = [v for k, v in per_mode.items() if k != Mode.STANDBY.value]
            if sb is not None and active and sb > min(active):
                raise InputError(f"quiescent {chip}: standby draw exceeds active draw")

    def current(self, chip: str, mode: Mode) -> float:
        per_mode = self.draw[chip]
        if mode.value in per_mode:
            return per_mode[mode.value]
        return per_mode.get("*", 0.0)


@dataclass(frozen=True)
class RailLoad:
    """Array-substrate draw on one driver-chip rail: i_static + i_per_hz * refresh."""

    i_static: float = 0.0  # mA
    i_per_hz: float = 0.0  # mA/Hz

    def __post_init__(self):
        if self.i_static < 0 or self.i_per_hz < 0:
            raise InputError("rail load coefficients must be >= 0")

    def current(self, refresh: float) -> float:
        return self.i_static + self.i_per_hz * refresh


@dataclass(frozen=True)
class ModelSet:
    digital: DigitalModel = field(default_factory=DigitalModel)
    quiescent: QuiescentModel = field(default_factory=QuiescentModel)
    oled: OledDiodeModel | None = None
    tft: TftModel | None = None
    inductors: Mapping[str, Inductor] = field(default_factory=dict)
    rail_loads: Mapping[str, RailLoad] = field(default_factory=dict)
    pmic_curve: EfficiencyCurve | None = None
    ddic_curve: EfficiencyCurve | None = None
    vci_efficiency: float = 1.0
    vbat: float = 3.7
    vddio: float = 1.8

    def __post_init__(self):
        object.__setattr__(self, "inductors", dict(self.inductors))
        object.__setattr__(self, "rail_loads", dict(self.rail_loads))
        if not 0 < self.vci_efficiency <= 1:
            raise InputError("vci_efficiency must be in (0, 1]")
        if not (self.vbat > 0 and self.vddio > 0):
            raise InputError("vbat and vddio must be > 0")


# --- closed-form formulas -------------------------------------------------

def dcr_loss(ind: Inductor, i: float) -> float:
    """Conduction loss in mW for ``i`` amperes through the inductor's DCR."""
    if i < 0:
        raise DomainError(f"inductor current must be >= 0 A, got {i}")
    # inputs read as the decimals they print as, multiplied exactly, rounded once
    return float(q(float(i)) ** 2 * q(float(ind.dcr)) * 1000)


def _need(m: RailMeasurement, rail: str):
    if m.rail != rail:
        raise InputError(f"expected a {rail} measurement, got {m.rail}")


def total_power_method1(vddio: RailMeasurement, vbt: RailMeasurement) -> float:
    """Module power when the power chip sits on the display module (mW)."""
    _need(vddio, "VDDIO")
    _need(vbt, "VBT")
    return vddio.voltage * vddio.current + vbt.voltage * vbt.current


def total_power_method2(vddio: RailMeasurement, vci: RailMeasurement,
                        pvdd: RailMeasurement, pvee: RailMeasurement) -> float:
    """Module power when the power chip sits on the host board (mW)."""
    _need(vddio, "VDDIO")
    _need(vci, "VCI")
    _need(pvdd, "PVDD")
    _need(pvee, "PVEE")
    return (vddio.voltage * vddio.current + vci.voltage * vci.current
            + (pvdd.voltage - pvee.voltage) * pvee.current)


# --- full evaluation ------------------------------------------------------

def _digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def mode_to_dict(mode: ModeSpec) -> dict:
    return {
        "mode": mode.mode.value, "luminance": mode.luminance,
        "pixel_on_ratio": mode.pixel_on_ratio, "refresh": mode.refresh,
        "osc_freq": mode.osc_freq, "modules_enabled": sorted(mode.modules_enabled),
        "duty": mode.duty, "label": mode.label,
    }


def check_mode(panel: PanelSpec, cfg: ChainConfig, supply, mode: ModeSpec, models: ModelSet) -> list[str]:
    """Constraint violations for evaluating ``mode`` under this configuration."""
    problems = [str(v) for v in validate_config(cfg)]
    try:
        panel.check_refresh(mode)
    except ConstraintError as e:
        problems.append(str(e))
    if "PVDD" not in cfg.chains or "PVEE" not in cfg.chains:
        problems.append("PVDD and PVEE rails must be configured")
        return problems
    if models.oled is not None and models.tft is not None:
        need = required_rail_span(models.oled, models.tft, full_white_current(panel, mode.luminance))
        if float(cfg.span) < need:
            problems.append(f"rail span: PVDD-PVEE {float(cfg.span):.4g} V below required {need:.4g} V")
    sym = getattr(supply, "rail_symmetry", None)
    if sym is not None and getattr(sym, "value", sym) == "Symmetric" \
            and cfg.voltage("PVDD") != -cfg.voltage("PVEE"):
        problems.append("rail symmetry: symmetric plan but PVDD != -PVEE")
    return problems


def evaluate_mode(panel: PanelSpec, cfg: ChainConfig, supply, mode: ModeSpec,
                  models: ModelSet, *, check: bool = True, vbat: float | None = None) -> PowerReport:
    """Itemized power of one operating mode, referred to the module inputs.

    ``supply`` is a SupplyPlan (emission source, rail symmetry, diode decision).
    With ``check`` the configuration, refresh floor and rail span are
    validated first and any violation raises ConstraintError; otherwise the
    violations are carried as report flags.
    """
    problems = check_mode(panel, cfg, supply, mode, models)
    if problems and check:
        raise ConstraintError("; ".join(problems), problems)
    flags = [f"violation:{p}" for p in problems]
    vbat = models.vbat if vbat is None else vbat
    source = Source(supply.emission_source)
    vf = supply.diode.drop if supply.diode is not None else 0.0

    i_emit = emission_current(panel, mode)
    span = float(cfg.span)
    items: dict[str, float] = {"emission:load": span * i_emit}
    if vf:
        items["emission:diode"] = vf * i_emit

    # own output power per configured rail, before cascading
    own: dict[str, float] = {}
    if mode.active:
        for rail in sorted(models.rail_loads):
            if rail not in cfg.chains:
                raise ConfigurationError(f"rail load on {rail}, which has no conversion chain")
            p = abs(float(cfg.voltage(rail))) * models.rail_loads[rail].current(mode.refresh)
            own[rail] = own.get(rail, 0.0) + p
            items[f"array:{rail}"] = p

    curve = models.pmic_curve if source is Source.POWER_CHIP else models.ddic_curve
    p_emit_out = (span + vf) * i_emit
    p_emit_in = 0.0  # drawn by a curve-described source chip
    eta_emit = 1.0
    if curve is not None:
        if i_emit > 0:
            r = efficiency_at(curve, i_emit)
            eta_emit = r.value
            if r.extrapolated:
                flags.append(f"extrapolated:{curve.chip_id}@{i_emit:.6g}mA")
            p_emit_in = p_emit_out / eta_emit
        items["emission:conversion"] = p_emit_in - p_emit_out
    else:
        own["PVDD"] = own.get("PVDD", 0.0) + float(cfg.voltage("PVDD")) * i_emit
        own["PVEE"] = own.get("PVEE", 0.0) + (abs(float(cfg.voltage("PVEE"))) + vf) * i_emit

    # cascade chain losses from the rails furthest downstream up to VCI
    order = cfg.topo_order()
    out_total = dict.fromkeys(cfg.chains, 0.0)
    p_in: dict[str, float] = {}
    root_in = {"VCI": 0.0}
    for rail in reversed(order):
        chain = cfg.chains[rail]
        p_out = out_total[rail] + own.get(rail, 0.0)
        if p_out > 0:
            v_out = abs(float(chain.target_voltage))
            eta, fl = evaluate_chain(chain, cfg.voltage(chain.input_rail), p_out / v_out)
            flags.extend(fl)
            p_in[rail] = p_out / eta
            items[f"conversion:{rail}"] = p_in[rail] - p_out
        else:
            p_in[rail] = 0.0
        src = chain.input_rail
        if src in cfg.chains:
            out_total[src] += p_in[rail]
        else:
            root_in[src] = root_in.get(src, 0.0) + p_in[rail]

    # VCI is the power chip's output to the driver chip
    p_vci = root_in.pop("VCI")
    if root_in:
        raise ConfigurationError(f"chains rooted at unsupported rails {sorted(root_in)}")
    emission_from_vci = curve is not None and source is Source.DRIVER_CHIP
    if emission_from_vci:
        p_vci += p_emit_in
    if curve is None and source is Source.POWER_CHIP:
        # the power chip builds PVDD/PVEE itself; its chains bypass the VCI output
        p_vci -= p_in.get("PVDD", 0.0) + p_in.get("PVEE", 0.0)
        p_vci = max(p_vci, 0.0)
    items["conversion:VCI"] = p_vci / models.vci_efficiency - p_vci
    vci = float(cfg.vci)

    for slot in sorted(models.inductors):
        ind = models.inductors[slot]
        if slot == "PMIC":
            i_ma = p_emit_in / vbat if (curve is not None and source is Source.POWER_CHIP) else 0.0
        elif slot == "DDIC":
            i_ma = p_emit_in / vci if emission_from_vci else 0.0
        elif slot == "VCI":
            i_ma = (p_vci / models.vci_efficiency) / vbat
        elif slot in cfg.chains:
            chain = cfg.chains[slot]
            if not any(isinstance(s, InductiveBoost) for s in chain.stages):
                raise ConfigurationError(f"inductor on {slot}, whose chain has no inductive boost")
            i_ma = p_in[slot] / abs(float(cfg.voltage(chain.input_rail)))
        else:
            raise ConfigurationError(f"unknown inductor slot {slot!r}")
        i_a = i_ma * 1e-3
        if i_a > ind.i_rms:
            flags.append(f"i_rms_exceeded:{slot}:{i_a:.4g}A>{ind.i_rms:g}A")
        items[f"dcr:{slot}"] = dcr_loss(ind, i_a)

    for chip in sorted(models.quiescent.draw):
        ma = models.quiescent.current(chip, mode.mode)
        items[f"quiescent:{chip}"] = ma * models.quiescent.supply_v.get(chip, vbat)

    items.update(models.digital.power(mode))

    digital = math.fsum(v for k, v in items.items() if k.startswith("digital:"))
    meta = {
        "i_emission_ma": i_emit,
        "panel_span_v": span,
        "source_span_v": span + vf,
        "eta_emission": eta_emit,
        "vci_mw": p_vci,
        "vddio_mw": digital,
        "vbat": vbat,
    }
    echo = _digest({
        "panel": panel.name, "chains": config_to_dict(cfg), "mode": mode_to_dict(mode),
        "supply": {"source": source.value, "diode": vf,
                   "symmetry": str(getattr(getattr(supply, "rail_symmetry", ""), "value", ""))},
    })
    total_items = tuple(items.items())
    # float rounding in the subtraction-based losses can leave tiny negatives
    total_items = tuple((k, 0.0 if -1e-12 < v < 0 else v) for k, v in total_items)
    return PowerReport(total_items, echo, tuple(flags), meta)


def emission_path_power(report: PowerReport) -> float:
    """Power spent delivering light: OLED load plus any diode drop."""
    return report.item("emission:load") + report.item("emission:diode")


# --- calibration ------------------------------------------------------------

_EMISSION_LABELS = ("emission:", "dcr:PMIC", "dcr:DDIC")


def _emission_feature(report: PowerReport) -> float:
    return math.fsum(v for k, v in report.items if k.startswith(_EMISSION_LABELS))


def _feature(name: str, mode: ModeSpec, report: PowerReport, models: ModelSet) -> tuple[float, float]:
    """(regressor value, base-model contribution) of one free coefficient."""
    if name == "p_static":
        return (1.0 if mode.active else 0.0), report.item("digital:static")
    if name == "k_osc":
        return (mode.osc_freq if mode.active else 0.0), report.item("digital:osc")
    if name == "k_refresh":
        return (mode.refresh if mode.active else 0.0), report.item("digital:refresh")
    if name == "emission":
        e = _emission_feature(report)
        return e, e
    if name.startswith("module:"):
        mod = name.split(":", 1)[1]
        on = mode.active and mod in mode.modules_enabled
        return (1.0 if on else 0.0), report.item(f"digital:module:{mod}")
    if name.startswith("quiescent:"):
        try:
            _, chip, mname = name.split(":")
        except ValueError:
            raise InputError(f"expected quiescent:<chip>:<mode>, got {name!r}") from None
        if mode.mode.value != mname:
            return 0.0, 0.0
        v = models.quiescent.supply_v.get(chip, models.vbat)
        return v, report.item(f"quiescent:{chip}")
    raise InputError(f"unknown free coefficient {name!r}")


@dataclass
class FitResult:
    coefficients: dict[str, float]
    residuals: list[float]  # measured - predicted, per row
    clipped: list[str]
    fixed: list[float]
    features: np.ndarray
    free: list[str]
    _context: tuple = field(repr=False, default=())

    def predict(self, mode: ModeSpec) -> float:
        panel, cfg, supply, models = self._context
        rep = evaluate_mode(panel, cfg, supply, mode, models, check=False)
        total = rep.total
        for name in self.free:
            x, base = _feature(name, mode, rep, models)
            total += self.coefficients[name] * x - base
        return total

    def calibrated_models(self) -> tuple[PanelSpec, ModelSet]:
        """Base models with the fitted values written back.

        The emission lump is folded into panel efficacy, which is exact only
        while the emission-path efficiency does not move with load.
        """
        panel, _, _, models = self._context
        c = self.coefficients
        dig = models.digital
        modules = dict(dig.module_power)
        for name, v in c.items():
            if name.startswith("module:"):
                modules[name.split(":", 1)[1]] = v
        dig = replace(dig, p_static=c.get("p_static", dig.p_static), k_osc=c.get("k_osc", dig.k_osc),
                      k_refresh=c.get("k_refresh", dig.k_refresh), module_power=modules)
        draw = {chip: dict(m) for chip, m in models.quiescent.draw.items()}
        for name, v in c.items():
            if name.startswith("quiescent:"):
                _, chip, mname = name.split(":")
                draw.setdefault(chip, {})[mname] = v
        models = replace(models, digital=dig, quiescent=replace(models.quiescent, draw=draw))
        if c.get("emission", 0) > 0:
            panel = replace(panel, efficacy=panel.efficacy / c["emission"])
        return panel, models


def fit_calibration(measurements: Sequence[tuple[ModeSpec, float]], free: Iterable[str],
                    panel: PanelSpec, cfg: ChainConfig, supply, models: ModelSet) -> FitResult:
    """Least-squares fit of the named coefficients against measured mode powers.

    Every coefficient enters the model linearly: ``emission`` scales the
    base model's emission-path power, the others are the DigitalModel /
    QuiescentModel fields they name. Negative solutions are clipped to 0 and
    the remaining coefficients refitted.
    """
    free = list(dict.fromkeys(free))
    if not free:
        raise InputError("no free coefficients")
    rows = list(measurements)
    if len(rows) < len(free):
        raise InputError(f"{len(rows)} measurements cannot determine {len(free)} coefficients")
    X = np.zeros((len(rows), len(free)))
    fixed = []
    y = np.zeros(len(rows))
    for i, (mode, measured) in enumerate(rows):
        rep = evaluate_mode(panel, cfg, supply, mode, models, check=False)
        base = 0.0
        for j, name in enumerate(free):
            X[i, j], b = _feature(name, mode, rep, models)
            base += b
        fixed.append(rep.total - base)
        y[i] = measured - fixed[-1]

    scale = np.linalg.norm(X, axis=0)
    dead = [free[j] for j in range(len(free)) if scale[j] == 0]
    if dead:
        raise InputError(f"degenerate fit: no measurement exercises {dead}")
    Xn = X / scale
    _, s, vt = np.linalg.svd(Xn)
    tol = max(Xn.shape) * np.finfo(float).eps * (s[0] if len(s) else 0) * 1e3
    rank = int(np.sum(s > tol))
    if rank < len(free):
        null = vt[rank:]
        bad = [free[j] for j in range(len(free)) if np.any(np.abs(null[:, j]) > 1e-8)]
        raise InputError(f"degenerate fit: coefficients {bad} are not separately identifiable")

    active = list(range(len(free)))
    theta = np.zeros(len(free))
    clipped: list[str] = []
    while True:
        sol, *_ = np.linalg.lstsq(X[:, active], y, rcond=None)
        theta[:] = 0.0
        theta[active] = sol
        neg = [j for j in active if theta[j] < 0]
        if not neg:
            break
        for j in neg:
            clipped.append(free[j])
            active.remove(j)
        theta[neg] = 0.0
        if not active:
            break
    pred = X @ theta
    return FitResult(
        coefficients={n: float(t) for n, t in zip(free, theta)},
        residuals=[float(r) for r in (y - pred)],
        clipped=clipped,
        fixed=fixed,
        features=X,
        free=free,
        _context=(panel, cfg, supply, models),
    )
