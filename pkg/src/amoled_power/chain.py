"""Converter stages, rail-generation chains and rail margin rules.

Voltage laws are evaluated with exact rationals (``fractions.Fraction``);
floats only appear once efficiencies are computed.

Stage syntax (one string per rail)::

    chain := head ("->" stage)*
    head  := RAIL | "-" RAIL | ["Boost:"] FACTOR "x" RAIL
    stage := "LDO" ["(" volts ["," dropout] ")"] | "CP(" int ")"
           | "BOOST(" ratio ")" | "BYPASS"

A bare RAIL head is a bypass, ``-RAIL`` is a -1x pump, an integer FACTOR in
{-2, -1, 1, 2} is a charge pump and any other positive FACTOR (``1.5``,
``3/2``, ``3``) is an inductive boost with that ratio. A bare ``LDO`` takes
the chain's declared target voltage.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Union

from .core import ConfigurationError, ConstraintError, InputError
from .curves import EfficiencyCurve, efficiency_at

DEFAULT_DROPOUT = Fraction(1, 10)
DEFAULT_BOOST_EFFICIENCY = 0.85  # synthetic placeholder when no curve is attached
PUMP_MULTIPLIERS = (-2, -1, 1, 2)

# name -> margin (V); the equality rule uses its value as an absolute tolerance
DEFAULT_MARGINS = {
    "VGMP<AVDD": Fraction(3, 10),
    "VGHR<VGH": Fraction(3, 10),
    "VREF>VCL": Fraction(3, 10),
    "VGLR>VGL": Fraction(3, 10),
    "VGL=VCL-VCI": Fraction(0),
}


def q(x) -> Fraction:
    """Exact rational for a voltage given as str, int, float or Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(str(x).strip())


@dataclass(frozen=True)
class InductiveBoost:
    ratio: Fraction
    curve: EfficiencyCurve | None = field(default=None, compare=False)
    default_efficiency: float | None = DEFAULT_BOOST_EFFICIENCY

    def __post_init__(self):
        object.__setattr__(self, "ratio", q(self.ratio))
        if self.ratio <= 0:
            raise InputError(f"boost ratio must be > 0, got {self.ratio}")

    def __str__(self):
        return f"BOOST({self.ratio})"


@dataclass(frozen=True)
class ChargePump:
    multiplier: int

    def __post_init__(self):
        if self.multiplier not in PUMP_MULTIPLIERS:
            raise InputError(f"charge pump multiplier must be one of {PUMP_MULTIPLIERS}, got {self.multiplier}")

    def __str__(self):
        return f"CP({self.multiplier})"


@dataclass(frozen=True)
class LinearRegulator:
    target: Fraction
    dropout: Fraction = DEFAULT_DROPOUT

    def __post_init__(self):
        object.__setattr__(self, "target", q(self.target))
        object.__setattr__(self, "dropout", q(self.dropout))
        if self.dropout < 0:
            raise InputError("LDO dropout must be >= 0")

    def __str__(self):
        if self.dropout == DEFAULT_DROPOUT:
            return f"LDO({float(self.target)!r})"
        return f"LDO({float(self.target)!r},{float(self.dropout)!r})"


@dataclass(frozen=True)
class Bypass:
    def __str__(self):
        return "BYPASS"


Stage = Union[InductiveBoost, ChargePump, LinearRegulator, Bypass]


@dataclass(frozen=True)
class ConversionChain:
    input_rail: str
    stages: tuple
    output_rail: str
    target_voltage: Fraction

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "target_voltage", q(self.target_voltage))
        if not self.stages:
            raise InputError(f"{self.output_rail}: chain needs at least one stage")

    def __str__(self):
        return f"{self.input_rail}->" + "->".join(str(s) for s in self.stages)


@dataclass(frozen=True)
class Violation:
    rule: str
    slack: float  # V; negative (or nonzero for equalities) when violated
    detail: str = ""

    def __str__(self):
        return f"{self.rule} (slack {self.slack:+.4g} V){': ' + self.detail if self.detail else ''}"


@dataclass(frozen=True)
class ChainConfig:
    vci: Fraction
    chains: Mapping[str, ConversionChain]
    margins: Mapping[str, Fraction] = field(default_factory=lambda: dict(DEFAULT_MARGINS))
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "vci", q(self.vci))
        object.__setattr__(self, "chains", dict(self.chains))
        object.__setattr__(self, "margins", {k: q(v) for k, v in self.margins.items()})
        for rail, ch in self.chains.items():
            if ch.output_rail != rail:
                raise InputError(f"chain for {rail} declares output {ch.output_rail}")

    def voltage(self, rail: str) -> Fraction:
        if rail == "VCI":
            return self.vci
        try:
            return self.chains[rail].target_voltage
        except KeyError:
            raise InputError(f"rail {rail} is not configured") from None

    @property
    def span(self) -> Fraction:
        return self.voltage("PVDD") - self.voltage("PVEE")

    @property
    def stage_count(self) -> int:
        return sum(len(c.stages) for c in self.chains.values())

    def with_chain(self, chain: ConversionChain) -> ChainConfig:
        chains = dict(self.chains)
        chains[chain.output_rail] = chain
        return ChainConfig(self.vci, chains, self.margins, self.name)

    def topo_order(self) -> list[str]:
        """Rails ordered so that every chain comes after the chain feeding it."""
        order, state = [], {}

        def visit(rail, path):
            if state.get(rail) == 2:
                return
            if state.get(rail) == 1:
                raise ConstraintError(f"cycle in rail chains: {' -> '.join(path + [rail])}",
                                      [f"reach:{rail}"])
            state[rail] = 1
            src = self.chains[rail].input_rail
            if src in self.chains:
                visit(src, path + [rail])
            state[rail] = 2
            order.append(rail)

        for rail in sorted(self.chains):
            visit(rail, [])
        return order


class HeadroomError(ConstraintError):
    def __init__(self, message: str, deficit: Fraction):
        super().__init__(message, [f"LDO headroom deficit {float(deficit):.4g} V"])
        self.deficit = deficit


def stage_output(stage: Stage, v_in) -> Fraction:
    """Ideal output voltage of one stage."""
    v_in = q(v_in)
    if v_in == 0:
        raise ConstraintError("stage input voltage is 0 V", ["v_in != 0"])
    if isinstance(stage, Bypass):
        return v_in
    if isinstance(stage, ChargePump):
        return stage.multiplier * v_in
    if isinstance(stage, InductiveBoost):
        return stage.ratio * v_in
    if isinstance(stage, LinearRegulator):
        t = stage.target
        if t != 0 and (t > 0) != (v_in > 0):
            raise ConstraintError(
                f"LDO target {float(t):g} V has opposite sign to input {float(v_in):g} V",
                ["LDO sign"],
            )
        deficit = abs(t) - (abs(v_in) - stage.dropout)
        if deficit > 0:
            raise HeadroomError(
                f"LDO headroom short by {float(deficit):.4g} V "
                f"({float(t):g} V from {float(v_in):g} V, dropout {float(stage.dropout):g} V)",
                deficit,
            )
        return t
    raise TypeError(f"not a stage: {stage!r}")


def _stage_eta(stage: Stage, v_in, v_out, load: float) -> tuple[float, bool]:
    if isinstance(stage, Bypass):
        return 1.0, False
    if isinstance(stage, LinearRegulator):
        return float(abs(q(v_out)) / abs(q(v_in))), False
    if isinstance(stage, ChargePump):
        return float(abs(q(v_out)) / (abs(stage.multiplier) * abs(q(v_in)))), False
    if isinstance(stage, InductiveBoost):
        if stage.curve is not None:
            r = efficiency_at(stage.curve, load)
            return r.value, r.extrapolated
        if stage.default_efficiency is None:
            raise ConfigurationError(f"{stage}: no efficiency curve and no default")
        return float(stage.default_efficiency), False
    raise TypeError(f"not a stage: {stage!r}")


def stage_efficiency(stage: Stage, v_in, v_out, load: float) -> float:
    return _stage_eta(stage, v_in, v_out, load)[0]


def chain_outputs(chain: ConversionChain, v_in) -> list[Fraction]:
    """Propagated voltage after each stage."""
    v, out = q(v_in), []
    for s in chain.stages:
        v = stage_output(s, v)
        out.append(v)
    return out


def evaluate_chain(chain: ConversionChain, v_in, load: float) -> tuple[float, list[str]]:
    """Chain efficiency plus any extrapolation flags raised by boost curves."""
    v = q(v_in)
    eta, flags = 1.0, []
    for s in chain.stages:
        v_next = stage_output(s, v)
        e, extrapolated = _stage_eta(s, v, v_next, load)
        if extrapolated:
            flags.append(f"extrapolated:{chain.output_rail}:{s}@{load:.6g}mA")
        eta *= e
        v = v_next
    return eta, flags


def chain_efficiency(chain: ConversionChain, load: float, v_in=None, cfg: ChainConfig | None = None) -> float:
    """Product of stage efficiencies, left to right.

    The input voltage is ``v_in`` when given, otherwise the configured voltage
    of ``chain.input_rail`` in ``cfg``.
    """
    if v_in is None:
        if cfg is None:
            raise InputError("chain_efficiency needs v_in or a ChainConfig")
        v_in = cfg.voltage(chain.input_rail)
    return evaluate_chain(chain, v_in, load)[0]


def _reach(cfg: ChainConfig, rail: str) -> list[Violation]:
    chain = cfg.chains[rail]
    src = chain.input_rail
    if src != "VCI" and src not in cfg.chains:
        return [Violation(f"reach:{rail}", float("nan"), f"input rail {src} is not configured")]
    try:
        v = chain_outputs(chain, cfg.voltage(src))[-1]
    except HeadroomError as e:
        return [Violation(f"reach:{rail}", -float(e.deficit), str(e))]
    except ConstraintError as e:
        return [Violation(f"reach:{rail}", float("nan"), str(e))]
    if v != chain.target_voltage:
        return [Violation(f"reach:{rail}", float(v - chain.target_voltage),
                          f"chain yields {float(v):g} V, target {float(chain.target_voltage):g} V")]
    return []


_RULES = {
    # name: (lhs rail, relation, rhs rail)
    "VGMP<AVDD": ("VGMP", "<", "AVDD"),
    "VGHR<VGH": ("VGHR", "<", "VGH"),
    "VREF>VCL": ("VREF", ">", "VCL"),
    "VGLR>VGL": ("VGLR", ">", "VGL"),
}


def validate_config(cfg: ChainConfig) -> list[Violation]:
    """All margin and reachability violations of ``cfg`` (empty when valid).

    Rules only apply when both of their rails are configured. Output order is
    fixed (margin rules, then reachability by rail name), independent of the
    order in which chains were declared.
    """
    out: list[Violation] = []
    rails = set(cfg.chains) | {"VCI"}
    for name in sorted(cfg.margins):
        m = cfg.margins[name]
        if name in _RULES:
            a, rel, b = _RULES[name]
            if a not in rails or b not in rails:
                continue
            va, vb = cfg.voltage(a), cfg.voltage(b)
            if rel == "<":
                slack = (vb - m) - va
                rule = f"{a} < {b}-{float(m):g}"
            else:
                slack = va - (vb + m)
                rule = f"{a} > {b}+{float(m):g}"
            if slack <= 0:
                out.append(Violation(rule, float(slack), f"{a}={float(va):g} V, {b}={float(vb):g} V"))
        elif name == "VGL=VCL-VCI":
            if not {"VGL", "VCL"} <= rails:
                continue
            diff = cfg.voltage("VGL") - (cfg.voltage("VCL") - cfg.vci)
            if abs(diff) > m:
                out.append(Violation("VGL = VCL-VCI", float(diff),
                                     f"VGL={float(cfg.voltage('VGL')):g} V"))
        else:
            raise InputError(f"unknown margin rule {name!r}")
    try:
        cfg.topo_order()
    except ConstraintError as e:
        return out + [Violation(v, float("nan"), str(e)) for v in e.violations]
    for rail in sorted(cfg.chains):
        out.extend(_reach(cfg, rail))
    return out


# --- stage syntax ---------------------------------------------------------

_HEAD = re.compile(
    r"^(?:(?P<boost>Boost:)\s*)?(?:(?P<factor>[-+]?\d+(?:\.\d+)?(?:/\d+)?)\s*[x×*]\s*)?"
    r"(?P<neg>-)?(?P<rail>[A-Z][A-Z0-9_]*)$"
)
_LDO = re.compile(r"^LDO(?:\(\s*(?P<v>[-+]?\d+(?:\.\d+)?)\s*(?:,\s*(?P<d>\d+(?:\.\d+)?)\s*)?\))?$")
_CP = re.compile(r"^CP\(\s*(?P<m>[-+]?\d+)\s*\)$")
_BOOST = re.compile(r"^BOOST\(\s*(?P<r>\d+(?:\.\d+)?(?:/\d+)?)\s*\)$")


def _head_stage(factor: Fraction) -> Stage:
    if factor.denominator == 1 and int(factor) in PUMP_MULTIPLIERS:
        return ChargePump(int(factor))
    if factor > 0:
        return InductiveBoost(factor)
    raise InputError(f"unsupported negative boost factor {factor}")


def _parse(text: str, output_rail: str, target, boost_curve):
    parts = [p.strip() for p in re.split(r"->|→", text.replace("−", "-"))]
    m = _HEAD.match(parts[0].replace(" ", ""))
    if not m:
        raise InputError(f"{output_rail}: cannot parse chain head {parts[0]!r}")
    stages: list[Stage] = []
    if m.group("factor"):
        stages.append(_head_stage(q(m.group("factor")) * (-1 if m.group("neg") else 1)))
    elif m.group("neg"):
        stages.append(ChargePump(-1))
    else:
        stages.append(Bypass())
    for p in parts[1:]:
        p = p.replace(" ", "")
        if (lm := _LDO.match(p)):
            v = lm.group("v")
            if v is None:
                if target is None:
                    raise InputError(f"{output_rail}: bare LDO needs a declared voltage")
                v = target
            d = lm.group("d")
            stages.append(LinearRegulator(q(v), q(d) if d is not None else DEFAULT_DROPOUT))
        elif (cm := _CP.match(p)):
            stages.append(ChargePump(int(cm.group("m"))))
        elif (bm := _BOOST.match(p)):
            stages.append(InductiveBoost(q(bm.group("r"))))
        elif p.upper() == "BYPASS":
            stages.append(Bypass())
        else:
            raise InputError(f"{output_rail}: cannot parse stage {p!r}")
    if boost_curve is not None:
        stages = [InductiveBoost(s.ratio, boost_curve) if isinstance(s, InductiveBoost) else s
                  for s in stages]
    if len(stages) > 1 and isinstance(stages[0], Bypass):
        stages = stages[1:]
    if target is None and isinstance(stages[-1], LinearRegulator):
        target = stages[-1].target
    return m.group("rail"), tuple(stages), target


def parse_chain(text: str, output_rail: str, target=None, v_in=None,
                boost_curve: EfficiencyCurve | None = None) -> ConversionChain:
    """Parse one rail's conversion setting, e.g. ``"Boost:2xVCI->LDO(6.0)"``.

    Without ``target`` the final LDO voltage is the target; a chain ending in
    a pump, boost or bypass needs ``v_in`` so its output can be computed.
    """
    src, stages, target = _parse(text, output_rail, target, boost_curve)
    if target is None:
        if v_in is None:
            raise InputError(f"{output_rail}: chain {text!r} needs a voltage or an input voltage")
        target = chain_outputs(ConversionChain(src, stages, output_rail, 0), v_in)[-1]
    return ConversionChain(src, stages, output_rail, q(target))


def parse_config(doc: Mapping, curves: Mapping[str, EfficiencyCurve] | None = None,
                 name: str = "") -> ChainConfig:
    """Build a ChainConfig from its JSON form::

        {"vci": 3.3,
         "rails": {"AVDD": "Boost:2xVCI->LDO(6.5)",
                   "VGSP": {"setting": "AVDD->LDO", "voltage": 0.8}},
         "margins": {"VGMP<AVDD": 0.3, ...},      # optional, defaults to DEFAULT_MARGINS
         "boost_curves": {"VGH": "<curve key>"}}  # optional
    """
    allowed = {"vci", "rails", "margins", "boost_curves", "name"}
    unknown = set(doc) - allowed
    if unknown:
        raise InputError(f"chains: unknown keys {sorted(unknown)}")
    if "vci" not in doc or "rails" not in doc:
        raise InputError("chains: 'vci' and 'rails' are required")
    vci = q(doc["vci"])
    curves = curves or {}
    bc = doc.get("boost_curves", {})
    parsed = {}
    for rail, spec in doc["rails"].items():
        if isinstance(spec, str):
            text, volts = spec, None
        elif isinstance(spec, Mapping):
            extra = set(spec) - {"setting", "voltage"}
            if extra or "setting" not in spec:
                raise InputError(f"chains.rails.{rail}: expected keys setting[, voltage]")
            text, volts = spec["setting"], spec.get("voltage")
        else:
            raise InputError(f"chains.rails.{rail}: expected string or object")
        curve = None
        if rail in bc:
            if bc[rail] not in curves:
                raise InputError(f"chains.boost_curves.{rail}: unknown curve {bc[rail]!r}")
            curve = curves[bc[rail]]
        parsed[rail] = _parse(text, rail, volts, curve)

    resolved: dict[str, ConversionChain] = {}

    def resolve(rail, seen=()):
        if rail == "VCI":
            return vci
        if rail in resolved:
            return resolved[rail].target_voltage
        if rail not in parsed:
            raise InputError(f"chains: input rail {rail} is not configured")
        if rail in seen:
            raise InputError(f"chains: cycle through {rail}")
        src, stages, target = parsed[rail]
        if target is None:
            # chains ending in a pump/boost/bypass take whatever they produce
            v_in = resolve(src, seen + (rail,))
            try:
                target = chain_outputs(ConversionChain(src, stages, rail, 0), v_in)[-1]
            except ConstraintError as e:
                raise InputError(f"chains.rails.{rail}: {e}") from None
        resolved[rail] = ConversionChain(src, stages, rail, q(target))
        return resolved[rail].target_voltage

    for rail in parsed:
        resolve(rail)
    margins = doc.get("margins", DEFAULT_MARGINS)
    return ChainConfig(vci, resolved, margins, doc.get("name", name))


def format_chain(chain: ConversionChain) -> str:
    """Inverse of :func:`parse_chain` for the stage kinds it emits."""
    parts = [chain.input_rail] + [str(s) for s in chain.stages]
    return "->".join(parts)


def config_to_dict(cfg: ChainConfig) -> dict:
    return {
        "vci": float(cfg.vci),
        "rails": {r: {"setting": format_chain(c), "voltage": float(c.target_voltage)}
                  for r, c in sorted(cfg.chains.items())},
        "margins": {k: float(v) for k, v in sorted(cfg.margins.items())},
    }


def pvee_chain(vci, step) -> ConversionChain:
    """Programmable PVEE level generated from VCI with the shallowest pump."""
    vci, step = q(vci), q(step)
    if step >= 0:
        raise InputError(f"PVEE step must be < 0, got {step}")
    if step == -vci:
        return ConversionChain("VCI", (ChargePump(-1),), "PVEE", step)
    m = -1 if -step <= vci - DEFAULT_DROPOUT else -2
    return ConversionChain("VCI", (ChargePump(m), LinearRegulator(step)), "PVEE", step)


def emission_rail_chains(vin, span, symmetric: bool, boost: InductiveBoost | None = None,
                         pvdd=None) -> tuple[ConversionChain, ConversionChain]:
    """PVDD/PVEE chains delivering ``span`` volts from ``vin``.

    Symmetric: PVDD = span/2, PVEE = -span/2, using only bypass/pump/LDO.
    Asymmetric: PVDD (default span/2 + 1 V, clipped so PVEE stays negative)
    above ``vin`` needs the inductive ``boost`` followed by an LDO.
    """
    vin, span = q(vin), q(span)
    half = span / 2
    if symmetric:
        pos = ConversionChain("VCI", (Bypass(),) if half == vin else (LinearRegulator(half),), "PVDD", half)
        neg = ConversionChain("VCI", (ChargePump(-1),) if half == vin else (ChargePump(-1), LinearRegulator(-half)),
                              "PVEE", -half)
        return pos, neg
    pvdd = q(pvdd) if pvdd is not None else min(half + 1, span - Fraction(1, 10))
    if boost is None:
        boost = InductiveBoost(Fraction(2))
    if stage_output(boost, vin) - DEFAULT_DROPOUT < pvdd:
        raise ConstraintError(f"boost ratio {boost.ratio} cannot reach PVDD {float(pvdd):g} V")
    pos = ConversionChain("VCI", (boost, LinearRegulator(pvdd)), "PVDD", pvdd)
    pvee = pvdd - span
    pump = -1 if -pvee <= vin - DEFAULT_DROPOUT else -2
    neg = ConversionChain("VCI", (ChargePump(pump), LinearRegulator(pvee)), "PVEE", pvee)
    return pos, neg
