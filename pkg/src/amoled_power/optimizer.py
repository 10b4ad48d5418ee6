"""Supply selection, exhaustive configuration search and feedback PVEE control."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

from .chain import ChainConfig, pvee_chain, q, validate_config
from .core import (
    ConstraintError,
    DomainError,
    InfeasibleError,
    InputError,
    ModeSpec,
    PanelSpec,
    PowerReport,
    Source,
    weighted_scenario_power,
)
from .curves import EfficiencyCurve, efficiency_at
from .load import full_white_current, required_rail_span
from .power import Inductor, ModelSet, evaluate_mode
from .sequence import DiodeDecision, DiodeRemovable


class RailSymmetry(str, enum.Enum):
    SYMMETRIC = "Symmetric"
    ASYMMETRIC = "Asymmetric"


@dataclass(frozen=True)
class SupplyPlan:
    emission_source: Source = Source.POWER_CHIP
    rail_symmetry: RailSymmetry = RailSymmetry.SYMMETRIC
    diode: DiodeDecision = field(default_factory=DiodeRemovable)
    pvee_steps: tuple = (-3.3,)  # V, closest to zero first

    def __post_init__(self):
        object.__setattr__(self, "emission_source", Source(self.emission_source))
        object.__setattr__(self, "rail_symmetry", RailSymmetry(self.rail_symmetry))
        steps = tuple(float(s) for s in self.pvee_steps)
        if not steps:
            raise InputError("pvee_steps needs at least one level")
        if any(s > 0 for s in steps):
            raise InputError(f"pvee_steps must all be <= 0, got {steps}")
        if any(b >= a for a, b in zip(steps, steps[1:])):
            raise InputError(f"pvee_steps must be strictly decreasing, got {steps}")
        object.__setattr__(self, "pvee_steps", steps)

    def static(self) -> SupplyPlan:
        """Same plan pinned to its deepest PVEE level."""
        return replace(self, pvee_steps=(self.pvee_steps[-1],))


# --- supply selection -------------------------------------------------------

def select_supply(load: float, ddic: EfficiencyCurve, pmic: EfficiencyCurve) -> Source:
    """Source with the higher efficiency at ``load`` mA; ties go to the power chip.

    A load covered by only one curve is compared against the other curve's
    clamped endpoint value.
    """
    if not load > 0:
        raise DomainError(f"load must be > 0 mA, got {load}")
    if not (ddic.lo <= load <= ddic.hi or pmic.lo <= load <= pmic.hi):
        raise DomainError(
            f"load {load} mA outside both curves [{ddic.lo}, {ddic.hi}] and [{pmic.lo}, {pmic.hi}]"
        )
    e_d = efficiency_at(ddic, load).value
    e_p = efficiency_at(pmic, load).value
    return Source.DRIVER_CHIP if e_d > e_p else Source.POWER_CHIP


# --- exhaustive search --------------------------------------------------------

@dataclass(frozen=True)
class SearchSpace:
    """Discrete option sets; every combination is one candidate.

    ``refresh_options`` and ``module_options`` are keyed by mode label; a mode
    without an entry keeps its own setting. An empty ``osc_options`` keeps
    each mode's oscillator frequency.
    """

    chain_configs: Mapping[str, ChainConfig]
    supplies: Mapping[str, SupplyPlan]
    # None keeps whatever inductors the model set already carries
    inductor_sets: Mapping[str, Optional[Mapping[str, Inductor]]] = field(default_factory=lambda: {"model": None})
    refresh_options: Mapping[str, Sequence[float]] = field(default_factory=dict)
    osc_options: Sequence[float] = ()
    module_options: Mapping[str, Sequence[frozenset]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "chain_configs", dict(self.chain_configs))
        object.__setattr__(self, "supplies", dict(self.supplies))
        object.__setattr__(self, "inductor_sets", {k: None if v is None else dict(v) for k, v in self.inductor_sets.items()})
        object.__setattr__(self, "refresh_options", {k: tuple(v) for k, v in self.refresh_options.items()})
        object.__setattr__(self, "osc_options", tuple(self.osc_options))
        object.__setattr__(self, "module_options",
                           {k: tuple(frozenset(m) for m in v) for k, v in self.module_options.items()})
        for name in ("chain_configs", "supplies", "inductor_sets"):
            if not getattr(self, name):
                raise InputError(f"search space: {name} is empty")
        for label, opts in {**self.refresh_options, **self.module_options}.items():
            if not opts:
                raise InputError(f"search space: no options for mode {label!r}")

    def size(self, modes: Sequence[ModeSpec]) -> int:
        n = len(self.chain_configs) * len(self.supplies) * len(self.inductor_sets) * max(1, len(self.osc_options))
        for m in modes:
            n *= len(self.refresh_options.get(m.label, (None,)))
            n *= len(self.module_options.get(m.label, (None,)))
        return n


@dataclass(frozen=True)
class Candidate:
    chains: str
    supply: str
    inductors: str
    osc: float | None
    refresh: tuple  # per mode, None = keep
    modules: tuple  # per mode, None = keep

    @property
    def id(self) -> str:
        parts = [self.chains, self.supply, self.inductors]
        if self.osc is not None:
            parts.append(f"osc={self.osc:g}")
        for i, (r, m) in enumerate(zip(self.refresh, self.modules)):
            if r is not None:
                parts.append(f"m{i}.refresh={r:g}")
            if m is not None:
                parts.append(f"m{i}.modules={'+'.join(sorted(m)) or '-'}")
        return "|".join(parts)


def candidate_modes(modes: Sequence[ModeSpec], c: Candidate) -> list[ModeSpec]:
    out = []
    for m, r, mods in zip(modes, c.refresh, c.modules):
        if m.active:
            if r is not None:
                m = replace(m, refresh=r)
            if c.osc is not None:
                m = replace(m, osc_freq=c.osc)
            if mods is not None:
                m = replace(m, modules_enabled=mods)
        out.append(m)
    return out


def enumerate_candidates(space: SearchSpace, modes: Sequence[ModeSpec]):
    per_mode_r = [space.refresh_options.get(m.label, (None,)) for m in modes]
    per_mode_m = [space.module_options.get(m.label, (None,)) for m in modes]
    for cfg, sup, ind, osc in itertools.product(
        sorted(space.chain_configs), sorted(space.supplies), sorted(space.inductor_sets),
        space.osc_options or (None,),
    ):
        for rs in itertools.product(*per_mode_r):
            for ms in itertools.product(*per_mode_m):
                yield Candidate(cfg, sup, ind, osc, tuple(rs), tuple(ms))


@dataclass
class OptimizationResult:
    candidate: Candidate
    chain_config: ChainConfig
    supply: SupplyPlan
    inductors: dict
    modes: list
    reports: list
    scenario_mw: float
    evaluated: int
    feasible: int

    def to_dict(self) -> dict:
        return {
            "candidate_id": self.candidate.id,
            "chains": self.candidate.chains,
            "supply": self.candidate.supply,
            "inductors": self.candidate.inductors,
            "scenario_mw": self.scenario_mw,
            "evaluated": self.evaluated,
            "feasible": self.feasible,
            "modes": [{"label": m.label, "refresh": m.refresh, "osc_freq": m.osc_freq,
                       "modules_enabled": sorted(m.modules_enabled), "duty": m.duty,
                       "report": r.to_dict()} for m, r in zip(self.modes, self.reports)],
        }


def _dimension(violation: str) -> str:
    if violation.startswith("refresh floor"):
        return "refresh_options"
    if violation.startswith("rail symmetry"):
        return "supplies"
    return "chain_configs"


def optimize(panel: PanelSpec, space: SearchSpace, modes: Sequence[ModeSpec],
             models: ModelSet) -> OptimizationResult:
    """Exhaustive argmin of duty-weighted scenario power.

    Ties are broken by fewer total chain stages, then by candidate id.
    """
    modes = list(modes)
    if not modes:
        raise InputError("optimize needs at least one mode")
    duty_sum = math.fsum(m.duty for m in modes)
    if abs(duty_sum - 1) > 1e-9:
        raise InputError(f"mode duties sum to {duty_sum!r}, deficit {1 - duty_sum:+.3g} from 1")

    cache: dict = {}
    best = None
    binding: dict[str, dict[str, set]] = {}
    evaluated = feasible = 0
    for cand in enumerate_candidates(space, modes):
        evaluated += 1
        cfg = space.chain_configs[cand.chains]
        sup = space.supplies[cand.supply]
        chosen = space.inductor_sets[cand.inductors]
        mset = models if chosen is None else replace(models, inductors=chosen)
        cmodes = candidate_modes(modes, cand)
        reports = []
        try:
            for m in cmodes:
                key = (cand.chains, cand.supply, cand.inductors, m)
                if key not in cache:
                    try:
                        cache[key] = evaluate_mode(panel, cfg, sup, m, mset)
                    except ConstraintError as e:
                        cache[key] = e
                r = cache[key]
                if isinstance(r, ConstraintError):
                    raise r
                reports.append(r)
        except ConstraintError as e:
            for v in e.violations or [str(e)]:
                v = str(v)
                dim = _dimension(v)
                opt = {"chain_configs": cand.chains, "supplies": cand.supply}.get(dim)
                if opt is None:
                    opt = ",".join(f"{m.label}@{m.refresh:g}Hz" for m in cmodes
                                   if m.active and m.refresh < panel.min_refresh)
                binding.setdefault(dim, {}).setdefault(opt, set()).add(v)
            continue
        feasible += 1
        total = weighted_scenario_power(zip(cmodes, reports))
        key = (total, cfg.stage_count, cand.id)
        if best is None or key < best[0]:
            best = (key, cand, cmodes, reports)
    if best is None:
        out = {d: {o: sorted(v) for o, v in sorted(opts.items())} for d, opts in sorted(binding.items())}
        raise InfeasibleError(f"no feasible candidate among {evaluated}", out)
    (total, _, _), cand, cmodes, reports = best
    return OptimizationResult(
        cand, space.chain_configs[cand.chains], space.supplies[cand.supply],
        dict(space.inductor_sets[cand.inductors] or models.inductors), cmodes, reports, total, evaluated, feasible,
    )


# --- feedback control over a workload trace ---------------------------------

@dataclass(frozen=True)
class TraceSample:
    t: float  # ms
    mode: ModeSpec  # luminance is the frame's peak, pixel_on_ratio its APL
    max_luminance: float  # nits
    battery_v: float  # V


@dataclass(frozen=True)
class WorkloadTrace:
    """Step-function workload; the last sample lasts ``tail_ms``.

    Without ``tail_ms`` the last sample is held for the preceding interval.
    """

    samples: tuple
    tail_ms: float | None = None

    def __post_init__(self):
        samples = tuple(self.samples)
        if not samples:
            raise InputError("trace has no samples")
        for a, b in zip(samples, samples[1:]):
            if not b.t > a.t:
                raise InputError(f"trace times must be strictly increasing ({a.t:g} then {b.t:g} ms)")
        for s in samples:
            if not s.battery_v > 0:
                raise InputError(f"battery_v must be > 0 at t={s.t:g} ms")
            if s.max_luminance < 0:
                raise InputError(f"max_luminance must be >= 0 at t={s.t:g} ms")
        if self.tail_ms is not None and self.tail_ms < 0:
            raise InputError("tail_ms must be >= 0")
        object.__setattr__(self, "samples", samples)

    def durations(self) -> list[float]:
        ts = [s.t for s in self.samples]
        gaps = [b - a for a, b in zip(ts, ts[1:])]
        tail = self.tail_ms if self.tail_ms is not None else (gaps[-1] if gaps else 0.0)
        return gaps + [tail]


@dataclass(frozen=True)
class FeedbackStep:
    t: float
    pvee: float
    mw: float
    span_required: float
    violation: bool


@dataclass
class FeedbackResult:
    steps: list
    energy_mj: float
    flags: list

    @property
    def violations(self) -> list:
        return [s for s in self.steps if s.violation]

    def to_dict(self) -> dict:
        return {
            "energy_mj": self.energy_mj,
            "samples": [{"t_ms": s.t, "pvee_v": s.pvee, "mw": s.mw,
                         "span_required_v": s.span_required, "violation": s.violation}
                        for s in self.steps],
            "flags": list(self.flags),
        }


def choose_pvee(pvdd: float, steps: Sequence[float], span_required: float) -> tuple[float, bool]:
    """Shallowest step meeting the span, else the deepest step with a violation."""
    for s in steps:
        if pvdd - s >= span_required:
            return s, False
    return steps[-1], True


def simulate_feedback(panel: PanelSpec, plan: SupplyPlan, cfg: ChainConfig, trace: WorkloadTrace,
                      models: ModelSet) -> FeedbackResult:
    """Pick a PVEE level per sample from its peak luminance and integrate energy.

    Energy uses the left-rectangle rule: each sample's power holds until the
    next sample.
    """
    if models.oled is None or models.tft is None:
        raise InputError("simulate_feedback needs OLED and TFT models")
    if plan.rail_symmetry is RailSymmetry.SYMMETRIC and len(plan.pvee_steps) > 1:
        raise ConstraintError("rail symmetry: a symmetric plan cannot step PVEE on its own",
                              ["rail symmetry"])
    problems = [v for v in validate_config(cfg) if not v.rule.startswith("reach:PVEE")]
    if problems:
        raise ConstraintError("; ".join(str(v) for v in problems), problems)
    pvdd = float(cfg.voltage("PVDD"))
    chains = {s: cfg.with_chain(pvee_chain(cfg.vci, q(s))) for s in plan.pvee_steps}
    steps, flags, energy = [], [], []
    for sample, dt in zip(trace.samples, trace.durations()):
        need = required_rail_span(models.oled, models.tft, full_white_current(panel, sample.max_luminance))
        level, bad = choose_pvee(pvdd, plan.pvee_steps, need)
        rep: PowerReport = evaluate_mode(panel, chains[level], plan, sample.mode, models,
                                         check=False, vbat=sample.battery_v)
        if bad:
            flags.append(f"span violation at t={sample.t:g} ms: need {need:.4g} V, "
                         f"deepest level gives {pvdd - level:.4g} V")
        steps.append(FeedbackStep(sample.t, level, rep.total, need, bad))
        energy.append(rep.total * dt / 1000.0)
    return FeedbackResult(steps, math.fsum(energy), flags)
