"""Power on/off timelines across mode switches and the protection-diode call.

A rail identifier names the net it drives after its last underscore:
``Idle_PVEE`` and ``Normal_PVEE`` both drive net ``PVEE``; a plain ``PVEE``
drives ``PVEE`` too. A rail whose first event is ``Off`` has been on since
before the timeline starts; one whose last event is ``On`` stays on.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Union

from .core import DomainError, InputError, Source


class Action(str, enum.Enum):
    ON = "On"
    OFF = "Off"


@dataclass(frozen=True)
class RailEvent:
    time: float  # ms
    rail: str
    action: Action
    source: Source

    def __post_init__(self):
        object.__setattr__(self, "action", Action(self.action))
        object.__setattr__(self, "source", Source(self.source))
        object.__setattr__(self, "time", float(self.time))
        if self.time < 0 or math.isnan(self.time):
            raise InputError(f"event time must be >= 0, got {self.time}")

    @property
    def net(self) -> str:
        return net_of(self.rail)


def net_of(rail: str) -> str:
    return rail.rsplit("_", 1)[-1]


def _key(e: RailEvent):
    return (e.time, 0 if e.action is Action.OFF else 1, e.rail)


@dataclass(frozen=True)
class RailTimeline:
    events: tuple

    def __post_init__(self):
        events = tuple(sorted(self.events, key=_key))
        last: dict[str, Action] = {}
        for e in events:
            if last.get(e.rail) is e.action:
                raise InputError(f"{e.rail}: two consecutive {e.action.value} events (at {e.time:g} ms)")
            last[e.rail] = e.action
        object.__setattr__(self, "events", events)

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> RailTimeline:
        out = []
        for n, r in enumerate(records):
            keys = set(r)
            if keys != {"t_ms", "rail", "action", "source"}:
                raise InputError(f"timeline[{n}]: expected keys t_ms, rail, action, source; got {sorted(keys)}")
            try:
                out.append(RailEvent(r["t_ms"], r["rail"], r["action"], r["source"]))
            except ValueError as e:
                raise InputError(f"timeline[{n}]: {e}") from None
        return cls(tuple(out))

    def to_records(self) -> list[dict]:
        return [{"t_ms": e.time, "rail": e.rail, "action": e.action.value, "source": e.source.value}
                for e in self.events]

    @property
    def nets(self) -> set[str]:
        return {e.net for e in self.events}

    def shifted(self, dt: float) -> RailTimeline:
        return RailTimeline(tuple(RailEvent(e.time + dt, e.rail, e.action, e.source) for e in self.events))

    def on_intervals(self, net: str) -> dict[Source, list[tuple[float, float]]]:
        """Closed on-intervals per source for every rail driving ``net``."""
        per_rail: dict[str, list[RailEvent]] = {}
        for e in self.events:
            if e.net == net:
                per_rail.setdefault(e.rail, []).append(e)
        out: dict[Source, list[tuple[float, float]]] = {}
        for rail, evs in per_rail.items():
            start = -math.inf if evs[0].action is Action.OFF else None
            for e in evs:
                if e.action is Action.ON:
                    start = e.time
                else:
                    out.setdefault(e.source, []).append((start, e.time))
                    start = None
            if start is not None:
                out.setdefault(evs[-1].source, []).append((start, math.inf))
        return out


def _merge(intervals):
    merged = []
    for a, b in sorted(intervals):
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def detect_contention(t: RailTimeline, net: str) -> list[tuple[float, float]]:
    """Maximal intervals where two different sources drive ``net`` at once.

    Intervals are closed, so an Off and an On at the same instant produce a
    zero-width contention interval.
    """
    if net not in t.nets:
        raise InputError(f"unknown net {net!r}; timeline has {sorted(t.nets)}")
    by_source = {s: _merge(iv) for s, iv in t.on_intervals(net).items()}
    sources = sorted(by_source, key=lambda s: s.value)
    hits = []
    for i, s1 in enumerate(sources):
        for s2 in sources[i + 1:]:
            for a1, b1 in by_source[s1]:
                for a2, b2 in by_source[s2]:
                    lo, hi = max(a1, a2), min(b1, b2)
                    if lo <= hi:
                        hits.append((lo, hi))
    return _merge(hits)


@dataclass(frozen=True)
class DiodeRequired:
    vf: float = 0.4  # V

    def __post_init__(self):
        if not self.vf > 0:
            raise DomainError(f"diode forward drop must be > 0, got {self.vf}")

    @property
    def drop(self) -> float:
        return self.vf


@dataclass(frozen=True)
class DiodeRemovable:
    @property
    def drop(self) -> float:
        return 0.0


DiodeDecision = Union[DiodeRequired, DiodeRemovable]


def diode_decision(t: RailTimeline, net: str, vf: float = 0.4) -> DiodeDecision:
    if not vf > 0:
        raise DomainError(f"vf must be > 0, got {vf}")
    if not t.events:
        return DiodeRemovable()
    return DiodeRequired(vf) if detect_contention(t, net) else DiodeRemovable()


def reschedule_handover(t: RailTimeline, net: str, lead_ms: float = 2.0) -> RailTimeline:
    """Move each outgoing source's Off ahead of the incoming source's On.

    For every Off on ``net`` that falls at or after an On from a different
    source while both were driving the net, the Off is moved to
    ``lead_ms`` before that On (not earlier than its own rail's last On).
    """
    if lead_ms <= 0:
        raise DomainError("lead_ms must be > 0")
    events = list(t.events)
    changed = True
    while changed:
        changed = False
        tl = RailTimeline(tuple(events))
        for iv_lo, iv_hi in (detect_contention(tl, net) if tl.events else []):
            for k, e in enumerate(events):
                if e.net != net or e.action is not Action.OFF or e.time != iv_hi:
                    continue
                ons = [o.time for o in events if o.net == net and o.action is Action.ON
                       and o.source is not e.source and o.time <= e.time]
                if not ons:
                    continue
                new_t = max(ons) - lead_ms
                own_on = [o.time for o in events if o.rail == e.rail and o.action is Action.ON and o.time <= e.time]
                new_t = max(new_t, 0.0)
                if (own_on and new_t <= max(own_on)) or new_t >= e.time:
                    continue
                events[k] = RailEvent(new_t, e.rail, e.action, e.source)
                changed = True
                break
            if changed:
                break
    return RailTimeline(tuple(events))
