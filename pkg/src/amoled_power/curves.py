"""Measured efficiency curves: loading, piecewise-linear lookup, crossovers."""

from __future__ import annotations

import bisect
import csv
import io
import os
from dataclasses import dataclass
from typing import NamedTuple

from .core import DomainError, InputError

HEADER = ("load_ma", "efficiency")


class CurveFormatError(InputError):
    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class Interpolated(NamedTuple):
    value: float
    extrapolated: bool


@dataclass(frozen=True)
class EfficiencyCurve:
    chip_id: str
    voltage_setting: str
    points: tuple  # ((load_ma, efficiency), ...)

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if len(pts) < 2:
            raise CurveFormatError("curve needs at least 2 points")
        for i, (x, y) in enumerate(pts):
            if x < 0:
                raise CurveFormatError(f"negative load {x}", i + 1)
            if not 0 < y <= 1:
                raise CurveFormatError(f"efficiency out of range: {y}", i + 1)
            if i and x <= pts[i - 1][0]:
                raise CurveFormatError(f"loads not strictly increasing ({x} after {pts[i-1][0]})", i + 1)
        object.__setattr__(self, "points", pts)

    @property
    def loads(self) -> list[float]:
        return [x for x, _ in self.points]

    @property
    def lo(self) -> float:
        return self.points[0][0]

    @property
    def hi(self) -> float:
        return self.points[-1][0]

    def __call__(self, load: float) -> float:
        return efficiency_at(self, load).value


def parse_curve(text: str, chip_id: str = "", voltage_setting: str = "") -> EfficiencyCurve:
    """Parse the ``load_ma,efficiency`` CSV text.

    Row numbers in errors count data rows from 1 (the header is row 0).
    """
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise CurveFormatError("empty curve file")
    header = tuple(c.strip() for c in rows[0])
    if header != HEADER:
        raise CurveFormatError(f"expected header {','.join(HEADER)!r}, got {','.join(header)!r}", 0)
    points = []
    for n, row in enumerate(rows[1:], start=1):
        if len(row) != 2:
            raise CurveFormatError(f"expected 2 columns, got {len(row)}", n)
        try:
            x, y = float(row[0]), float(row[1])
        except ValueError:
            raise CurveFormatError(f"not a number: {','.join(row)!r}", n) from None
        if not 0 < y <= 1:
            raise CurveFormatError(f"efficiency out of range: {y}", n)
        if x < 0:
            raise CurveFormatError(f"negative load {x}", n)
        if points and x <= points[-1][0]:
            raise CurveFormatError(f"loads not strictly increasing ({x} after {points[-1][0]})", n)
        points.append((x, y))
    if len(points) < 2:
        raise CurveFormatError(f"curve needs at least 2 points, got {len(points)}")
    return EfficiencyCurve(chip_id, voltage_setting, tuple(points))


def load_curve(path, chip_id: str | None = None, voltage_setting: str = "") -> EfficiencyCurve:
    with open(path, encoding="utf-8") as f:
        text = f.read()
    if chip_id is None:
        chip_id = os.path.splitext(os.path.basename(str(path)))[0]
    return parse_curve(text, chip_id, voltage_setting)


def _interp(points, load: float) -> float:
    xs = [x for x, _ in points]
    i = bisect.bisect_left(xs, load)
    if i < len(xs) and xs[i] == load:
        return points[i][1]
    (x0, y0), (x1, y1) = points[i - 1], points[i]
    t = (load - x0) / (x1 - x0)
    return y0 + t * (y1 - y0)


def efficiency_at(curve: EfficiencyCurve, load: float) -> Interpolated:
    """Efficiency at ``load`` mA.

    Exact at knots, linear between them, and held at the nearest endpoint
    outside the sampled range (``extrapolated`` is then True).
    """
    if not load > 0:
        raise DomainError(f"load must be > 0 mA, got {load}")
    if load < curve.lo:
        return Interpolated(curve.points[0][1], True)
    if load > curve.hi:
        return Interpolated(curve.points[-1][1], True)
    return Interpolated(_interp(curve.points, load), False)


def _value(curve: EfficiencyCurve, x: float) -> float:
    # clamp-free lookup inside the sampled range, knots allowed at 0
    if x <= curve.lo:
        return curve.points[0][1]
    if x >= curve.hi:
        return curve.points[-1][1]
    return _interp(curve.points, x)


def crossover(a: EfficiencyCurve, b: EfficiencyCurve) -> list[float]:
    """Loads inside the common range where ``a - b`` changes sign or touches zero.

    Both curves are piecewise linear, so the difference is linear between the
    merged knot set. Knots where the difference is exactly zero are reported
    as touches, so identical curves return every merged knot.
    """
    lo, hi = max(a.lo, b.lo), min(a.hi, b.hi)
    if lo > hi:
        raise DomainError(
            f"curves do not overlap: [{a.lo}, {a.hi}] vs [{b.lo}, {b.hi}]"
        )
    xs = sorted({x for x in a.loads + b.loads if lo <= x <= hi} | {lo, hi})
    ds = [_value(a, x) - _value(b, x) for x in xs]
    out = []
    for i, (x, d) in enumerate(zip(xs, ds)):
        if d == 0:
            out.append(x)
        if i + 1 < len(xs):
            d1 = ds[i + 1]
            if d * d1 < 0:
                x1 = xs[i + 1]
                out.append(x + (x1 - x) * d / (d - d1))
    return sorted(set(out))
