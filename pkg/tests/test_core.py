import math

import pytest
from hypothesis import given, strategies as st

from amoled_power.core import (
    ConstraintError,
    InputError,
    Mode,
    ModeSpec,
    PanelSpec,
    PowerModelError,
    PowerReport,
    Process,
    RailMeasurement,
    weighted_scenario_power,
)


def _panel(**kw):
    base = dict(name="p", active_area=717.0, efficacy=40.0)
    base.update(kw)
    return PanelSpec(**base)


class TestPanelSpec:
    def test_process_floors(self):
        assert _panel().min_refresh == 10
        assert _panel(process="LTPO").min_refresh == 1

    @pytest.mark.parametrize("kw", [
        {"active_area": 0}, {"efficacy": -1}, {"transmittance": 0}, {"transmittance": 1.2},
        {"emit_area_factor": 0}, {"min_refresh": 0},
    ])
    def test_invalid(self, kw):
        with pytest.raises(InputError):
            _panel(**kw)

    def test_ltps_rejects_1hz(self):
        with pytest.raises(ConstraintError, match="refresh floor"):
            _panel().check_refresh(ModeSpec(Mode.IDLE, 10, 0.1, 1.0))

    def test_ltpo_accepts_1hz(self):
        _panel(process=Process.LTPO).check_refresh(ModeSpec(Mode.IDLE, 10, 0.1, 1.0))

    def test_standby_exempt(self):
        _panel().check_refresh(ModeSpec(Mode.STANDBY))


class TestModeSpec:
    def test_standby_must_be_dark(self):
        with pytest.raises(InputError):
            ModeSpec(Mode.STANDBY, luminance=5)
        with pytest.raises(InputError):
            ModeSpec(Mode.STANDBY, refresh=60)

    def test_label_defaults_to_mode(self):
        assert ModeSpec("Idle").label == "Idle"

    @pytest.mark.parametrize("kw", [{"pixel_on_ratio": 1.5}, {"duty": -0.1}, {"luminance": -1}, {"refresh": -1}])
    def test_ranges(self, kw):
        with pytest.raises(InputError):
            ModeSpec(Mode.NORMAL, **kw)


class TestRailMeasurement:
    def test_power(self):
        assert RailMeasurement("VBT", 3.7, 40).power == pytest.approx(148.0)

    def test_sign_rules(self):
        with pytest.raises(InputError):
            RailMeasurement("PVEE", 3.3, 1)
        with pytest.raises(InputError):
            RailMeasurement("PVDD", -3.3, 1)
        with pytest.raises(InputError):
            RailMeasurement("VCI", 3.3, -1)
        with pytest.raises(InputError):
            RailMeasurement("VXX", 1, 1)


class TestPowerReport:
    def test_total_balances(self):
        r = PowerReport((("a", 1.5), ("b", 2.25)))
        assert r.total == 3.75
        assert r.group("a") == 1.5

    def test_negative_item_rejected(self):
        with pytest.raises(PowerModelError):
            PowerReport((("a", -1.0),))

    @given(st.lists(st.floats(0, 1e4, allow_nan=False), max_size=30))
    def test_sum_of_items(self, vals):
        r = PowerReport(tuple((f"i{k}", v) for k, v in enumerate(vals)))
        assert math.isclose(r.total, math.fsum(vals), rel_tol=1e-12, abs_tol=1e-12)


class TestScenario:
    def _rep(self, v):
        return PowerReport((("x", v),))

    def test_weighted(self):
        pairs = [(ModeSpec(Mode.NORMAL, duty=0.25), self._rep(100.0)),
                 (ModeSpec(Mode.STANDBY, duty=0.75), self._rep(4.0))]
        assert weighted_scenario_power(pairs) == pytest.approx(28.0)

    def test_duty_deficit_named(self):
        pairs = [(ModeSpec(Mode.NORMAL, duty=0.5), self._rep(1.0))]
        with pytest.raises(InputError, match="deficit"):
            weighted_scenario_power(pairs)


class TestScenarioExamples:
    def test_wearable_day(self):
        rep = lambda v: PowerReport((("x", v),))
        pairs = [(ModeSpec(Mode.NORMAL, duty=0.01), rep(150.0)),
                 (ModeSpec(Mode.IDLE, duty=0.04), rep(7.6)),
                 (ModeSpec(Mode.STANDBY, duty=0.95), rep(1.0))]
        assert weighted_scenario_power(pairs) == pytest.approx(2.754, rel=1e-12)

    def test_identity_and_midpoint(self):
        rep = lambda v: PowerReport((("x", v),))
        assert weighted_scenario_power([(ModeSpec(Mode.NORMAL), rep(13.0))]) == 13.0
        pairs = [(ModeSpec(Mode.NORMAL, duty=0.5), rep(10.0)), (ModeSpec(Mode.IDLE, duty=0.5), rep(20.0))]
        assert weighted_scenario_power(pairs) == 15.0
        assert weighted_scenario_power(pairs[::-1]) == 15.0
