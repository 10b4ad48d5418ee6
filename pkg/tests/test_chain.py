import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from amoled_power.chain import (
    Bypass,
    ChainConfig,
    ChargePump,
    ConversionChain,
    HeadroomError,
    InductiveBoost,
    LinearRegulator,
    chain_efficiency,
    config_to_dict,
    format_chain,
    parse_chain,
    parse_config,
    pvee_chain,
    stage_efficiency,
    stage_output,
    validate_config,
)
from amoled_power.core import ConfigurationError, ConstraintError, InputError
from amoled_power.curves import EfficiencyCurve


class TestStageOutput:
    def test_pump_double(self):
        assert stage_output(ChargePump(2), 3.3) == Fraction("6.6")

    def test_bypass(self):
        assert stage_output(Bypass(), 3.3) == Fraction("3.3")

    def test_pump_invert(self):
        assert stage_output(ChargePump(-1), 3.3) == Fraction("-3.3")

    def test_boost(self):
        assert stage_output(InductiveBoost(Fraction(3, 2)), Fraction("-6.6")) == Fraction("-9.9")

    def test_headroom_deficit(self):
        with pytest.raises(HeadroomError) as e:
            stage_output(LinearRegulator(3.3), 3.3)
        assert e.value.deficit == Fraction("0.1")

    def test_ldo_sign(self):
        with pytest.raises(ConstraintError):
            stage_output(LinearRegulator(-1.0), 3.3)

    def test_zero_input(self):
        with pytest.raises(ConstraintError):
            stage_output(Bypass(), 0)

    def test_invalid_stages(self):
        with pytest.raises(InputError):
            ChargePump(3)
        with pytest.raises(InputError):
            LinearRegulator(1.0, -0.1)
        with pytest.raises(InputError):
            InductiveBoost(0)


class TestStageEfficiency:
    def test_ldo(self):
        assert stage_efficiency(LinearRegulator(1.8), 3.3, 1.8, 5) == pytest.approx(1.8 / 3.3, rel=1e-15)

    def test_bypass(self):
        assert stage_efficiency(Bypass(), 3.3, 3.3, 5) == 1.0

    def test_pump(self):
        assert stage_efficiency(ChargePump(2), 3.3, 6.5, 5) == pytest.approx(0.984848, abs=1e-6)

    def test_boost_curve_and_default(self):
        c = EfficiencyCurve("b", "", ((1, 0.6), (10, 0.9)))
        assert stage_efficiency(InductiveBoost(2, c), 3.3, 6.6, 5.5) == pytest.approx(0.75)
        assert stage_efficiency(InductiveBoost(2), 3.3, 6.6, 5.5) == 0.85

    def test_boost_without_model(self):
        with pytest.raises(ConfigurationError):
            stage_efficiency(InductiveBoost(2, None, None), 3.3, 6.6, 1)


class TestChainEfficiency:
    def test_pump_then_ldo(self):
        # a doubling pump is lossless at its ideal output, so only the LDO drop costs
        ch = ConversionChain("VCI", (ChargePump(2), LinearRegulator(6.0, 0.3)), "AVDD", 6.0)
        assert chain_efficiency(ch, 10, v_in=3.3) == pytest.approx(6.0 / 6.6, rel=1e-15)

    def test_bypass_chain(self):
        ch = ConversionChain("VCI", (Bypass(),), "PVDD", 3.3)
        assert chain_efficiency(ch, 1, v_in=3.3) == 1.0

    def test_pvdd_ldo(self, case):
        ch = case["voltage_tuned"].chains["PVDD"]
        assert chain_efficiency(ch, 10, cfg=case["voltage_tuned"]) == pytest.approx(0.545454545, abs=1e-9)

    def test_needs_input(self):
        with pytest.raises(InputError):
            chain_efficiency(ConversionChain("VCI", (Bypass(),), "PVDD", 3.3), 1)


@st.composite
def chains(draw):
    """Reachable chains from VCI 3.3 built from random stages."""
    v = Fraction("3.3")
    stages = []
    for _ in range(draw(st.integers(1, 4))):
        kind = draw(st.sampled_from(["pump", "boost", "ldo", "bypass"]))
        if kind == "pump":
            s = ChargePump(draw(st.sampled_from([-2, -1, 1, 2])))
        elif kind == "boost":
            s = InductiveBoost(Fraction(draw(st.integers(3, 8)), 2), None, draw(st.floats(0.5, 0.99)))
        elif kind == "ldo" and abs(v) > Fraction(1, 2):
            mag = Fraction(draw(st.integers(1, int((abs(v) - Fraction(1, 10)) * 10))), 10)
            s = LinearRegulator(mag if v > 0 else -mag)
        else:
            s = Bypass()
        v = stage_output(s, v)
        stages.append(s)
    return ConversionChain("VCI", tuple(stages), "X", v)


class TestChainProperties:
    @given(chains(), st.floats(0.1, 50))
    def test_in_unit_interval(self, ch, load):
        assert 0 < chain_efficiency(ch, load, v_in=3.3) <= 1

    @given(chains(), st.floats(0.1, 50))
    def test_appending_never_helps(self, ch, load):
        eta = chain_efficiency(ch, load, v_in=3.3)
        longer = ConversionChain("VCI", ch.stages + (ChargePump(-1),), "X", -ch.target_voltage)
        assert chain_efficiency(longer, load, v_in=3.3) <= eta + 1e-15

    @given(chains(), st.data())
    def test_bypass_substitution(self, ch, data):
        k = data.draw(st.integers(0, len(ch.stages) - 1))
        stages = list(ch.stages)
        stages[k] = Bypass()
        alt = ConversionChain("VCI", tuple(stages), "X", 0)
        try:
            v = Fraction("3.3")
            for s in stages:
                v = stage_output(s, v)
        except ConstraintError:
            return
        if v != ch.target_voltage:
            return
        assert chain_efficiency(alt, 5, v_in=3.3) >= chain_efficiency(ch, 5, v_in=3.3) - 1e-15


class TestValidateConfig:
    def test_reference_cases_clean(self, case):
        for name in ("case_a", "case_b", "case_c"):
            assert validate_config(case[name]) == []

    def test_vgmp_violation(self, case):
        cfg = case["case_a"].with_chain(parse_chain("AVDD->LDO(6.4)", "VGMP"))
        (v,) = validate_config(cfg)
        assert v.rule == "VGMP < AVDD-0.3"
        assert v.slack == pytest.approx(-0.2)

    def test_unreachable_target(self, case):
        cfg = case["case_a"].with_chain(ConversionChain("VCI", (LinearRegulator(3.3),), "PVDD", 3.3))
        (v,) = validate_config(cfg)
        assert v.rule == "reach:PVDD"
        assert v.slack == pytest.approx(-0.1)

    def test_order_independent(self, case):
        cfg = case["case_a"]
        shuffled = list(cfg.chains.items())
        random.Random(3).shuffle(shuffled)
        bad = ChainConfig(cfg.vci, dict(shuffled), {**cfg.margins, "VGMP<AVDD": Fraction(2)})
        again = ChainConfig(cfg.vci, dict(reversed(shuffled)), bad.margins)
        assert validate_config(bad) == validate_config(again) != []

    def test_cycle(self):
        cfg = ChainConfig(3.3, {
            "AVDD": ConversionChain("VGH", (Bypass(),), "AVDD", 3.3),
            "VGH": ConversionChain("AVDD", (Bypass(),), "VGH", 3.3),
        })
        assert [v.rule for v in validate_config(cfg)] == ["reach:AVDD"]

    def test_unknown_margin_rule(self):
        with pytest.raises(InputError):
            validate_config(ChainConfig(3.3, {}, {"FOO<BAR": 1}))


class TestParse:
    @pytest.mark.parametrize("text,stages,target", [
        ("Boost:2xVCI->LDO(6.5)", (ChargePump(2), LinearRegulator(6.5)), 6.5),
        ("Boost:-1xVCI", (ChargePump(-1),), -3.3),
        ("-VCI", (ChargePump(-1),), -3.3),
        ("VCI", (Bypass(),), 3.3),
        ("VCI->BOOST(3)->LDO(9.8)", (InductiveBoost(3), LinearRegulator(9.8)), 9.8),
        ("VCI->LDO(1.8)", (LinearRegulator(1.8),), 1.8),
    ])
    def test_stage_syntax(self, text, stages, target):
        ch = parse_chain(text, "X", v_in=3.3)
        assert ch.stages == stages
        assert ch.target_voltage == Fraction(str(target))

    def test_fractional_factor_is_boost(self):
        ch = parse_chain("Boost:1.5xVCL", "VGL", v_in=-6.6)
        assert ch.stages == (InductiveBoost(Fraction(3, 2)),)
        assert ch.target_voltage == Fraction("-9.9")

    def test_bare_ldo_takes_declared_voltage(self):
        assert parse_chain("AVDD->LDO", "VGSP", target=0.8).stages == (LinearRegulator(0.8),)

    @pytest.mark.parametrize("text", ["Boost:3xVCI->FOO", "vci", "VCI->CP(3)", "AVDD->LDO"])
    def test_rejects(self, text):
        with pytest.raises(InputError):
            parse_chain(text, "X")

    def test_roundtrip(self, case):
        cfg = case["case_a"]
        again = parse_config(config_to_dict(cfg))
        assert again.chains == cfg.chains
        for ch in cfg.chains.values():
            assert parse_chain(format_chain(ch), ch.output_rail, target=ch.target_voltage).stages == ch.stages

    def test_unknown_keys(self):
        with pytest.raises(InputError):
            parse_config({"vci": 3.3, "rails": {}, "extra": 1})

    def test_voltage_setting_configs(self, case):
        base = {r: float(c.target_voltage) for r, c in case["voltage_baseline"].chains.items()}
        assert base == {"AVDD": 6.0, "VGMP": 5.2, "VGSP": 0.8, "PVDD": 3.3, "PVEE": -3.3, "VCL": -3.3,
                      "VREF": -3.1, "VGHR": 6.0, "VGLR": -6.0}
        tuned = {r: float(c.target_voltage) for r, c in case["voltage_tuned"].chains.items()}
        assert tuned == {"AVDD": 3.3, "VGMP": 3.2, "VGSP": 0.8, "PVDD": 1.8, "PVEE": -3.3, "VCL": -3.3,
                      "VREF": -3.3, "VGHR": 6.0, "VGLR": -6.0}


class TestPveeChain:
    @pytest.mark.parametrize("step", ["-3.3", "-3.0", "-2.1", "-4.5"])
    def test_reaches_step(self, step):
        ch = pvee_chain(Fraction("3.3"), Fraction(step))
        v = Fraction("3.3")
        for s in ch.stages:
            v = stage_output(s, v)
        assert v == Fraction(step)
