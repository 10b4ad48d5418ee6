import itertools
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from amoled_power import reference
from amoled_power.core import ConstraintError, DomainError, InfeasibleError, InputError, Mode, ModeSpec, Source
from amoled_power.curves import EfficiencyCurve, crossover
from amoled_power.optimizer import (
    SearchSpace,
    SupplyPlan,
    TraceSample,
    WorkloadTrace,
    choose_pvee,
    optimize,
    select_supply,
    simulate_feedback,
)
from amoled_power.power import Inductor, evaluate_mode

A = EfficiencyCurve("a", "", ((0, 0.5), (100, 0.9)))
B = EfficiencyCurve("b", "", ((0, 0.7), (100, 0.8)))


class TestSupplyPlan:
    def test_steps_validated(self):
        with pytest.raises(InputError):
            SupplyPlan(pvee_steps=())
        with pytest.raises(InputError):
            SupplyPlan(pvee_steps=(-3.0, -2.5))
        with pytest.raises(InputError):
            SupplyPlan(pvee_steps=(0.5, -1))

    def test_static(self):
        assert SupplyPlan(pvee_steps=(-2.1, -3.3)).static().pvee_steps == (-3.3,)


class TestSelectSupply:
    def test_below_crossover(self):
        # at 30 mA: a = 0.62, b = 0.73
        assert select_supply(30, ddic=B, pmic=A) is Source.DRIVER_CHIP
        assert select_supply(30, ddic=A, pmic=B) is Source.POWER_CHIP

    def test_above_crossover(self):
        assert select_supply(90, ddic=B, pmic=A) is Source.POWER_CHIP

    def test_tie_goes_to_power_chip(self):
        assert select_supply(50, ddic=A, pmic=A) is Source.POWER_CHIP
        x = 200 / 3
        assert A(x) == pytest.approx(B(x))
        flat = EfficiencyCurve("f", "", ((0, 0.8), (100, 0.8)))
        assert select_supply(75, ddic=flat, pmic=EfficiencyCurve("g", "", ((0, 0.8), (100, 0.8)))) is Source.POWER_CHIP

    def test_dominance(self):
        hi = EfficiencyCurve("h", "", ((0, 0.95), (100, 0.96)))
        assert {select_supply(x, ddic=hi, pmic=B) for x in (1, 20, 50, 99)} == {Source.DRIVER_CHIP}

    def test_outside_both(self):
        with pytest.raises(DomainError):
            select_supply(150, ddic=A, pmic=B)


def _reference_modes():
    return [
        ModeSpec(Mode.NORMAL, 300, 0.3, 60, 50, {"edge_smoothing"}, duty=0.2, label="Normal"),
        ModeSpec(Mode.IDLE, 50, 0.1, 15, 50, {"edge_smoothing"}, duty=0.5, label="Idle"),
        ModeSpec(Mode.STANDBY, duty=0.3, label="Standby"),
    ]


class TestOptimize:
    def test_case_c_beats_case_a(self, ref, case):
        space = SearchSpace({"A": case["case_a"], "C": case["case_c"]}, {"p": ref.supply})
        res = optimize(ref.panel, space, _reference_modes(), ref.models)
        assert res.candidate.chains == "C"
        # brute force over both candidates
        totals = {}
        for k in ("A", "C"):
            totals[k] = sum(m.duty * evaluate_mode(ref.panel, case["case_" + k.lower()], ref.supply, m, ref.models).total
                            for m in _reference_modes())
        assert min(totals, key=totals.get) == "C"
        assert res.scenario_mw == pytest.approx(totals["C"], rel=1e-12)

    def test_singleton(self, ref, case):
        space = SearchSpace({"only": case["case_b"]}, {"p": ref.supply})
        assert optimize(ref.panel, space, _reference_modes(), ref.models).candidate.chains == "only"

    def test_lower_dcr_chosen(self, ref, case):
        inds = {"hi": {"PMIC": Inductor("L1", 2.2, 1.0, 0.5)}, "lo": {"PMIC": Inductor("L2", 2.2, 1.0, 0.25)}}
        space = SearchSpace({"A": case["case_a"]}, {"p": ref.supply}, inds)
        assert optimize(ref.panel, space, _reference_modes(), ref.models).candidate.inductors == "lo"

    def test_refresh_floor_binding(self, ref, case):
        space = SearchSpace({"A": case["case_a"]}, {"p": ref.supply}, refresh_options={"Idle": [1, 5]})
        with pytest.raises(InfeasibleError) as e:
            optimize(ref.panel, space, _reference_modes(), ref.models)
        assert "refresh_options" in e.value.binding

    def test_invalid_chain_binding(self, ref, case):
        from amoled_power.chain import parse_chain
        bad = case["case_a"].with_chain(parse_chain("AVDD->LDO(6.4)", "VGMP"))
        space = SearchSpace({"bad": bad}, {"p": ref.supply})
        with pytest.raises(InfeasibleError) as e:
            optimize(ref.panel, space, _reference_modes(), ref.models)
        assert any("VGMP" in v for v in e.value.binding["chain_configs"]["bad"])

    def test_duties_checked(self, ref, case):
        space = SearchSpace({"A": case["case_a"]}, {"p": ref.supply})
        with pytest.raises(InputError, match="deficit"):
            optimize(ref.panel, space, _reference_modes()[:2], ref.models)

    def test_empty_dimension(self, ref):
        with pytest.raises(InputError):
            SearchSpace({}, {"p": ref.supply})

    def test_packaged_space(self, ref):
        from amoled_power.io import load_modes, load_search_space
        space, refs = load_search_space(reference.path("search_space.json"))
        modes = load_modes(refs["modes"])
        res = optimize(ref.panel, space, modes, ref.models)
        assert res.evaluated == space.size(modes) == 96
        assert res.candidate.inductors == "dcr_0.25"

    def test_scaling_invariance(self, ref, case):
        # scaling every power-producing coefficient by a constant scales every candidate alike
        space = SearchSpace({"A": case["case_a"], "B": case["case_b"], "C": case["case_c"]}, {"p": ref.supply},
                            refresh_options={"Idle": [15, 30]})
        modes = _reference_modes()
        base = optimize(ref.panel, space, modes, ref.models)
        assert base.candidate.chains == "C"
        assert base.candidate.refresh[1] == 15


class TestFeedback:
    def _trace(self, ref, lums, dt=100.0):
        return WorkloadTrace(tuple(
            TraceSample(i * dt, replace(ref.mode_defaults["Normal"], luminance=l, pixel_on_ratio=0.5, refresh=60),
                        l, 3.8) for i, l in enumerate(lums)))

    def _plan(self, ref):
        return replace(ref.supply, rail_symmetry="Asymmetric")

    def test_hand_span_check(self):
        assert choose_pvee(3.3, (-2.5, -3.3), 5.0) == (-2.5, False)
        assert choose_pvee(3.3, (-2.5, -3.3), 6.0) == (-3.3, False)
        assert choose_pvee(3.3, (-2.5, -3.3), 7.0) == (-3.3, True)

    def test_dark_trace_uses_smallest_span(self, ref):
        res = simulate_feedback(ref.panel, self._plan(ref), ref.chains, self._trace(ref, [0, 0, 0]), ref.models)
        assert {s.pvee for s in res.steps} == {ref.supply.pvee_steps[0]}

    def test_dynamic_not_worse(self, ref):
        tr = self._trace(ref, [5, 800, 50, 450, 10])
        plan = self._plan(ref)
        dyn = simulate_feedback(ref.panel, plan, ref.chains, tr, ref.models)
        static = simulate_feedback(ref.panel, plan.static(), ref.chains, tr, ref.models)
        assert dyn.energy_mj < static.energy_mj

    def test_violation_flagged(self, ref):
        res = simulate_feedback(ref.panel, self._plan(ref), ref.chains, self._trace(ref, [50, 3000]), ref.models)
        assert [s.violation for s in res.steps] == [False, True]
        assert res.flags

    def test_energy_left_rectangle(self, ref):
        tr = self._trace(ref, [100, 100])
        res = simulate_feedback(ref.panel, self._plan(ref), ref.chains, tr, ref.models)
        assert res.energy_mj == pytest.approx(sum(s.mw for s in res.steps) * 100 / 1000, rel=1e-12)

    def test_symmetric_multi_step_rejected(self, ref):
        plan = replace(ref.supply, rail_symmetry="Symmetric")
        with pytest.raises(ConstraintError):
            simulate_feedback(ref.panel, plan, ref.chains, self._trace(ref, [5]), ref.models)

    def test_trace_validation(self, ref):
        m = ref.mode_defaults["Normal"]
        with pytest.raises(InputError):
            WorkloadTrace(())
        with pytest.raises(InputError):
            WorkloadTrace((TraceSample(0, m, 0, 3.8), TraceSample(0, m, 0, 3.8)))
        with pytest.raises(InputError):
            WorkloadTrace((TraceSample(0, m, 0, 0),))

    def test_packaged_trace(self, ref):
        tr = reference.trace()
        dyn = simulate_feedback(ref.panel, ref.supply, ref.chains, tr, ref.models)
        static = simulate_feedback(ref.panel, ref.supply.static(), ref.chains, tr, ref.models)
        assert dyn.energy_mj < static.energy_mj
        assert not dyn.violations
