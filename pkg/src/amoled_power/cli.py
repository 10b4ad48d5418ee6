"""Command-line front end.

Exit codes: 0 ok, 2 input error, 3 constraint violation, 4 infeasible search.
JSON output carries a ``manifest`` block with input digests; the wall-clock
timestamp goes to stderr so stdout is byte-for-byte reproducible.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .chain import validate_config
from .core import (
    ConfigurationError,
    ConstraintError,
    DomainError,
    InfeasibleError,
    InputError,
    PowerReport,
    Source,
    weighted_scenario_power,
)
from .curves import crossover, efficiency_at, load_curve
from .io import load_chains, load_measurements, load_modes, load_panel, load_search_space, load_timeline, load_trace
from .optimizer import optimize, simulate_feedback
from .power import evaluate_mode, fit_calibration
from .reference import path as data_path
from .sequence import DiodeRemovable, DiodeRequired, detect_contention, diode_decision, reschedule_handover

EXIT_OK, EXIT_INPUT, EXIT_CONSTRAINT, EXIT_INFEASIBLE = 0, 2, 3, 4


class _Run:
    """Collects input digests for the manifest."""

    def __init__(self, command: str):
        self.command = command
        self.inputs: dict[str, str] = {}

    def note(self, p) -> Path:
        p = Path(p)
        try:
            self.inputs[str(p)] = hashlib.sha256(p.read_bytes()).hexdigest()
        except OSError as e:
            raise InputError(f"{p}: {e.strerror}") from None
        return p

    def manifest(self) -> dict:
        return {"command": self.command, "inputs": dict(sorted(self.inputs.items())),
                "version": __version__, "deterministic": True}


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _text(obj, indent=0) -> list[str]:
    pad = "  " * indent
    lines = []
    if isinstance(obj, dict):
        scalars = {k: v for k, v in obj.items() if not isinstance(v, (dict, list))}
        width = max((len(str(k)) for k in scalars), default=0)
        for k, v in obj.items():
            if k in scalars:
                lines.append(f"{pad}{str(k):<{width}}  {_fmt(v)}")
            else:
                lines.append(f"{pad}{k}:")
                lines.extend(_text(v, indent + 1))
    elif isinstance(obj, list):
        if obj and all(isinstance(i, dict) and set(i) == {"label", "mw"} for i in obj):
            width = max(len(i["label"]) for i in obj)
            lines.extend(f"{pad}{i['label']:<{width}}  {_fmt(i['mw']):>12}" for i in obj)
        else:
            for i in obj:
                if isinstance(i, (dict, list)):
                    lines.append(f"{pad}-")
                    lines.extend(_text(i, indent + 1))
                else:
                    lines.append(f"{pad}- {_fmt(i)}")
    else:
        lines.append(pad + _fmt(obj))
    return lines


def _emit(args, run: _Run, payload: dict) -> None:
    payload = _clean(payload)
    if args.format == "json":
        out = json.dumps({**payload, "manifest": run.manifest()}, indent=2, sort_keys=True, allow_nan=False)
    else:
        out = "\n".join(_text(payload))
    out += "\n"
    if args.out:
        Path(args.out).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    print(f"[{run.command}] run at {stamp}", file=sys.stderr)


def _bundle(args, run):
    p = args.panel or data_path("reference_panel.json")
    b = load_panel(run.note(p))
    if b.chains is not None and isinstance(b.source, Path):
        # record the chain file the panel references, if any
        ref = json.loads(Path(p).read_text(encoding="utf-8")).get("chains")
        if isinstance(ref, str):
            run.note(Path(p).parent / ref)
    if getattr(args, "chains", None):
        b.chains = load_chains(run.note(args.chains), b.curves)
    if b.chains is None:
        raise InputError("no chain configuration: pass --chains or name one in the panel file")
    supply = b.supply
    if getattr(args, "source", None):
        supply = replace(supply, emission_source=Source(args.source))
    if getattr(args, "diode_vf", None) is not None:
        supply = replace(supply, diode=DiodeRequired(args.diode_vf) if args.diode_vf > 0 else DiodeRemovable())
    if getattr(args, "symmetry", None):
        supply = replace(supply, rail_symmetry=args.symmetry)
    b.supply = supply
    return b


def _report(mode, rep: PowerReport) -> dict:
    return {"label": mode.label, "mode": mode.mode.value, "duty": mode.duty, **rep.to_dict()}


# --- subcommands ----------------------------------------------------------------

def cmd_evaluate(args) -> int:
    run = _Run("evaluate")
    if not args.mode:
        raise InputError("evaluate needs --mode")
    b = _bundle(args, run)
    modes = load_modes(run.note(args.mode))
    reports = [evaluate_mode(b.panel, b.chains, b.supply, m, b.models) for m in modes]
    payload = {"panel": b.panel.name, "chains": b.chains.name, "modes": [_report(m, r) for m, r in zip(modes, reports)]}
    if len(modes) > 1:
        payload["scenario_mw"] = weighted_scenario_power(zip(modes, reports))
    _emit(args, run, payload)
    return EXIT_OK


def cmd_optimize(args) -> int:
    run = _Run("optimize")
    if not args.space:
        raise InputError("optimize needs --space")
    space, refs = load_search_space(run.note(args.space))
    for p in space_files(args.space):
        run.note(p)
    panel_path = args.panel or refs.get("panel") or data_path("reference_panel.json")
    b = load_panel(run.note(panel_path))
    mode_path = args.mode or refs.get("modes")
    if not mode_path:
        raise InputError("optimize needs --mode or a 'modes' entry in the search space")
    modes = load_modes(run.note(mode_path))
    res = optimize(b.panel, space, modes, b.models)
    _emit(args, run, res.to_dict())
    return EXIT_OK


def space_files(space_path) -> list[Path]:
    doc = json.loads(Path(space_path).read_text(encoding="utf-8"))
    base = Path(space_path).parent
    return [base / r for r in doc.get("chain_configs", {}).values() if isinstance(r, str)]


def cmd_fit(args) -> int:
    run = _Run("fit")
    if not args.measurements:
        raise InputError("fit needs --measurements")
    b = _bundle(args, run)
    rows = load_measurements(run.note(args.measurements), b.mode_defaults)
    free = [f.strip() for f in args.free.split(",") if f.strip()]
    fit = fit_calibration(rows, free, b.panel, b.chains, b.supply, b.models)
    payload = {
        "coefficients": fit.coefficients,
        "clipped": fit.clipped,
        "rows": [{"mode": m.mode.value, "luminance": m.luminance, "apl": m.pixel_on_ratio,
                  "refresh": m.refresh, "measured_mw": y, "residual_mw": r}
                 for (m, y), r in zip(rows, fit.residuals)],
    }
    if args.predict:
        payload["predictions"] = [
            {"mode": m.mode.value, "luminance": m.luminance, "apl": m.pixel_on_ratio, "refresh": m.refresh,
             "measured_mw": y, "predicted_mw": (p := fit.predict(m)), "error_rel": p / y - 1 if y else None}
            for m, y in load_measurements(run.note(args.predict), b.mode_defaults)
        ]
    _emit(args, run, payload)
    return EXIT_OK


def cmd_simulate(args) -> int:
    run = _Run("simulate")
    if not args.trace:
        raise InputError("simulate needs --trace")
    b = _bundle(args, run)
    trace = load_trace(run.note(args.trace), b.mode_defaults)
    dyn = simulate_feedback(b.panel, b.supply, b.chains, trace, b.models)
    static = simulate_feedback(b.panel, b.supply.static(), b.chains, trace, b.models)
    payload = {"dynamic": dyn.to_dict(), "static": {"pvee_v": b.supply.pvee_steps[-1],
                                                   "energy_mj": static.energy_mj},
               "saving_rel": 1 - dyn.energy_mj / static.energy_mj if static.energy_mj else 0.0}
    _emit(args, run, payload)
    return EXIT_OK


def cmd_validate_sequence(args) -> int:
    run = _Run("validate-sequence")
    t = load_timeline(run.note(args.timeline))
    hits = detect_contention(t, args.net)
    decision = diode_decision(t, args.net, args.vf)
    payload = {"net": args.net, "contention_ms": [list(h) for h in hits],
               "diode": "required" if isinstance(decision, DiodeRequired) else "removable"}
    if isinstance(decision, DiodeRequired):
        payload["vf"] = decision.vf
        fixed = reschedule_handover(t, args.net, args.lead_ms)
        payload["rescheduled"] = fixed.to_records()
        payload["rescheduled_contention_ms"] = [list(h) for h in detect_contention(fixed, args.net)]
    _emit(args, run, payload)
    return EXIT_OK


def cmd_crossover(args) -> int:
    run = _Run("crossover")
    a = load_curve(run.note(args.curve_a))
    b = load_curve(run.note(args.curve_b))
    payload = {"crossovers_ma": crossover(a, b)}
    if args.load is not None:
        ea, eb = efficiency_at(a, args.load), efficiency_at(b, args.load)
        payload["at_load"] = {"load_ma": args.load, a.chip_id: ea.value, b.chip_id: eb.value,
                              "better": a.chip_id if ea.value > eb.value else b.chip_id}
    _emit(args, run, payload)
    return EXIT_OK


def cmd_curve_check(args) -> int:
    run = _Run("curve-check")
    out = []
    for p in args.curves:
        c = load_curve(run.note(p))
        effs = [e for _, e in c.points]
        out.append({"file": str(p), "chip_id": c.chip_id, "points": len(c.points), "load_min_ma": c.lo,
                    "load_max_ma": c.hi, "eta_min": min(effs), "eta_max": max(effs)})
    _emit(args, run, {"curves": out})
    return EXIT_OK


def cmd_validate_chains(args) -> int:
    run = _Run("validate-chains")
    if not args.chains:
        raise InputError("validate-chains needs --chains")
    cfg = load_chains(run.note(args.chains))
    violations = validate_config(cfg)
    payload = {"chains": cfg.name, "violations": [{"rule": v.rule, "slack_v": v.slack, "detail": v.detail}
                                                  for v in violations]}
    _emit(args, run, payload)
    if violations:
        raise ConstraintError(f"{len(violations)} rule(s) violated", [str(v) for v in violations])
    return EXIT_OK


# --- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--panel", help="panel/model JSON (default: packaged reference panel)")
    common.add_argument("--chains", help="chain configuration JSON (overrides the panel's)")
    common.add_argument("--mode", help="modes JSON")
    common.add_argument("--trace", help="workload trace CSV")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--format", choices=("json", "text"), default="json")

    supply = argparse.ArgumentParser(add_help=False)
    supply.add_argument("--source", choices=[s.value for s in Source], help="emission-path supply")
    supply.add_argument("--symmetry", choices=("Symmetric", "Asymmetric"))
    supply.add_argument("--diode-vf", type=float, help="protection diode drop in V (0 = no diode)")

    p = argparse.ArgumentParser(prog="amoled-power", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("evaluate", parents=[common, supply], help="itemized power per mode")
    s.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("optimize", parents=[common], help="exhaustive search over a configuration space")
    s.add_argument("--space", help="search space JSON")
    s.set_defaults(fn=cmd_optimize)

    s = sub.add_parser("fit", parents=[common, supply], help="fit model coefficients to measured powers")
    s.add_argument("--measurements", help="CSV mode,luminance_nits,apl,refresh_hz,measured_mw")
    s.add_argument("--free", default="p_static,k_refresh,emission", help="comma-separated free coefficients")
    s.add_argument("--predict", help="CSV of rows to predict with the fitted model")
    s.set_defaults(fn=cmd_fit)

    s = sub.add_parser("simulate", parents=[common, supply], help="feedback PVEE control over a trace")
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("validate-sequence", parents=[common], help="rail contention and diode decision")
    s.add_argument("timeline", help="timeline JSON")
    s.add_argument("--net", default="PVEE")
    s.add_argument("--vf", type=float, default=0.4)
    s.add_argument("--lead-ms", type=float, default=2.0)
    s.set_defaults(fn=cmd_validate_sequence)

    s = sub.add_parser("validate-chains", parents=[common], help="margin and reachability rules")
    s.set_defaults(fn=cmd_validate_chains)

    s = sub.add_parser("crossover", parents=[common], help="loads where two efficiency curves cross")
    s.add_argument("curve_a")
    s.add_argument("curve_b")
    s.add_argument("--load", type=float, help="also compare the curves at this load (mA)")
    s.set_defaults(fn=cmd_crossover)

    s = sub.add_parser("curve-check", parents=[common], help="validate efficiency curve files")
    s.add_argument("curves", nargs="+")
    s.set_defaults(fn=cmd_curve_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except InfeasibleError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        print(json.dumps(e.binding, indent=2, sort_keys=True), file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConstraintError as e:
        print(f"constraint violation: {e}", file=sys.stderr)
        for v in e.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except (InputError, DomainError, ConfigurationError, FileNotFoundError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
