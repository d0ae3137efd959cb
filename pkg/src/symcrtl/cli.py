"""Command line front end: ``symcrtl abstract|check|synthesize|simulate|export``.

Exit codes: 0 success / PASS, 1 FAIL (or empty winning set), 2 malformed
input or violated parameter condition.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .abstraction import (ParameterConditionError, SymbolicModel, abstract_linear,
                          abstract_nonlinear_sampled)
from .game import (PiecewiseConstant, closed_loop_simulate, monte_carlo, random_disturbances,
                   solve_reach, solve_safe)
from .reach import input_reach, reach_svg, to_vertices
from .sysmodel import Box, LinearSystem, ValidationError
from .tsys import check_alt_bisim, check_approx_bisim, is_full_domain, max_alt_bisim

log = logging.getLogger("symcrtl")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _outdir(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params(cfg, args):
    params = cfg["_params"]
    if getattr(args, "mode", None):
        params = replace(params, mode=args.mode)
    if getattr(args, "epsilon", None) is not None:
        params = replace(params, epsilon=args.epsilon)
    return params


def build_model(cfg, args=None) -> SymbolicModel:
    """Construct the symbolic model described by a loaded config."""
    system, params = cfg["_system"], _params(cfg, args or argparse.Namespace())
    if isinstance(system, LinearSystem):
        labels = cfg.get("labels", {})
        return abstract_linear(system, params, labels.get("control"), labels.get("disturbance"))
    samp = cfg.get("sampling", {})
    if "mu_u" not in samp or "mu_v" not in samp:
        raise ValidationError("nonlinear configs need sampling.mu_u and sampling.mu_v")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = abstract_nonlinear_sampled(system, params, samp["mu_u"], samp["mu_v"],
                                           samp.get("steps"))
    for w in caught:
        log.warning("%s", w.message)
    return model


def _load_any_model(ref, args=None):
    """A model from a model JSON, a transition-table CSV, or a run config."""
    path = io.locate(ref)
    if str(path).endswith(".csv"):
        return io.read_table_csv(path)
    d = io._read_json(path)
    if "params" in d and isinstance(d.get("system"), (dict, str)) and "format" not in d:
        cfg = io.load_config(path)
        return build_model(cfg, args)
    return io.model_from_dict(d)


def _ts(model):
    return model.ts if isinstance(model, SymbolicModel) else model


def _target(T, spec):
    if spec is None:
        return frozenset()
    if isinstance(spec, str):
        spec = [s for s in spec.split(",") if s]
    if isinstance(spec, dict):
        boxes = [Box.from_dict(b) for b in spec.get("boxes", [])]
        return frozenset(q for q in T.states if any(b.contains(T.output(q), 1e-9) for b in boxes))
    unknown = set(spec) - set(T.states)
    if unknown:
        raise ValidationError(f"target names unknown states {sorted(unknown)}")
    return frozenset(spec)


def _print_model(model):
    T = _ts(model)
    print(f"states: {len(T.states)}")
    print(f"control labels: {len(T.control_labels)}")
    print(f"disturbance labels: {len(T.disturbance_labels)}")
    print(f"transitions: {len(T.transitions)}")
    if isinstance(model, SymbolicModel):
        print(f"dropped endpoints: {len(model.out_of_region)}")
        for key in ("control_certificate", "disturbance_certificate"):
            cert = model.reach.get(key)
            if cert is not None:
                print(f"{key.replace('_', ' ')}: {'PASS' if cert.passed else 'FAIL'} "
                      f"(forward {cert.forward:.4g}, backward {cert.backward:.4g}, "
                      f"bound {cert.radius + cert.slack:.4g})")


# ---------------------------------------------------------------- commands

def cmd_abstract(args):
    cfg = io.load_config(args.config)
    model = build_model(cfg, args)
    out = _outdir(args)
    io.save_model(out / "model.json", model)
    io.write_table_csv(out / "table.csv", model)
    (out / "model.dot").write_text(io.to_dot(model))
    system = cfg["_system"]
    if isinstance(system, LinearSystem) and system.n == 2:
        tau = model.params.tau
        panels = []
        for title, Bm, box, pts in (("control", system.B, system.u_box, model.control_points),
                                    ("disturbance", system.G, system.v_box,
                                     model.disturbance_points)):
            r = input_reach(system.A, Bm, box, tau)
            panels.append((f"{title} reach set", to_vertices(r.set), np.array(list(pts.values()))))
        (out / "reach.svg").write_text(reach_svg(panels))
    _print_model(model)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_check(args):
    T1m = _load_any_model(args.left, args)
    T2m = _load_any_model(args.right, args)
    T1, T2 = _ts(T1m), _ts(T2m)
    eps = args.epsilon
    if eps is None:
        raise ValidationError("--epsilon is required for check")
    variant = args.variant
    if args.relation:
        R = io.load_relation(io.locate(args.relation), T1)
        if variant == "plain":
            rep = check_approx_bisim(T1, T2, R, eps)
        else:
            rep = check_alt_bisim(T1, T2, R, eps, variant)
        report = {"mode": "check", "variant": variant, "epsilon": eps, "passed": rep.passed,
                  "full_domain": is_full_domain(T1, T2, R), "condition": rep.condition,
                  "pair": rep.pair, "witness": rep.witness}
        print(f"{variant} check at epsilon={eps}: {rep.describe()}")
        passed = rep.passed
    else:
        res = max_alt_bisim(T1, T2, eps, variant)
        report = {"mode": "maximal", "variant": variant, "epsilon": eps,
                  "passed": res.bisimilar, "relation_size": len(res.relation),
                  "relation": io.relation_to_dict(res.relation)["pairs"]}
        print(f"maximal {variant} relation at epsilon={eps}: {len(res.relation)} pairs, "
              f"{'bisimilar' if res.bisimilar else 'not bisimilar'}")
        passed = res.bisimilar
    if args.out:
        out = _outdir(args)
        (out / "report.json").write_text(io.dumps(report))
    return EXIT_OK if passed else EXIT_FAIL


def _objective(cfg, args):
    obj = dict(cfg.get("objective", {}))
    if args.target is not None:
        obj["target"] = args.target
    if args.horizon is not None:
        obj["horizon"] = None if args.horizon == 0 else args.horizon
    obj.setdefault("kind", "reach")
    obj.setdefault("horizon", 1)
    return obj


def _initial_states(val):
    return Box.from_dict(val["initial_box"]).grid(int(val.get("per_axis", 10)))


def _spec(val):
    s = val["spec"]
    axis, lower = int(s["axis"]), float(s.get("lower", -np.inf))
    upper = float(s.get("upper", np.inf))
    return lambda x: lower <= x[axis] <= upper


def cmd_synthesize(args):
    cfg = io.load_config(args.config) if args.config else {}
    if args.model:
        model = _load_any_model(args.model, args)
    elif cfg:
        model = build_model(cfg, args)
    else:
        raise ValidationError("synthesize needs --config or --model")
    T = _ts(model)
    obj = _objective(cfg, args)
    W = _target(T, obj.get("target"))
    t0 = time.perf_counter()
    if obj["kind"] == "safe":
        strategy = solve_safe(T, W)
    else:
        strategy = solve_reach(T, W, obj["horizon"])
    print(f"winning states: {len(strategy)} / {len(T.states)} "
          f"({time.perf_counter() - t0:.3f} s)")
    for q, ls in strategy.to_dict().items():
        print(f"  {q}: {', '.join(ls)}")
    out = _outdir(args)
    io.save_strategy(out / "strategy.json", strategy)
    io.write_strategy_csv(out / "strategy.csv", strategy)
    if not len(strategy):
        print("empty winning set")
        return EXIT_FAIL
    val = cfg.get("validation")
    system = cfg.get("_system")
    if val and isinstance(model, SymbolicModel) and isinstance(system, LinearSystem) \
            and not args.no_validate:
        rng = np.random.default_rng(args.seed)
        steps = int(val.get("steps", 1))
        dur = steps * model.params.tau
        ds = random_disturbances(system.v_box, int(val.get("pieces", 50)), dur,
                                 int(val.get("disturbances", 1000)), rng)
        X0 = _initial_states(val)
        t0 = time.perf_counter()
        mc = monte_carlo(system, model, strategy, X0, ds, steps, _spec(val))
        print(f"closed-loop validation: {mc.passed}/{mc.runs} runs pass "
              f"({100 * mc.rate:.2f}%), {time.perf_counter() - t0:.2f} s")
        if mc.clamped_labels:
            print(f"labels refined with input clamping: {', '.join(mc.clamped_labels)}")
        with open(out / "verdicts.log", "w") as fh:
            fh.write(f"runs {mc.runs} passed {mc.passed}\n")
            for i, j, why in mc.failures:
                fh.write(f"FAIL initial={i} disturbance={j} {why}\n")
        if mc.passed != mc.runs:
            return EXIT_FAIL
    return EXIT_OK


def cmd_simulate(args):
    cfg = io.load_config(args.config)
    model = build_model(cfg, args)
    system = cfg["_system"]
    obj = _objective(cfg, args)
    W = _target(model.ts, obj.get("target"))
    strategy = solve_safe(model.ts, W) if obj["kind"] == "safe" else \
        solve_reach(model.ts, W, obj["horizon"])
    val = cfg.get("validation", {})
    steps = int(args.steps or val.get("steps", 1))
    if not len(strategy):
        print("empty winning set")
        return EXIT_FAIL
    if args.x0 is not None:
        x0 = np.array(args.x0)
    else:
        x0 = model.ts.output(next(iter(strategy.to_dict())))
    dur = steps * model.params.tau
    if args.constant_disturbance is not None:
        dist = PiecewiseConstant([args.constant_disturbance], dur)
    else:
        dist = random_disturbances(system.v_box, int(val.get("pieces", 50)), dur, 1,
                                   np.random.default_rng(args.seed))[0]
    res = closed_loop_simulate(system, model, strategy, x0, dist, steps,
                               _spec(val) if "spec" in val else None)
    for k, x in enumerate(res.trajectory):
        extra = f" state={res.states[k]} label={res.labels[k]}" if k < len(res.states) else ""
        print(f"step {k} x={' '.join('%.6g' % c for c in x)}{extra}")
    print(("PASS" if res.passed else f"FAIL at step {res.failed_step}: {res.reason}")
          + (" (input clamped)" if res.clamped else ""))
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_export(args):
    model = _load_any_model(args.model, args)
    out = _outdir(args)
    fmt = args.format
    if fmt == "json":
        io.save_model(out / "model.json", model)
    elif fmt == "csv":
        io.write_table_csv(out / "table.csv", model)
    elif fmt == "dot":
        (out / "model.dot").write_text(io.to_dot(model))
    print(f"wrote {fmt} to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser():
    p = argparse.ArgumentParser(prog="symcrtl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="run configuration JSON")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--mode", choices=("strict", "nearest"))
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("abstract", help="build a symbolic model")
    common(sp, True)
    sp.set_defaults(func=cmd_abstract)

    sp = sub.add_parser("check", help="check or compute (alternating) approximate bisimulation")
    common(sp)
    sp.add_argument("left", help="model JSON, table CSV or config (data:NAME for fixtures)")
    sp.add_argument("right")
    sp.add_argument("--relation", help="relation JSON; omit to compute the maximal relation")
    sp.add_argument("--variant", choices=("plain", "control", "dual", "combined"),
                    default="control")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("synthesize", help="solve a reach or safety game")
    common(sp)
    sp.add_argument("--model", help="model JSON or table CSV instead of building from --config")
    sp.add_argument("--target", help="comma-separated state ids")
    sp.add_argument("--horizon", type=int, help="0 for the unbounded fixpoint")
    sp.add_argument("--no-validate", action="store_true", help="skip the Monte-Carlo run")
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("simulate", help="one closed-loop run")
    common(sp, True)
    sp.add_argument("--x0", type=float, nargs="+")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--target")
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--constant-disturbance", type=float)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("export", help="convert a model to json, csv or dot")
    common(sp)
    sp.add_argument("model")
    sp.add_argument("--format", choices=("json", "csv", "dot"), default="json")
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ParameterConditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValidationError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
