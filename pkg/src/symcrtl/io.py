"""File formats: canonical model JSON, transition-table CSV, DOT, strategies,
relations and run configurations."""
from __future__ import annotations

import csv
import importlib
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .abstraction import AbstractionParams, SymbolicModel
from .game import Strategy
from .sysmodel import Box, KLBound, LinearSystem, NonlinearSystem, ValidationError
from .tsys import TransitionSystem, natural_key

MODEL_FORMAT = "symcrtl-model/1"
MISSING = "--"


class FormatError(ValidationError):
    """A file could not be parsed."""


def _num(x):
    if isinstance(x, (np.floating, float)):
        return float("%.12g" % x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_num(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    return x


def dumps(obj):
    """Canonical JSON: sorted keys, floats at 12 significant digits."""
    return json.dumps(_num(obj), sort_keys=True, indent=1) + "\n"


def data_path(name):
    """Path of a fixture shipped with the package."""
    return resources.files("symcrtl").joinpath("data", name)


def locate(ref):
    """``data:NAME`` names a packaged fixture; anything else is a filesystem path."""
    ref = str(ref)
    return Path(str(data_path(ref[5:]))) if ref.startswith("data:") else Path(ref)


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------- transition systems

def ts_to_dict(T: TransitionSystem):
    return {
        "states": list(T.states),
        "outputs": T.outputs,
        "control_labels": list(T.control_labels),
        "disturbance_labels": list(T.disturbance_labels),
        "transitions": sorted((list(t) for t in T.transitions),
                              key=lambda t: [natural_key(x) for x in t]),
    }


def ts_from_dict(d):
    try:
        return TransitionSystem(d["states"], d["outputs"], d["control_labels"],
                                d["disturbance_labels"], [tuple(t) for t in d["transitions"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed transition system: {exc}") from exc


def model_to_dict(model):
    if isinstance(model, TransitionSystem):
        return {"format": MODEL_FORMAT, "system": ts_to_dict(model)}
    d = {"format": MODEL_FORMAT, "kind": model.kind, "system": ts_to_dict(model.ts),
         "params": model.params.to_dict(),
         "control_points": model.control_points,
         "disturbance_points": model.disturbance_points,
         "out_of_region": [list(t) for t in model.out_of_region],
         "endpoints": [[q, a, b, z] for (q, a, b), z in
                       sorted(model.endpoints.items(),
                              key=lambda kv: [natural_key(x) for x in kv[0]])]}
    return d


def model_from_dict(d):
    if "system" not in d:
        # bare transition system
        return ts_from_dict(d)
    ts = ts_from_dict(d["system"])
    if "params" not in d:
        return ts
    try:
        params = AbstractionParams.from_dict(d["params"])
        cp = {k: np.asarray(v, float) for k, v in d["control_points"].items()}
        dp = {k: np.asarray(v, float) for k, v in d["disturbance_points"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model: {exc}") from exc
    endpoints = {(q, a, b): np.asarray(z, float) for q, a, b, z in d.get("endpoints", [])}
    dropped = [tuple(t) for t in d.get("out_of_region", [])]
    return SymbolicModel(ts, params, cp, dp, endpoints, dropped, d.get("kind", "linear"))


def save_model(path, model):
    Path(path).write_text(dumps(model_to_dict(model)))


def load_model(path):
    return model_from_dict(_read_json(path))


def _ts(model):
    return model.ts if isinstance(model, SymbolicModel) else model


# ---------------------------------------------------------------- transition table CSV

def write_table_csv(path, model, with_outputs=False):
    """Rows ``"a,b"``, columns source states; cells list successors (``;``) or ``--``."""
    T = _ts(model)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        w.writerow(["a,b"] + list(T.states))
        if with_outputs:
            w.writerow(["H"] + [" ".join("%.12g" % c for c in T.output(q)) for q in T.states])
        for a in T.control_labels:
            for b in T.disturbance_labels:
                w.writerow([f"{a},{b}"] + [";".join(T.post(q, a, b)) or MISSING for q in T.states])


def read_table_csv(path, outputs=None):
    """Parse a transition table; ``outputs`` overrides (or supplies) H per state."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise FormatError(str(exc)) from exc
    if not rows:
        raise FormatError(f"{path}: empty table")
    states = [s.strip() for s in rows[0][1:]]
    body = rows[1:]
    H = None
    if body and body[0][0].strip() == "H":
        H = [[float(c) for c in cell.split()] for cell in body[0][1:]]
        body = body[1:]
    if outputs is not None:
        H = outputs
    if H is None:
        H = [[float(i)] for i in range(len(states))]
    A, B, trans = [], [], []
    for r in body:
        if len(r) != len(states) + 1:
            raise FormatError(f"{path}: row {r[0]!r} has {len(r) - 1} cells, expected {len(states)}")
        try:
            a, b = (x.strip() for x in r[0].split(","))
        except ValueError as exc:
            raise FormatError(f"{path}: bad row label {r[0]!r}") from exc
        if a not in A:
            A.append(a)
        if b not in B:
            B.append(b)
        for q, cell in zip(states, r[1:]):
            cell = cell.strip()
            if cell in (MISSING, ""):
                continue
            trans.extend((q, a, b, p.strip()) for p in cell.split(";"))
    try:
        return TransitionSystem(states, H, A, B, trans)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- DOT

def _dot_id(s):
    return '"' + str(s).replace('"', r'\"') + '"'


def to_dot(model, strategy: Strategy = None, name="T"):
    """Graphviz text; parallel edges between the same states share one arrow."""
    T = _ts(model)
    edges = {}
    for q, a, b, p in T.transitions:
        edges.setdefault((q, p), []).append(f"{a},{b}")
    win = strategy.domain if strategy is not None else frozenset()
    out = [f"digraph {_dot_id(name)} {{", "  rankdir=LR;"]
    for i, q in enumerate(T.states):
        h = ",".join("%.4g" % c for c in T.outputs[i])
        style = ", style=filled, fillcolor=lightblue" if q in win else ""
        out.append(f"  {_dot_id(q)} [label={_dot_id(f'{q} ({h})')}{style}];")
    for (q, p) in sorted(edges, key=lambda e: (natural_key(e[0]), natural_key(e[1]))):
        lab = " ".join(sorted(edges[(q, p)], key=natural_key))
        out.append(f"  {_dot_id(q)} -> {_dot_id(p)} [label={_dot_id(lab)}];")
    out.append("}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- strategies

def save_strategy(path, strategy: Strategy):
    d = {"kind": strategy.kind, "horizon": strategy.horizon,
         "labels": strategy.to_dict(), "level": strategy.level}
    Path(path).write_text(dumps(d))


def load_strategy(path):
    d = _read_json(path)
    labels = d.get("labels", d)
    return Strategy.from_dict(labels, level=d.get("level", {}), horizon=d.get("horizon"),
                              kind=d.get("kind", "reach"))


def write_strategy_csv(path, strategy: Strategy):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "labels", "level"])
        for q, ls in strategy.to_dict().items():
            w.writerow([q, " ".join(ls), strategy.level.get(q, "")])


# ---------------------------------------------------------------- relations

def relation_to_dict(R):
    return {"kind": "pairs", "pairs": sorted([list(p) for p in R],
                                             key=lambda p: [natural_key(x) for x in p])}


def relation_from_dict(d, T1: TransitionSystem = None):
    """Explicit pairs, or interval rules ``{lower, upper, state}`` over T1 outputs."""
    kind = d.get("kind", "pairs")
    if kind == "pairs":
        return frozenset(tuple(p) for p in d["pairs"])
    if kind == "interval-rule":
        if T1 is None:
            raise FormatError("interval-rule relations need the left transition system")
        tol = float(d.get("tolerance", 1e-9))
        R = set()
        for rule in d["rules"]:
            box = Box(rule["lower"], rule["upper"])
            for q in T1.states:
                if box.contains(T1.output(q), tol):
                    R.add((q, rule["state"]))
        return frozenset(R)
    raise FormatError(f"unknown relation kind {kind!r}")


def load_relation(path, T1=None):
    return relation_from_dict(_read_json(path), T1)


# ---------------------------------------------------------------- systems and configs

_SAFE_NAMES = {k: getattr(math, k) for k in
               ("exp", "log", "sin", "cos", "tan", "sqrt", "tanh", "atan", "pi", "e")}
_SAFE_NAMES["abs"] = abs


def _expression_field(exprs):
    """Vector field from a list of expressions in ``x``, ``u``, ``v`` (trusted input)."""
    codes = [compile(e, "<vector field>", "eval") for e in exprs]

    def f(x, u, v):
        env = dict(_SAFE_NAMES, x=x, u=u, v=v)
        return np.array([eval(c, {"__builtins__": {}}, env) for c in codes], dtype=float)

    return f


def _callable_field(spec):
    mod, _, name = spec.partition(":")
    try:
        return getattr(importlib.import_module(mod), name)
    except (ImportError, AttributeError) as exc:
        raise FormatError(f"cannot import vector field {spec!r}") from exc


def system_from_dict(d):
    try:
        kind = d.get("kind", "linear")
        if kind == "linear":
            return LinearSystem(d["A"], d["B"], d["G"], Box.from_dict(d["u_box"]),
                                Box.from_dict(d["v_box"]), Box.from_dict(d["region"]))
        if kind == "nonlinear":
            f = d["f"]
            f = _expression_field(f) if isinstance(f, list) else _callable_field(f)
            beta = KLBound.from_dict(d["beta"]) if "beta" in d else None
            return NonlinearSystem(int(d["n"]), f, float(d["lipschitz"]), Box.from_dict(d["u_box"]),
                                   Box.from_dict(d["v_box"]), Box.from_dict(d["region"]),
                                   bool(d.get("forward_complete", True)), beta)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed system definition: {exc!r}") from exc
    raise FormatError(f"unknown system kind {kind!r}")


def load_config(path):
    """Read a run configuration; relative file references resolve next to it."""
    path = locate(path)
    cfg = _read_json(path)
    base = path.parent
    sysd = cfg.get("system")
    if isinstance(sysd, str):
        sysd = _read_json(base / sysd)
    cfg["_base"] = str(base)
    cfg["_system"] = system_from_dict(sysd) if sysd is not None else None
    if "params" in cfg:
        try:
            cfg["_params"] = AbstractionParams.from_dict(cfg["params"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed params: {exc!r}") from exc
    return cfg


def resolve(cfg, ref):
    """Resolve a file reference in a config: ``data:NAME`` or a relative path."""
    if ref.startswith("data:"):
        return data_path(ref[5:])
    p = Path(ref)
    return p if p.is_absolute() else Path(cfg.get("_base", ".")) / p
