"""Finite alternating transition systems and (alternating) approximate bisimulation.

Labels are split into control labels (protagonist) and disturbance labels
(antagonist). Outputs live in R^n with the max-norm metric.

Quantifier semantics used by the alternating checkers: universally
quantified labels range over the labels that actually have a transition
from the state (given the labels fixed before them), existentially
quantified labels must have one. After all four labels are fixed, the
condition holds when *some* pair of successors is related.
"""
from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional

import numpy as np


def natural_key(label):
    """Sort key that orders ``a2`` before ``a10``."""
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", str(label))]


class TransitionSystem:
    """Finite transition system ``(Q, A x B, ->, R^n, H)``.

    Parameters
    ----------
    states : sequence of state ids
    outputs : array (len(states), n) of output points H(q)
    control_labels, disturbance_labels : sequences of label ids
    transitions : iterable of ``(q, a, b, p)``
    """

    def __init__(self, states, outputs, control_labels, disturbance_labels, transitions):
        self.states = tuple(states)
        out = np.asarray(outputs, dtype=float)
        if out.ndim == 1:
            out = out.reshape(-1, 1)
        if len(out) != len(self.states):
            raise ValueError("one output point per state is required")
        out.setflags(write=False)
        self.outputs = out
        self.control_labels = tuple(control_labels)
        self.disturbance_labels = tuple(disturbance_labels)
        self.transitions = frozenset(tuple(t) for t in transitions)
        if len(set(self.states)) != len(self.states):
            raise ValueError("duplicate state ids")
        sset, aset, bset = set(self.states), set(self.control_labels), set(self.disturbance_labels)
        for q, a, b, p in self.transitions:
            if q not in sset or p not in sset:
                raise ValueError(f"transition {(q, a, b, p)} references an unknown state")
            if a not in aset or b not in bset:
                raise ValueError(f"transition {(q, a, b, p)} references an unknown label")
        self._index = {q: i for i, q in enumerate(self.states)}
        post = defaultdict(list)
        for q, a, b, p in sorted(self.transitions, key=lambda t: tuple(map(natural_key, t))):
            post[(q, a, b)].append(p)
        self._post = {k: tuple(v) for k, v in post.items()}
        en_a, en_ab, en_b, en_ba = (defaultdict(set) for _ in range(4))
        for q, a, b in self._post:
            en_a[q].add(a)
            en_ab[(q, a)].add(b)
            en_b[q].add(b)
            en_ba[(q, b)].add(a)
        aorder = {a: i for i, a in enumerate(self.control_labels)}
        border = {b: i for i, b in enumerate(self.disturbance_labels)}
        self._en_a = {k: tuple(sorted(v, key=aorder.get)) for k, v in en_a.items()}
        self._en_ab = {k: tuple(sorted(v, key=border.get)) for k, v in en_ab.items()}
        self._en_b = {k: tuple(sorted(v, key=border.get)) for k, v in en_b.items()}
        self._en_ba = {k: tuple(sorted(v, key=aorder.get)) for k, v in en_ba.items()}

    @property
    def n(self):
        return self.outputs.shape[1]

    def output(self, q):
        return self.outputs[self._index[q]]

    def post(self, q, a, b):
        return self._post.get((q, a, b), ())

    def enabled_controls(self, q, b=None):
        if b is None:
            return self._en_a.get(q, ())
        return self._en_ba.get((q, b), ())

    def enabled_disturbances(self, q, a=None):
        if a is None:
            return self._en_b.get(q, ())
        return self._en_ab.get((q, a), ())

    def successors(self, q):
        """All ``(a, b, p)`` leaving ``q``."""
        return [(a, b, p) for (qq, a, b), ps in self._post.items() if qq == q for p in ps]

    def __eq__(self, other):
        if not isinstance(other, TransitionSystem):
            return NotImplemented
        return (self.states == other.states and self.control_labels == other.control_labels
                and self.disturbance_labels == other.disturbance_labels
                and self.transitions == other.transitions
                and np.array_equal(self.outputs, other.outputs))

    def __repr__(self):
        return (f"TransitionSystem(|Q|={len(self.states)}, |A|={len(self.control_labels)}, "
                f"|B|={len(self.disturbance_labels)}, |->|={len(self.transitions)})")


def output_distance(T1, T2, q1, q2):
    return float(np.max(np.abs(T1.output(q1) - T2.output(q2))))


def relation_from_distance(T1, T2, epsilon):
    """All pairs whose outputs are within ``epsilon``."""
    return frozenset((q1, q2) for q1 in T1.states for q2 in T2.states
                     if output_distance(T1, T2, q1, q2) <= epsilon + 1e-12)


def is_full_domain(T1, T2, R):
    """``R(Q1) = Q2`` and ``R^{-1}(Q2) = Q1``."""
    left = {q1 for q1, _ in R}
    right = {q2 for _, q2 in R}
    return left == set(T1.states) and right == set(T2.states)


@dataclass
class CheckReport:
    passed: bool
    condition: Optional[str] = None
    pair: Optional[tuple] = None
    witness: Optional[dict] = None

    def __bool__(self):
        return self.passed

    def describe(self):
        if self.passed:
            return "PASS"
        return f"FAIL condition ({self.condition}) at pair {self.pair}: {self.witness}"


# -- plain approximate bisimulation -------------------------------------------------

def _plain_forward(Ta, Tb, qa, qb, R, flip):
    """Every transition of ``qa`` is matched by some transition of ``qb``."""
    for a, b, pa in Ta.successors(qa):
        matched = False
        for a2, b2, pb in Tb.successors(qb):
            if ((pb, pa) if flip else (pa, pb)) in R:
                matched = True
                break
        if not matched:
            return {"label": (a, b), "successor": pa}
    return None


def _plain_pair(T1, T2, q1, q2, R, epsilon):
    d = output_distance(T1, T2, q1, q2)
    if d > epsilon + 1e-12:
        return "i", {"distance": d, "epsilon": epsilon}
    w = _plain_forward(T1, T2, q1, q2, R, False)
    if w:
        return "ii", w
    w = _plain_forward(T2, T1, q2, q1, R, True)
    if w:
        return "iii", w
    return None


def _sorted_pairs(R):
    return sorted(R, key=lambda p: (natural_key(p[0]), natural_key(p[1])))


def check_approx_bisim(T1, T2, R, epsilon) -> CheckReport:
    """Check an epsilon-approximate bisimulation relation (labels unconstrained)."""
    R = frozenset(R)
    for q1, q2 in _sorted_pairs(R):
        bad = _plain_pair(T1, T2, q1, q2, R, epsilon)
        if bad:
            return CheckReport(False, bad[0], (q1, q2), bad[1])
    return CheckReport(True)


def _greatest_fixpoint(T1, T2, epsilon, violated):
    R = relation_from_distance(T1, T2, epsilon)
    while True:
        drop = {pair for pair in _sorted_pairs(R) if violated(pair, R)}
        if not drop:
            return R
        R = R - drop


def max_approx_bisim(T1, T2, epsilon):
    """Largest epsilon-approximate bisimulation relation (greatest fixpoint)."""
    return _greatest_fixpoint(
        T1, T2, epsilon, lambda pr, R: _plain_pair(T1, T2, pr[0], pr[1], R, epsilon) is not None)


# -- alternating approximate bisimulation ------------------------------------------

def _match(T1, T2, q1, q2, a1, b1, a2, b2, R):
    return any((p1, p2) in R for p1 in T1.post(q1, a1, b1) for p2 in T2.post(q2, a2, b2))


def _alt_condition(T1, T2, q1, q2, R, tag):
    """Evaluate one quantifier pattern; return a witness dict on failure.

    tag "ii":   forall a1 exists a2 forall b2 exists b1
    tag "iii":  forall a2 exists a1 forall b1 exists b2
    tag "ii'":  forall b1 exists b2 forall a2 exists a1
    tag "iii'": forall b2 exists b1 forall a1 exists a2
    """
    # Normalise to: forall x_u (side su) exists x_e (side se) forall y_u (se) exists y_e (su)
    control_first = tag in ("ii", "iii")
    left_leads = tag in ("ii", "ii'")
    Tu, qu, Te, qe = (T1, q1, T2, q2) if left_leads else (T2, q2, T1, q1)

    def first(T, q):
        return T.enabled_controls(q) if control_first else T.enabled_disturbances(q)

    def second(T, q, x):
        return T.enabled_disturbances(q, x) if control_first else T.enabled_controls(q, x)

    def ok(xu, xe, ye, yu):
        if control_first:
            au, bu, ae, be = xu, yu, xe, ye
        else:
            au, bu, ae, be = yu, xu, ye, xe
        if left_leads:
            return _match(T1, T2, q1, q2, au, bu, ae, be, R)
        return _match(T1, T2, q1, q2, ae, be, au, bu, R)

    failing = []
    for xu in first(Tu, qu):
        refutations = {}
        answered = False
        for xe in first(Te, qe):
            refuter = None
            for ye in second(Te, qe, xe):
                if not any(ok(xu, xe, ye, yu) for yu in second(Tu, qu, xu)):
                    refuter = ye
                    break
            if refuter is None:
                answered = True
                break
            refutations[xe] = refuter
        if not answered:
            failing.append({"label": xu, "refutations": refutations})
    if not failing:
        return None
    return {"failing": failing, "leader": "T1" if left_leads else "T2",
            "first_player": "control" if control_first else "disturbance"}


_VARIANTS = {
    "control": ("ii", "iii"),
    "dual": ("ii'", "iii'"),
    "combined": ("ii", "iii", "ii'", "iii'"),
}


def _alt_pair(T1, T2, q1, q2, R, epsilon, variant):
    d = output_distance(T1, T2, q1, q2)
    if d > epsilon + 1e-12:
        return "i", {"distance": d, "epsilon": epsilon}
    for tag in _VARIANTS[variant]:
        w = _alt_condition(T1, T2, q1, q2, R, tag)
        if w:
            return tag, w
    return None


def check_alt_bisim(T1, T2, R, epsilon, variant="control") -> CheckReport:
    """Check an alternating epsilon-approximate bisimulation relation.

    ``variant``: "control" (conditions ii, iii), "dual" (ii', iii') or
    "combined" (all four). A failure witness lists every leading label that
    cannot be answered and, for each candidate answer, the label that defeats
    it.
    """
    if variant == "plain":
        return check_approx_bisim(T1, T2, R, epsilon)
    if variant not in _VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    R = frozenset(R)
    for q1, q2 in _sorted_pairs(R):
        bad = _alt_pair(T1, T2, q1, q2, R, epsilon, variant)
        if bad:
            return CheckReport(False, bad[0], (q1, q2), bad[1])
    return CheckReport(True)


@dataclass
class MaxRelation:
    relation: frozenset
    full_domain: bool

    @property
    def bisimilar(self):
        return self.full_domain and bool(self.relation)


def max_alt_bisim(T1, T2, epsilon, variant="control") -> MaxRelation:
    """Largest alternating relation of the given variant, plus the full-domain test."""
    if variant == "plain":
        R = max_approx_bisim(T1, T2, epsilon)
    else:
        R = _greatest_fixpoint(
            T1, T2, epsilon,
            lambda pr, R: _alt_pair(T1, T2, pr[0], pr[1], R, epsilon, variant) is not None)
    return MaxRelation(R, is_full_domain(T1, T2, R))


def replay_witness(T1, T2, R, report: CheckReport) -> bool:
    """Independently confirm that a failure witness really refutes the relation."""
    if report.passed:
        return False
    q1, q2 = report.pair
    R = frozenset(R)
    if report.condition == "i":
        return output_distance(T1, T2, q1, q2) > report.witness["epsilon"]
    if report.condition in ("ii", "iii") and "successor" in report.witness:
        a, b = report.witness["label"]
        p = report.witness["successor"]
        if report.condition == "ii":
            return p in T1.post(q1, a, b) and not any((p, pb) in R for _, _, pb in T2.successors(q2))
        return p in T2.post(q2, a, b) and not any((pa, p) in R for _, _, pa in T1.successors(q1))
    tag = report.condition
    control_first = tag in ("ii", "iii")
    left_leads = tag in ("ii", "ii'")
    Tu, qu, Te, qe = (T1, q1, T2, q2) if left_leads else (T2, q2, T1, q1)
    for entry in report.witness["failing"]:
        xu = entry["label"]
        for xe, ye in entry["refutations"].items():
            if control_first:
                yus = Tu.enabled_disturbances(qu, xu)
                cands = [(xu, yu, xe, ye) for yu in yus]
            else:
                yus = Tu.enabled_controls(qu, xu)
                cands = [(yu, xu, ye, xe) for yu in yus]
            for au, bu, ae, be in cands:
                hit = (_match(T1, T2, q1, q2, au, bu, ae, be, R) if left_leads
                       else _match(T1, T2, q1, q2, ae, be, au, bu, R))
                if hit:
                    return False
        answers = (Te.enabled_controls(qe) if control_first else Te.enabled_disturbances(qe))
        if set(answers) != set(entry["refutations"]):
            return False
    return True
