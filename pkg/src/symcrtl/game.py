"""Robust synthesis on finite alternating transition systems and refinement
of abstract control labels to continuous inputs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import lsq_linear

from .numerics import augmented_exp, rk4_trajectory
from .sysmodel import Box, LinearSystem, ValidationError
from .tsys import TransitionSystem, natural_key


class RefinementError(ValidationError):
    """The moment problem has no solution to the required tolerance."""


def _sorted_labels(labels):
    return tuple(sorted(labels, key=natural_key))


def cpre_labels(T: TransitionSystem, W) -> dict:
    """Winning control labels per state for the one-step game into ``W``.

    A label wins at ``q`` when every disturbance label has at least one
    transition and all of them end in ``W``. A missing row loses.
    """
    W = set(W)
    if not W:
        return {}
    out = {}
    for q in T.states:
        good = [a for a in T.enabled_controls(q)
                if all(T.post(q, a, b) and set(T.post(q, a, b)) <= W
                       for b in T.disturbance_labels)]
        if good:
            out[q] = _sorted_labels(good)
    return out


def cpre(T: TransitionSystem, W) -> frozenset:
    return frozenset(cpre_labels(T, W))


@dataclass
class Strategy:
    labels: dict                       # state -> tuple of winning labels
    level: dict = field(default_factory=dict)   # state -> first winning step
    horizon: Optional[int] = None      # None = unbounded fixpoint
    kind: str = "reach"

    @property
    def domain(self):
        return frozenset(self.labels)

    def __len__(self):
        return len(self.labels)

    def choose(self, q):
        """Deterministic pick: the naturally smallest label id."""
        return self.labels[q][0]

    def to_dict(self):
        return {q: list(self.labels[q]) for q in sorted(self.labels, key=natural_key)}

    @classmethod
    def from_dict(cls, d, **kw):
        return cls({q: _sorted_labels(v) for q, v in d.items()}, **kw)

    def __eq__(self, other):
        if isinstance(other, Strategy):
            return self.labels == other.labels
        if isinstance(other, dict):
            return self.labels == {q: _sorted_labels(v) for q, v in other.items()}
        return NotImplemented


def solve_reach(T: TransitionSystem, W, horizon: Optional[int] = 1) -> Strategy:
    """Robust reachability of ``W`` within ``horizon`` steps (``None``: unbounded).

    Level ``j`` holds ``cpre(W | Z_{j-1})``; each state keeps the labels
    certified at its first winning level.
    """
    if horizon is not None and horizon < 1:
        raise ValidationError("horizon must be >= 1 or None")
    W = frozenset(W)
    labels, level = {}, {}
    Z = frozenset()
    j = 0
    while horizon is None or j < horizon:
        j += 1
        step = cpre_labels(T, W | Z)
        for q, ls in step.items():
            if q not in labels:
                labels[q], level[q] = ls, j
        newZ = frozenset(step)
        if newZ == Z:
            break
        Z = newZ
    return Strategy(labels, level, horizon, "reach")


def solve_safe(T: TransitionSystem, S) -> Strategy:
    """Greatest fixpoint of ``S & cpre(.)`` with the labels that stay inside."""
    Z = frozenset(S)
    while True:
        step = cpre_labels(T, Z)
        newZ = Z & frozenset(step)
        if newZ == Z:
            break
        Z = newZ
    labels = {q: step[q] for q in Z}
    return Strategy(labels, {q: 0 for q in Z}, None, "safe")


def verify_strategy(T: TransitionSystem, strategy: Strategy, W=()) -> list:
    """Replay every chosen label; returns the violating ``(q, a, b)`` triples.

    Reach strategies must land in ``W`` or in a strictly lower level; safety
    strategies must stay in their own domain.
    """
    W = frozenset(W)
    bad = []
    for q, labels in strategy.labels.items():
        if strategy.kind == "safe":
            allowed = strategy.domain
        else:
            j = strategy.level.get(q, 1)
            allowed = W | {p for p, k in strategy.level.items() if k < j}
        for a in labels:
            for b in T.disturbance_labels:
                post = T.post(q, a, b)
                if not post or not set(post) <= allowed:
                    bad.append((q, a, b))
    return bad


# ---------------------------------------------------------------- refinement

@dataclass(frozen=True, eq=False)
class Refinement:
    values: np.ndarray     # (segments, m) piecewise-constant input
    tau: float
    residual: float        # ||a - achieved||_inf after clamping
    residual_unclamped: float
    clamped: bool
    achieved: np.ndarray

    @property
    def segments(self):
        return len(self.values)

    def __call__(self, t):
        k = min(int(t / self.tau * self.segments), self.segments - 1)
        return self.values[max(k, 0)]


def segment_response(A, B, tau, segments):
    """Matrix ``M`` with ``M @ u.ravel()`` = endpoint from 0 under piecewise-constant ``u``."""
    A = np.atleast_2d(np.asarray(A, float))
    B = np.asarray(B, float).reshape(A.shape[0], -1)
    h = tau / segments
    Ph, GB = augmented_exp(A, B, h)
    blocks = []
    P = np.eye(A.shape[0])
    for _ in range(segments):
        blocks.append(P @ GB)
        P = P @ Ph
    return np.hstack(blocks[::-1])


def refine_control(sys: LinearSystem, a, tau, segments=10, clamp=True) -> Refinement:
    """Piecewise-constant input whose forced response from the origin is ``a``.

    Solves the moment problem by minimum deviation from the centre of the
    input box. If that solution leaves the box and ``clamp`` is set, a
    bounded least-squares solve replaces it and ``clamped`` is reported.
    """
    a = np.atleast_1d(np.asarray(a, float))
    M = segment_response(sys.A, sys.B, tau, segments)
    m = sys.B.shape[1]
    if np.linalg.matrix_rank(M) < np.linalg.matrix_rank(np.column_stack([M, a])):
        raise RefinementError("label outside the span of the segment responses")
    c = np.tile(sys.u_box.center, segments)
    u = c + np.linalg.lstsq(M, a - M @ c, rcond=None)[0]
    res0 = float(np.max(np.abs(M @ u - a)))
    tol = 1e-6 * float(np.max(np.abs(a))) + 1e-12
    if res0 > tol:
        raise RefinementError(f"moment residual {res0:.3g} exceeds tolerance {tol:.3g}")
    lo = np.tile(sys.u_box.lo, segments)
    hi = np.tile(sys.u_box.hi, segments)
    clamped = bool(np.any(u < lo - 1e-12) or np.any(u > hi + 1e-12))
    if clamped and clamp:
        # small ridge keeps the bounded solve unique
        lam = 1e-6
        K = np.vstack([M, lam * np.eye(M.shape[1])])
        rhs = np.concatenate([a, lam * c])
        u = lsq_linear(K, rhs, bounds=(lo, hi), method="bvls").x
    achieved = M @ u
    return Refinement(u.reshape(segments, m), float(tau),
                      float(np.max(np.abs(achieved - a))), res0, clamped, achieved)


# ---------------------------------------------------------------- simulation

@dataclass(frozen=True, eq=False)
class PiecewiseConstant:
    """Signal on ``[0, duration]`` split into ``len(values)`` equal pieces."""
    values: np.ndarray
    duration: float

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        object.__setattr__(self, "values", v)

    def breakpoints(self):
        return np.linspace(0.0, self.duration, len(self.values) + 1)

    def __call__(self, t):
        k = int(np.clip(np.floor(t / self.duration * len(self.values)), 0, len(self.values) - 1))
        return self.values[k]


def random_disturbances(box: Box, pieces, duration, count, rng):
    """``count`` piecewise-constant signals, values uniform in ``box``."""
    lo, hi = box.lo, box.hi
    vals = rng.uniform(lo, hi, size=(count, pieces, box.dim))
    return [PiecewiseConstant(v, duration) for v in vals]


@dataclass
class SimulationResult:
    passed: bool
    trajectory: np.ndarray     # states at decision instants, (steps+1, n)
    states: list               # abstract state used at each step
    labels: list
    clamped: bool
    failed_step: Optional[int] = None
    reason: str = ""


def _distance_to_winning(model, strategy, x):
    pts = np.array([model.state_point(q) for q in strategy.domain])
    return float(np.min(np.max(np.abs(pts - x), axis=1))) if len(pts) else math.inf


def _merge_times(*grids):
    t = np.unique(np.concatenate(grids))
    keep = np.concatenate([[True], np.diff(t) > 1e-12])
    return t[keep]


class _LinearStepper:
    """Exact integration of a linear system over piecewise-constant inputs."""

    def __init__(self, sys):
        self.sys = sys
        self._cache = {}

    def _mats(self, h):
        key = round(h, 12)
        if key not in self._cache:
            W = np.hstack([self.sys.B, self.sys.G])
            self._cache[key] = augmented_exp(self.sys.A, W, h)
        return self._cache[key]

    def advance(self, X, t0, t1, u_sig, v_sig, u_grid, v_grid):
        """Advance states ``X`` (k, n) from ``t0`` to ``t1``; signals are per-run callables."""
        ts = _merge_times(np.array([t0, t1]), u_grid[(u_grid > t0) & (u_grid < t1)],
                          v_grid[(v_grid > t0) & (v_grid < t1)])
        for s0, s1 in zip(ts[:-1], ts[1:]):
            Ph, Gam = self._mats(s1 - s0)
            mid = 0.5 * (s0 + s1)
            U = u_sig(mid)
            V = v_sig(mid)
            X = X @ Ph.T + np.hstack([U, V]) @ Gam.T
        return X


def closed_loop_simulate(sys, model, strategy: Strategy, x0, disturbance, steps=1,
                         spec: Optional[Callable] = None, segments=10) -> SimulationResult:
    """Run the quantized feedback loop for ``steps`` sampling periods.

    ``disturbance`` is a callable of time (e.g. ``PiecewiseConstant`` over
    the whole horizon). ``spec`` maps the final state to a bool.
    """
    eps, tau = model.params.epsilon, model.params.tau
    x = np.atleast_1d(np.asarray(x0, float))
    if _distance_to_winning(model, strategy, x) > eps + 1e-12:
        raise ValidationError("initial state is not within epsilon of the winning set")
    traj, qs, labels, clamped = [x.copy()], [], [], False
    refs = {}
    for k in range(steps):
        if _distance_to_winning(model, strategy, x) > eps + 1e-12:
            return SimulationResult(False, np.array(traj), qs, labels, clamped, k,
                                    "left the epsilon-neighbourhood of the winning set")
        q = model.state_of(x)
        if q not in strategy.labels:
            return SimulationResult(False, np.array(traj), qs, labels, clamped, k,
                                    f"abstract state {q} is not winning")
        a = strategy.choose(q)
        if a not in refs:
            refs[a] = refine_control(sys, model.control_points[a], tau, segments)
        ref = refs[a]
        clamped |= ref.clamped
        qs.append(q)
        labels.append(a)
        t0 = k * tau
        if isinstance(sys, LinearSystem):
            stepper = _LinearStepper(sys)
            grid_u = t0 + np.linspace(0, tau, segments + 1)
            grid_v = disturbance.breakpoints() if hasattr(disturbance, "breakpoints") else np.array([])
            x = stepper.advance(x[None, :], t0, t0 + tau,
                                lambda t: ref(t - t0)[None, :],
                                lambda t: np.atleast_1d(disturbance(t))[None, :],
                                grid_u, grid_v)[0]
        else:
            h = tau / segments
            for j in range(segments):
                tm = t0 + (j + 0.5) * h
                x = rk4_trajectory(sys, x, ref.values[j], np.atleast_1d(disturbance(tm)), h)
        traj.append(x.copy())
    ok = True if spec is None else bool(spec(x))
    return SimulationResult(ok, np.array(traj), qs, labels, clamped, None if ok else steps,
                            "" if ok else "specification violated at the final state")


@dataclass
class MonteCarloReport:
    runs: int
    passed: int
    final_states: np.ndarray
    clamped_labels: tuple
    failures: list     # (initial index, disturbance index, reason)

    @property
    def rate(self):
        return self.passed / self.runs if self.runs else 0.0


def monte_carlo(sys: LinearSystem, model, strategy: Strategy, initial_states, disturbances,
                steps=1, spec: Optional[Callable] = None, segments=10) -> MonteCarloReport:
    """Vectorised closed loop over every (initial state, disturbance) pair.

    Disturbances must be ``PiecewiseConstant`` signals sharing one breakpoint
    grid. Linear systems only; use ``closed_loop_simulate`` otherwise.
    """
    if not isinstance(sys, LinearSystem):
        raise ValidationError("batch simulation supports linear systems only")
    X0 = np.atleast_2d(np.asarray(initial_states, float))
    eps, tau = model.params.epsilon, model.params.tau
    for x in X0:
        if _distance_to_winning(model, strategy, x) > eps + 1e-12:
            raise ValidationError(f"initial state {x} is not within epsilon of the winning set")
    nd = len(disturbances)
    V = np.stack([d.values for d in disturbances])         # (nd, pieces, s)
    v_grid = disturbances[0].breakpoints()
    X = np.repeat(X0, nd, axis=0)                           # run r -> (r // nd, r % nd)
    Vr = np.tile(V, (len(X0), 1, 1))
    alive = np.ones(len(X), dtype=bool)
    failures, refs = [], {}
    stepper = _LinearStepper(sys)
    pieces = V.shape[1]
    dur = disturbances[0].duration
    for k in range(steps):
        t0 = k * tau
        dist = np.array([_distance_to_winning(model, strategy, x) for x in X])
        qs = [model.state_of(x) for x in X]
        U = np.zeros((len(X), segments, sys.B.shape[1]))
        for r, q in enumerate(qs):
            if not alive[r]:
                continue
            if dist[r] > eps + 1e-12 or q not in strategy.labels:
                alive[r] = False
                failures.append((r // nd, r % nd, f"step {k}: left the winning set"))
                continue
            a = strategy.choose(q)
            if a not in refs:
                refs[a] = refine_control(sys, model.control_points[a], tau, segments)
            U[r] = refs[a].values

        def u_sig(t, U=U, t0=t0):
            j = min(int((t - t0) / tau * segments), segments - 1)
            return U[:, j, :]

        def v_sig(t):
            j = int(np.clip(np.floor(t / dur * pieces), 0, pieces - 1))
            return Vr[:, j, :]

        X = stepper.advance(X, t0, t0 + tau, u_sig, v_sig,
                            t0 + np.linspace(0, tau, segments + 1), v_grid)
    if spec is not None:
        ok = np.array([bool(spec(x)) for x in X])
        for r in np.flatnonzero(alive & ~ok):
            failures.append((r // nd, r % nd, "specification violated"))
        alive &= ok
    clamped = tuple(sorted((a for a, r in refs.items() if r.clamped), key=natural_key))
    return MonteCarloReport(len(X), int(alive.sum()), X, clamped, failures)
