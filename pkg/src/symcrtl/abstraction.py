"""Finite symbolic models of sampled control systems.

Two constructions share the same transition rule:

* ``abstract_linear``: label sets cover the control/disturbance reachable
  sets with lattice points, and each abstract state moves to
  ``exp(A tau) q + a + b``.
* ``abstract_nonlinear_sampled``: labels are constant inputs on grids over
  the input boxes, endpoints come from RK4.

In ``strict`` mode every lattice state within ``eta/2`` (plus the optional
reach error allowance) of the endpoint becomes a successor. In ``nearest``
mode the endpoint snaps to the closest in-region state; endpoints farther
than ``epsilon`` from the region are dropped and recorded.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lattice import (Lattice, _TIE_TOL, box_grid, canonical, certify_cover, enumerate_box,
                      lattice_cover, quantize)
from .numerics import linear_flow, mat_exp, rk4_trajectory
from .reach import DEFAULT_STEPS, input_reach, surface_sample
from .sysmodel import Box, LinearSystem, NonlinearSystem, ValidationError, validate_parameters
from .tsys import TransitionSystem

MODES = ("strict", "nearest")


class ParameterConditionError(ValidationError):
    """The abstraction parameters violate ``beta(eps,tau) + mu + eta/2 < eps``."""

    def __init__(self, check):
        self.check = check
        super().__init__("parameter condition violated: " + check.describe())


@dataclass(frozen=True)
class AbstractionParams:
    epsilon: float
    tau: float
    eta: float
    mu: float
    state_region: Box
    mu_label: Optional[float] = None
    mode: str = "strict"
    error_augment: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "state_region", Box.from_dict(self.state_region))
        if self.mu_label is None:
            object.__setattr__(self, "mu_label", self.mu)
        for name in ("epsilon", "tau", "eta", "mu", "mu_label"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.mu_label > self.mu:
            raise ValidationError("mu_label must not exceed mu")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.error_augment < 0:
            raise ValidationError("error_augment must be nonnegative")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["state_region"] = Box.from_dict(d["state_region"])
        return cls(**d)

    def to_dict(self):
        return {"epsilon": self.epsilon, "tau": self.tau, "eta": self.eta, "mu": self.mu,
                "mu_label": self.mu_label, "mode": self.mode,
                "error_augment": self.error_augment,
                "state_region": self.state_region.to_dict()}


@dataclass(eq=False)
class SymbolicModel:
    ts: TransitionSystem
    params: AbstractionParams
    control_points: dict        # label id -> label vector (linear) or input value (sampled)
    disturbance_points: dict
    endpoints: dict = field(default_factory=dict)    # (q, a, b) -> continuous endpoint
    out_of_region: list = field(default_factory=list)
    kind: str = "linear"
    reach: dict = field(default_factory=dict)

    @property
    def states(self):
        return self.ts.states

    def state_point(self, q):
        return self.ts.output(q)

    def lattice(self):
        return Lattice(self.params.eta, self.ts.n, clip=self.params.state_region)

    def __eq__(self, other):
        if not isinstance(other, SymbolicModel):
            return NotImplemented

        def same(d1, d2):
            return d1.keys() == d2.keys() and all(np.array_equal(d1[k], d2[k]) for k in d1)

        return (self.ts == other.ts and self.params == other.params
                and same(self.control_points, other.control_points)
                and same(self.disturbance_points, other.disturbance_points))

    def state_of(self, x):
        """Id of the abstract state nearest to continuous state ``x``."""
        p = quantize(self.lattice(), np.asarray(x, float))
        d = np.max(np.abs(self.ts.outputs - p), axis=1)
        return self.ts.states[int(np.argmin(d))]


def _state_ids(points, prefix="q"):
    return [f"{prefix}{i + 1}" for i in range(len(points))]


def _targets(z, Q, lattice: Lattice, region: Box, params: AbstractionParams, index):
    """Successor state ids of endpoint ``z``; ``None`` marks a dropped endpoint."""
    eta = params.eta
    if params.mode == "nearest":
        if np.max(np.abs(z - region.clip(z))) > params.epsilon:
            return None
        p = quantize(lattice, z)
        return [index[tuple(np.round(p / eta).astype(int))]]
    tol = eta / 2.0 + params.error_augment
    lo_r, hi_r = lattice.index_range(region)
    lo = np.maximum(np.ceil((z - tol) / eta - _TIE_TOL).astype(int), lo_r)
    hi = np.minimum(np.floor((z + tol) / eta + _TIE_TOL).astype(int), hi_r)
    out = []
    for k in itertools.product(*[range(a, b + 1) for a, b in zip(lo, hi)]):
        if np.max(np.abs(z - np.asarray(k) * eta)) <= tol + 1e-12:
            out.append(index[k])
    return out


def _build(Q, qids, labels_a, labels_b, endpoint, params: AbstractionParams):
    region = params.state_region
    lattice = Lattice(params.eta, Q.shape[1], clip=region)
    index = {tuple(np.round(p / params.eta).astype(int)): q for p, q in zip(Q, qids)}
    transitions, endpoints, dropped = [], {}, []
    for qi, q in enumerate(qids):
        for a in labels_a:
            for b in labels_b:
                z = endpoint(Q[qi], a, b)
                endpoints[(q, a, b)] = z
                targets = _targets(z, Q, lattice, region, params, index)
                if targets is None:
                    dropped.append((q, a, b))
                    continue
                transitions.extend((q, a, b, p) for p in targets)
    return transitions, endpoints, dropped


def cover_reach_set(reach_result, mu, mu_label, density=None):
    """Label points on the ``mu_label`` lattice within ``mu/2`` of a reachable set.

    The covering radius is shrunk by the reach error and half the sampling
    density, so the certificate holds against the true set.
    """
    density = mu_label / 4.0 if density is None else density
    target = surface_sample(reach_result.set, density)
    radius = mu / 2.0 - reach_result.error_bound - density / 2.0
    if radius < mu_label / 2.0:
        raise ValidationError(
            f"cannot cover reach set: effective radius {radius:.4g} < mu_label/2")
    points, cert = lattice_cover(target, mu_label, radius, density)
    return points, cert


def abstract_linear(sys: LinearSystem, params: AbstractionParams, control_labels=None,
                    disturbance_labels=None, reach_steps=DEFAULT_STEPS) -> SymbolicModel:
    """Symbolic model of a linear system on the ``eta`` lattice of the state region.

    ``control_labels`` / ``disturbance_labels`` inject label vectors (array of
    shape (k, n)); otherwise they are computed by covering the reachable sets.
    """
    check = validate_parameters(sys.beta, params.epsilon, params.tau, params.mu, params.eta)
    if not check.satisfied:
        raise ParameterConditionError(check)
    if params.state_region.dim != sys.n:
        raise ValidationError("state region dimension does not match the system")
    Q = canonical(enumerate_box(Lattice(params.eta, sys.n), params.state_region))
    if len(Q) == 0:
        raise ValidationError("state region contains no lattice point")

    reach = {}
    if control_labels is None or disturbance_labels is None:
        ra = input_reach(sys.A, sys.B, sys.u_box, params.tau, reach_steps)
        rb = input_reach(sys.A, sys.G, sys.v_box, params.tau, reach_steps)
        reach = {"control": ra, "disturbance": rb}
    if control_labels is None:
        control_labels, cert = cover_reach_set(reach["control"], params.mu, params.mu_label)
        reach["control_certificate"] = cert
    if disturbance_labels is None:
        disturbance_labels, cert = cover_reach_set(reach["disturbance"], params.mu, params.mu_label)
        reach["disturbance_certificate"] = cert
    Apts = canonical(np.atleast_2d(np.asarray(control_labels, float)))
    Bpts = canonical(np.atleast_2d(np.asarray(disturbance_labels, float)))
    if len(Apts) == 0 or len(Bpts) == 0:
        raise ValidationError("empty label set")
    if Apts.shape[1] != sys.n or Bpts.shape[1] != sys.n:
        raise ValidationError("label vectors must live in the state space")

    aids, bids, qids = _state_ids(Apts, "a"), _state_ids(Bpts, "b"), _state_ids(Q)
    apt, bpt = dict(zip(aids, Apts)), dict(zip(bids, Bpts))
    E = mat_exp(sys.A, params.tau)

    def endpoint(q, a, b):
        return E @ q + apt[a] + bpt[b]

    trans, endpoints, dropped = _build(Q, qids, aids, bids, endpoint, params)
    ts = TransitionSystem(qids, Q, aids, bids, trans)
    return SymbolicModel(ts, params, apt, bpt, endpoints, dropped, "linear", reach)


def sampled_system(sys, params: AbstractionParams, u_grid, v_grid, steps=None) -> SymbolicModel:
    """Constant-input sampling of ``sys`` on the ``eta`` lattice of the state region.

    No parameter condition is enforced; use ``abstract_nonlinear_sampled``
    for a checked abstraction.
    """
    n = params.state_region.dim
    Q = canonical(enumerate_box(Lattice(params.eta, n), params.state_region))
    U = canonical(np.atleast_2d(np.asarray(u_grid, float)))
    V = canonical(np.atleast_2d(np.asarray(v_grid, float)))
    if U.shape[0] == 1 and U.shape[1] != sys.u_box.dim:
        U = U.T
    if V.shape[0] == 1 and V.shape[1] != sys.v_box.dim:
        V = V.T
    aids, bids, qids = _state_ids(U, "a"), _state_ids(V, "b"), _state_ids(Q)
    upt, vpt = dict(zip(aids, U)), dict(zip(bids, V))

    if isinstance(sys, LinearSystem):
        def endpoint(q, a, b):
            return linear_flow(sys, q, upt[a], vpt[b], params.tau)
    else:
        def endpoint(q, a, b):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                return rk4_trajectory(sys, q, upt[a], vpt[b], params.tau, steps)

    trans, endpoints, dropped = _build(Q, qids, aids, bids, endpoint, params)
    ts = TransitionSystem(qids, Q, aids, bids, trans)
    return SymbolicModel(ts, params, upt, vpt, endpoints, dropped, "sampled")


def abstract_nonlinear_sampled(sys: NonlinearSystem, params: AbstractionParams, mu_u, mu_v,
                               steps=None) -> SymbolicModel:
    """Symbolic model with constant-input labels on grids anchored at the input box corners."""
    if sys.beta is None:
        raise ValidationError("a KL bound must be declared for the system")
    if not sys.forward_complete:
        raise ValidationError("system must be declared forward complete")
    check = validate_parameters(sys.beta, params.epsilon, params.tau, params.mu, params.eta)
    if not check.satisfied:
        raise ParameterConditionError(check)
    dispersion = math.exp(sys.lipschitz * params.tau) * max(mu_u, mu_v) * params.tau
    if dispersion > params.mu:
        warnings.warn(
            f"endpoint dispersion estimate {dispersion:.3g} exceeds mu={params.mu}; "
            f"try input grids finer than {params.mu / (math.exp(sys.lipschitz * params.tau) * params.tau):.3g}",
            RuntimeWarning, stacklevel=2)
    model = sampled_system(sys, params, box_grid(sys.u_box, mu_u), box_grid(sys.v_box, mu_v), steps)
    model.kind = "nonlinear"
    model.reach = {"dispersion_estimate": dispersion}
    return model


@dataclass
class LabelCertificate:
    control: object
    disturbance: object

    @property
    def passed(self):
        return self.control.passed and self.disturbance.passed


def certify_label_sets(model: SymbolicModel, sys: LinearSystem = None, density=1e-3,
                       targets=None, reach_steps=DEFAULT_STEPS) -> LabelCertificate:
    """Recheck both label sets against fresh samplings of the reachable sets.

    ``targets`` may supply ``(control_points, disturbance_points)`` samplings
    directly (e.g. of a published polytope); otherwise ``sys`` is required.
    """
    mu = model.params.mu
    A = np.array(list(model.control_points.values()))
    B = np.array(list(model.disturbance_points.values()))
    if targets is None:
        if sys is None:
            raise ValueError("need either the system or explicit target samplings")
        ra = input_reach(sys.A, sys.B, sys.u_box, model.params.tau, reach_steps)
        rb = input_reach(sys.A, sys.G, sys.v_box, model.params.tau, reach_steps)
        ta, tb = surface_sample(ra.set, density), surface_sample(rb.set, density)
        sa, sb = density / 2 + ra.error_bound, density / 2 + rb.error_bound
    else:
        ta, tb = targets
        sa = sb = density / 2
    return LabelCertificate(certify_cover(A, ta, mu / 2, sa), certify_cover(B, tb, mu / 2, sb))
