"""Continuous control systems, stability bounds and parameter checks."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .numerics import inf_norm, mat_exp


class ValidationError(ValueError):
    """Raised when a system, box or parameter set is malformed."""


def _frozen(a, ndim=None):
    a = np.array(a, dtype=float)
    if ndim == 2 and a.ndim == 1:
        a = a.reshape(-1, 1)
    if ndim == 2 and a.ndim == 0:
        a = a.reshape(1, 1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lower))
        hi = tuple(float(x) for x in np.atleast_1d(self.upper))
        if len(lo) == 0 or len(lo) != len(hi):
            raise ValidationError(f"box bounds have mismatched dimensions {len(lo)} vs {len(hi)}")
        bad = [i for i, (a, b) in enumerate(zip(lo, hi)) if not a <= b]
        if bad:
            raise ValidationError(f"degenerate box: lower > upper on axes {bad}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, Box):
            return d
        if isinstance(d, dict):
            return cls(d["lower"], d["upper"])
        lo, hi = d
        return cls(lo, hi)

    def to_dict(self):
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @property
    def dim(self):
        return len(self.lower)

    @property
    def lo(self):
        return np.array(self.lower)

    @property
    def hi(self):
        return np.array(self.upper)

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def radius(self):
        return 0.5 * (self.hi - self.lo)

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def clip(self, x):
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def corners(self):
        return np.array(list(itertools.product(*zip(self.lower, self.upper))))

    def grid(self, per_axis):
        axes = [np.linspace(a, b, per_axis) if b > a else np.array([a])
                for a, b in zip(self.lower, self.upper)]
        return np.array(list(itertools.product(*axes)))


@dataclass(frozen=True)
class KLBound:
    """Incremental-stability envelope ``beta(r, t)``.

    ``kind="linear-norm"`` uses ``||exp(A t)|| r``; ``kind="exponential"``
    uses ``c exp(-lam t) r``.
    """

    kind: str
    A: Optional[np.ndarray] = None
    c: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if self.kind == "linear-norm":
            if self.A is None:
                raise ValidationError("linear-norm bound needs the matrix A")
            A = _frozen(self.A, ndim=2)
            if A.shape[0] != A.shape[1]:
                raise ValidationError("linear-norm bound needs a square A")
            object.__setattr__(self, "A", A)
        elif self.kind == "exponential":
            if not (self.c >= 1.0 and self.lam > 0.0):
                raise ValidationError("exponential bound needs c >= 1 and lam > 0")
        else:
            raise ValidationError(f"unknown KL bound kind {self.kind!r}")

    def __call__(self, r, t):
        if t < 0:
            raise ValueError("t must be nonnegative")
        if self.kind == "linear-norm":
            return linear_beta(self.A, t) * r
        return self.c * math.exp(-self.lam * t) * r

    @classmethod
    def from_dict(cls, d, A=None):
        kind = d["kind"]
        if kind == "linear-norm":
            return cls(kind, A=d.get("A", A))
        return cls(kind, c=float(d.get("c", 1.0)), lam=float(d.get("lambda", d.get("lam", 1.0))))

    def to_dict(self):
        if self.kind == "linear-norm":
            return {"kind": self.kind}
        return {"kind": self.kind, "c": self.c, "lambda": self.lam}


@dataclass(frozen=True, eq=False)
class LinearSystem:
    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    u_box: Box
    v_box: Box
    region: Box

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A, ndim=2))
        object.__setattr__(self, "B", _frozen(self.B, ndim=2))
        object.__setattr__(self, "G", _frozen(self.G, ndim=2))
        for name in ("u_box", "v_box", "region"):
            object.__setattr__(self, name, Box.from_dict(getattr(self, name)))

    kind = "linear"

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def s(self):
        return self.G.shape[1]

    @property
    def lipschitz(self):
        return inf_norm(self.A)

    @property
    def beta(self):
        return KLBound("linear-norm", A=self.A)

    def f(self, x, u, v):
        return self.A @ np.asarray(x, float) + self.B @ np.atleast_1d(u) + self.G @ np.atleast_1d(v)


@dataclass(frozen=True, eq=False)
class NonlinearSystem:
    n: int
    f: Callable
    lipschitz: float
    u_box: Box
    v_box: Box
    region: Box
    forward_complete: bool = True
    beta: Optional[KLBound] = None

    kind = "nonlinear"

    def __post_init__(self):
        for name in ("u_box", "v_box", "region"):
            object.__setattr__(self, name, Box.from_dict(getattr(self, name)))

    @property
    def m(self):
        return self.u_box.dim

    @property
    def s(self):
        return self.v_box.dim


def as_nonlinear(sys: LinearSystem) -> NonlinearSystem:
    """View a linear system through the generic vector-field interface."""
    return NonlinearSystem(sys.n, sys.f, sys.lipschitz, sys.u_box, sys.v_box,
                           sys.region, True, sys.beta)


def dc_motor(R=2.0, L=0.5, kb=0.1, km=0.1, kf=0.2, J=0.4,
             u_box=((0.3,), (0.7,)), v_box=((-0.02,), (0.02,)),
             region=((0.0, 0.0), (0.6, 0.6))) -> LinearSystem:
    """Armature-current / angular-velocity motor model with load-torque disturbance."""
    A = [[-R / L, -kb * km / L], [1.0 / J, -kf / J]]
    B = [[km / L], [0.0]]
    G = [[0.0], [1.0 / J]]
    return LinearSystem(A, B, G, Box(*u_box), Box(*v_box), Box(*region))


@dataclass
class ValidationReport:
    system: object
    warnings: list = field(default_factory=list)


def validate_system(sys) -> ValidationReport:
    """Check dimensions and declared properties; raise on hard errors."""
    errors, warns = [], []
    if isinstance(sys, LinearSystem):
        n = sys.A.shape[0]
        if sys.A.shape != (n, n):
            errors.append(f"A must be square, got {sys.A.shape}")
        if sys.B.shape[0] != n:
            errors.append(f"B has {sys.B.shape[0]} rows, expected {n}")
        if sys.G.shape[0] != n:
            errors.append(f"G has {sys.G.shape[0]} rows, expected {n}")
        if sys.u_box.dim != sys.B.shape[1]:
            errors.append(f"u_box dimension {sys.u_box.dim} != B columns {sys.B.shape[1]}")
        if sys.v_box.dim != sys.G.shape[1]:
            errors.append(f"v_box dimension {sys.v_box.dim} != G columns {sys.G.shape[1]}")
        if sys.region.dim != n:
            errors.append(f"region dimension {sys.region.dim} != n={n}")
        for name in ("A", "B", "G"):
            if not np.all(np.isfinite(getattr(sys, name))):
                errors.append(f"{name} has non-finite entries")
        if not errors and np.max(np.linalg.eigvals(sys.A).real) >= 0:
            warns.append("A is not Hurwitz: no incremental stability bound available")
    elif isinstance(sys, NonlinearSystem):
        if sys.n < 1 or sys.region.dim != sys.n:
            errors.append(f"region dimension {sys.region.dim} != n={sys.n}")
        if sys.lipschitz is None:
            errors.append("missing Lipschitz constant")
        elif sys.lipschitz < 0:
            errors.append("Lipschitz constant must be nonnegative")
        if not callable(sys.f):
            errors.append("vector field is not callable")
        if not sys.forward_complete:
            warns.append("system not declared forward complete")
        if sys.beta is None:
            warns.append("no KL bound declared")
        if not errors:
            x = sys.region.center
            out = np.atleast_1d(sys.f(x, sys.u_box.center, sys.v_box.center))
            if out.shape != (sys.n,):
                errors.append(f"vector field returns shape {out.shape}, expected ({sys.n},)")
    else:
        errors.append(f"unsupported system type {type(sys).__name__}")
    if errors:
        raise ValidationError("; ".join(errors))
    return ValidationReport(sys, warns)


def linear_beta(A, t):
    """``||exp(A t)||_inf``: the incremental envelope of a linear system per unit distance."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return inf_norm(mat_exp(A, t))


@dataclass(frozen=True)
class ParameterCheck:
    satisfied: bool
    margin: float
    lhs: float
    epsilon: float

    def describe(self):
        rel = "<" if self.satisfied else ">="
        return (f"beta(eps,tau) + mu + eta/2 = {self.lhs:.6g} {rel} eps = {self.epsilon:.6g}"
                f" (margin {self.margin:.6g})")


def validate_parameters(beta: KLBound, epsilon, tau, mu, eta) -> ParameterCheck:
    """Check ``beta(eps, tau) + mu + eta/2 < eps`` (strict)."""
    for name, val in (("epsilon", epsilon), ("tau", tau), ("mu", mu), ("eta", eta)):
        if not val > 0:
            raise ValidationError(f"{name} must be positive, got {val}")
    lhs = beta(epsilon, tau) + mu + eta / 2.0
    return ParameterCheck(lhs < epsilon, epsilon - lhs, lhs, epsilon)


@dataclass(frozen=True)
class PowerFunction:
    """Class-K-infinity function ``a * r**p``."""

    a: float
    p: float

    def __post_init__(self):
        if not (self.a > 0 and self.p >= 1):
            raise ValidationError("power function needs a > 0 and p >= 1")

    def __call__(self, r):
        return self.a * np.power(r, self.p)


@dataclass(frozen=True, eq=False)
class LyapunovSampleCertificate:
    P: np.ndarray
    alpha1: PowerFunction
    alpha2: PowerFunction
    rho: PowerFunction
    per_axis: int = 5

    def __post_init__(self):
        P = _frozen(self.P, ndim=2)
        if P.shape[0] != P.shape[1] or not np.allclose(P, P.T):
            raise ValidationError("P must be square and symmetric")
        object.__setattr__(self, "P", P)


@dataclass
class DgasReport:
    passed: bool
    worst_bounds: float
    worst_decrease: float
    samples: int
    witness: Optional[tuple] = None


def check_dgas_samples(sys, cert: LyapunovSampleCertificate, grid=None) -> DgasReport:
    """Falsify the incremental Lyapunov conditions on a finite sample grid.

    ``grid`` is an array of states (default: ``cert.per_axis`` points per axis
    of ``sys.region``); all ordered pairs of distinct states are combined with
    every corner of ``u_box x v_box``. Violation margins are positive when a
    condition fails. A pass is evidence, not a proof.
    """
    X = sys.region.grid(cert.per_axis) if grid is None else np.atleast_2d(np.asarray(grid, float))
    if len(X) < 2:
        raise ValidationError("sample grid needs at least two states")
    P = cert.P
    us, vs = sys.u_box.corners(), sys.v_box.corners()
    worst_b, worst_d, witness, count = -np.inf, -np.inf, None, 0
    for i, j in itertools.permutations(range(len(X)), 2):
        x1, x2 = X[i], X[j]
        e = x1 - x2
        r = float(np.max(np.abs(e)))
        if r == 0.0:
            continue
        V = float(e @ P @ e)
        wb = max(cert.alpha1(r) - V, V - cert.alpha2(r))
        if wb > worst_b:
            worst_b = wb
        grad = 2.0 * (P @ e)
        for u in us:
            for v in vs:
                count += 1
                dV = float(grad @ (np.atleast_1d(sys.f(x1, u, v)) - np.atleast_1d(sys.f(x2, u, v))))
                wd = dV + cert.rho(r)
                if wd > worst_d:
                    worst_d = wd
                    witness = (x1.copy(), x2.copy(), u.copy(), v.copy())
    passed = worst_b <= 0.0 and worst_d < 0.0
    return DgasReport(passed, worst_b, worst_d, count, None if passed else witness)
