"""Deterministic numerical kernels.

Matrix exponential (scaling and squaring with a degree-13 Pade kernel),
exact flows of linear systems under constant inputs, and fixed-step RK4
for nonlinear vector fields.
"""
import math
import warnings

import numpy as np

# Degree-13 Pade coefficients and the matching scaling threshold (Higham 2005).
# Frozen: changing either changes every abstraction built on top.
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152


def _as_matrix(A):
    A = np.asarray(A, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def inf_norm(M):
    """Induced infinity norm: the largest absolute row sum."""
    M = _as_matrix(M)
    if M.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(M), axis=1)))


def mat_exp(A, t=1.0):
    """Return ``exp(A * t)``.

    Scaling and squaring: ``A*t`` is scaled by ``2**-s`` so its 1-norm is
    below the degree-13 threshold, the Pade approximant is evaluated and
    then squared ``s`` times.
    """
    A = _as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"mat_exp needs a square matrix, got {A.shape}")
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    n = A.shape[0]
    X = A * float(t)
    ident = np.eye(n)
    norm1 = float(np.max(np.sum(np.abs(X), axis=0))) if n else 0.0
    if norm1 == 0.0:
        return ident
    s = max(0, int(math.ceil(math.log2(norm1 / _THETA13))))
    X = X / (2.0 ** s)

    b = _PADE13
    X2 = X @ X
    X4 = X2 @ X2
    X6 = X4 @ X2
    U = X @ (X6 @ (b[13] * X6 + b[11] * X4 + b[9] * X2)
             + b[7] * X6 + b[5] * X4 + b[3] * X2 + b[1] * ident)
    V = (X6 @ (b[12] * X6 + b[10] * X4 + b[8] * X2)
         + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * ident)
    E = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        E = E @ E
    return E


def _input_vector(sys, u, v):
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if u.shape != (sys.B.shape[1],) or v.shape != (sys.G.shape[1],):
        raise ValueError(
            f"input dimension mismatch: u{u.shape} vs m={sys.B.shape[1]}, "
            f"v{v.shape} vs s={sys.G.shape[1]}")
    return sys.B @ u + sys.G @ v


def augmented_exp(A, w, tau):
    """Return ``(exp(A tau), int_0^tau exp(A s) ds @ w)`` via one exponential.

    ``w`` may be a vector or a matrix of stacked input directions.
    """
    A = _as_matrix(A)
    w = np.asarray(w, dtype=float)
    vec = w.ndim == 1
    W = w.reshape(-1, 1) if vec else w
    n, k = A.shape[0], W.shape[1]
    M = np.zeros((n + k, n + k))
    M[:n, :n] = A
    M[:n, n:] = W
    E = mat_exp(M, tau)
    Phi, Gam = E[:n, :n], E[:n, n:]
    return Phi, (Gam[:, 0] if vec else Gam)


def linear_flow(sys, x0, u, v, tau):
    """Endpoint of ``x' = Ax + Bu + Gv`` after ``tau`` with constant inputs.

    Exact up to the matrix-exponential tolerance: no quadrature is involved.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (sys.A.shape[0],):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({sys.A.shape[0]},)")
    if tau <= 0:
        raise ValueError("tau must be positive")
    w = _input_vector(sys, u, v)
    Phi, drift = augmented_exp(sys.A, w, tau)
    return Phi @ x0 + drift


def default_steps(tau, lipschitz):
    return max(100, int(math.ceil(tau * (lipschitz or 0.0) * 20)))


def _rk4(f, x0, u, v, tau, steps):
    h = tau / steps
    x = x0.copy()
    for _ in range(steps):
        k1 = f(x, u, v)
        k2 = f(x + 0.5 * h * k1, u, v)
        k3 = f(x + 0.5 * h * k2, u, v)
        k4 = f(x + h * k3, u, v)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def rk4_trajectory(sys, x0, u, v, tau, steps=None, estimate_error=False):
    """Classical fixed-step RK4 endpoint for ``sys.f`` under constant inputs.

    With ``estimate_error=True`` returns ``(x, err)``: a Richardson estimate
    of the error of ``x`` from a second run with twice the steps (the gap
    times 16/15 for a fourth-order method).
    """
    if steps is None:
        steps = default_steps(tau, getattr(sys, "lipschitz", 0.0))
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))

    def f(x, uu, vv):
        return np.atleast_1d(np.asarray(sys.f(x, uu, vv), dtype=float))

    x = _rk4(f, x0, u, v, tau, steps)
    region = getattr(sys, "region", None)
    if region is not None and not region.contains(x, tol=1e-9):
        warnings.warn(f"trajectory endpoint {x} leaves the working region",
                      RuntimeWarning, stacklevel=2)
    if not estimate_error:
        return x
    fine = _rk4(f, x0, u, v, tau, 2 * steps)
    return x, float(np.max(np.abs(fine - x))) * 16.0 / 15.0
