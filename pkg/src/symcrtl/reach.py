"""Outer approximations of input-reachable sets of linear systems.

The set reached from the origin in time ``tau`` through an input channel
``x' = Ax + Bu`` with ``u(t)`` in a box is over-approximated by a zonotope
built from ``N`` piecewise-constant slices plus a bloating box that absorbs
the intra-slice remainder.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .numerics import inf_norm, mat_exp
from .sysmodel import Box, ValidationError

DEFAULT_STEPS = 1000


@dataclass(frozen=True, eq=False)
class Zonotope:
    center: np.ndarray
    generators: np.ndarray  # shape (k, n)

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        G = np.asarray(self.generators, dtype=float).reshape(-1, c.size)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "generators", G)

    @property
    def dim(self):
        return self.center.size

    def interval_hull(self):
        r = np.sum(np.abs(self.generators), axis=0)
        return Box(self.center - r, self.center + r)

    def support_point(self, d):
        s = np.sign(self.generators @ d)
        return self.center + s @ self.generators

    def contains(self, x, tol=1e-9):
        """LP membership test: ``x = c + G xi`` with ``|xi| <= 1``."""
        G = self.generators
        rhs = np.asarray(x, float) - self.center
        if len(G) == 0:
            return bool(np.max(np.abs(rhs)) <= tol)
        k = len(G)
        # minimize slack t with |G^T xi - rhs| <= t, -1 <= xi <= 1
        c = np.zeros(k + 1)
        c[-1] = 1.0
        n = self.dim
        A_ub = np.zeros((2 * n, k + 1))
        A_ub[:n, :k] = G.T
        A_ub[:n, -1] = -1.0
        A_ub[n:, :k] = -G.T
        A_ub[n:, -1] = -1.0
        b_ub = np.concatenate([rhs, -rhs])
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(-1, 1)] * k + [(0, None)],
                      method="highs")
        return bool(res.status == 0 and res.fun <= tol)


@dataclass(frozen=True, eq=False)
class ReachResult:
    set: Zonotope
    error_bound: float
    steps: int
    tau: float
    within_cap: bool = True


def merge_parallel(G, n):
    """Drop zero generators and sum exactly parallel ones (up to 1e-12)."""
    G = np.asarray(G, dtype=float).reshape(-1, n)
    if len(G):
        G = G[np.max(np.abs(G), axis=1) > 0]
    if len(G) == 0:
        return np.zeros((0, n))
    if n == 1:
        return np.array([[float(np.sum(np.abs(G)))]])
    first = G[np.arange(len(G)), np.argmax(G != 0, axis=1)]
    G = G * np.sign(first)[:, None]
    keys = np.round(G / np.linalg.norm(G, axis=1)[:, None], 12)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    out = np.zeros((len(uniq), n))
    np.add.at(out, inv.ravel(), G)
    return out


def remainder_radius(a, delta, bmax):
    """``((exp(delta a) - 1 - delta a) / a) * bmax``; zero when ``a == 0``."""
    if a == 0.0:
        return 0.0
    x = delta * a
    return (math.expm1(x) - x) / a * bmax


def input_reach(A, Binp, input_box: Box, tau, N=DEFAULT_STEPS, error_cap=None) -> ReachResult:
    """Zonotope outer approximation of ``{int_0^tau e^{A(tau-s)} B u(s) ds}``.

    ``error_bound`` bounds the Hausdorff distance between the returned set
    and the true reachable set; it is twice the accumulated slice remainder
    because the bloated slices sit up to one remainder outside the exact
    slice sets on either side.
    """
    A = np.atleast_2d(np.asarray(A, float))
    Bm = np.asarray(Binp, float).reshape(A.shape[0], -1)
    n = A.shape[0]
    if N < 1:
        raise ValidationError("N must be >= 1")
    if tau <= 0:
        raise ValidationError("tau must be positive")
    if input_box.dim != Bm.shape[1]:
        raise ValidationError("input box dimension does not match the input matrix")
    delta = tau / N
    Ed = mat_exp(A, delta)
    Bc = Bm @ input_box.center
    Bg = Bm * input_box.radius  # columns scaled by half-widths
    bmax = max(float(np.max(np.abs(Bm @ c))) for c in input_box.corners())
    r = remainder_radius(inf_norm(A), delta, bmax)

    Phis = np.empty((N, n, n))
    Phi = np.eye(n)
    for k in range(N):
        Phis[k] = Phi
        Phi = Phi @ Ed
    center = delta * np.einsum("kij,j->i", Phis, Bc)
    gens = delta * np.einsum("kij,jl->kli", Phis, Bg).reshape(-1, n)
    bloat = r * float(np.sum(np.max(np.sum(np.abs(Phis), axis=2), axis=1)))
    G = merge_parallel(gens, n)
    if bloat > 0:
        G = np.vstack([G, bloat * np.eye(n)])
    err = 2.0 * bloat
    ok = error_cap is None or err <= error_cap
    if not ok:
        warnings.warn(f"reach error bound {err:.3g} exceeds cap {error_cap:.3g}; increase N",
                      RuntimeWarning, stacklevel=2)
    return ReachResult(Zonotope(center, G), err, N, float(tau), ok)


def _dedupe(P, tol=1e-12):
    """Drop near-duplicate rows (grid-snapped at ``tol``), keeping first occurrences."""
    P = np.atleast_2d(P)
    _, idx = np.unique(np.round(P / tol), axis=0, return_index=True)
    return P[np.sort(idx)]


def to_vertices(z: Zonotope):
    """Exact vertex list of a zonotope of dimension at most 3."""
    n, c = z.dim, z.center
    if n > 3:
        raise ValidationError("vertex enumeration capped at n <= 3; use surface_sample instead")
    G = merge_parallel(z.generators, n)
    if len(G) == 0:
        return c.reshape(1, n).copy()
    if n == 1:
        w = float(np.sum(np.abs(G)))
        return np.array([[c[0] - w], [c[0] + w]])
    if n == 2:
        G = np.array([g if (g[1] > 0 or (g[1] == 0 and g[0] > 0)) else -g for g in G])
        G = G[np.argsort(np.arctan2(G[:, 1], G[:, 0]), kind="stable")]
        v = c - G.sum(axis=0)
        verts = [v]
        for g in np.vstack([G, -G])[:-1]:
            v = v + 2.0 * g
            verts.append(v)
        return _dedupe(np.array(verts))
    cands = []
    k = len(G)
    if k < 3:
        for signs in itertools.product((-1.0, 1.0), repeat=k):
            cands.append(c + np.asarray(signs) @ G)
        return _dedupe(np.array(cands))
    for i, j in itertools.combinations(range(k), 2):
        nrm = np.cross(G[i], G[j])
        if np.max(np.abs(nrm)) == 0:
            continue
        for d in (nrm, -nrm):
            s = np.sign(G @ d)
            base = c + s @ G - s[i] * G[i] - s[j] * G[j]
            for si, sj in itertools.product((-1.0, 1.0), repeat=2):
                cands.append(base + si * G[i] + sj * G[j])
    cands = _dedupe(np.array(cands), 1e-12)
    try:
        hull = ConvexHull(cands)
        return cands[np.sort(hull.vertices)]
    except QhullError:
        return cands


def _segment_points(a, b, density):
    k = max(1, int(math.ceil(np.max(np.abs(b - a)) / density)))
    t = np.linspace(0.0, 1.0, k + 1)[:, None]
    return a + t * (b - a)


def sample_polytope(V, density):
    """Deterministic sampling of ``conv(V)`` (n <= 3) with dispersion <= ``density``."""
    if not density > 0:
        raise ValidationError("density must be positive")
    V = np.atleast_2d(np.asarray(V, float))
    n = V.shape[1]
    if len(V) == 1:
        return V.copy()
    if n == 1:
        return _segment_points(V.min(axis=0), V.max(axis=0), density)
    if n > 3:
        raise ValidationError("polytope sampling supports n <= 3")
    try:
        hull = ConvexHull(V)
    except QhullError:
        # flat set: sample segments between all pairs of extreme points
        pts = [_segment_points(V[i], V[j], density)
               for i, j in itertools.combinations(range(len(V)), 2)]
        return _dedupe(np.vstack(pts), 1e-12)
    pts = []
    if n == 2:
        ring = hull.vertices
        for i in range(len(ring)):
            pts.append(_segment_points(V[ring[i]], V[ring[(i + 1) % len(ring)]], density))
    else:
        for tri in hull.simplices:
            a, b, cc = V[tri]
            k = max(1, int(math.ceil(max(np.max(np.abs(b - a)), np.max(np.abs(cc - a))) / density)))
            for i in range(k + 1):
                for j in range(k + 1 - i):
                    pts.append((a + (i / k) * (b - a) + (j / k) * (cc - a))[None, :])
    lo, hi = V.min(axis=0), V.max(axis=0)
    axes = [np.arange(math.ceil(l / density), math.floor(h / density) + 1) * density
            for l, h in zip(lo, hi)]
    grid = np.array(list(itertools.product(*axes))).reshape(-1, n)
    if len(grid):
        inside = np.all(grid @ hull.equations[:, :-1].T + hull.equations[:, -1] <= 1e-12, axis=1)
        pts.append(grid[inside])
    P = np.vstack(pts)
    return np.unique(np.round(P, 14), axis=0)


def surface_sample(z: Zonotope, density):
    """Boundary-plus-interior point sampling of a zonotope with dispersion <= ``density``."""
    if not density > 0:
        raise ValidationError("density must be positive")
    if len(merge_parallel(z.generators, z.dim)) == 0:
        return z.center.reshape(1, -1).copy()
    if z.dim <= 3:
        return sample_polytope(to_vertices(z), density)
    box = z.interval_hull()
    axes = [np.arange(l, h + density / 2, density) for l, h in zip(box.lower, box.upper)]
    grid = np.array(list(itertools.product(*axes)))
    keep = [p for p in grid if z.contains(p)]
    return np.array(keep) if keep else z.center.reshape(1, -1).copy()


def write_vertices_csv(path, V):
    from .lattice import write_points_csv
    write_points_csv(path, V)


def hull_order(V):
    """2-D vertices in counter-clockwise order (for drawing)."""
    V = np.asarray(V, float)
    if len(V) < 3:
        return V
    try:
        return V[ConvexHull(V).vertices]
    except QhullError:
        return V


def reach_svg(panels, size=360, margin=30):
    """Render 2-D panels ``[(title, polygon_vertices, label_points), ...]`` as SVG text."""
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size * len(panels)}" '
           f'height="{size}" font-family="sans-serif" font-size="11">']
    for idx, (title, poly, pts) in enumerate(panels):
        allp = np.vstack([np.atleast_2d(poly), np.atleast_2d(pts)]) if len(pts) else np.atleast_2d(poly)
        lo, hi = allp.min(axis=0), allp.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        scale = (size - 2 * margin) / float(np.max(span))

        def xy(p):
            return (idx * size + margin + (p[0] - lo[0]) * scale,
                    size - margin - (p[1] - lo[1]) * scale)

        ring = hull_order(poly)
        path = " ".join("%.2f,%.2f" % xy(p) for p in ring)
        out.append(f'<text x="{idx * size + margin}" y="16">{title}</text>')
        out.append(f'<polygon points="{path}" fill="#cde" stroke="#246" stroke-width="1"/>')
        for p in np.atleast_2d(pts) if len(pts) else []:
            x, y = xy(p)
            out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
