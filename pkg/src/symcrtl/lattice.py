"""Uniform lattices, quantization and Hausdorff distances under the max norm."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .sysmodel import Box, ValidationError

# Points within this fraction of the spacing below a half-way mark are
# treated as ties (absorbs float noise such as 0.075 / 0.15).
_TIE_TOL = 1e-9


@dataclass(frozen=True)
class Lattice:
    spacing: float
    dim: int
    clip: Optional[Box] = None

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValidationError("lattice spacing must be positive")
        if self.clip is not None and self.clip.dim != self.dim:
            raise ValidationError("clip region dimension mismatch")

    def index_range(self, box: Box):
        """Inclusive integer index bounds of lattice points inside ``box``."""
        lo = np.ceil(box.lo / self.spacing - _TIE_TOL).astype(int)
        hi = np.floor(box.hi / self.spacing + _TIE_TOL).astype(int)
        return lo, hi


def _points(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if X.size else X.reshape(0, 1)
    return X


def quantize(lat: Lattice, x):
    """Nearest lattice point, ties rounded toward +inf, optionally clamped."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != lat.dim:
        raise ValidationError(f"point dimension {x.shape[-1]} != lattice dimension {lat.dim}")
    k = np.floor(x / lat.spacing + 0.5 + _TIE_TOL)
    if lat.clip is not None:
        lo, hi = lat.index_range(lat.clip)
        k = np.clip(k, lo, hi)
    return k * lat.spacing


def enumerate_box(lat: Lattice, box: Box):
    """All lattice points in ``box`` in lexicographic order (last axis fastest)."""
    if box.dim != lat.dim:
        raise ValidationError("box dimension mismatch")
    lo, hi = lat.index_range(box)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    if any(len(a) == 0 for a in axes):
        return np.empty((0, lat.dim))
    idx = np.array(list(itertools.product(*axes)), dtype=float)
    return idx * lat.spacing


def box_grid(box: Box, spacing):
    """Grid anchored at ``box.lower`` with the given spacing per axis (inclusive)."""
    axes = []
    for a, b in zip(box.lower, box.upper):
        count = int(math.floor((b - a) / spacing + _TIE_TOL)) + 1
        axes.append(a + spacing * np.arange(count))
    return np.array(list(itertools.product(*axes)))


def directed_hausdorff(X1, X2):
    """``max_{x in X1} min_{y in X2} ||x - y||_inf`` for finite sets."""
    X1, X2 = _points(X1), _points(X2)
    if len(X1) == 0 or len(X2) == 0:
        raise ValidationError("Hausdorff distance of an empty set")
    if X1.shape[1] != X2.shape[1]:
        raise ValidationError("point sets have different dimensions")
    d, _ = cKDTree(X2).query(X1, k=1, p=np.inf)
    return float(np.max(d))


def hausdorff(X1, X2):
    return max(directed_hausdorff(X1, X2), directed_hausdorff(X2, X1))


@dataclass(frozen=True)
class CoverCertificate:
    forward: float    # d(result -> target)
    backward: float   # d(target -> result)
    radius: float
    slack: float

    @property
    def passed(self):
        bound = self.radius + self.slack
        return self.forward <= bound + 1e-12 and self.backward <= bound + 1e-12


def certify_cover(points, target, radius, slack=0.0):
    return CoverCertificate(directed_hausdorff(points, target),
                            directed_hausdorff(target, points), radius, slack)


def lattice_cover(target, spacing, radius, sampling_density=0.0):
    """Lattice points within ``radius`` of ``target``, greedily pruned.

    Candidates are all points of the ``spacing`` lattice within max-distance
    ``radius`` of some target point. They are visited in lexicographic order
    and dropped whenever every target point stays covered without them. When
    ``target`` samples a continuous set with dispersion ``sampling_density``
    the certificate carries ``sampling_density / 2`` as slack.
    """
    T = _points(target)
    if len(T) == 0:
        raise ValidationError("cannot cover an empty target")
    if radius < spacing / 2.0:
        raise ValidationError(
            f"radius {radius} < spacing/2 = {spacing / 2}: lattice balls cannot cover")
    n = T.shape[1]
    lo = np.ceil((T - radius) / spacing - _TIE_TOL).astype(int)
    hi = np.floor((T + radius) / spacing + _TIE_TOL).astype(int)
    cand = set()
    for a, b in zip(lo, hi):
        cand.update(itertools.product(*[range(x, y + 1) for x, y in zip(a, b)]))
    cand = sorted(cand)
    C = np.array(cand, dtype=float).reshape(-1, n) * spacing

    tree = cKDTree(T)
    covers = [tree.query_ball_point(c, radius * (1 + 1e-12) + 1e-15, p=np.inf) for c in C]
    count = np.zeros(len(T), dtype=int)
    for cov in covers:
        count[cov] += 1
    keep = np.ones(len(C), dtype=bool)
    for i, cov in enumerate(covers):
        if len(cov) == 0 or np.all(count[cov] >= 2):
            keep[i] = False
            count[cov] -= 1
    P = C[keep]
    return P, certify_cover(P, T, radius, sampling_density / 2.0)


def canonical(X):
    """Round every entry to 12 significant digits (the on-disk precision)."""
    X = np.asarray(X, dtype=float)
    return np.vectorize(lambda v: float("%.12g" % v), otypes=[float])(X) if X.size else X.copy()


def write_points_csv(path, points):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for p in _points(points):
            w.writerow(["%.12g" % c for c in p])


def read_points_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    return np.array([[float(c) for c in r] for r in rows])
