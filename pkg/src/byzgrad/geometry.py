"""Convex-hull membership and the resilient intersection-point pick.

Every agent groups its neighbors' values into A-sets of size
``(d+1)*beta + 1`` and, inside each A-set, into B-sets of size
``d*beta + 1``.  The convex hulls of all B-sets of one A-set always share a
point (Helly plus pigeonhole), and any such point is a convex combination of
honest values whenever at most ``beta`` of the A-set's members lie.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np

from byzgrad.errors import DimMismatch, EmptyIntersection, Infeasible, InvalidParams, TooFewNeighbors
from byzgrad.simplex import phase_one

PIVOT_TOL = 1e-9
RESIDUAL_TOL = 1e-8

PickPolicy = Literal["auto", "lp", "midpoint"]


@dataclass(frozen=True)
class PointSet:
    """Finite point set, each point tagged with the agent it came from."""

    points: np.ndarray  # (k, d)
    sources: tuple[int, ...]

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 0:
            raise InvalidParams("point set must be nonempty")
        if len(self.sources) != pts.shape[0]:
            raise InvalidParams("one source tag per point is required")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class HullSystem:
    """Point sets whose convex hulls must be intersected.

    ``points`` has shape ``(hulls, k, d)``; every hull has the same size k.
    """

    points: np.ndarray
    sources: np.ndarray  # (hulls, k) agent ids

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 3 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise InvalidParams(f"hull points must have shape (hulls, k, d), got {pts.shape}")
        src = np.asarray(self.sources, dtype=int).reshape(pts.shape[:2])
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "sources", src)

    @property
    def dim(self) -> int:
        return self.points.shape[2]

    @property
    def hull_count(self) -> int:
        return self.points.shape[0]

    @classmethod
    def from_point_sets(cls, sets: list[PointSet]) -> HullSystem:
        dims = {ps.dim for ps in sets}
        sizes = {len(ps.sources) for ps in sets}
        if len(dims) != 1:
            raise DimMismatch(f"hulls disagree on dimension: {sorted(dims)}")
        if len(sizes) != 1:
            raise InvalidParams(f"hulls must all have the same size, got {sorted(sizes)}")
        return cls(np.stack([ps.points for ps in sets]), np.array([ps.sources for ps in sets]))

    def hull(self, h: int) -> PointSet:
        return PointSet(self.points[h], tuple(int(s) for s in self.sources[h]))


@dataclass(frozen=True)
class PickCertificate:
    """A point plus, per hull, convex weights that reproduce it."""

    point: np.ndarray  # (d,)
    weights: np.ndarray  # (hulls, k)

    def residuals(self, hs: HullSystem) -> np.ndarray:
        """Max-coordinate reconstruction error of every hull."""
        recon = np.einsum("hk,hkd->hd", self.weights, hs.points)
        return np.abs(recon - self.point[None, :]).max(axis=1)

    def is_valid(self, hs: HullSystem, tol: float = RESIDUAL_TOL) -> bool:
        w = self.weights
        scale = max(1.0, float(np.abs(hs.points).max()))
        return bool(
            (w >= -1e-12).all()
            and np.allclose(w.sum(axis=1), 1.0, atol=1e-9, rtol=0)
            and (self.residuals(hs) <= tol * scale).all()
        )


# ---------------------------------------------------------------------------
# subset families


@lru_cache(maxsize=256)
def family_positions(size: int, d: int, beta: int) -> tuple[tuple[tuple[int, ...], ...], np.ndarray]:
    """Positional form of the A/B families for ``size`` sorted neighbors.

    Returns the A-sets as position tuples and an int array of shape
    ``(a, b, d*beta + 1)`` holding, for every A-set, the positions of its
    B-sets in lexicographic order.
    """
    a_size = (d + 1) * beta + 1
    b_size = d * beta + 1
    if size < a_size:
        raise TooFewNeighbors(f"need at least {a_size} neighbors for d={d}, beta={beta}, got {size}")
    a_sets = tuple(itertools.combinations(range(size), a_size))
    b_sets = np.array(
        [list(itertools.combinations(a, b_size)) for a in a_sets], dtype=int
    ).reshape(len(a_sets), math.comb(a_size, b_size), b_size)
    b_sets.setflags(write=False)
    return a_sets, b_sets


def subset_families(
    neighbor_ids: list[int] | tuple[int, ...], d: int, beta: int
) -> tuple[list[tuple[int, ...]], list[list[tuple[int, ...]]]]:
    """All A-sets of the neighbors and, per A-set, all of its B-sets.

    Raises:
        TooFewNeighbors: when there are fewer than ``(d+1)*beta + 1`` neighbors.
    """
    if d < 1 or beta < 0:
        raise InvalidParams(f"need d >= 1 and beta >= 0, got d={d}, beta={beta}")
    ids = sorted(neighbor_ids)
    a_pos, b_pos = family_positions(len(ids), d, beta)
    a_sets = [tuple(ids[p] for p in a) for a in a_pos]
    b_sets = [[tuple(ids[p] for p in b) for b in group] for group in b_pos.tolist()]
    return a_sets, b_sets


def pigeonhole_excess(d: int, beta: int) -> int:
    """``(d+1)(d*beta+1) - d((d+1)beta+1)``; identically one."""
    return (d + 1) * (d * beta + 1) - d * ((d + 1) * beta + 1)


# ---------------------------------------------------------------------------
# membership and intersection


@dataclass(frozen=True)
class Membership:
    inside: bool
    weights: np.ndarray | None = None
    residual: float = 0.0

    def __bool__(self) -> bool:
        return self.inside


def _interval_weights(values: np.ndarray, y: float) -> np.ndarray:
    """Weights on the extreme points of a 1-D hull reproducing y (clipped into the hull)."""
    w = np.zeros(values.shape[0])
    lo, hi = int(values.argmin()), int(values.argmax())
    span = values[hi] - values[lo]
    if span <= 0.0:
        w[lo] = 1.0
        return w
    t = min(1.0, max(0.0, (y - values[lo]) / span))
    w[lo] += 1.0 - t
    w[hi] += t
    return w


def hull_membership(x, ps: PointSet, tol: float = RESIDUAL_TOL) -> Membership:
    """Is ``x`` a convex combination of the points of ``ps`` (within ``tol``)?

    Returns the witness weights when it is.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (ps.dim,):
        raise DimMismatch(f"point has dimension {x.shape[0]}, hull has {ps.dim}")
    pts = ps.points
    if ps.dim == 1:
        vals = pts[:, 0]
        lo, hi = vals.min(), vals.max()
        excess = max(lo - x[0], x[0] - hi, 0.0)
        if excess > tol:
            return Membership(False, None, float(excess))
        return Membership(True, _interval_weights(vals, x[0]), float(excess))
    a = np.vstack([pts.T, np.ones(pts.shape[0])])
    b = np.append(x, 1.0)
    res = phase_one(a, b, pivot_tol=PIVOT_TOL)
    w = res.x
    total = w.sum()
    if total > 0:
        w = w / total
    residual = float(np.abs(pts.T @ w - x).max())
    if residual > tol:
        return Membership(False, None, residual)
    return Membership(True, w, residual)


def intersect_intervals(hs: HullSystem, tol: float = RESIDUAL_TOL) -> tuple[float, float]:
    """Intersection ``[max of minima, min of maxima]`` of 1-D hulls.

    Raises:
        EmptyIntersection: if the interval is empty beyond ``tol``.
    """
    if hs.dim != 1:
        raise DimMismatch(f"interval intersection needs d = 1, got d = {hs.dim}")
    vals = hs.points[:, :, 0]
    lo = float(vals.min(axis=1).max())
    hi = float(vals.max(axis=1).min())
    if lo > hi:
        if lo - hi > tol * max(1.0, abs(lo), abs(hi)):
            raise EmptyIntersection(f"hull intervals do not meet: lo={lo} > hi={hi}", lo - hi)
        mid = 0.5 * (lo + hi)
        lo = hi = mid
    return lo, hi


def _cluster_points(flat: np.ndarray, radius: float) -> np.ndarray:
    """Greedy cluster label per point: first earlier representative within ``radius`` (max-norm)."""
    labels = np.empty(flat.shape[0], dtype=int)
    reps: list[int] = []
    for p in range(flat.shape[0]):
        for c, q in enumerate(reps):
            if np.abs(flat[p] - flat[q]).max() <= radius:
                labels[p] = c
                break
        else:
            labels[p] = len(reps)
            reps.append(p)
    return labels


def feasibility_lp(
    hs: HullSystem, pivot_tol: float = PIVOT_TOL, residual_tol: float = RESIDUAL_TOL
) -> PickCertificate:
    """Point common to all hulls via phase-1 simplex.

    The common point ``y`` is split into nonnegative parts and every hull must
    reproduce it with convex weights.  Points closer than a quarter of the residual tolerance are
    merged first: they are interchangeable for the certificate, and keeping
    them apart only produces near-parallel columns.  Coordinates are centered
    and scaled robustly and the columns equilibrated before solving.

    Raises:
        Infeasible: if the reconstruction residual exceeds tolerance.
    """
    pts = hs.points
    h, k, d = pts.shape
    tol = residual_tol * max(1.0, float(np.abs(pts).max()))
    labels = _cluster_points(pts.reshape(-1, d), 0.25 * tol).reshape(h, k)
    reps = np.array([pts.reshape(-1, d)[labels.ravel() == c][0] for c in range(labels.max() + 1)])
    # columns: one per distinct cluster of each hull, mapped back to its first position
    columns = [sorted({int(c): q for q, c in reversed(list(enumerate(labels[s])))}.items()) for s in range(h)]

    # robust centering and scaling: outliers must not squeeze the bulk of the
    # points into round-off, so use the median and the median spread
    center = np.median(reps, axis=0)
    spread = np.abs(reps - center).max(axis=1)
    floor = 1e-12 * max(1.0, float(np.abs(pts).max()))
    positive = np.sort(spread[spread > floor])
    scale = float(positive[(positive.size - 1) // 2]) if positive.size else floor  # lower median
    z = (reps - center) / scale

    # variables: y+ (d), y- (d), then per hull one weight per distinct cluster;
    # rows: per hull, d coordinate rows (sum_p w_p z_p - y = 0) and one sum row
    offsets = 2 * d + np.cumsum([0] + [len(c) for c in columns])
    nvar = int(offsets[-1])
    rows = h * (d + 1)
    a = np.zeros((rows, nvar))
    b = np.zeros(rows)
    for s in range(h):
        r = s * (d + 1)
        a[r : r + d, offsets[s] : offsets[s + 1]] = z[[c for c, _ in columns[s]]].T
        a[r : r + d, 0:d] = -np.eye(d)
        a[r : r + d, d : 2 * d] = np.eye(d)
        a[r + d, offsets[s] : offsets[s + 1]] = 1.0
        b[r + d] = 1.0
    # column equilibration so far-away points do not dominate the pivots
    colscale = np.abs(a).max(axis=0)
    colscale[colscale == 0] = 1.0
    a /= colscale

    res = phase_one(a, b, pivot_tol=pivot_tol)
    xs = res.x / colscale
    w = np.zeros((h, k))
    for s in range(h):
        w[s, [q for _, q in columns[s]]] = xs[offsets[s] : offsets[s + 1]]
    sums = w.sum(axis=1, keepdims=True)
    w = np.where(sums > 0, w / np.where(sums > 0, sums, 1.0), 0.0)
    point = w[0] @ pts[0]
    cert = PickCertificate(point, w)
    worst = float(cert.residuals(hs).max()) if h else 0.0
    # The reconstruction residual certifies feasibility on its own; the phase-1
    # objective is in scaled units and only reported.
    if worst > tol or not np.allclose(w.sum(axis=1), 1.0):
        raise Infeasible(
            f"hull intersection is empty (phase-1 objective {res.infeasibility:.3e}, "
            f"max residual {worst:.3e})",
            max(res.infeasibility * scale, worst),
        )
    return cert


def pick_intersection_point(hs: HullSystem, policy: PickPolicy = "auto") -> PickCertificate:
    """Deterministic point in the intersection of all hulls, with certificates.

    ``auto`` uses the interval midpoint for d = 1 and the simplex solution
    otherwise.  Any point of the intersection is acceptable to the update
    rule, so the policy only affects reproducibility, not correctness.
    """
    if policy == "auto":
        policy = "midpoint" if hs.dim == 1 else "lp"
    if policy == "lp":
        return feasibility_lp(hs)
    if policy == "midpoint":
        lo, hi = intersect_intervals(hs)
        y = 0.5 * (lo + hi)
        vals = hs.points[:, :, 0]
        weights = np.stack([_interval_weights(v, y) for v in vals])
        return PickCertificate(np.array([y]), weights)
    raise InvalidParams(f"unknown pick policy {policy!r}")


def interval_pick(values: np.ndarray, b_positions: np.ndarray) -> float:
    """Midpoint pick for 1-D values without building certificates.

    ``values`` holds one scalar per sorted neighbor, ``b_positions`` the
    B-sets of one A-set.  Used on the hot path of the round engine.
    """
    groups = values[b_positions]
    lo = groups.min(axis=1).max()
    hi = groups.max(axis=1).min()
    if lo > hi and lo - hi > RESIDUAL_TOL * max(1.0, abs(lo), abs(hi)):
        raise EmptyIntersection(f"hull intervals do not meet: lo={lo} > hi={hi}", lo - hi)
    return 0.5 * (lo + hi)
