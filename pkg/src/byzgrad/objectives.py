"""Convex objective families, optimal sets and k-redundancy certification.

Three families are supported:

``ball_hinge``
    ``max(0, ||x - c|| - r)``.  Convex, nondifferentiable, subgradients of
    norm at most one and a flat minimum with interior; the family used by
    every assumption-compliant experiment.
``quadratic``
    ``||x - c||^2``.  Unbounded gradient and a point minimizer; kept for
    stress runs that deliberately break the assumptions.
``abs_deviation``
    ``|x - c|`` in one dimension (a ball hinge of radius zero).

Redundancy is decidable here only because each family's argmin sets have a
finite description.  No attempt is made for black-box convex functions.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from byzgrad.errors import DimMismatch, EmptyZeroSet, InvalidParams, UnsupportedFamily

FAMILIES = ("ball_hinge", "quadratic", "abs_deviation")
SET_TOL = 1e-9
PROBE_DIRECTIONS = 64


@dataclass(frozen=True)
class ObjectiveSpec:
    family: str
    center: np.ndarray
    radius: float = 0.0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise UnsupportedFamily(f"unknown objective family {self.family!r}")
        c = np.atleast_1d(np.asarray(self.center, dtype=float)).copy()
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if self.family == "ball_hinge" and not self.radius > 0:
            raise InvalidParams(f"ball_hinge radius must be positive, got {self.radius}")
        if self.family == "abs_deviation" and c.shape != (1,):
            raise DimMismatch("abs_deviation is one-dimensional")
        if self.family != "ball_hinge":
            object.__setattr__(self, "radius", 0.0)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def subgradient_bound(self) -> float:
        return math.inf if self.family == "quadratic" else 1.0

    def to_dict(self) -> dict:
        out = {"family": self.family, "center": self.center.tolist()}
        if self.family == "ball_hinge":
            out["radius"] = self.radius
        return out


def ball_hinge(center, radius: float) -> ObjectiveSpec:
    return ObjectiveSpec("ball_hinge", center, radius)


def quadratic(center) -> ObjectiveSpec:
    return ObjectiveSpec("quadratic", center)


def abs_deviation(center: float) -> ObjectiveSpec:
    return ObjectiveSpec("abs_deviation", [center])


def _as_point(f: ObjectiveSpec, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (f.dim,):
        raise DimMismatch(f"objective has dimension {f.dim}, point has shape {x.shape}")
    return x


def value(f: ObjectiveSpec, x) -> float:
    x = _as_point(f, x)
    diff = x - f.center
    if f.family == "quadratic":
        return float(diff @ diff)
    dist = float(np.linalg.norm(diff))
    return max(0.0, dist - f.radius)


def subgradient(f: ObjectiveSpec, x) -> np.ndarray:
    """A valid subgradient; zero on the boundary of the ball and at the kink."""
    x = _as_point(f, x)
    diff = x - f.center
    if f.family == "quadratic":
        return 2.0 * diff
    dist = float(np.linalg.norm(diff))
    if dist <= f.radius:
        return np.zeros(f.dim)
    return diff / dist


@dataclass(frozen=True)
class ObjectiveSet:
    specs: tuple[ObjectiveSpec, ...]

    def __post_init__(self) -> None:
        specs = tuple(self.specs)
        if not specs:
            raise InvalidParams("objective set must be nonempty")
        dims = {f.dim for f in specs}
        if len(dims) != 1:
            raise DimMismatch(f"objectives disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "specs", specs)

    def __len__(self) -> int:
        return len(self.specs)

    def __getitem__(self, i: int) -> ObjectiveSpec:
        return self.specs[i]

    def __iter__(self):
        return iter(self.specs)

    @property
    def n(self) -> int:
        return len(self.specs)

    @property
    def dim(self) -> int:
        return self.specs[0].dim

    @property
    def subgradient_bound(self) -> float:
        return max(f.subgradient_bound for f in self.specs)

    def total(self, x, subset: Iterable[int] | None = None) -> float:
        idx = range(self.n) if subset is None else subset
        return sum(value(self.specs[i], x) for i in idx)


# ---------------------------------------------------------------------------
# optimal-set descriptors


def probe_directions(count: int = PROBE_DIRECTIONS) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(count) / count
    return np.column_stack([np.cos(angles), np.sin(angles)])


def _project_ball(x: np.ndarray, c: np.ndarray, r: float) -> np.ndarray:
    diff = x - c
    dist = np.linalg.norm(diff)
    if dist <= r:
        return x
    return c + diff * (r / dist)


def _ball_violation(x: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> float:
    return float((np.linalg.norm(centers - x, axis=1) - radii).max())


def find_common_point(
    centers: np.ndarray, radii: np.ndarray, tol: float = SET_TOL, max_iter: int = 20_000
) -> np.ndarray | None:
    """Point in every ball found by cyclic alternating projections, or None."""
    x = centers.mean(axis=0)
    for _ in range(max_iter):
        prev = x
        for c, r in zip(centers, radii):
            x = _project_ball(x, c, r)
        if _ball_violation(x, centers, radii) <= tol:
            return x
        if np.linalg.norm(x - prev) <= 1e-15:
            break
    return None


def project_onto_balls(
    x: np.ndarray, centers: np.ndarray, radii: np.ndarray, tol: float = SET_TOL, max_iter: int = 100_000
) -> np.ndarray:
    """Euclidean projection onto an intersection of balls (Dykstra's alternating projections)."""
    x = np.asarray(x, dtype=float).copy()
    if _ball_violation(x, centers, radii) <= 0.0:
        return x
    incr = np.zeros_like(centers)
    for _ in range(max_iter):
        prev = x.copy()
        for k, (c, r) in enumerate(zip(centers, radii)):
            y = _project_ball(x + incr[k], c, r)
            incr[k] = x + incr[k] - y
            x = y
        if np.linalg.norm(x - prev) <= tol * 1e-3 and _ball_violation(x, centers, radii) <= tol:
            break
    return x


def _circle_intersections(c1, r1, c2, r2) -> list[np.ndarray]:
    diff = c2 - c1
    dist = float(np.linalg.norm(diff))
    if dist == 0.0 or dist > r1 + r2 or dist < abs(r1 - r2):
        return []
    a = (r1 * r1 - r2 * r2 + dist * dist) / (2 * dist)
    h = math.sqrt(max(r1 * r1 - a * a, 0.0))
    base = c1 + a * diff / dist
    perp = np.array([-diff[1], diff[0]]) / dist
    return [base + h * perp, base - h * perp]


@dataclass(frozen=True)
class OptimalSet:
    """Finite description of an argmin set.

    ``kind`` is ``interval`` (d = 1, ``lo``/``hi``), ``balls`` (intersection
    of ``centers``/``radii``) or ``point``.
    """

    kind: str
    lo: float = 0.0
    hi: float = 0.0
    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    point: np.ndarray = field(default_factory=lambda: np.zeros(1))

    @classmethod
    def interval(cls, lo: float, hi: float) -> OptimalSet:
        return cls("interval", lo=float(lo), hi=float(hi), point=np.array([0.5 * (lo + hi)]))

    @classmethod
    def balls(cls, centers: np.ndarray, radii: np.ndarray, inside: np.ndarray) -> OptimalSet:
        return cls("balls", centers=np.asarray(centers, float), radii=np.asarray(radii, float), point=inside)

    @classmethod
    def single(cls, p) -> OptimalSet:
        return cls("point", point=np.atleast_1d(np.asarray(p, dtype=float)))

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else self.point.shape[0]

    def representative(self) -> np.ndarray:
        """Some point of the set."""
        return self.point

    def project(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "interval":
            return np.array([min(max(x[0], self.lo), self.hi)])
        if self.kind == "point":
            return self.point.copy()
        return project_onto_balls(x, self.centers, self.radii)

    def distance_to(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "interval":
            return float(max(self.lo - x[0], x[0] - self.hi, 0.0))
        if self.kind == "point":
            return float(np.linalg.norm(x - self.point))
        if _ball_violation(x, self.centers, self.radii) <= 0.0:
            return 0.0
        return float(np.linalg.norm(x - self.project(x)))

    def support(self, u: np.ndarray) -> float:
        """Support function ``max_{x in set} u . x`` (exact in one and two dimensions)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if self.kind == "interval":
            return max(u[0] * self.lo, u[0] * self.hi)
        if self.kind == "point":
            return float(u @ self.point)
        if self.dim == 1:
            lo = float((self.centers[:, 0] - self.radii).max())
            hi = float((self.centers[:, 0] + self.radii).min())
            return max(u[0] * lo, u[0] * hi)
        if self.dim != 2:
            raise UnsupportedFamily("support probes of ball intersections are implemented for d <= 2")
        cands = [c + r * u / np.linalg.norm(u) for c, r in zip(self.centers, self.radii)]
        for (c1, r1), (c2, r2) in itertools.combinations(zip(self.centers, self.radii), 2):
            cands.extend(_circle_intersections(c1, r1, c2, r2))
        best = -math.inf
        for p in cands:
            if _ball_violation(p, self.centers, self.radii) <= 1e-9:
                best = max(best, float(u @ p))
        if best == -math.inf:
            raise EmptyZeroSet("ball intersection has no boundary point; set is empty")
        return best

    def contains(self, x, tol: float = SET_TOL) -> bool:
        return self.distance_to(x) <= tol

    def _as_interval(self) -> tuple[float, float] | None:
        if self.kind == "interval":
            return self.lo, self.hi
        if self.dim != 1:
            return None
        if self.kind == "point":
            return float(self.point[0]), float(self.point[0])
        return (
            float((self.centers[:, 0] - self.radii).max()),
            float((self.centers[:, 0] + self.radii).min()),
        )

    def same_as(self, other: OptimalSet, tol: float = SET_TOL) -> bool:
        """Set equality: exact for d = 1 and points, probe-certified for 2-D ball intersections."""
        if self.dim != other.dim:
            return False
        a, b = self._as_interval(), other._as_interval()
        if a is not None and b is not None:
            return abs(a[0] - b[0]) <= tol and abs(a[1] - b[1]) <= tol
        if self.kind == "point" and other.kind == "point":
            return float(np.linalg.norm(self.point - other.point)) <= tol
        if self.kind == "point" or other.kind == "point":
            # a ball intersection with interior is never a single point
            return False
        return self.contains_set(other, tol) and other.contains_set(self, tol)

    def contains_set(self, other: OptimalSet, tol: float = SET_TOL) -> bool:
        """``other ⊆ self`` up to probe resolution (exact for intervals)."""
        a, b = self._as_interval(), other._as_interval()
        if a is not None and b is not None:
            return a[0] <= b[0] + tol and b[1] <= a[1] + tol
        if not self.contains(other.representative(), tol):
            return False
        dirs = probe_directions() if self.dim == 2 else None
        if dirs is None:
            raise UnsupportedFamily("set comparison is implemented for d <= 2")
        return all(other.support(u) <= self.support(u) + tol for u in dirs)


def _breakpoint_argmin(centers: np.ndarray, radii: np.ndarray) -> tuple[float, float]:
    """Exact argmin interval of ``sum_i max(0, |x - c_i| - r_i)`` in one dimension."""
    left = centers - radii
    right = centers + radii
    points = np.unique(np.concatenate([left, right]))
    lo = hi = None
    for x in points:
        slope_right = np.count_nonzero(x >= right) - np.count_nonzero(x < left)
        if slope_right >= 0:
            lo = float(x)
            break
    for x in points[::-1]:
        slope_left = np.count_nonzero(x > right) - np.count_nonzero(x <= left)
        if slope_left <= 0:
            hi = float(x)
            break
    assert lo is not None and hi is not None
    return lo, hi


def optimal_set(os: ObjectiveSet, subset: Iterable[int] | None = None) -> OptimalSet:
    """Argmin set of ``sum_{i in subset} f_i``.

    One-dimensional ball hinges and absolute deviations are solved exactly as
    a piecewise-linear problem, so disjoint intervals are fine there.  In two
    or more dimensions ball hinges are supported only when the balls share a
    point, in which case the argmin is exactly their intersection.

    Raises:
        UnsupportedFamily: mixed quadratic / nonquadratic members, or
            absolute deviations outside d = 1.
        EmptyZeroSet: d >= 2 ball hinges without a common point.
    """
    idx = list(range(os.n)) if subset is None else sorted(set(subset))
    if not idx:
        raise InvalidParams("subset must be nonempty")
    members = [os[i] for i in idx]
    families = {f.family for f in members}
    centers = np.array([f.center for f in members])
    if families == {"quadratic"}:
        return OptimalSet.single(centers.mean(axis=0))
    if "quadratic" in families:
        raise UnsupportedFamily("cannot mix quadratic objectives with other families")
    radii = np.array([f.radius for f in members])
    if os.dim == 1:
        return OptimalSet.interval(*_breakpoint_argmin(centers[:, 0], radii))
    if families != {"ball_hinge"}:
        raise UnsupportedFamily(f"families {sorted(families)} unsupported for d={os.dim}")
    inside = find_common_point(centers, radii)
    if inside is None:
        raise EmptyZeroSet("balls have no common point; argmin is not the zero set")
    return OptimalSet.balls(centers, radii, inside)


def distance_to_optimal(x, opt: OptimalSet) -> float:
    return opt.distance_to(x)


# ---------------------------------------------------------------------------
# redundancy


@dataclass(frozen=True)
class RedundancyResult:
    redundant: bool
    witness: tuple[tuple[int, ...], tuple[int, ...]] | None = None

    def __bool__(self) -> bool:
        return self.redundant


def check_k_redundant(os: ObjectiveSet, k: int, tol: float = SET_TOL) -> RedundancyResult:
    """Do all ``(n-k)``-subsets share one argmin set?

    Returns the first disagreeing subset pair on failure.  Two-dimensional
    ball intersections are compared by mutual containment on a fixed set of
    64 support directions, so equality there is certified up to probe
    resolution.
    """
    n = os.n
    if not 0 <= k <= n - 1:
        raise InvalidParams(f"k must lie in [0, {n - 1}], got {k}")
    subsets = itertools.combinations(range(n), n - k)
    first = next(subsets)
    ref = optimal_set(os, first)
    for other in subsets:
        if not ref.same_as(optimal_set(os, other), tol):
            return RedundancyResult(False, (first, other))
    return RedundancyResult(True)


def max_redundancy(os: ObjectiveSet) -> int:
    """Largest k for which the set is k-redundant (redundancy is monotone in k)."""
    best = 0
    for k in range(1, os.n):
        if not check_k_redundant(os, k):
            break
        best = k
    return best


def _has_interior(centers: np.ndarray, radii: np.ndarray) -> bool:
    margin = 1e-6 * max(1.0, float(radii.min()))
    if (radii <= margin).any():
        return False
    return find_common_point(centers, radii - margin) is not None


def make_replicated_set(distinct: Sequence[ObjectiveSpec], copies: int) -> ObjectiveSet:
    """Repeat each objective ``copies`` times (agent ``i`` gets ``distinct[i // copies]``).

    For ball hinges whose balls share an interior point, every subset missing
    at most ``copies - 1`` agents still contains every distinct ball, so the
    result is ``(copies - 1)``-redundant.
    """
    if copies < 1:
        raise InvalidParams(f"copies must be at least 1, got {copies}")
    distinct = list(distinct)
    if not distinct:
        raise InvalidParams("need at least one objective")
    if all(f.family == "ball_hinge" for f in distinct):
        centers = np.array([f.center for f in distinct])
        radii = np.array([f.radius for f in distinct])
        if not _has_interior(centers, radii):
            raise EmptyZeroSet("replicated balls need a common intersection with nonempty interior")
    return ObjectiveSet(tuple(f for f in distinct for _ in range(copies)))


def optimal_set_within_each(os: ObjectiveSet, tol: float = SET_TOL) -> bool:
    """Is the total argmin contained in every member's own argmin?"""
    total = optimal_set(os)
    for i in range(os.n):
        own = optimal_set(os, [i])
        if not own.contains_set(total, tol):
            return False
    return True
