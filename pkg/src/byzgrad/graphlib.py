"""Directed neighbor graphs and their redundancy machinery.

An edge ``(j, i)`` means *j is a neighbor of i*: information flows from j to
i.  Self-arcs are never stored; operations that need them (composition,
scrambling tests) take a ``self_arcs`` flag instead.

Reachability is computed on Python-int bitmasks so that exhaustive
enumeration of reduced graphs stays cheap for the desk-scale graphs this
package targets (n up to about 12).
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Collection, Iterable, Iterator
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from byzgrad.errors import (
    InvalidEta,
    InvalidParams,
    NotResilient,
    NotRooted,
    NotSubstochastic,
    SizeMismatch,
    TooFewNeighbors,
)

Edge = tuple[int, int]


@dataclass(frozen=True)
class DiGraph:
    """Directed graph on vertices ``0..n-1``.

    Args:
        n: vertex count.
        edges: ordered pairs ``(j, i)``, read as "j is a neighbor of i".
    """

    n: int
    edges: frozenset[Edge] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.n < 0:
            raise InvalidParams(f"vertex count must be nonnegative, got {self.n}")
        edges = frozenset((int(j), int(i)) for j, i in self.edges)
        for j, i in edges:
            if not (0 <= j < self.n and 0 <= i < self.n):
                raise InvalidParams(f"edge ({j}, {i}) has an endpoint outside [0, {self.n})")
            if i == j:
                raise InvalidParams(f"self-loop ({i}, {i}) cannot be stored; use the self_arcs flag")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Edge]) -> DiGraph:
        return cls(n, frozenset(tuple(e) for e in edges))

    @cached_property
    def in_neighbors(self) -> tuple[tuple[int, ...], ...]:
        """Sorted neighbor set of every vertex."""
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for j, i in self.edges:
            nbrs[i].append(j)
        return tuple(tuple(sorted(x)) for x in nbrs)

    @cached_property
    def out_neighbors(self) -> tuple[tuple[int, ...], ...]:
        """Sorted out-neighbor set (reverse adjacency) of every vertex."""
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for j, i in self.edges:
            nbrs[j].append(i)
        return tuple(tuple(sorted(x)) for x in nbrs)

    @cached_property
    def in_masks(self) -> tuple[int, ...]:
        masks = [0] * self.n
        for j, i in self.edges:
            masks[i] |= 1 << j
        return tuple(masks)

    def in_degree(self, i: int) -> int:
        return len(self.in_neighbors[i])

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def induced(self, vertices: Iterable[int]) -> DiGraph:
        """Subgraph induced by ``vertices``, relabelled to ``0..k-1`` in sorted order."""
        keep = sorted(set(vertices))
        index = {v: k for k, v in enumerate(keep)}
        return DiGraph(
            len(keep),
            frozenset((index[j], index[i]) for j, i in self.edges if j in index and i in index),
        )


def complete_graph(n: int) -> DiGraph:
    return DiGraph(n, frozenset((j, i) for j in range(n) for i in range(n) if i != j))


def cycle_graph(n: int) -> DiGraph:
    """Directed cycle 0 -> 1 -> ... -> n-1 -> 0."""
    return DiGraph(n, frozenset((k, (k + 1) % n) for k in range(n)) if n > 1 else frozenset())


def path_graph(n: int) -> DiGraph:
    """Directed path 0 -> 1 -> ... -> n-1."""
    return DiGraph(n, frozenset((k, k + 1) for k in range(n - 1)))


def circulant_graph(n: int, offsets: Iterable[int]) -> DiGraph:
    """Vertex i hears from ``i - o (mod n)`` for every offset o."""
    return DiGraph(
        n, frozenset(((i - o) % n, i) for i in range(n) for o in offsets if o % n != 0)
    )


# ---------------------------------------------------------------------------
# roots


def _roots_mask(in_masks: tuple[int, ...] | list[int], n: int) -> int:
    # A root is an ancestor (or equal) of every vertex, so roots = AND of ancestor closures.
    full = (1 << n) - 1
    roots = full
    for i in range(n):
        seen = 1 << i
        frontier = seen
        while frontier:
            nxt = 0
            f = frontier
            while f:
                low = f & -f
                nxt |= in_masks[low.bit_length() - 1]
                f ^= low
            frontier = nxt & ~seen
            seen |= nxt
        roots &= seen
        if not roots:
            return 0
    return roots


def _mask_to_set(mask: int) -> frozenset[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return frozenset(out)


def roots(g: DiGraph) -> frozenset[int]:
    """Vertices from which every other vertex is reachable along a directed path."""
    if g.n == 0:
        return frozenset()
    return _mask_to_set(_roots_mask(g.in_masks, g.n))


def is_rooted(g: DiGraph) -> bool:
    return g.n > 0 and _roots_mask(g.in_masks, g.n) != 0


def kappa(g: DiGraph) -> int:
    """Number of roots of a rooted graph.

    Raises:
        NotRooted: if no vertex reaches all others.
    """
    count = len(roots(g))
    if count == 0:
        raise NotRooted("graph has no root")
    return count


# ---------------------------------------------------------------------------
# (r, s)-reduced graphs


@dataclass(frozen=True)
class ReducedGraphSpec:
    """One (r, s)-reduced graph, described relative to the original graph.

    ``removed_edges[k]`` lists the incoming edges dropped from
    ``kept_vertices[k]`` (original labels).
    """

    kept_vertices: tuple[int, ...]
    removed_edges: tuple[tuple[Edge, ...], ...]

    def removed_vertices(self, n: int) -> tuple[int, ...]:
        kept = set(self.kept_vertices)
        return tuple(v for v in range(n) if v not in kept)

    def build(self, g: DiGraph) -> DiGraph:
        """Materialize the reduced graph, relabelled in ``kept_vertices`` order."""
        index = {v: k for k, v in enumerate(self.kept_vertices)}
        dropped = {e for group in self.removed_edges for e in group}
        return DiGraph(
            len(self.kept_vertices),
            frozenset(
                (index[j], index[i])
                for j, i in g.edges
                if j in index and i in index and (j, i) not in dropped
            ),
        )


def _check_rs(g: DiGraph, r: int, s: int) -> None:
    if r < 0 or s < 0:
        raise InvalidParams(f"r and s must be nonnegative, got r={r}, s={s}")
    if r + s > g.n - 1:
        raise InvalidParams(f"need r + s <= n - 1, got r={r}, s={s}, n={g.n}")


def _subset_plan(g: DiGraph, kept: tuple[int, ...], s: int):
    """Per kept vertex: compact incoming mask and the lexicographic removal choices."""
    index = {v: k for k, v in enumerate(kept)}
    base = []
    choices = []
    for v in kept:
        nbrs = [j for j in g.in_neighbors[v] if j in index]
        mask = 0
        for j in nbrs:
            mask |= 1 << index[j]
        base.append(mask)
        m = min(s, len(nbrs))
        choices.append(list(itertools.combinations(nbrs, m)))
    return index, base, choices


def _iter_reduced(g: DiGraph, r: int, s: int) -> Iterator[tuple[tuple[int, ...], tuple, list[int]]]:
    """Yield (kept, removal choice, compact in-masks) in deterministic lexicographic order."""
    for kept in itertools.combinations(range(g.n), g.n - r):
        index, base, choices = _subset_plan(g, kept, s)
        for combo in itertools.product(*choices):
            masks = list(base)
            for k, removed in enumerate(combo):
                for j in removed:
                    masks[k] &= ~(1 << index[j])
            yield kept, combo, masks


def _spec_of(kept: tuple[int, ...], combo: tuple) -> ReducedGraphSpec:
    return ReducedGraphSpec(
        kept_vertices=kept,
        removed_edges=tuple(tuple((j, v) for j in removed) for v, removed in zip(kept, combo)),
    )


def enumerate_reduced_graphs(
    g: DiGraph, r: int, s: int
) -> Iterator[tuple[ReducedGraphSpec, DiGraph]]:
    """Lazily yield every (r, s)-reduced graph of ``g`` exactly once.

    Each kept vertex loses exactly ``min(s, in-degree)`` incoming edges of
    the induced subgraph; removing fewer edges can only help rootedness, so
    this covers the worst cases.
    """
    _check_rs(g, r, s)
    for kept, combo, _ in _iter_reduced(g, r, s):
        spec = _spec_of(kept, combo)
        yield spec, spec.build(g)


def count_reduced_graphs(g: DiGraph, r: int, s: int) -> int:
    """Closed-form count: sum over kept subsets of the product of per-vertex choices."""
    _check_rs(g, r, s)
    total = 0
    for kept in itertools.combinations(range(g.n), g.n - r):
        keep = set(kept)
        prod = 1
        for v in kept:
            deg = sum(1 for j in g.in_neighbors[v] if j in keep)
            prod *= math.comb(deg, min(s, deg))
        total += prod
    return total


@dataclass(frozen=True)
class ResilienceResult:
    resilient: bool
    witness: ReducedGraphSpec | None = None
    checked: int = 0

    def __bool__(self) -> bool:
        return self.resilient


def is_resilient(g: DiGraph, r: int, s: int) -> ResilienceResult:
    """Check that every (r, s)-reduced graph is rooted.

    Stops at the first unrooted reduced graph and returns it as the witness.
    """
    _check_rs(g, r, s)
    m = g.n - r
    checked = 0
    for kept, combo, masks in _iter_reduced(g, r, s):
        checked += 1
        if not _roots_mask(masks, m):
            return ResilienceResult(False, _spec_of(kept, combo), checked)
    return ResilienceResult(True, None, checked)


def kappa_rs(g: DiGraph, r: int, s: int) -> int:
    """Smallest root count over all (r, s)-reduced graphs.

    Raises:
        NotResilient: if some reduced graph is unrooted.
    """
    _check_rs(g, r, s)
    m = g.n - r
    best = m
    for kept, combo, masks in _iter_reduced(g, r, s):
        mask = _roots_mask(masks, m)
        if not mask:
            raise NotResilient(f"reduced graph {_spec_of(kept, combo)} is not rooted")
        c = mask.bit_count()
        if c < best:
            best = c
    return best


@dataclass(frozen=True)
class SpotCheck:
    """Outcome of sampling reduced graphs; never a certificate of resilience."""

    samples: int
    min_kappa: int | None
    witness: ReducedGraphSpec | None
    certificate: bool = False


def sample_kappa_rs(g: DiGraph, r: int, s: int, samples: int, seed: int) -> SpotCheck:
    """Randomized spot check for graphs too large to enumerate.

    ``min_kappa`` is an upper bound on the true kappa_{r,s}; a witness means
    the graph is certainly not resilient.
    """
    _check_rs(g, r, s)
    rng = np.random.default_rng(seed)
    m = g.n - r
    best: int | None = None
    for _ in range(samples):
        kept = tuple(sorted(rng.choice(g.n, size=m, replace=False).tolist()))
        index, base, choices = _subset_plan(g, kept, s)
        combo = tuple(c[int(rng.integers(len(c)))] for c in choices)
        masks = list(base)
        for k, removed in enumerate(combo):
            for j in removed:
                masks[k] &= ~(1 << index[j])
        mask = _roots_mask(masks, m)
        if not mask:
            return SpotCheck(samples, 0, _spec_of(kept, combo))
        c = mask.bit_count()
        best = c if best is None else min(best, c)
    return SpotCheck(samples, best, None)


def min_neighbor_precheck(g: DiGraph, r: int, s: int) -> bool:
    """Necessary condition for (r, s)-resilience when s >= 1: every vertex has r+s+1 neighbors.

    The bound does not hold for s = 0 (a directed 4-cycle is (1, 0)-resilient),
    so it is only meaningful as a filter with s >= 1.
    """
    if s < 1:
        raise InvalidParams("the neighbor-count precheck is only valid for s >= 1")
    return all(g.in_degree(i) >= r + s + 1 for i in range(g.n))


# ---------------------------------------------------------------------------
# composition and scrambling


def _with_self_arcs(g: DiGraph, self_arcs: bool | Collection[int]) -> list[int]:
    masks = list(g.in_masks)
    if self_arcs is True:
        loops: Iterable[int] = range(g.n)
    elif self_arcs is False:
        loops = ()
    else:
        loops = self_arcs
    for v in loops:
        masks[v] |= 1 << v
    return masks


def compose(gq: DiGraph, gp: DiGraph, self_arcs: bool = True) -> DiGraph:
    """Composition ``gq ∘ gp``: arc (i, j) whenever i -> k in gp and k -> j in gq.

    With ``self_arcs`` the inputs are treated as carrying a self-arc at every
    vertex, so the result contains every arc of both inputs.  Self-arcs of the
    result are implicit and not stored.
    """
    if gq.n != gp.n:
        raise SizeMismatch(f"cannot compose graphs on {gq.n} and {gp.n} vertices")
    p_in = _with_self_arcs(gp, self_arcs)
    q_in = _with_self_arcs(gq, self_arcs)
    edges = set()
    for j in range(gq.n):
        # neighbors of j in the composition: in-neighbors (in gp) of j's in-neighbors in gq
        mask = 0
        for k in _mask_to_set(q_in[j]):
            mask |= p_in[k]
        for i in _mask_to_set(mask):
            if i != j:
                edges.add((i, j))
    return DiGraph(gq.n, frozenset(edges))


def is_neighbor_shared(g: DiGraph, self_arcs: bool | Collection[int] = True) -> bool:
    """True iff every pair of distinct vertices has a common neighbor.

    ``self_arcs`` may be a bool or the set of vertices carrying a self-arc; a
    self-arc makes a vertex its own neighbor.
    """
    masks = _with_self_arcs(g, self_arcs)
    for i in range(g.n):
        for j in range(i + 1, g.n):
            if not masks[i] & masks[j]:
                return False
    return True


def graph_of(m: np.ndarray, tol: float = 0.0) -> tuple[DiGraph, frozenset[int]]:
    """Graph of a nonnegative square matrix and its self-arc vertices.

    Arc (k, i) exists whenever ``m[i, k] > tol``: row i draws on vertex k.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise SizeMismatch(f"expected a square matrix, got shape {m.shape}")
    rows, cols = np.nonzero(m > tol)
    edges = frozenset((int(k), int(i)) for i, k in zip(rows, cols) if i != k)
    loops = frozenset(int(i) for i in range(m.shape[0]) if m[i, i] > tol)
    return DiGraph(m.shape[0], edges), loops


# ---------------------------------------------------------------------------
# stochastic-matrix diagnostics


def check_substochastic(m: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSubstochastic(f"expected a square matrix, got shape {m.shape}")
    if (m < -tol).any():
        raise NotSubstochastic("matrix has negative entries")
    if (m.sum(axis=1) > 1 + tol).any():
        raise NotSubstochastic("some row sums exceed one")
    return m


def is_stochastic(m: np.ndarray, tol: float = 1e-12) -> bool:
    m = np.asarray(m, dtype=float)
    return bool((m >= -tol).all() and np.allclose(m.sum(axis=1), 1.0, atol=tol, rtol=0))


def ergodicity_coefficient(m: np.ndarray) -> float:
    """max over row pairs of 1 - sum_k min(m_ik, m_jk); lies in [0, 1] for substochastic m."""
    m = check_substochastic(m)
    overlap = np.minimum(m[:, None, :], m[None, :, :]).sum(axis=2)
    return float(np.clip((1.0 - overlap).max(), 0.0, 1.0))


def eta_bound(neighborhood_sizes: Iterable[int], d: int, beta: int) -> float:
    """Uniform lower bound on the certified consensus weights.

    ``min_i 1 / ((d*beta + 1) (1 + a_i) C((d+1)beta + 1, d*beta + 1))`` with
    ``a_i = C(|N_i|, (d+1)beta + 1)``.
    """
    sizes = list(neighborhood_sizes)
    if not sizes:
        raise InvalidParams("need at least one neighborhood size")
    need = (d + 1) * beta + 1
    if min(sizes) < need:
        raise TooFewNeighbors(f"every agent needs at least {need} neighbors, got {min(sizes)}")
    per_hull = math.comb(need, d * beta + 1)
    a_max = max(math.comb(k, need) for k in sizes)
    return 1.0 / ((d * beta + 1) * (1 + a_max) * per_hull)


def lambda_rate(eta: float, n: int) -> float:
    """Geometric consensus rate ``(1 - eta^(n-1))^(1/(n-1))``."""
    if not 0.0 < eta <= 1.0:
        raise InvalidEta(f"eta must lie in (0, 1], got {eta}")
    if n < 2:
        raise InvalidParams(f"need n >= 2, got {n}")
    return (1.0 - eta ** (n - 1)) ** (1.0 / (n - 1))
