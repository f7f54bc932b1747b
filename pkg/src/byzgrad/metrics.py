"""Observer-side analysis of run traces.

Nothing here is available to normal agents: weight reconstruction needs to
know which agents are Byzantine, so it is a diagnostic only.  The effective
weights behind an update are not unique; :func:`reconstruct_weights` builds
the specific decomposition that averages over every all-honest B-set, which
is the one carrying the uniform lower bound ``eta``.
"""

from __future__ import annotations

import math
from collections.abc import Collection, Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from byzgrad.errors import DegenerateData, IncompleteDecomposition, InvalidParams, NotConverged, UnsupportedFamily
from byzgrad.geometry import PointSet, family_positions, hull_membership
from byzgrad.graphlib import DiGraph, ergodicity_coefficient, graph_of, lambda_rate, roots
from byzgrad.objectives import ObjectiveSet, ObjectiveSpec, OptimalSet, optimal_set
from byzgrad.trace import RoundRecord, RunTrace

CONTAINMENT_TOL = 1e-7


def consensus_diameter(states) -> float:
    """Largest pairwise distance between normal states."""
    x = np.asarray(states, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        return 0.0
    diff = x[:, None, :] - x[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).max())


def containment_check(v_i, neighborhood_states, tol: float = CONTAINMENT_TOL) -> bool:
    """Is ``v_i`` in the convex hull of the normal closed-neighborhood states?"""
    pts = np.atleast_2d(np.asarray(neighborhood_states, dtype=float))
    if pts.shape[0] == 1 and np.ndim(v_i) == 0:
        pts = pts.T
    ps = PointSet(pts, tuple(range(pts.shape[0])))
    return hull_membership(np.atleast_1d(v_i), ps, tol).inside


def round_containment(
    rec: RoundRecord, graph: DiGraph, normal: Sequence[int], tol: float = CONTAINMENT_TOL
) -> bool:
    """Containment for every normal agent of one round."""
    row = {a: k for k, a in enumerate(normal)}
    for i in normal:
        members = [row[i]] + [row[j] for j in graph.in_neighbors[i] if j in row]
        if not containment_check(rec.v[row[i]], rec.states[members], tol):
            return False
    return True


# ---------------------------------------------------------------------------
# objective values, vectorized over points


def _family_arrays(objs: Sequence[ObjectiveSpec]):
    centers = np.array([f.center for f in objs])
    radii = np.array([f.radius for f in objs])
    quad = np.array([f.family == "quadratic" for f in objs])
    return centers, radii, quad


def summed_values(objs: Sequence[ObjectiveSpec], points: np.ndarray) -> np.ndarray:
    """``sum_i f_i(p)`` for every row p of ``points``."""
    centers, radii, quad = _family_arrays(objs)
    diff = points[:, None, :] - centers[None, :, :]
    sq = (diff**2).sum(axis=2)
    vals = np.where(quad[None, :], sq, np.maximum(np.sqrt(sq) - radii[None, :], 0.0))
    return vals.sum(axis=1)


class RunningGap:
    """Per-round consensus, distance and running-average optimality gap (S = all normal agents)."""

    def __init__(self, objectives: ObjectiveSet, normal: Sequence[int], xstar: OptimalSet | None):
        self.objs = [objectives[i] for i in normal]
        self.xstar = xstar
        self.sum: np.ndarray | None = None
        self.count = 0
        self.best = (
            float(summed_values(self.objs, xstar.representative()[None, :])[0]) if xstar is not None else math.nan
        )

    def _metrics(self, states: np.ndarray, total: np.ndarray | None, count: int) -> dict[str, float]:
        out = {"diameter": consensus_diameter(states)}
        if self.xstar is None:
            out["max_dist_to_Xstar"] = math.nan
            out["gap"] = math.nan
            return out
        out["max_dist_to_Xstar"] = max(self.xstar.distance_to(x) for x in states)
        if total is None or count == 0:
            out["gap"] = math.nan
        else:
            out["gap"] = float(summed_values(self.objs, total / count).max() - self.best)
        return out

    def observe(self, states: np.ndarray) -> dict[str, float]:
        self.sum = states.copy() if self.sum is None else self.sum + states
        self.count += 1
        return self._metrics(states, self.sum, self.count)

    def peek(self, states: np.ndarray) -> dict[str, float]:
        return self._metrics(states, self.sum, self.count)


def objectives_from_header(header: dict) -> ObjectiveSet:
    return ObjectiveSet(tuple(ObjectiveSpec(o["family"], o["center"], o.get("radius", 0.0)) for o in header["objectives"]))


def optimality_gap(
    trace: RunTrace,
    subset: Collection[int] | None = None,
    T: int | None = None,
    objectives: ObjectiveSet | None = None,
) -> float:
    """``max_j [sum_{i in S} f_i(avg_{tau<T} x_j(tau)) - sum_{i in S} f_i(x*)]``.

    ``S`` defaults to every normal agent and ``x*`` is a point of the argmin
    of the full objective sum.
    """
    objs = objectives if objectives is not None else objectives_from_header(trace.header)
    members = sorted(trace.normal if subset is None else subset)
    horizon = trace.horizon if T is None else T
    if not 0 < horizon <= trace.horizon:
        raise InvalidParams(f"horizon must lie in [1, {trace.horizon}], got {horizon}")
    try:
        xstar = optimal_set(objs)
    except Exception as exc:  # EmptyZeroSet and friends
        raise UnsupportedFamily(f"optimal set unavailable: {exc}") from exc
    sel = [objs[i] for i in members]
    avg = np.stack([r.states for r in trace.rounds[:horizon]]).mean(axis=0)
    best = summed_values(sel, xstar.representative()[None, :])[0]
    return float(summed_values(sel, avg).max() - best)


def rate_fit(horizons: Sequence[int], gaps: Sequence[float]) -> float:
    """Least-squares slope of log(gap) against log(T)."""
    h = np.asarray(horizons, dtype=float)
    g = np.asarray(gaps, dtype=float)
    if h.size < 3 or h.size != g.size:
        raise DegenerateData("need at least three (horizon, gap) samples")
    if (g <= 0).any():
        raise DegenerateData("converged exactly: some gaps are zero")
    slope, _ = np.polyfit(np.log(h), np.log(g), 1)
    return float(slope)


def bound_constants(n_h: int, kappa: int, eta: float) -> tuple[int, float, float]:
    """Window length l = (n_H - kappa + 1)(n_H - 2) + 1, the rate lambda, and eta^l."""
    if n_h < 2:
        raise InvalidParams(f"need at least two normal agents, got {n_h}")
    l = (n_h - kappa + 1) * (n_h - 2) + 1
    return l, lambda_rate(eta, n_h), eta**l


# ---------------------------------------------------------------------------
# weight reconstruction


@dataclass
class WeightMatrixEstimate:
    """Effective mixing matrix of one round over the normal agents."""

    t: int
    matrix: np.ndarray
    normal: tuple[int, ...]
    a: dict[int, int]
    failures: list[tuple[int, int]] = field(default_factory=list)  # (agent, A-set index)

    @property
    def complete(self) -> bool:
        return not self.failures

    def graph(self, threshold: float = 0.0) -> tuple[DiGraph, frozenset[int]]:
        return graph_of(self.matrix, threshold)


def reconstruct_weights(
    rec: RoundRecord,
    byzantine_set: Collection[int],
    graph: DiGraph,
    d: int,
    beta: int,
    normal: Sequence[int] | None = None,
    tol: float = CONTAINMENT_TOL,
) -> WeightMatrixEstimate:
    """Write each v_i(t) as a convex combination of normal states.

    Each pick y_ij is decomposed on every B-set of its A-set that contains
    only normal agents, and those decompositions are averaged.  Picks that
    no such hull contains (a tolerance failure) are recorded in
    ``failures`` and leave the row short of one.
    """
    if rec.picks is None:
        raise InvalidParams("round record carries no picks; run with record_picks=True")
    bad = set(byzantine_set)
    normal = tuple(normal) if normal is not None else tuple(i for i in range(graph.n) if i not in bad)
    row = {a: k for k, a in enumerate(normal)}
    m = len(normal)
    w = np.zeros((m, m))
    a_counts: dict[int, int] = {}
    failures: list[tuple[int, int]] = []
    for i in normal:
        ids = graph.in_neighbors[i]
        a_pos, b_pos = family_positions(len(ids), d, beta)
        a_i = len(a_pos)
        a_counts[i] = a_i
        k_i = row[i]
        w[k_i, k_i] = 1.0 / (1 + a_i)
        picks = rec.picks[i]
        for j in range(a_i):
            honest = [b for b in b_pos[j] if all(ids[p] not in bad for p in b)]
            y = picks[j]
            good = []
            for b in honest:
                members = [ids[p] for p in b]
                pts = rec.states[[row[q] for q in members]]
                mem = hull_membership(y, PointSet(pts, tuple(members)), tol)
                if mem.inside:
                    good.append((members, mem.weights))
            if not honest or len(good) < len(honest):
                failures.append((i, j))
            if not good:
                continue
            scale = 1.0 / ((1 + a_i) * len(good))
            for members, c in good:
                for q, cq in zip(members, c):
                    w[k_i, row[q]] += scale * cq
    return WeightMatrixEstimate(rec.t, w, normal, a_counts, failures)


def _as_matrix(wm) -> np.ndarray:
    return wm.matrix if isinstance(wm, WeightMatrixEstimate) else np.asarray(wm, dtype=float)


def backward_product(weights: Sequence, start: int, length: int) -> np.ndarray:
    """``W(start+length-1) ... W(start+1) W(start)``."""
    mats = [_as_matrix(w) for w in weights[start : start + length]]
    if len(mats) < length:
        raise InvalidParams(f"need {length} matrices from index {start}, have {len(mats)}")
    prod = np.eye(mats[0].shape[0])
    for m in mats:
        prod = m @ prod
    return prod


def windowed_mu_series(weights: Sequence, window: int) -> np.ndarray:
    """mu of every length-``window`` backward product (sliding start)."""
    if window < 1:
        raise InvalidParams("window must be positive")
    for w in weights:
        if isinstance(w, WeightMatrixEstimate) and not w.complete:
            raise IncompleteDecomposition(f"round {w.t} is not fully decomposed")
    if len(weights) < window:
        raise IncompleteDecomposition(f"need {window} decomposed rounds, have {len(weights)}")
    return np.array(
        [ergodicity_coefficient(backward_product(weights, s, window)) for s in range(len(weights) - window + 1)]
    )


def windowed_mu(weights: Sequence, window: int) -> float:
    """Worst (largest) mu over all length-``window`` backward products."""
    return float(windowed_mu_series(weights, window).max())


@dataclass(frozen=True)
class PiEstimate:
    pi: np.ndarray
    disagreement: float


def estimate_pi(weights: Sequence, tau: int, horizon: int, tol: float = 1e-6) -> PiEstimate:
    """Approximate the absolute probability vector at ``tau`` from a long backward product.

    Raises:
        NotConverged: if the product's rows still disagree by more than ``tol``.
    """
    prod = backward_product(weights, tau, horizon)
    first = prod[0]
    disagreement = float(np.abs(prod - first[None, :]).max())
    if disagreement > tol:
        raise NotConverged(f"rows disagree by {disagreement:.3e} after {horizon} rounds", disagreement)
    return PiEstimate(first / first.sum(), disagreement)


def pi_recursion_residual(weights: Sequence, tau: int, horizon: int) -> float:
    """``|| pi(tau)^T - pi(tau+1)^T W(tau) ||_inf`` using equal-length products for both."""
    p0 = estimate_pi(weights, tau, horizon).pi
    p1 = estimate_pi(weights, tau + 1, horizon).pi
    return float(np.abs(p0 - p1 @ _as_matrix(weights[tau])).max())


def persistent_roots(weights: Sequence, eta: float, l: int) -> list[frozenset[int]]:
    """Per window start, the agents that root the eta-graph of W at least |H|-1 times in l rounds.

    Positions are row indices of the weight matrices.
    """
    mats = [_as_matrix(w) for w in weights]
    m = mats[0].shape[0]
    threshold = eta * (1 - 1e-9)
    root_sets = [roots(graph_of(w, threshold)[0]) for w in mats]
    out = []
    for start in range(len(mats) - l + 1):
        counts = np.zeros(m, dtype=int)
        for rs in root_sets[start : start + l]:
            for r in rs:
                counts[r] += 1
        out.append(frozenset(int(i) for i in np.flatnonzero(counts >= m - 1)))
    return out


def certified_subset(weights: Sequence, eta: float, l: int, normal: Sequence[int]) -> frozenset[int]:
    """Agents that persist as roots in every window; empty if none does throughout."""
    windows = persistent_roots(weights, eta, l)
    if not windows:
        return frozenset()
    common = frozenset.intersection(*windows)
    return frozenset(normal[k] for k in common)


def eta_certified_rows(w: WeightMatrixEstimate, graph: DiGraph, d: int, beta: int, eta: float) -> bool:
    """Every row has w_ii >= eta and >= |N_i ∩ H| - d*beta off-diagonal entries >= eta."""
    row = {a: k for k, a in enumerate(w.normal)}
    threshold = eta * (1 - 1e-9)
    for i in w.normal:
        k = row[i]
        honest = [row[j] for j in graph.in_neighbors[i] if j in row]
        if w.matrix[k, k] < threshold:
            return False
        strong = sum(1 for q in honest if w.matrix[k, q] >= threshold)
        if strong < len(honest) - d * beta:
            return False
    return True


def reconstruct_all(trace: RunTrace, graph: DiGraph | None = None) -> list[WeightMatrixEstimate]:
    """Weight estimates for every recorded round of a trace (picks required)."""
    hdr = trace.header
    g = graph if graph is not None else DiGraph(hdr["n"], frozenset(tuple(e) for e in hdr["edges"]))
    byz = [int(b) for b in hdr["byzantine"]]
    return [reconstruct_weights(r, byz, g, hdr["d"], hdr["beta"], trace.normal) for r in trace.rounds]


def summarize(values: Iterable[float]) -> dict[str, float]:
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        return {"count": 0}
    return {"count": int(arr.size), "min": float(arr.min()), "max": float(arr.max()), "mean": float(arr.mean())}
