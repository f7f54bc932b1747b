"""Independent reference implementations used only by the tests.

Nothing here imports the package's algorithms: graphs are plain edge sets,
reachability is a set-based search, and reduced graphs are enumerated
straight from the definition with itertools.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


# ---------------------------------------------------------------------------
# graphs


def reach_from(v, vertices, edges):
    """Vertices reachable from v (including v) following arcs j -> i."""
    out = {u: [] for u in vertices}
    for j, i in edges:
        out[j].append(i)
    seen = {v}
    stack = [v]
    while stack:
        u = stack.pop()
        for w in out[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def brute_roots(vertices, edges):
    vertices = list(vertices)
    full = set(vertices)
    return {v for v in vertices if reach_from(v, vertices, edges) == full}


def brute_reduced(n, edges, r, s):
    """Every (r, s)-reduced graph as (kept, edge set), straight from the definition."""
    edges = set(edges)
    for kept in itertools.combinations(range(n), n - r):
        ks = set(kept)
        induced = {(j, i) for j, i in edges if j in ks and i in ks}
        per_vertex = []
        for v in kept:
            incoming = sorted(e for e in induced if e[1] == v)
            per_vertex.append(list(itertools.combinations(incoming, min(s, len(incoming)))))
        for choice in itertools.product(*per_vertex):
            removed = {e for grp in choice for e in grp}
            yield kept, induced - removed


def brute_resilience(n, edges, r, s):
    """(resilient, kappa or None, number of reduced graphs)."""
    best = None
    count = 0
    resilient = True
    for kept, es in brute_reduced(n, edges, r, s):
        count += 1
        k = len(brute_roots(kept, es))
        if k == 0:
            resilient = False
        elif best is None or k < best:
            best = k
    return resilient, (best if resilient else None), count


def all_labeled_digraphs(n):
    pairs = [(j, i) for j in range(n) for i in range(n) if i != j]
    for mask in range(1 << len(pairs)):
        yield frozenset(p for b, p in enumerate(pairs) if mask >> b & 1)


@lru_cache(maxsize=None)
def isomorphism_class_representatives(n):
    """One edge set per isomorphism class of digraphs on n vertices (smallest canonical mask)."""
    pairs = [(j, i) for j in range(n) for i in range(n) if i != j]
    bit = {p: b for b, p in enumerate(pairs)}
    masks = np.arange(1 << len(pairs), dtype=np.uint32)
    canon = masks.copy()
    for perm in itertools.permutations(range(n)):
        img = np.zeros_like(masks)
        for b, (j, i) in enumerate(pairs):
            img |= ((masks >> np.uint32(b)) & np.uint32(1)) << np.uint32(bit[(perm[j], perm[i])])
        np.minimum(canon, img, out=canon)
    reps = np.unique(canon)
    return [frozenset(p for b, p in enumerate(pairs) if int(m) >> b & 1) for m in reps]


# ---------------------------------------------------------------------------
# matrices


def mu_by_definition(m):
    n = len(m)
    worst = 0.0
    for i in range(n):
        for j in range(n):
            worst = max(worst, 1.0 - sum(min(m[i][k], m[j][k]) for k in range(n)))
    return worst


def perron_left(m, iters=20000):
    """Left Perron vector of a stochastic matrix by power iteration on the transpose."""
    p = np.full(m.shape[0], 1.0 / m.shape[0])
    for _ in range(iters):
        p = p @ m
    return p / p.sum()


# ---------------------------------------------------------------------------
# objectives


def ball_hinge_sum_grid(centers, radii, lo=-30.0, hi=30.0, step=1e-2):
    """Grid argmin of sum_i max(0, |x - c_i| - r_i) on [lo, hi] (d = 1)."""
    xs = np.arange(lo, hi + step / 2, step)
    vals = np.zeros_like(xs)
    for c, r in zip(centers, radii):
        vals += np.maximum(np.abs(xs - c) - r, 0.0)
    best = vals.min()
    near = xs[vals <= best + 1e-9]
    return float(near.min()), float(near.max())


def grid_redundant(centers, radii, k, step=1e-2):
    """Every (n-k)-subset has the same grid argmin interval (to one grid step)."""
    n = len(centers)
    ref = None
    for sub in itertools.combinations(range(n), n - k):
        iv = ball_hinge_sum_grid([centers[i] for i in sub], [radii[i] for i in sub], step=step)
        if ref is None:
            ref = iv
        elif abs(iv[0] - ref[0]) > 1.5 * step or abs(iv[1] - ref[1]) > 1.5 * step:
            return False
    return True


# ---------------------------------------------------------------------------
# update rule, evaluated by hand


def hand_update_1d(x_i, received, beta, grad=0.0, alpha=0.0):
    """d = 1 update: median-gap picks over every (2beta+1)-subset, then average and step."""
    vals = [received[k] for k in sorted(received)]
    picks = []
    for a in itertools.combinations(vals, 2 * beta + 1):
        lo = max(min(b) for b in itertools.combinations(a, beta + 1))
        hi = min(max(b) for b in itertools.combinations(a, beta + 1))
        picks.append((lo + hi) / 2)
    v = (x_i + sum(picks)) / (1 + len(picks))
    return v - alpha * grad, v


# ---------------------------------------------------------------------------
# hull-intersection instances


def lemma4_instance(rng, d, beta, n_max=10):
    """One A-set of (d+1)beta+1 received values, at most beta of them corrupted.

    Honest sources report values near the origin; corrupted ones report
    either huge, duplicated or adversarially placed points.  Returns
    (neighbor ids, values (k, d), corrupted ids).
    """
    k = (d + 1) * beta + 1
    n_nbrs = int(rng.integers(k, max(k, n_max) + 1))
    ids = sorted(rng.choice(n_max * 3, size=n_nbrs, replace=False).tolist())
    chosen = sorted(rng.choice(ids, size=k, replace=False).tolist())
    vals = rng.normal(size=(k, d)) * rng.choice([1e-3, 1.0, 50.0])
    if rng.random() < 0.2:
        vals[1:] = vals[0]  # fully degenerate hulls
    elif rng.random() < 0.3:
        vals[k // 2 :] = vals[: k - k // 2]  # duplicated points
    n_bad = int(rng.integers(0, beta + 1))
    bad = rng.choice(k, size=n_bad, replace=False)
    for b in bad:
        mode = rng.integers(3)
        if mode == 0:
            vals[b] = rng.normal(size=d) * 1e6
        elif mode == 1:
            vals[b] = vals[(b + 1) % k] + rng.normal(size=d) * 1e-9
        else:
            vals[b] = -vals.mean(axis=0) * 100
    return chosen, vals, [chosen[b] for b in bad]


def scipy_feasible(points_per_hull):
    """Reference feasibility of a common point via scipy's HiGHS (test oracle only)."""
    from scipy.optimize import linprog

    sizes = [len(p) for p in points_per_hull]
    d = points_per_hull[0].shape[1]
    offsets = np.cumsum([d] + sizes)
    nvar = int(offsets[-1])
    rows, rhs = [], []
    for s, pts in enumerate(points_per_hull):
        lo, hi = offsets[s], offsets[s + 1]
        for c in range(d):
            row = np.zeros(nvar)
            row[c] = 1.0
            row[lo:hi] = -pts[:, c]
            rows.append(row)
            rhs.append(0.0)
        row = np.zeros(nvar)
        row[lo:hi] = 1.0
        rows.append(row)
        rhs.append(1.0)
    bounds = [(None, None)] * d + [(0, None)] * (nvar - d)
    res = linprog(np.zeros(nvar), A_eq=np.array(rows), b_eq=np.array(rhs), bounds=bounds, method="highs")
    return res.status == 0
