"""Phase-1 revised simplex with Bland's entering rule.

Finds a point of ``{x >= 0 : A x = b}`` or reports the smallest total
constraint violation reachable.  Only feasibility is needed by this package,
so there is no phase 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


REL_PIVOT = 1e-7


@dataclass(frozen=True)
class PhaseOneResult:
    x: np.ndarray
    infeasibility: float  # optimal sum of artificial variables
    iterations: int

    def feasible(self, tol: float) -> bool:
        return self.infeasibility <= tol


def phase_one(
    a: np.ndarray,
    b: np.ndarray,
    pivot_tol: float = 1e-9,
    max_iter: int | None = None,
    perturbation: float = 1e-10,
) -> PhaseOneResult:
    """Minimize the sum of artificial variables for ``A x + s = b``.

    Revised simplex: the basis is refactorized from the original matrix at
    every iteration, so round-off does not accumulate across pivots.
    Entering variable: lowest index with negative reduced cost (Bland).
    Leaving variable: minimum ratio, ties broken by the larger pivot and then
    the lower basic index.

    Hull systems are massively degenerate (most right-hand sides are zero),
    and in floating point degenerate pivots both stall Bland's rule and pick
    round-off-sized pivots.  The right-hand side is therefore shifted by a
    fixed, row-dependent amount of relative size ``perturbation`` before
    solving.  Callers must judge the returned point against the unperturbed
    system.  Every choice is deterministic.
    """
    a = np.array(a, dtype=float, copy=True)
    b = np.array(b, dtype=float, copy=True)
    m, n = a.shape
    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0
    if max_iter is None:
        max_iter = 50 * (m + n)
    bscale = max(1.0, float(np.abs(b).max(initial=0.0)))
    # distinct positive shifts in [0.5, 1) * perturbation (golden-ratio sequence)
    shifts = 0.5 + 0.5 * np.modf(np.arange(1, m + 1) * 0.6180339887498949)[0]
    bp = b + perturbation * bscale * shifts

    full = np.hstack([a, np.eye(m)])
    cost = np.concatenate([np.zeros(n), np.ones(m)])
    basis = np.arange(n, n + m)
    feas_tol = 1e-3 * perturbation * bscale

    it = 0
    xb = bp.copy()
    previous = None  # basis before the last pivot
    basis_entering = -1
    banned: set[int] = set()
    while it < max_iter:
        try:
            binv = np.linalg.inv(full[:, basis])
        except np.linalg.LinAlgError:
            if previous is None:
                break
            # the last pivot made the basis singular: undo it and try another column
            basis = previous
            banned.add(basis_entering)
            previous = None
            it += 1
            continue
        if previous is not None:
            banned.clear()
        xb = np.maximum(binv @ bp, 0.0)
        reduced = cost - (cost[basis] @ binv) @ full
        reduced[basis] = 0.0
        entering = None
        for col in np.flatnonzero(reduced < -pivot_tol):
            if col in banned:
                continue
            direction = binv @ full[:, col]
            # relative pivot threshold keeps the next basis well conditioned
            ok = direction > max(pivot_tol, REL_PIVOT * float(np.abs(direction).max()))
            if ok.any():
                entering = int(col)
                rows = np.flatnonzero(ok)
                break
            # a phase-1 objective is bounded below, so a ray here is round-off
        if entering is None:
            break
        # Harris two-pass ratio test: the largest pivot among rows whose ratio
        # is within the feasibility tolerance of the minimum, then lowest index
        relaxed = ((xb[rows] + feas_tol) / direction[rows]).min()
        near = rows[xb[rows] / direction[rows] <= relaxed]
        row = min(near, key=lambda r: (-direction[r], basis[r]))
        previous = basis.copy()
        basis_entering = entering
        basis[row] = entering
        it += 1

    # iterative refinement: an ill-conditioned final basis can leave a
    # visible equation residual even though the artificials are zero
    bmat = full[:, basis]
    try:
        for _ in range(3):
            xb = xb + np.linalg.lstsq(bmat, bp - bmat @ xb, rcond=None)[0]
    except np.linalg.LinAlgError:
        pass
    xb = np.maximum(xb, 0.0)
    x = np.zeros(n + m)
    x[basis] = xb
    # polish on the support against the unperturbed right-hand side, clipped
    # to be nonnegative; kept only if it lowers the equation residual
    support = np.flatnonzero(x[:n] > 0)
    if support.size:
        polished = np.zeros(n + m)
        polished[support] = np.maximum(np.linalg.lstsq(full[:, support], b, rcond=None)[0], 0.0)
        if np.abs(full @ polished - b).max() < np.abs(full @ x - b).max():
            x = polished
    return PhaseOneResult(x=x[:n], infeasibility=float(x[n:].sum()), iterations=it)
