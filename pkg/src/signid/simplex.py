"""Phase-1 simplex with Bland's rule for feasibility of ``M x = b, x >= 0``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalBreakdown

FEAS_TOL = 1e-9
PIVOT_RTOL = 1e-12
_ENTRY_TOL = 1e-11
COST_RTOL = 1e-10


@dataclass(frozen=True)
class PhaseOneResult:
    feasible: bool
    x: np.ndarray | None
    objective: float
    iterations: int


def phase_one(m: np.ndarray, b: np.ndarray, feas_tol: float = FEAS_TOL, max_iter: int | None = None) -> PhaseOneResult:
    """Minimise the sum of artificial variables over ``M x + a = b``.

    Rows are flipped so that ``b >= 0``; the artificial basis is then an
    obvious starting vertex. Bland's rule (lowest index enters, lowest basic
    index leaves on ties) rules out cycling.
    """
    m = np.array(m, dtype=float)
    b = np.array(b, dtype=float).reshape(-1)
    rows, cols = m.shape
    if b.shape[0] != rows:
        raise ValueError(f"rhs length {b.shape[0]} does not match {rows} rows")
    neg = b < 0
    m[neg] *= -1
    b[neg] *= -1

    tab = np.zeros((rows + 1, cols + rows + 1))
    tab[:rows, :cols] = m
    tab[:rows, cols:cols + rows] = np.eye(rows)
    tab[:rows, -1] = b
    # reduced costs of the phase-1 objective sum(a)
    tab[rows, :cols] = -m.sum(axis=0)
    tab[rows, -1] = -b.sum()
    basis = list(range(cols, cols + rows))

    scale = max(float(np.max(np.abs(m))) if m.size else 0.0, 1.0)
    limit = max_iter or 50 * (rows + cols) + 1000
    it = 0
    while True:
        cost = tab[rows, :-1]
        # reduced costs are judged against their column's current magnitude, which
        # can grow far beyond the input scale after a few small pivots
        colmax = np.max(np.abs(tab[:rows, :-1]), axis=0)
        candidates = np.flatnonzero(cost < -COST_RTOL * np.maximum(colmax, scale))
        if candidates.size == 0:
            break
        if it >= limit:
            raise NumericalBreakdown(f"phase-1 simplex did not terminate in {limit} pivots")
        j = int(candidates[0])
        col = tab[:rows, j]
        pos = np.flatnonzero(col > _ENTRY_TOL * scale)
        if pos.size == 0:
            # phase-1 objective is bounded below by zero
            raise NumericalBreakdown(f"phase-1 objective reported unbounded (reduced cost {cost[j]:.3e})")
        ratios = tab[pos, -1] / col[pos]
        best = ratios.min()
        tied = pos[ratios <= best + 1e-14 * max(1.0, abs(best))]
        r = int(min(tied, key=lambda k: basis[k]))
        piv = tab[r, j]
        if abs(piv) < PIVOT_RTOL * scale:
            raise NumericalBreakdown(f"pivot {piv:.3e} below {PIVOT_RTOL:g} relative")
        tab[r] /= piv
        others = np.arange(rows + 1) != r
        tab[others] -= np.outer(tab[others, j], tab[r])
        basis[r] = j
        it += 1

    objective = max(-tab[rows, -1], 0.0)
    if objective > feas_tol:
        return PhaseOneResult(False, None, objective, it)
    x = np.zeros(cols)
    for r, k in enumerate(basis):
        if k < cols:
            x[k] = max(tab[r, -1], 0.0)
    return PhaseOneResult(True, x, objective, it)
