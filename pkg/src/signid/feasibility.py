"""Linear feasibility tests for sign classes of a target edge at a fixed covariance."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .errors import InconsistentInput, LatentNodesPresent, NotMFaithful, NumericalBreakdown
from .graphs import DirectedGraph, Edge, check_target
from .linalg import correlation, inf_norm, lyapunov_residual, lyapunov_scale
from .ou import DEFAULT_ZERO_TOL, OUModel, as_covariance, check_m_faithful, faithfulness_violations, is_hurwitz
from .simplex import FEAS_TOL, phase_one

RESIDUAL_RTOL = 1e-7
DIAG_SLACK = 1e-9
SUPPORT_RTOL = 1e-9


class Mode(str, Enum):
    PLUS = "SignPlus"
    MINUS = "SignMinus"
    ZERO = "Zero"

    @property
    def sign(self) -> int:
        return {"SignPlus": 1, "SignMinus": -1, "Zero": 0}[self.value]


def _edge_name(e: Edge) -> str:
    return f"{e[0]}->{e[1]}"


@dataclass(frozen=True, eq=False)
class FeasibilitySystem:
    """Homogeneous Lyapunov equalities in the unknowns plus normalised bounds.

    ``bounds`` maps unknown index to ``s`` meaning ``s * x >= 1``; unlisted
    unknowns are free. Diffusion unknowns always carry ``+1``.
    """

    graph: DirectedGraph
    sigma: np.ndarray
    edge: Edge
    mode: Mode
    unknowns: tuple[str, ...]
    positions: tuple[tuple[int, int], ...]
    equalities: np.ndarray
    bounds: dict[int, int] = field(default_factory=dict)
    zero_tol: float = DEFAULT_ZERO_TOL

    @property
    def n_drift(self) -> int:
        return len(self.positions)

    @property
    def shape(self) -> tuple[int, int]:
        return self.equalities.shape


def _lyapunov_rows(sigma: np.ndarray, positions) -> np.ndarray:
    d = sigma.shape[0]
    rows, cols = np.triu_indices(d)
    out = np.zeros((len(rows), len(positions) + d))
    for k, (r, c) in enumerate(positions):
        # (A S + S A^T)_ij picks up A[r,c] S[c,j] when r == i and A[r,c] S[c,i] when r == j
        out[:, k] = np.where(rows == r, sigma[c, cols], 0.0) + np.where(cols == r, sigma[c, rows], 0.0)
    for i in range(d):
        out[:, len(positions) + i] = (rows == i) & (cols == i)
    return out


def build_system(
    g: DirectedGraph,
    sigma,
    e: Edge,
    mode: Mode | str,
    extra: tuple[tuple[Edge, int], ...] = (),
    check_faithful: bool = True,
    zero_tol: float = DEFAULT_ZERO_TOL,
) -> FeasibilitySystem:
    """Equality rows ``(A S + S A^T)_ij + D_ij = 0`` over the upper triangle.

    ``extra`` adds ``s * A[k] >= 1`` for further edges (used by support repair).
    """
    if g.has_latent:
        raise LatentNodesPresent(
            "feasibility with latent nodes is bilinear and not supported; "
            f"latent: {sorted(g.latent)}"
        )
    mode = Mode(mode)
    e = check_target(g, e)
    sigma = as_covariance(sigma, g.dim)
    if check_faithful and not check_m_faithful(sigma, g, zero_tol):
        pairs = faithfulness_violations(sigma, g, zero_tol)
        detail = ", ".join(f"({a},{b})" for a, b in pairs) or "sigma is not positive definite"
        raise NotMFaithful(f"sigma is not m-faithful to the graph: {detail}", pairs)
    edges = [x for x in g.edges if not (mode is Mode.ZERO and x == e)]
    positions = tuple((g.index(t), g.index(s)) for s, t in edges)
    unknowns = tuple(_edge_name(x) for x in edges) + tuple(f"D[{v}]" for v in g.nodes)
    bounds = {len(edges) + i: 1 for i in range(g.dim)}
    if mode is not Mode.ZERO:
        bounds[edges.index(e)] = mode.sign
    for edge, s in extra:
        k = edges.index(check_target(g, edge)) if edge[0] != edge[1] else edges.index(edge)
        if k in bounds and bounds[k] != s:
            raise ValueError(f"conflicting bound on {_edge_name(edge)}")
        bounds[k] = int(np.sign(s))
    eq = _lyapunov_rows(sigma, positions)
    eq.setflags(write=False)
    sigma.setflags(write=False)
    return FeasibilitySystem(g, sigma, e, mode, unknowns, positions, eq, bounds, zero_tol)


@dataclass(frozen=True, eq=False)
class FeasibilityWitness:
    """A concrete ``(A', D')`` in the sign class of ``mode``, in covariance units."""

    graph: DirectedGraph
    edge: Edge
    mode: Mode
    drift: np.ndarray
    diffusion: np.ndarray
    residual: float
    scale: float
    t: float | None = None

    @property
    def edge_value(self) -> float:
        return float(self.drift[self.graph.index(self.edge[1]), self.graph.index(self.edge[0])])

    def values(self) -> dict[str, float]:
        out = {}
        for s, t in self.graph.edges:
            out[_edge_name((s, t))] = float(self.drift[self.graph.index(t), self.graph.index(s)])
        for i, v in enumerate(self.graph.nodes):
            out[f"D[{v}]"] = float(self.diffusion[i])
        return out

    def to_dict(self) -> dict[str, Any]:
        out = {
            "mode": self.mode.value,
            "edge": list(self.edge),
            "values": self.values(),
            "residual": self.residual,
            "scale": self.scale,
        }
        if self.t is not None:
            out["t"] = self.t
        return out


def validate_witness(w: FeasibilityWitness, sigma: np.ndarray, require_support: bool = False) -> list[str]:
    """Return the list of violated witness conditions (empty when valid)."""
    problems = []
    dmat = np.diag(w.diffusion)
    res = lyapunov_residual(w.drift, sigma, dmat)
    scale = lyapunov_scale(w.drift, sigma, dmat)
    if not res <= RESIDUAL_RTOL * scale:
        problems.append(f"residual {res:.3e} > {RESIDUAL_RTOL:g} * {scale:.3e}")
    if np.any(w.diffusion < 1 - DIAG_SLACK):
        problems.append(f"diffusion below 1: {w.diffusion.min():.6g}")
    a_e = w.edge_value
    if w.mode is Mode.PLUS and not a_e >= 1 - DIAG_SLACK:
        problems.append(f"edge value {a_e:.6g} is not >= 1")
    if w.mode is Mode.MINUS and not a_e <= -1 + DIAG_SLACK:
        problems.append(f"edge value {a_e:.6g} is not <= -1")
    if w.mode is Mode.ZERO and a_e != 0.0:
        problems.append(f"edge value {a_e:.3e} is not pinned to zero")
    g = w.graph
    mask = np.zeros((g.dim, g.dim), dtype=bool)
    for s, t in g.edges:
        mask[g.index(t), g.index(s)] = True
    if np.any(w.drift[~mask] != 0):
        problems.append("drift has entries outside the edge set")
    if require_support and np.any(np.abs(w.drift[mask]) <= SUPPORT_RTOL * inf_norm(w.drift)):
        problems.append("drift support is smaller than the edge set")
    # eigenvalues are similarity invariant; test in correlation units for conditioning
    sd = np.sqrt(np.diag(sigma))
    if not is_hurwitz(w.drift * sd[None, :] / sd[:, None]):
        problems.append("drift is not Hurwitz")
    return problems


def _standard_form(sys: FeasibilitySystem, eq: np.ndarray):
    """Substitute ``x_k = s(1+u_k)`` for bounded and ``x_k = p_k - n_k`` for free unknowns."""
    n = eq.shape[1]
    cols, rhs = [], np.zeros(eq.shape[0])
    recipe = []
    for k in range(n):
        s = sys.bounds.get(k)
        if s is None:
            recipe.append(("free", len(cols)))
            cols.append(eq[:, k])
            cols.append(-eq[:, k])
        else:
            recipe.append(("bounded", len(cols), s))
            cols.append(s * eq[:, k])
            rhs -= s * eq[:, k]
    return np.column_stack(cols), rhs, recipe


def _recover(z: np.ndarray, recipe) -> np.ndarray:
    x = np.zeros(len(recipe))
    for k, item in enumerate(recipe):
        if item[0] == "free":
            x[k] = z[item[1]] - z[item[1] + 1]
        else:
            x[k] = item[2] * (1.0 + z[item[1]])
    return x


def _normalise(drift: np.ndarray, diffusion: np.ndarray, ev: float | None) -> tuple[np.ndarray, np.ndarray]:
    need = [1.0 / diffusion.min()]
    if ev is not None and ev != 0.0:
        need.append(1.0 / abs(ev))
    c = max(need)
    if c > 1.0:
        return drift * c, diffusion * c
    return drift, diffusion


def _make_witness(g, e, mode, sigma, drift, diffusion, t=None) -> FeasibilityWitness:
    ie, je = g.index(e[1]), g.index(e[0])
    if mode is Mode.ZERO:
        drift = drift.copy()
        drift[ie, je] = 0.0
        drift, diffusion = _normalise(drift, diffusion, None)
    else:
        drift, diffusion = _normalise(drift, diffusion, drift[ie, je])
    dmat = np.diag(diffusion)
    drift.setflags(write=False)
    diffusion.setflags(write=False)
    return FeasibilityWitness(
        g, e, mode, drift, diffusion,
        lyapunov_residual(drift, sigma, dmat), lyapunov_scale(drift, sigma, dmat), t,
    )


def lp_feasible(sys: FeasibilitySystem, feas_tol: float = FEAS_TOL) -> FeasibilityWitness | None:
    """Phase-1 feasibility on the correlation-scaled system; witness mapped back to sigma."""
    g = sys.graph
    r, s = correlation(np.asarray(sys.sigma))
    # entries judged zero by the faithfulness test are zero; round-off would otherwise
    # survive row scaling as a spurious constraint
    r[np.abs(r) <= sys.zero_tol] = 0.0
    eq = _lyapunov_rows(r, sys.positions)
    m, rhs, recipe = _standard_form(sys, eq)
    row_scale = np.max(np.abs(np.column_stack([m, rhs])), axis=1)
    # rows made only of round-off (structural zeros of sigma) would be blown up by scaling
    keep = row_scale > 1e-12 * row_scale.max()
    m, rhs = m[keep] / row_scale[keep, None], rhs[keep] / row_scale[keep]
    res = phase_one(m, rhs, feas_tol)
    if not res.feasible:
        return None
    x = _recover(res.x, recipe)
    d = g.dim
    drift = np.zeros((d, d))
    for k, (i, j) in enumerate(sys.positions):
        # A' = S A~ S^-1
        drift[i, j] = x[k] * s[i] / s[j]
    diffusion = x[sys.n_drift:] * s**2
    w = _make_witness(g, sys.edge, sys.mode, np.asarray(sys.sigma), drift, diffusion)
    problems = validate_witness(w, np.asarray(sys.sigma))
    if problems:
        raise NumericalBreakdown(f"LP reported feasible but the witness is invalid: {'; '.join(problems)}")
    return w


def _support_gaps(w: FeasibilityWitness) -> list[Edge]:
    g = w.graph
    tol = SUPPORT_RTOL * inf_norm(w.drift)
    return [x for x in g.edges if abs(w.drift[g.index(x[1]), g.index(x[0])]) <= tol]


def _combine(w: FeasibilityWitness, drift: np.ndarray, diffusion: np.ndarray, t_max: float, sigma) -> FeasibilityWitness | None:
    """Try ``w + t * (drift, diffusion)`` for a few generic ``t < t_max``; keep the first full-support one."""
    for frac in (0.5, 0.3183098861837907, 0.1414213562373095, 0.05, 0.01):
        t = frac * t_max
        cand = _make_witness(
            w.graph, w.edge, w.mode, sigma, w.drift + t * drift, w.diffusion + t * diffusion
        )
        if not _support_gaps(cand) and not validate_witness(cand, sigma):
            return cand
    return None


def _repair_with_reference(w: FeasibilityWitness, ref: OUModel, sigma) -> FeasibilityWitness | None:
    g = w.graph
    ie, je = g.index(w.edge[1]), g.index(w.edge[0])
    we, ge = w.drift[ie, je], ref.drift[ie, je]
    # the reference solves the same Lyapunov equation, so any positive combination does too
    scale = inf_norm(w.drift) / max(inf_norm(ref.drift), 1e-300)
    t_max = 2.0 * scale if we * ge > 0 else abs(we) / abs(ge)
    return _combine(w, np.asarray(ref.drift), np.asarray(ref.diffusion), t_max, sigma)


def _repair_with_lps(sys: FeasibilitySystem, w: FeasibilityWitness, feas_tol: float) -> FeasibilityWitness | None:
    sigma = np.asarray(sys.sigma)
    for gap in _support_gaps(w):
        g = w.graph
        i, j = g.index(gap[1]), g.index(gap[0])
        if abs(w.drift[i, j]) > SUPPORT_RTOL * inf_norm(w.drift):
            continue  # filled by an earlier helper
        helper = None
        for s in (1, -1):
            hsys = build_system(
                g, sigma, sys.edge, sys.mode, extra=((gap, s),), check_faithful=False, zero_tol=sys.zero_tol
            )
            helper = lp_feasible(hsys, feas_tol)
            if helper is not None:
                break
        if helper is None:
            # every point of this sign class vanishes on ``gap``
            return None
        t_max = 2.0 * inf_norm(w.drift) / max(inf_norm(helper.drift), 1e-300)
        combined = None
        for frac in (0.5, 0.3183098861837907, 0.1414213562373095, 0.05):
            t = frac * t_max
            cand = _make_witness(
                g, w.edge, w.mode, sigma, w.drift + t * helper.drift, w.diffusion + t * helper.diffusion
            )
            before = set(_support_gaps(w)) - {gap}
            if set(_support_gaps(cand)) <= before and not validate_witness(cand, sigma):
                combined = cand
                break
        if combined is None:
            return None
        w = combined
    return w if not _support_gaps(w) else None


def sign_class_witness(
    g: DirectedGraph,
    sigma,
    e: Edge,
    mode: Mode | str,
    reference: OUModel | None = None,
    feas_tol: float = FEAS_TOL,
    check_faithful: bool = True,
    zero_tol: float = DEFAULT_ZERO_TOL,
) -> FeasibilityWitness | None:
    """Witness with ``supp(A') = E`` and the requested sign at ``e``, or None."""
    mode = Mode(mode)
    if mode is Mode.ZERO:
        raise ValueError("use m0_witness for the zero class")
    sys = build_system(g, sigma, e, mode, check_faithful=check_faithful, zero_tol=zero_tol)
    w = lp_feasible(sys, feas_tol)
    if w is None or not _support_gaps(w):
        return w
    sigma = np.asarray(sys.sigma)
    if reference is not None:
        repaired = _repair_with_reference(w, reference, sigma)
        if repaired is not None:
            return repaired
    return _repair_with_lps(sys, w, feas_tol)


class Verdict(str, Enum):
    IDENTIFIABLE_PLUS = "IdentifiablePlus"
    IDENTIFIABLE_MINUS = "IdentifiableMinus"
    NON_IDENTIFIABLE = "NonIdentifiable"

    @property
    def identifiable(self) -> bool:
        return self is not Verdict.NON_IDENTIFIABLE


@dataclass(frozen=True, eq=False)
class PointwiseVerdict:
    status: Verdict
    witness_same: FeasibilityWitness | None
    witness_opposite: FeasibilityWitness | None = None
    m0_witness: FeasibilityWitness | None = None

    @property
    def sign(self) -> int:
        return {Verdict.IDENTIFIABLE_PLUS: 1, Verdict.IDENTIFIABLE_MINUS: -1}.get(self.status, 0)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"status": self.status.value}
        for key in ("witness_same", "witness_opposite", "m0_witness"):
            w = getattr(self, key)
            out[key] = None if w is None else w.to_dict()
        return out


def convex_m0_witness(plus: FeasibilityWitness, minus: FeasibilityWitness, sigma) -> FeasibilityWitness:
    """Zero-at-``e`` point on the segment between opposite-sign witnesses."""
    a_p, a_m = plus.edge_value, minus.edge_value
    if not (a_p > 0 > a_m):
        raise ValueError("need a plus and a minus witness")
    t = abs(a_m) / (abs(a_p) + abs(a_m))
    drift = t * plus.drift + (1 - t) * minus.drift
    diffusion = t * plus.diffusion + (1 - t) * minus.diffusion
    w = _make_witness(plus.graph, plus.edge, Mode.ZERO, np.asarray(sigma), drift, diffusion, t=t)
    problems = validate_witness(w, np.asarray(sigma))
    if problems:
        raise NumericalBreakdown(f"convex combination failed validation: {'; '.join(problems)}")
    return w


def pointwise_classify(
    g: DirectedGraph,
    sigma,
    e: Edge,
    reference: OUModel | None = None,
    feas_tol: float = FEAS_TOL,
    check_faithful: bool = True,
    zero_tol: float = DEFAULT_ZERO_TOL,
) -> PointwiseVerdict:
    """Decide which signs at ``e`` are compatible with ``sigma``.

    ``reference`` is an optional full-support model generating ``sigma``; it is
    only used to restore full support of LP witnesses.
    """
    e = check_target(g, e)
    plus = sign_class_witness(g, sigma, e, Mode.PLUS, reference, feas_tol, check_faithful, zero_tol)
    minus = sign_class_witness(g, sigma, e, Mode.MINUS, reference, feas_tol, False, zero_tol)
    if plus is not None and minus is not None:
        same, opp = plus, minus
        if reference is not None and reference.edge_value(e) < 0:
            same, opp = minus, plus
        return PointwiseVerdict(Verdict.NON_IDENTIFIABLE, same, opp, convex_m0_witness(plus, minus, sigma))
    if plus is not None:
        return PointwiseVerdict(Verdict.IDENTIFIABLE_PLUS, plus)
    if minus is not None:
        return PointwiseVerdict(Verdict.IDENTIFIABLE_MINUS, minus)
    raise InconsistentInput("neither sign is feasible: sigma is outside the model's possible set")


def m0_witness(
    g: DirectedGraph, sigma, e: Edge, feas_tol: float = FEAS_TOL, check_faithful: bool = True,
    zero_tol: float = DEFAULT_ZERO_TOL,
) -> FeasibilityWitness | None:
    sys = build_system(g, sigma, e, Mode.ZERO, check_faithful=check_faithful, zero_tol=zero_tol)
    return lp_feasible(sys, feas_tol)


def m0_member(
    g: DirectedGraph, sigma, e: Edge, feas_tol: float = FEAS_TOL, check_faithful: bool = True,
    zero_tol: float = DEFAULT_ZERO_TOL,
) -> bool:
    return m0_witness(g, sigma, e, feas_tol, check_faithful, zero_tol) is not None
