"""Analytic sign formulas and partial-identifiability conditions for the catalog graphs.

Every function takes a covariance in the catalog node order and works on
correlations, so results are invariant to rescaling individual variables.
For ``iv`` and ``cycle-iv`` a 3x3 matrix over the observed nodes (Z, X, Y) is
also accepted, since those formulas never touch H.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .errors import ZeroDenominatorEntry
from .linalg import as_matrix

COND_TOL = 1e-8
ZERO_TOL = 1e-9


class Sign(str, Enum):
    PLUS = "Plus"
    MINUS = "Minus"
    BOUNDARY = "Boundary"

    @classmethod
    def of(cls, x: float) -> "Sign":
        return cls.PLUS if x > 0 else cls.MINUS

    @property
    def value_int(self) -> int:
        return {"Plus": 1, "Minus": -1, "Boundary": 0}[self.value]


class ConditionVerdict(str, Enum):
    IDENTIFIABLE = "Identifiable"
    NON_IDENTIFIABLE = "NonIdentifiable"
    BOUNDARY = "Boundary"


class LatentVerdict(str, Enum):
    IDENTIFIABLE = "Identifiable"
    NON_IDENTIFIABLE = "NonIdentifiable"
    UNSUPPORTED = "Unsupported"


@dataclass(frozen=True)
class ConditionReport:
    graph: str
    values: dict[str, Any]
    verdict: ConditionVerdict
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"graph": self.graph, "values": dict(self.values), "verdict": self.verdict.value, "notes": list(self.notes)}


def _corr(sigma, names: tuple[str, ...], i: int, j: int, zero_tol: float) -> float:
    rho = sigma[i, j] / np.sqrt(sigma[i, i] * sigma[j, j])
    if not abs(rho) > zero_tol:
        raise ZeroDenominatorEntry(f"sigma_{names[i]}{names[j]} is (numerically) zero")
    return float(rho)


def _matrix(sigma, dims: tuple[int, ...]) -> np.ndarray:
    s = as_matrix(sigma, square=True, name="sigma")
    if s.shape[0] not in dims:
        raise ValueError(f"expected a {' or '.join(f'{d}x{d}' for d in dims)} covariance, got {s.shape}")
    if np.any(np.diag(s) <= 0):
        raise ValueError("covariance has a non-positive variance")
    return s


def sign_cause_effect(sigma, zero_tol: float = ZERO_TOL) -> Sign:
    s = _matrix(sigma, (2,))
    return Sign.of(_corr(s, ("h", "y"), 0, 1, zero_tol))


def sign_chain(sigma, zero_tol: float = ZERO_TOL) -> Sign:
    s = _matrix(sigma, (3,))
    names = ("h", "x", "y")
    return Sign.of(_corr(s, names, 0, 2, zero_tol) * _corr(s, names, 0, 1, zero_tol))


def _zxy(sigma) -> tuple[np.ndarray, tuple[int, int, int]]:
    s = _matrix(sigma, (3, 4))
    return s, ((0, 1, 2) if s.shape[0] == 3 else (0, 2, 3))


def sign_iv(sigma, zero_tol: float = ZERO_TOL) -> Sign:
    s, (z, x, y) = _zxy(sigma)
    names = {z: "z", x: "x", y: "y"}
    nm = tuple(names.get(k, "h") for k in range(s.shape[0]))
    return Sign.of(_corr(s, nm, z, y, zero_tol) * _corr(s, nm, z, x, zero_tol))


def cycle_iv_ratio(sigma, zero_tol: float = ZERO_TOL) -> tuple[float, float]:
    """Return ``(rho_zy * rho_xy / rho_zx, rho_zy / rho_zx)``."""
    s, (z, x, y) = _zxy(sigma)
    names = {z: "z", x: "x", y: "y"}
    nm = tuple(names.get(k, "h") for k in range(s.shape[0]))
    zy, zx, xy = (_corr(s, nm, a, b, zero_tol) for a, b in ((z, y), (z, x), (x, y)))
    return zy * xy / zx, zy / zx


def sign_cycle_iv(sigma, zero_tol: float = ZERO_TOL, cond_tol: float = COND_TOL) -> Sign:
    r, q = cycle_iv_ratio(sigma, zero_tol)
    if r < 1 - cond_tol:
        return Sign.of(q)
    if r > 1 + cond_tol:
        return Sign.of(-q)
    return Sign.BOUNDARY


def confounding_conditions(sigma, zero_tol: float = ZERO_TOL, cond_tol: float = COND_TOL) -> ConditionReport:
    """Nodes H, X, Y with edges H->X, H->Y and target X->Y.

    Writing K = 2 r_hx r_hy / (r_xy - r_hx r_hy), p = r_hx^2/(1-r_hx^2) and
    q = r_hy^2/(1-r_hy^2), a zero-effect model exists iff K > p + q.
    ``ratio`` = (p+q)/K, so the non-identifiable region is 0 < ratio < 1.
    """
    s = _matrix(sigma, (3,))
    names = ("h", "x", "y")
    hx = _corr(s, names, 0, 1, zero_tol)
    hy = _corr(s, names, 0, 2, zero_tol)
    xy = float(s[1, 2] / np.sqrt(s[1, 1] * s[2, 2]))
    ratio = (2 * hy**2 * hx**2 - hy**2 - hx**2) * (hx * hy - xy) / (
        2 * hx * hy * (hx**2 - 1) * (hy**2 - 1)
    )
    p = hx**2 / (1 - hx**2)
    q = hy**2 / (1 - hy**2)
    gap = xy - hx * hy
    k = 2 * hx * hy / gap if gap != 0 else None
    same_sign = bool(np.sign(hx * hy) == np.sign(xy))
    values = {"rho_hx": hx, "rho_hy": hy, "rho_xy": xy, "ratio": ratio, "K": k, "p": p, "q": q, "c2_sign_match": same_sign}
    if abs(ratio - 1) <= cond_tol or abs(ratio) <= cond_tol:
        verdict = ConditionVerdict.BOUNDARY
    elif 0 < ratio < 1:
        verdict = ConditionVerdict.NON_IDENTIFIABLE
    else:
        verdict = ConditionVerdict.IDENTIFIABLE
    return ConditionReport("confounding", values, verdict)


def cycle3_conditions(sigma, zero_tol: float = ZERO_TOL, cond_tol: float = COND_TOL) -> ConditionReport:
    """Nodes H, X, Y with edges H->X, X->Y, Y->H and target X->Y.

    In the formulas ``h`` is the source of the target edge, ``x`` its parent
    on the cycle and ``y`` the head: rho_hx = r(H,X), rho_hy = r(X,Y),
    rho_xy = r(H,Y) in catalog labels.
    """
    s = _matrix(sigma, (3,))
    names = ("H", "X", "Y")
    r_hx = _corr(s, names, 0, 1, zero_tol)
    r_hy = _corr(s, names, 1, 2, zero_tol)
    r_xy = _corr(s, names, 0, 2, zero_tol)
    gap = r_xy - r_hy * r_hx
    if abs(gap) <= zero_tol:
        raise ZeroDenominatorEntry("rho_xy = rho_hx * rho_hy leaves b undefined; use the LP engine")
    a = r_xy**2 / (1 - r_xy**2) * (r_hx - r_hy * r_xy)
    b = r_hx * r_hy / gap * (r_hx - r_hy / r_xy)
    c = r_hy / r_xy + r_xy * r_hy
    d = r_hx * r_hy / r_xy
    if b == 0:
        raise ZeroDenominatorEntry("b = 0")
    q = (-a + c) / b
    values = {"rho_hx": r_hx, "rho_hy": r_hy, "rho_xy": r_xy, "a": a, "b": b, "c": c, "d": d, "ratio": q}
    near = [name for name, v in (("a", a), ("b", b), ("d", d)) if abs(v) <= cond_tol]
    if near or abs(q - 1) <= cond_tol:
        return ConditionReport("three-cycle", values, ConditionVerdict.BOUNDARY, [f"{n} at threshold" for n in near])
    holds = (
        (d > 0 and a < 0 and b < 0 and q < 1)
        or (d > 0 and a > 0 and b > 0 and q < 1)
        or (d < 0 and a < 0 and b > 0 and q > 1)
        or (d < 0 and a > 0 and b < 0 and q > 1)
    )
    verdict = ConditionVerdict.IDENTIFIABLE if holds else ConditionVerdict.NON_IDENTIFIABLE
    return ConditionReport("three-cycle", values, verdict)


_LATENT = {
    "cause-effect": LatentVerdict.NON_IDENTIFIABLE,
    "confounding": LatentVerdict.NON_IDENTIFIABLE,
    "iv": LatentVerdict.IDENTIFIABLE,
    "cycle-iv": LatentVerdict.IDENTIFIABLE,
    "chain": LatentVerdict.UNSUPPORTED,
    "three-cycle": LatentVerdict.UNSUPPORTED,
}


def latent_verdict(name: str) -> LatentVerdict:
    """Verdict for the target edge when H is latent."""
    try:
        return _LATENT[name]
    except KeyError:
        raise KeyError(f"unknown catalog graph {name!r}") from None


SIGN_FORMULAS = {
    "cause-effect": sign_cause_effect,
    "chain": sign_chain,
    "iv": sign_iv,
    "cycle-iv": sign_cycle_iv,
}
CONDITION_CHECKS = {
    "confounding": confounding_conditions,
    "three-cycle": cycle3_conditions,
}


@dataclass(frozen=True)
class ClosedFormResult:
    """Closed-form answer for one catalog graph: a sign, or a condition report."""

    graph: str
    sign: Sign | None = None
    report: ConditionReport | None = None

    @property
    def identifiable(self) -> bool | None:
        """True/False, or None on a boundary."""
        if self.sign is not None:
            return None if self.sign is Sign.BOUNDARY else True
        assert self.report is not None
        if self.report.verdict is ConditionVerdict.BOUNDARY:
            return None
        return self.report.verdict is ConditionVerdict.IDENTIFIABLE

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"graph": self.graph}
        if self.sign is not None:
            out["sign"] = self.sign.value
        if self.report is not None:
            out["report"] = self.report.to_dict()
        return out


def closed_form(name: str, sigma, zero_tol: float = ZERO_TOL, cond_tol: float = COND_TOL) -> ClosedFormResult:
    if name in SIGN_FORMULAS:
        fn = SIGN_FORMULAS[name]
        sign = fn(sigma, zero_tol, cond_tol) if name == "cycle-iv" else fn(sigma, zero_tol)
        return ClosedFormResult(name, sign=sign)
    if name in CONDITION_CHECKS:
        return ClosedFormResult(name, report=CONDITION_CHECKS[name](sigma, zero_tol, cond_tol))
    raise KeyError(f"no closed form for {name!r}")
