"""Ornstein-Uhlenbeck parametrisation, stationary covariance and model sampling."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import (
    CovarianceFormatError,
    DimensionMismatch,
    LatentNodesPresent,
    NotHurwitz,
    ResampleBudgetExhausted,
    SingularLyapunov,
)
from .graphs import DirectedGraph, marginal_independence_pattern
from .linalg import as_matrix, is_positive_definite, is_symmetric, solve_lyapunov_forward

DEFAULT_ZERO_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class OUModel:
    """Drift ``A`` (support inside the graph's edges) and diagonal diffusion ``D``."""

    graph: DirectedGraph
    drift: np.ndarray
    diffusion: np.ndarray
    minimal: bool = False

    def __post_init__(self):
        d = self.graph.dim
        drift = as_matrix(self.drift, square=True, name="drift")
        diffusion = np.asarray(self.diffusion, dtype=float).reshape(-1)
        if drift.shape != (d, d) or diffusion.shape != (d,):
            raise DimensionMismatch(
                f"graph has {d} nodes, drift {drift.shape}, diffusion {diffusion.shape}"
            )
        if not np.all(diffusion > 0):
            raise ValueError("diffusion entries must be strictly positive")
        mask = support_mask(self.graph)
        if np.any(drift[~mask] != 0):
            raise ValueError("drift has nonzero entries outside the graph's edge set")
        if self.minimal and np.any(drift[mask] == 0):
            raise ValueError("structural minimality: every edge needs a nonzero drift entry")
        drift.setflags(write=False)
        diffusion.setflags(write=False)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "diffusion", diffusion)

    @property
    def diffusion_matrix(self) -> np.ndarray:
        return np.diag(self.diffusion)

    def scaled(self, a: float) -> "OUModel":
        return OUModel(self.graph, a * self.drift, a * self.diffusion, self.minimal)

    def edge_value(self, e: tuple[str, str]) -> float:
        return float(self.drift[self.graph.index(e[1]), self.graph.index(e[0])])


def support_mask(g: DirectedGraph) -> np.ndarray:
    mask = np.zeros((g.dim, g.dim), dtype=bool)
    for i, j in g.drift_support():
        mask[i, j] = True
    return mask


def is_hurwitz(a) -> bool:
    """Hurwitz iff the solution of ``A X + X A^T = -I`` exists and is PD."""
    a = as_matrix(a, square=True, name="A")
    try:
        x = solve_lyapunov_forward(a, np.eye(a.shape[0]))
    except SingularLyapunov:
        return False
    return is_positive_definite(x)


def stationary_covariance(m: OUModel) -> np.ndarray:
    try:
        sigma = solve_lyapunov_forward(m.drift, m.diffusion_matrix)
    except SingularLyapunov:
        raise NotHurwitz("drift is not Hurwitz (singular Lyapunov operator)") from None
    if not is_positive_definite(sigma):
        raise NotHurwitz("drift is not Hurwitz (stationary covariance is not PD)")
    return sigma


def as_covariance(sigma, dim: int | None = None) -> np.ndarray:
    s = as_matrix(sigma, square=True, name="sigma")
    if dim is not None and s.shape[0] != dim:
        raise DimensionMismatch(f"sigma is {s.shape[0]}x{s.shape[0]}, graph has {dim} nodes")
    if not is_symmetric(s):
        raise ValueError("sigma is not symmetric")
    return s


def faithfulness_violations(sigma, g: DirectedGraph, zero_tol: float = DEFAULT_ZERO_TOL) -> list[tuple[str, str]]:
    """Node pairs whose (near-)zero status disagrees with the graph's ancestral pattern."""
    s = np.asarray(sigma, dtype=float)
    if s.shape != (g.dim, g.dim):
        raise DimensionMismatch(f"sigma is {s.shape}, graph has {g.dim} nodes")
    pattern = marginal_independence_pattern(g)
    diag = np.sqrt(np.abs(np.diag(s)))
    bad = []
    for i in range(g.dim):
        for j in range(i + 1, g.dim):
            a, b = g.nodes[i], g.nodes[j]
            is_zero = abs(s[i, j]) <= zero_tol * diag[i] * diag[j]
            if is_zero != pattern.requires_zero(a, b):
                bad.append((a, b))
    return bad


def check_m_faithful(sigma, g: DirectedGraph, zero_tol: float = DEFAULT_ZERO_TOL) -> bool:
    s = np.asarray(sigma, dtype=float)
    if s.shape != (g.dim, g.dim):
        raise DimensionMismatch(f"sigma is {s.shape}, graph has {g.dim} nodes")
    if not is_positive_definite(s):
        return False
    return not faithfulness_violations(s, g, zero_tol)


@dataclass(frozen=True)
class SamplerConfig:
    drift_range: tuple[float, float] = (-10.0, 10.0)
    diffusion_range: tuple[float, float] = (0.0, 10.0)
    seed: int = 0
    max_resamples: int = 10_000
    zero_tol: float = DEFAULT_ZERO_TOL
    negative_self_loops: bool = False

    def __post_init__(self):
        lo, hi = self.drift_range
        if not lo < hi:
            raise ValueError(f"empty drift range {self.drift_range}")
        lo, hi = self.diffusion_range
        if not (0 <= lo < hi):
            raise ValueError(f"diffusion range must satisfy 0 <= lo < hi, got {self.diffusion_range}")
        if self.negative_self_loops and self.drift_range[0] >= 0:
            raise ValueError("negative_self_loops needs a drift range reaching below zero")
        if self.max_resamples < 1:
            raise ValueError("max_resamples must be >= 1")
        if self.zero_tol <= 0:
            raise ValueError("zero_tol must be positive")


def graph_hash(g: DirectedGraph) -> int:
    """Stable 64-bit digest of the graph structure."""
    text = "|".join(g.nodes) + "#" + ";".join(f"{s}>{t}" for s, t in g.edges)
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


@dataclass
class Draw:
    model: OUModel
    sigma: np.ndarray
    faithful: bool
    hurwitz_rejections: int
    faithfulness_rejections: int = 0


class ModelSampler:
    """Counter-based sampler: draw ``index`` depends only on (seed, graph, index)."""

    def __init__(self, graph: DirectedGraph, cfg: SamplerConfig | None = None):
        if graph.has_latent:
            raise LatentNodesPresent("sampling needs a fully observed graph")
        self.graph = graph
        self.cfg = cfg or SamplerConfig()
        self._support = graph.drift_support()
        self._rows = np.array([i for i, _ in self._support])
        self._cols = np.array([j for _, j in self._support])
        self._diag = self._rows == self._cols
        self._key = np.array([self.cfg.seed & (2**64 - 1), graph_hash(graph)], dtype=np.uint64)

    def _rng(self, index: int) -> np.random.Generator:
        bitgen = np.random.Philox(key=self._key, counter=np.array([0, 0, 0, index], dtype=np.uint64))
        return np.random.Generator(bitgen)

    def _proposals(self, index: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        rng = self._rng(index)
        d = self.graph.dim
        lo, hi = self.cfg.drift_range
        dlo, dhi = self.cfg.diffusion_range
        while True:
            vals = rng.uniform(lo, hi, size=len(self._support))
            if self.cfg.negative_self_loops:
                neg = rng.uniform(lo, min(hi, 0.0), size=len(self._support))
                vals = np.where(self._diag, neg, vals)
            diff = rng.uniform(dlo, dhi, size=d)
            if np.any(vals == 0.0) or np.any(diff <= 0.0):
                continue
            a = np.zeros((d, d))
            a[self._rows, self._cols] = vals
            yield a, diff

    def draw(self, index: int) -> Draw:
        """Resample until Hurwitz, then report m-faithfulness without rejecting."""
        rejected = 0
        for a, diff in self._proposals(index):
            if rejected >= self.cfg.max_resamples:
                raise ResampleBudgetExhausted(
                    f"sample {index}: {rejected} non-Hurwitz draws", rejected, 0
                )
            try:
                sigma = solve_lyapunov_forward(a, np.diag(diff))
            except SingularLyapunov:
                rejected += 1
                continue
            # D is PD, so Sigma PD <=> A Hurwitz
            if not is_positive_definite(sigma):
                rejected += 1
                continue
            model = OUModel(self.graph, a, diff, minimal=True)
            faithful = check_m_faithful(sigma, self.graph, self.cfg.zero_tol)
            return Draw(model, sigma, faithful, rejected)
        raise AssertionError("unreachable")

    def sample(self, index: int = 0) -> tuple[OUModel, np.ndarray]:
        """Resample until both Hurwitz and m-faithful."""
        hurwitz = faithless = 0
        for a, diff in self._proposals(index):
            if hurwitz + faithless >= self.cfg.max_resamples:
                raise ResampleBudgetExhausted(
                    f"sample {index}: {hurwitz} non-Hurwitz and {faithless} unfaithful draws",
                    hurwitz,
                    faithless,
                )
            try:
                sigma = solve_lyapunov_forward(a, np.diag(diff))
            except SingularLyapunov:
                hurwitz += 1
                continue
            if not is_positive_definite(sigma):
                hurwitz += 1
                continue
            if not check_m_faithful(sigma, self.graph, self.cfg.zero_tol):
                faithless += 1
                continue
            return OUModel(self.graph, a, diff, minimal=True), sigma
        raise AssertionError("unreachable")


def sample_model(g: DirectedGraph, cfg: SamplerConfig | None = None, index: int = 0) -> tuple[OUModel, np.ndarray]:
    return ModelSampler(g, cfg).sample(index)


ASYMMETRY_RTOL = 1e-6


def _symmetrized(s: np.ndarray, source: str) -> np.ndarray:
    if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] == 0:
        raise CovarianceFormatError(f"{source}: covariance must be square, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise CovarianceFormatError(f"{source}: non-finite entries")
    gap = float(np.max(np.abs(s - s.T)))
    if gap > ASYMMETRY_RTOL * max(float(np.max(np.abs(s))), 1e-300):
        raise CovarianceFormatError(f"{source}: matrix is not symmetric (max |S - S^T| = {gap:.3e})")
    return (s + s.T) / 2


def covariance_from_dict(data: dict, g: DirectedGraph, source: str = "sigma") -> np.ndarray:
    """``{"nodes": [...], "sigma": [[...]]}``, reordered into the graph's node order."""
    if not isinstance(data, dict) or "nodes" not in data or "sigma" not in data:
        raise CovarianceFormatError(f"{source}: JSON covariance needs 'nodes' and 'sigma'")
    names = [str(v) for v in data["nodes"]]
    if sorted(names) != sorted(g.nodes) or len(set(names)) != len(names):
        raise CovarianceFormatError(f"{source}: nodes {names} do not match graph nodes {list(g.nodes)}")
    try:
        s = np.array(data["sigma"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise CovarianceFormatError(f"{source}: {exc}") from None
    s = _symmetrized(s, source)
    if s.shape[0] != len(names):
        raise CovarianceFormatError(f"{source}: {len(names)} node names for a {s.shape[0]}x{s.shape[0]} matrix")
    perm = [names.index(v) for v in g.nodes]
    return s[np.ix_(perm, perm)]


def covariance_from_csv(text: str, g: DirectedGraph, source: str = "sigma") -> np.ndarray:
    """Plain numeric CSV in graph node order, or with a header row of node names."""
    rows = [r for r in csv.reader(io.StringIO(text)) if any(c.strip() for c in r)]
    if not rows:
        raise CovarianceFormatError(f"{source}: empty file")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    try:
        s = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise CovarianceFormatError(f"{source}: cannot parse numbers ({exc})") from None
    if len({len(r) for r in rows}) != 1:
        raise CovarianceFormatError(f"{source}: ragged rows")
    if header is not None:
        return covariance_from_dict({"nodes": header, "sigma": s.tolist()}, g, source)
    s = _symmetrized(s, source)
    if s.shape[0] != g.dim:
        raise CovarianceFormatError(f"{source}: {s.shape[0]}x{s.shape[0]} matrix for a {g.dim}-node graph")
    return s


def load_covariance(path: str | Path, g: DirectedGraph) -> np.ndarray:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CovarianceFormatError(f"{path}: invalid JSON ({exc})") from None
        return covariance_from_dict(data, g, str(path))
    return covariance_from_csv(text, g, str(path))
