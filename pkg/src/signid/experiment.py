"""Monte Carlo identifiability experiments and the reference-table comparison."""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable

import numpy as np

from .closed_form import CONDITION_CHECKS, SIGN_FORMULAS, closed_form
from .errors import LatentNodesPresent, ZeroDenominatorEntry
from .feasibility import m0_witness, pointwise_classify
from .graphs import DirectedGraph, Edge, catalog, catalog_match, check_target
from .ou import ModelSampler, SamplerConfig

ENGINES = ("lp", "closed-form", "both")
REFERENCE_ROW = {"a": 1.0, "b": 1.0, "c": 0.44, "d": 0.64, "e": 1.0, "f": 1.0}
PROXY_REFERENCE = {"g": 0.85, "h": 1.0, "i": 1.0}
PARTIAL_TOL = 0.06


@dataclass(frozen=True)
class ExperimentSpec:
    graph: DirectedGraph
    target: Edge
    n_samples: int = 1000
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    engines: str = "lp"
    check_m0: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.engines not in ENGINES:
            raise ValueError(f"engines must be one of {ENGINES}")
        if self.graph.has_latent:
            raise LatentNodesPresent("experiments need a fully observed graph")
        object.__setattr__(self, "target", check_target(self.graph, self.target))

    @property
    def graph_name(self) -> str:
        return self.graph.name or catalog_match(self.graph, self.target) or "custom"


@dataclass
class ExperimentReport:
    graph: str
    edge: list[str]
    n: int
    counts: dict[str, int]
    fraction: float | None
    seed: int
    engines: str
    sampler: dict[str, Any]
    disagreements: list[dict[str, Any]] = field(default_factory=list)
    m0_disagreements: list[dict[str, Any]] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def accepted(self) -> int:
        return self.counts["accepted"]

    def to_dict(self, timing: bool = True) -> dict[str, Any]:
        out = asdict(self)
        if not timing:
            out.pop("wall_time")
        return out

    def to_json(self, timing: bool = True, **kw) -> str:
        return json.dumps(self.to_dict(timing), **kw)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentReport":
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        return cls.from_dict(json.loads(text))


_COUNT_KEYS = (
    "accepted",
    "identifiable",
    "identifiable_plus",
    "identifiable_minus",
    "non_identifiable",
    "boundary",
    "rejected_hurwitz",
    "rejected_faithfulness",
    "closed_form_boundary",
)


def _closed_form_verdict(name: str | None, sigma: np.ndarray):
    if name is None or (name not in SIGN_FORMULAS and name not in CONDITION_CHECKS):
        return None
    try:
        return closed_form(name, sigma)
    except ZeroDenominatorEntry:
        return "zero-denominator"


def _run_one(spec: ExperimentSpec, sampler: ModelSampler, name: str | None, index: int) -> dict[str, Any]:
    """Classify sample ``index``; returns counts and log entries for the reducer."""
    counts = dict.fromkeys(_COUNT_KEYS, 0)
    out: dict[str, Any] = {"counts": counts, "disagreements": [], "m0": []}
    draw = sampler.draw(index)
    counts["rejected_hurwitz"] = draw.hurwitz_rejections
    if not draw.faithful:
        # an unfaithful sample leaves the denominator instead of being redrawn
        counts["rejected_faithfulness"] = 1
        return out
    counts["accepted"] = 1
    g, e = spec.graph, spec.target
    lp = None
    if spec.engines in ("lp", "both"):
        lp = pointwise_classify(
            g, draw.sigma, e, reference=draw.model, check_faithful=False, zero_tol=spec.sampler.zero_tol
        )
        key = {1: "identifiable_plus", -1: "identifiable_minus", 0: "non_identifiable"}[lp.sign]
        counts[key] = 1
        if lp.status.identifiable:
            counts["identifiable"] = 1
        if spec.check_m0:
            zero = m0_witness(g, draw.sigma, e, check_faithful=False, zero_tol=spec.sampler.zero_tol)
            if (zero is not None) == lp.status.identifiable:
                out["m0"].append({
                    "index": index,
                    "lp": lp.to_dict(),
                    "m0_witness": None if zero is None else zero.to_dict(),
                    "sigma": draw.sigma.tolist(),
                })
    cf = None
    if spec.engines in ("closed-form", "both"):
        cf = _closed_form_verdict(name, draw.sigma)
        if cf is None:
            raise ValueError(f"no closed form for graph {name!r}")
        ident = None if cf == "zero-denominator" else cf.identifiable
        if ident is None:
            counts["closed_form_boundary" if lp is not None else "boundary"] = 1
        elif lp is None:
            counts["identifiable" if ident else "non_identifiable"] = 1
            if cf.sign is not None:
                counts["identifiable_plus" if cf.sign.value_int > 0 else "identifiable_minus"] = 1
        else:
            agree = ident == lp.status.identifiable
            if agree and cf.sign is not None:
                agree = cf.sign.value_int == lp.sign
            if not agree:
                out["disagreements"].append({
                    "index": index,
                    "lp": lp.to_dict(),
                    "closed_form": cf.to_dict(),
                    "true_edge_value": draw.model.edge_value(e),
                    "sigma": draw.sigma.tolist(),
                })
    return out


def _run_chunk(args) -> list[dict[str, Any]]:
    spec, name, indices = args
    sampler = ModelSampler(spec.graph, spec.sampler)
    return [_run_one(spec, sampler, name, i) for i in indices]


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Sample, classify and tally; output is independent of ``spec.workers``."""
    start = time.perf_counter()
    name = catalog_match(spec.graph, spec.target)
    indices = list(range(spec.n_samples))
    if spec.workers > 1:
        chunks = [indices[k::spec.workers] for k in range(spec.workers)]
        with ProcessPoolExecutor(spec.workers) as pool:
            parts = list(pool.map(_run_chunk, [(spec, name, c) for c in chunks]))
        results = sorted(
            ((i, r) for c, part in zip(chunks, parts) for i, r in zip(c, part)), key=lambda p: p[0]
        )
        results = [r for _, r in results]
    else:
        results = _run_chunk((spec, name, indices))
    counts = dict.fromkeys(_COUNT_KEYS, 0)
    disagreements, m0_log = [], []
    for r in results:
        for k, v in r["counts"].items():
            counts[k] += v
        disagreements.extend(r["disagreements"])
        m0_log.extend(r["m0"])
    decided = counts["identifiable"] + counts["non_identifiable"]
    return ExperimentReport(
        graph=spec.graph_name,
        edge=list(spec.target),
        n=spec.n_samples,
        counts=counts,
        fraction=counts["identifiable"] / decided if decided else None,
        seed=spec.sampler.seed,
        engines=spec.engines,
        sampler=json.loads(json.dumps(asdict(spec.sampler))),
        disagreements=disagreements,
        m0_disagreements=m0_log,
        wall_time=time.perf_counter() - start,
    )


@dataclass
class Table1Row:
    graph: str
    column: str
    reference: float
    fraction: float | None
    tolerance: float
    widened: bool
    report: ExperimentReport

    @property
    def delta(self) -> float | None:
        return None if self.fraction is None else self.fraction - self.reference

    @property
    def passed(self) -> bool:
        if self.fraction is None:
            return False
        if self.tolerance == 0.0:
            return self.report.counts["non_identifiable"] == 0
        return abs(self.fraction - self.reference) <= self.tolerance

    def to_dict(self, timing: bool = False) -> dict[str, Any]:
        return {
            "graph": self.graph,
            "column": self.column,
            "reference": self.reference,
            "fraction": self.fraction,
            "delta": self.delta,
            "tolerance": self.tolerance,
            "widened": self.widened,
            "pass": self.passed,
            "report": self.report.to_dict(timing),
        }


def cell_tolerance(reference: float, accepted: int) -> tuple[float, bool]:
    """Exact for fully identifiable cells, else +-0.06, widened to 3 sigma + 0.01 at low n."""
    if reference == 1.0:
        return 0.0, False
    if accepted <= 0:
        return PARTIAL_TOL, False
    binomial = 3 * math.sqrt(reference * (1 - reference) / accepted) + 0.01
    if binomial > PARTIAL_TOL:
        return binomial, True
    return PARTIAL_TOL, False


@dataclass
class Table1:
    rows: list[Table1Row]
    seed: int
    n: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def widened(self) -> bool:
        return any(r.widened for r in self.rows)

    def to_dict(self, timing: bool = False) -> dict[str, Any]:
        return {"seed": self.seed, "n": self.n, "pass": self.passed, "rows": [r.to_dict(timing) for r in self.rows]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([
            "graph", "column", "reference", "fraction", "delta", "tolerance", "pass",
            "accepted", "identifiable", "non_identifiable", "rejected_hurwitz", "rejected_faithfulness",
        ])
        for r in self.rows:
            c = r.report.counts
            w.writerow([
                r.graph, r.column, r.reference,
                "" if r.fraction is None else f"{r.fraction:.4f}",
                "" if r.delta is None else f"{r.delta:+.4f}",
                f"{r.tolerance:.4f}", int(r.passed), c["accepted"], c["identifiable"],
                c["non_identifiable"], c["rejected_hurwitz"], c["rejected_faithfulness"],
            ])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'col':<4}{'graph':<16}{'reference':>10}{'fraction':>10}{'delta':>9}{'tol':>8}  result"]
        for r in self.rows:
            frac = "n/a" if r.fraction is None else f"{r.fraction:.4f}"
            delta = "n/a" if r.delta is None else f"{r.delta:+.4f}"
            tol = "exact" if r.tolerance == 0 else f"{r.tolerance:.3f}"
            lines.append(
                f"{r.column:<4}{r.graph:<16}{r.reference:>10.2f}{frac:>10}{delta:>9}{tol:>8}  "
                f"{'PASS' if r.passed else 'FAIL'}"
            )
        return "\n".join(lines) + "\n"


def reproduce_table1(
    seed: int = 0,
    n: int = 1000,
    proxies: Iterable[tuple[str, DirectedGraph, Edge]] = (),
    sampler: SamplerConfig | None = None,
    workers: int = 1,
    engines: str = "lp",
) -> Table1:
    """Run every catalog graph (plus proxies given as ``(column, graph, target)``)."""
    base = sampler or SamplerConfig()
    cfg = SamplerConfig(
        base.drift_range, base.diffusion_range, seed, base.max_resamples, base.zero_tol, base.negative_self_loops
    )
    jobs = [(e.column, e.name, e.graph, e.target, REFERENCE_ROW[e.column]) for e in catalog().values()]
    for column, g, target in proxies:
        if column not in PROXY_REFERENCE:
            raise ValueError(f"proxy column must be one of {sorted(PROXY_REFERENCE)}, got {column!r}")
        jobs.append((column, g.name or f"proxy-{column}", g, target, PROXY_REFERENCE[column]))
    rows = []
    for column, name, g, target, ref in jobs:
        report = run_experiment(ExperimentSpec(g, target, n, cfg, engines, True, workers))
        tol, widened = cell_tolerance(ref, report.accepted)
        rows.append(Table1Row(name, column, ref, report.fraction, tol, widened, report))
    table = Table1(rows, seed, n)
    if table.widened:
        warnings.warn("low-n, tolerances widened", stacklevel=2)
    return table
