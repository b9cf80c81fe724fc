"""Command-line interface: ``signid <subcommand> ...``.

Exit codes: 0 identifiable (or success), 10 non-identifiable, 11 boundary,
1 for errors, 2 for usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .closed_form import CONDITION_CHECKS, SIGN_FORMULAS, ClosedFormResult, closed_form, latent_verdict
from .errors import NotMFaithful, SignIdError, ZeroDenominatorEntry
from .experiment import PROXY_REFERENCE, ExperimentSpec, reproduce_table1, run_experiment
from .feasibility import Verdict, pointwise_classify
from .graphs import DirectedGraph, Edge, catalog, catalog_match, check_target, graphical_criterion, load_graph, parse_edge
from .ou import DEFAULT_ZERO_TOL, ModelSampler, SamplerConfig, load_covariance

EXIT_OK = 0
EXIT_NON_IDENTIFIABLE = 10
EXIT_BOUNDARY = 11
EXIT_ERROR = 1


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    return lo, hi


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SIGNID_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise SignIdError(f"SIGNID_SEED must be an integer, got {env!r}") from None


def resolve_graph(spec: str, edge: str | None = None) -> tuple[DirectedGraph, Edge | None, str | None]:
    """A catalog name or a JSON path; returns (graph, target, catalog name)."""
    entries = catalog()
    if spec in entries and not Path(spec).exists():
        entry = entries[spec]
        g, target = entry.graph, entry.target
    else:
        g, target = load_graph(spec)
    if edge is not None:
        target = check_target(g, parse_edge(edge))
    name = catalog_match(g, target) if target is not None else None
    return g, target, name


def _need_target(g: DirectedGraph, target: Edge | None) -> Edge:
    if target is None:
        raise SignIdError("no target edge: pass --edge SRC->DST or add 'target_edge' to the graph JSON")
    return target


def _emit(obj, fmt: str, text: str | None = None, rows: list[dict] | None = None) -> None:
    if fmt == "json":
        print(json.dumps(obj, indent=2, sort_keys=True))
    elif fmt == "csv":
        rows = rows if rows is not None else [obj]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})
        sys.stdout.write(buf.getvalue())
    else:
        sys.stdout.write(text if text is not None else json.dumps(obj, indent=2) + "\n")


def _edge_str(e) -> str:
    return f"{e[0]}->{e[1]}"


def cmd_catalog(args) -> int:
    entries = list(catalog().values())
    if args.name:
        entries = [e for e in entries if e.name == args.name]
        if not entries:
            raise SignIdError(f"no catalog graph named {args.name!r}; known: {', '.join(catalog())}")
    rows = [
        {
            "name": e.name,
            "column": e.column,
            "nodes": list(e.graph.nodes),
            "edges": [list(x) for x in e.graph.edges if x[0] != x[1]],
            "target": list(e.target),
        }
        for e in entries
    ]
    text = "".join(
        f"{r['column']}  {r['name']:<13} nodes={','.join(r['nodes'])}  "
        f"edges={' '.join(_edge_str(x) for x in r['edges'])}  target={_edge_str(r['target'])}\n"
        for r in rows
    )
    _emit(rows, args.format, text, rows)
    return EXIT_OK


def _closed_form_check(name: str | None, sigma, zero_tol: float) -> dict | None:
    if name is None or (name not in SIGN_FORMULAS and name not in CONDITION_CHECKS):
        return None
    try:
        return closed_form(name, sigma, zero_tol=zero_tol).to_dict()
    except ZeroDenominatorEntry as exc:
        return {"graph": name, "error": str(exc)}


def _is_boundary(cf: dict | None) -> bool:
    if not cf:
        return False
    return cf.get("sign") == "Boundary" or cf.get("report", {}).get("verdict") == "Boundary"


def cmd_classify(args) -> int:
    g, target, name = resolve_graph(args.graph, args.edge)
    e = _need_target(g, target)
    sigma = load_covariance(args.sigma, g)
    try:
        verdict = pointwise_classify(g, sigma, e, zero_tol=args.zero_tol)
    except NotMFaithful as exc:
        pairs = ", ".join(f"{a}-{b}" for a, b in exc.pairs)
        raise SignIdError(f"{exc}" + (f" (violating pairs: {pairs})" if pairs else "")) from None
    cf = _closed_form_check(name, sigma, args.zero_tol)
    out = {"graph": g.name or name, "edge": list(e), "verdict": verdict.to_dict(), "closed_form": cf}
    lines = [f"graph: {out['graph']}", f"edge: {_edge_str(e)}", f"verdict: {verdict.status.value}"]
    for key, w in (("same-sign witness", verdict.witness_same), ("opposite-sign witness", verdict.witness_opposite), ("zero-effect witness", verdict.m0_witness)):
        if w is not None:
            vals = ", ".join(f"{k}={v:.6g}" for k, v in w.values().items())
            lines.append(f"{key} ({w.mode.value}, residual {w.residual:.2e}): {vals}")
    if cf is not None:
        lines.append(f"closed form: {json.dumps(cf, sort_keys=True)}")
    row = {"graph": out["graph"], "edge": _edge_str(e), "verdict": verdict.status.value,
           "closed_form": json.dumps(cf, sort_keys=True) if cf else ""}
    _emit(out, args.format, "\n".join(lines) + "\n", [row])
    if _is_boundary(cf):
        return EXIT_BOUNDARY
    return EXIT_NON_IDENTIFIABLE if verdict.status is Verdict.NON_IDENTIFIABLE else EXIT_OK


def cmd_graphical(args) -> int:
    g, target, _ = resolve_graph(args.graph, args.edge)
    e = _need_target(g, target)
    v = graphical_criterion(g, e)
    out = {"graph": g.name, "edge": list(e), "verdict": v.value}
    _emit(out, args.format, f"{v.value}\n", [{"graph": g.name, "edge": _edge_str(e), "verdict": v.value}])
    return EXIT_OK


def _sampler(args, seed: int) -> SamplerConfig:
    return SamplerConfig(
        drift_range=args.drift_range,
        diffusion_range=args.diffusion_range,
        seed=seed,
        max_resamples=args.max_resamples,
        zero_tol=args.zero_tol,
        negative_self_loops=args.negative_self_loops,
    )


def cmd_sample(args) -> int:
    g, target, _ = resolve_graph(args.graph, args.edge)
    cfg = _sampler(args, _seed(args))
    if args.classify:
        e = _need_target(g, target)
        report = run_experiment(ExperimentSpec(g, e, args.n, cfg, args.engines, True, args.workers))
        data = report.to_dict(timing=args.timing)
        counts = report.counts
        text = (
            f"graph {report.graph} edge {_edge_str(e)} n={report.n} seed={report.seed}\n"
            + "".join(f"{k}: {v}\n" for k, v in counts.items())
            + f"fraction: {report.fraction}\n"
            + f"engine disagreements: {len(report.disagreements)}\n"
            + f"zero-effect test disagreements: {len(report.m0_disagreements)}\n"
        )
        row = {"graph": report.graph, "edge": _edge_str(e), "n": report.n, "seed": report.seed,
               "fraction": report.fraction, **counts}
        _emit(data, args.format, text, [row])
        return EXIT_OK
    sampler = ModelSampler(g, cfg)
    draws = []
    for i in range(args.n):
        d = sampler.draw(i)
        draws.append({
            "index": i,
            "faithful": d.faithful,
            "hurwitz_rejections": d.hurwitz_rejections,
            "drift": d.model.drift.tolist(),
            "diffusion": d.model.diffusion.tolist(),
            "sigma": d.sigma.tolist(),
        })
    out = {"graph": g.name, "nodes": list(g.nodes), "seed": cfg.seed, "samples": draws}
    text = "".join(
        f"#{d['index']} faithful={d['faithful']} rejected={d['hurwitz_rejections']} "
        f"sigma={np.array2string(np.array(d['sigma']), precision=6, separator=',', max_line_width=10**6)}\n"
        for d in draws
    )
    _emit(out, args.format, text, draws)
    return EXIT_OK


def _parse_proxy(item: str) -> tuple[str, DirectedGraph, Edge]:
    column, _, path = item.partition("=")
    if not path or column not in PROXY_REFERENCE:
        raise SignIdError(f"--proxy expects COLUMN=PATH with COLUMN in {sorted(PROXY_REFERENCE)}, got {item!r}")
    g, target = load_graph(path)
    return column, g, _need_target(g, target)


def cmd_table1(args) -> int:
    proxies = [_parse_proxy(p) for p in args.proxy]
    cfg = _sampler(args, _seed(args))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        table = reproduce_table1(cfg.seed, args.n, proxies, cfg, args.workers)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if args.format == "json":
        _emit(table.to_dict(args.timing), "json")
    elif args.format == "csv":
        sys.stdout.write(table.to_csv())
    else:
        text = table.to_text()
        if table.widened:
            text = "warning: low-n, tolerances widened\n" + text
        sys.stdout.write(text)
    return EXIT_OK if table.passed else EXIT_ERROR


def cmd_explain(args) -> int:
    g, target, name = resolve_graph(args.graph, args.edge)
    if name is None:
        raise SignIdError("explain needs one of the catalog structures (see `signid catalog`)")
    out: dict = {"graph": name, "edge": list(target), "latent_H": latent_verdict(name).value}
    if args.sigma:
        sigma = load_covariance(args.sigma, g)
        res: ClosedFormResult = closed_form(name, sigma, zero_tol=args.zero_tol)
        out["closed_form"] = res.to_dict()
    text = "".join(f"{k}: {json.dumps(v, sort_keys=True)}\n" for k, v in out.items())
    row = {k: json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else v for k, v in out.items()}
    _emit(out, args.format, text, [row])
    if "closed_form" in out and _is_boundary(out["closed_form"]):
        return EXIT_BOUNDARY
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="signid", description="Edge-sign identifiability in Lyapunov models.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, graph=True, graph_required=True):
        p.add_argument("--format", choices=("text", "json", "csv"), default="text")
        if graph:
            p.add_argument("--graph", required=graph_required, help="catalog name or graph JSON path")
            p.add_argument("--edge", help="target edge SRC->DST (defaults to the graph's target)")

    def sampling(p):
        p.add_argument("--n", type=int, default=1000)
        p.add_argument("--seed", type=int, default=None, help="master seed (fallback: $SIGNID_SEED, then 0)")
        p.add_argument("--drift-range", type=_range, default=(-10.0, 10.0), metavar="LO,HI")
        p.add_argument("--diffusion-range", type=_range, default=(0.0, 10.0), metavar="LO,HI")
        p.add_argument("--zero-tol", type=float, default=DEFAULT_ZERO_TOL)
        p.add_argument("--max-resamples", type=int, default=10_000, help="attempt cap per sample")
        p.add_argument("--negative-self-loops", action="store_true", help="draw self-loop entries below zero")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--timing", action="store_true", help="include wall time (output no longer byte-stable)")

    p = sub.add_parser("catalog", help="list built-in graphs")
    common(p, graph=False)
    p.add_argument("--name")
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("classify", help="classify the target edge sign for a covariance")
    common(p)
    p.add_argument("--sigma", required=True, help="covariance CSV or JSON {nodes, sigma}")
    p.add_argument("--zero-tol", type=float, default=DEFAULT_ZERO_TOL)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("graphical", help="graphical identifiability criterion")
    common(p)
    p.set_defaults(func=cmd_graphical)

    p = sub.add_parser("sample", help="draw models; with --classify run a full experiment")
    common(p)
    sampling(p)
    p.add_argument("--classify", action="store_true")
    p.add_argument("--engines", choices=("lp", "closed-form", "both"), default="lp")
    p.set_defaults(func=cmd_sample, n=10)

    p = sub.add_parser("table1", help="reproduce the identifiability-fraction table")
    common(p, graph=False)
    sampling(p)
    p.add_argument("--proxy", action="append", default=[], metavar="COLUMN=PATH",
                   help=f"extra graph JSON for column {'/'.join(sorted(PROXY_REFERENCE))}")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("explain", help="closed-form quantities for a catalog structure")
    common(p)
    p.add_argument("--sigma")
    p.add_argument("--zero-tol", type=float, default=DEFAULT_ZERO_TOL)
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SignIdError, OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
