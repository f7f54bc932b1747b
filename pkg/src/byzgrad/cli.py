"""Command-line entry point.

Exit codes: 0 success, 2 config error, 3 a required hypothesis failed,
4 runtime infeasibility (an empty hull intersection).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np

from byzgrad import metrics
from byzgrad.errors import (
    ByzGradError,
    ConfigInvalid,
    HypothesisFailed,
    Infeasible,
    IncompleteDecomposition,
    InvalidParams,
    NotConverged,
    NotResilient,
)
from byzgrad.experiments import load_config, load_graph, load_objectives, sweep, validate_config
from byzgrad.geometry import HullSystem, pick_intersection_point, subset_families
from byzgrad.graphlib import is_resilient, kappa_rs, sample_kappa_rs
from byzgrad.objectives import check_k_redundant
from byzgrad.protocol import run_experiment
from byzgrad.trace import RunTrace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HYPOTHESIS = 3
EXIT_INFEASIBLE = 4


def _emit(obj: Any) -> None:
    print(json.dumps(_jsonable(obj), indent=2))


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, frozenset, set)):
        items = sorted(obj) if isinstance(obj, (frozenset, set)) else obj
        return [_jsonable(v) for v in items]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _spec_dict(spec) -> dict[str, Any] | None:
    if spec is None:
        return None
    return {
        "kept_vertices": list(spec.kept_vertices),
        "removed_edges": [[list(e) for e in grp] for grp in spec.removed_edges],
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_graph_check(args) -> int:
    g = load_graph(args.graph)
    res = is_resilient(g, args.r, args.s)
    _emit({"resilient": res.resilient, "checked": res.checked, "witness": _spec_dict(res.witness)})
    return EXIT_OK


def cmd_graph_kappa(args) -> int:
    g = load_graph(args.graph)
    if args.sample is not None:
        if args.seed is None:
            raise ConfigInvalid("--sample needs --seed")
        spot = sample_kappa_rs(g, args.r, args.s, args.sample, args.seed)
        _emit({
            "samples": spot.samples,
            "min_kappa_upper_bound": spot.min_kappa,
            "witness": _spec_dict(spot.witness),
            "certificate": spot.certificate,
        })
        return EXIT_OK
    try:
        _emit({"kappa": kappa_rs(g, args.r, args.s), "certificate": True})
    except NotResilient as exc:
        _emit({"kappa": None, "resilient": False, "message": str(exc)})
    return EXIT_OK


def cmd_objectives_check(args) -> int:
    objs = load_objectives(args.objectives)
    res = check_k_redundant(objs, args.k)
    _emit({"k": args.k, "redundant": res.redundant, "witness": None if res.witness is None else list(res.witness)})
    return EXIT_OK


def cmd_geom_pick(args) -> int:
    try:
        with open(args.points) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read points: {exc}") from exc
    if isinstance(raw, dict):
        ids = [int(k) for k in raw]
        vals = np.array([np.atleast_1d(raw[k]) for k in raw], dtype=float)
    else:
        vals = np.array([np.atleast_1d(v) for v in raw], dtype=float)
        ids = list(range(len(vals)))
    if vals.ndim != 2 or vals.shape[1] != args.d:
        raise ConfigInvalid(f"points must be vectors of dimension {args.d}")
    order = np.argsort(ids)
    ids = [ids[k] for k in order]
    vals = vals[order]
    a_sets, b_sets = subset_families(ids, args.d, args.beta)
    index = {a: k for k, a in enumerate(ids)}
    out = []
    for a, group in zip(a_sets, b_sets):
        hs = HullSystem(
            np.stack([vals[[index[m] for m in b]] for b in group]), np.array(group)
        )
        cert = pick_intersection_point(hs, args.policy)
        out.append({
            "a_set": list(a),
            "point": cert.point,
            "b_sets": [list(b) for b in group],
            "weights": cert.weights,
            "max_residual": float(cert.residuals(hs).max()),
        })
    _emit({"d": args.d, "beta": args.beta, "picks": out})
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config).with_(seed=args.seed)
    cfg, report = validate_config(cfg)
    trace = run_experiment(cfg)
    trace.write_csv(args.out)
    if args.jsonl:
        trace.write_jsonl(args.jsonl)
    figures = []
    if args.figures:
        from byzgrad.plotting import render_trace_figures

        figures = [str(p) for p in render_trace_figures(trace, args.figures, Path(args.out).stem)]
    _emit({
        "outcome": trace.outcome,
        "message": trace.message,
        "rounds": trace.horizon,
        "final_metrics": trace.final_metrics,
        "hypotheses": report.to_dict(),
        "figures": figures,
    })
    return EXIT_INFEASIBLE if trace.outcome == "pick_infeasible" else EXIT_OK


def _parse_value(text: str) -> Any:
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    values = [_parse_value(v) for v in args.values.split(",")] if args.values else []
    result = sweep(cfg, args.axis, values, workers=args.workers, out_dir=args.out_dir)
    result.write_summary(args.summary)
    rate = None
    if args.axis == "T" and len(values) >= 3:
        good = [(r["T"], r["gap_at_T"]) for r in result.rows if not r["error"]]
        try:
            rate = metrics.rate_fit([t for t, _ in good], [g for _, g in good])
        except ByzGradError as exc:
            rate = f"{type(exc).__name__}: {exc}"
        if args.figures and isinstance(rate, float):
            from byzgrad.plotting import plot_rate

            Path(args.figures).mkdir(parents=True, exist_ok=True)
            plot_rate([t for t, _ in good], [g for _, g in good], rate, Path(args.figures) / "rate.png")
    _emit({"runs": len(result.rows), "errors": result.errors, "rate_slope": rate, "summary": args.summary})
    return EXIT_OK


def analyze_trace(trace: RunTrace, window: int | None = None, pi_horizon: int | None = None) -> dict[str, Any]:
    """Report dictionary for a trace; weight diagnostics need recorded picks."""
    hdr = trace.header
    report: dict[str, Any] = {
        "label": hdr.get("label", ""),
        "outcome": trace.outcome,
        "rounds": trace.horizon,
        "constants": {k: hdr.get(k) for k in ("eta", "kappa", "l", "lambda", "eta_l")},
        "final_metrics": trace.final_metrics,
    }
    contained = [r.containment for r in trace.rounds if r.containment is not None]
    report["containment"] = {"checked": len(contained), "failures": sum(1 for c in contained if not c)}
    if trace.horizon:
        try:
            report["optimality_gap"] = metrics.optimality_gap(trace)
        except ByzGradError as exc:
            report["optimality_gap"] = None
            report["optimality_gap_error"] = str(exc)
    if not trace.rounds or trace.rounds[0].picks is None or hdr.get("eta") is None:
        report["weights"] = None
        return report

    weights = metrics.reconstruct_all(trace)
    eta = hdr["eta"]
    n_h = len(trace.normal)
    full = [w for w in weights if w.complete]
    diag_ok = all(
        w.matrix[k, k] == 1.0 / (1 + w.a[i]) for w in full for k, i in enumerate(w.normal)
    )
    wsec: dict[str, Any] = {
        "rounds": len(weights),
        "fully_decomposed": len(full),
        "rows_stochastic": all(np.allclose(w.matrix.sum(axis=1), 1.0, atol=1e-8) for w in full),
        "diagonal_exact": diag_ok,
        "eta_rows": all(metrics.eta_certified_rows(w, _graph(hdr), hdr["d"], hdr["beta"], eta) for w in full),
    }
    win = window or max(n_h - 1, 1)
    try:
        wsec["windowed_mu_max"] = metrics.windowed_mu(weights, win)
        wsec["windowed_mu_bound"] = 1 - eta ** (n_h - 1)
    except (IncompleteDecomposition, InvalidParams) as exc:
        wsec["windowed_mu_error"] = str(exc)
    h = pi_horizon or max(len(weights) - 2, 1)
    if len(weights) >= h + 1:
        try:
            pe = metrics.estimate_pi(weights, 0, h)
            wsec["pi0"] = pe.pi
            wsec["pi_disagreement"] = pe.disagreement
            if len(weights) >= h + 2:
                wsec["pi_recursion_residual"] = metrics.pi_recursion_residual(weights, 0, h)
        except NotConverged as exc:
            wsec["pi_error"] = str(exc)
    l = hdr.get("l")
    if l and len(weights) >= l:
        wsec["certified_subset"] = sorted(metrics.certified_subset(weights, eta, l, trace.normal))
    report["weights"] = wsec
    return report


def _graph(hdr):
    from byzgrad.graphlib import DiGraph

    return DiGraph(hdr["n"], frozenset(tuple(e) for e in hdr["edges"]))


def cmd_analyze(args) -> int:
    try:
        trace = RunTrace.read_jsonl(args.input)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigInvalid(f"cannot read trace {args.input}: {exc}") from exc
    report = analyze_trace(trace, args.window, args.pi_horizon)
    report_path = Path(args.report)
    fig_dir = Path(args.figures) if args.figures else report_path.parent
    from byzgrad.plotting import render_trace_figures

    report["figures"] = [str(p) for p in render_trace_figures(trace, fig_dir, report_path.stem)]
    csv_path = report_path.with_suffix(".csv")
    trace.write_csv(csv_path)
    report["rounds_csv"] = str(csv_path)
    with open(report_path, "w") as fh:
        json.dump(_jsonable(report), fh, indent=2)
    _emit({"report": str(report_path), "figures": report["figures"], "rounds_csv": str(csv_path)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="byzgrad", description="Resilient distributed subgradient toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    graph = sub.add_parser("graph", help="graph robustness checks").add_subparsers(dest="action", required=True)
    for name, fn in (("check-resilient", cmd_graph_check), ("kappa-rs", cmd_graph_kappa)):
        q = graph.add_parser(name)
        q.add_argument("--graph", required=True)
        q.add_argument("-r", type=int, required=True)
        q.add_argument("-s", type=int, required=True)
        if name == "kappa-rs":
            q.add_argument("--sample", type=int)
            q.add_argument("--seed", type=int)
        q.set_defaults(func=fn)

    objs = sub.add_parser("objectives").add_subparsers(dest="action", required=True)
    q = objs.add_parser("check-redundancy")
    q.add_argument("--objectives", required=True)
    q.add_argument("-k", type=int, required=True)
    q.set_defaults(func=cmd_objectives_check)

    geom = sub.add_parser("geom").add_subparsers(dest="action", required=True)
    q = geom.add_parser("pick")
    q.add_argument("--points", required=True, help="JSON list of neighbor values (or {id: value})")
    q.add_argument("--d", type=int, required=True)
    q.add_argument("--beta", type=int, required=True)
    q.add_argument("--policy", default="auto", choices=("auto", "lp", "midpoint"))
    q.set_defaults(func=cmd_geom_pick)

    q = sub.add_parser("simulate")
    q.add_argument("--config", required=True)
    q.add_argument("--out", required=True, help="per-round CSV")
    q.add_argument("--jsonl")
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--figures", help="directory for PNG figures")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("sweep")
    q.add_argument("--config", required=True)
    q.add_argument("--axis", help="T, seed, beta, d, adversary, pick_policy or a0")
    q.add_argument("--values", help="comma-separated axis values")
    q.add_argument("--summary", required=True)
    q.add_argument("--out-dir")
    q.add_argument("--seed", type=int)
    q.add_argument("--workers", type=int)
    q.add_argument("--figures")
    q.set_defaults(func=cmd_sweep)

    analyze = sub.add_parser("analyze").add_subparsers(dest="action", required=True)
    q = analyze.add_parser("trace")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--report", required=True)
    q.add_argument("--figures")
    q.add_argument("--window", type=int)
    q.add_argument("--pi-horizon", type=int)
    q.set_defaults(func=cmd_analyze)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HypothesisFailed as exc:
        print(f"hypothesis failed: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ByzGradError as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
