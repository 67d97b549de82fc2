"""Command-line entry point: ``grapl run|analyze|gen-graph``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .graph import LaplacianOperator
from .harness import (
    GRAPH_POLICIES,
    ConfigError,
    build_graph,
    emit_csv,
    load_config,
    materialize,
    run,
)
from .policies import resolve_offset


def _parse_graph_spec(text: str) -> dict:
    # "sbm:n=200" or "small_world:n=300,k_ring=4,p_new=0.01"
    kind, _, rest = text.partition(":")
    spec: dict = {"generator": kind}
    for item in filter(None, rest.split(",")):
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"bad graph parameter {item!r}; expected key=value")
        spec[key.strip()] = val.strip()
    return spec


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config).with_overrides(seed=args.seed, trials=args.trials)
    result = run(cfg, threads=args.threads)
    for f in result.failures:
        print(f"trial {f.trial} policy {f.policy} gamma {f.gamma}: {f.message}", file=sys.stderr)
    if any(c.errors.shape[0] for c in result.curves):
        errors_path, agg_path = emit_csv(result.curves, args.out_dir)
        print(f"wrote {errors_path} and {agg_path}")
    return 0 if result.ok else 1


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = load_config(args.config).with_overrides(seed=args.seed)
    graph, inst = materialize(cfg, trial=0)
    out = csv.writer(sys.stdout, lineterminator="\n")
    R = inst.R
    t_grid = sorted({int(t) for t in np.unique(np.geomspace(1, cfg.T, num=args.points).round())})

    done_lams: set[float] = set()
    out.writerow(["policy", "gamma", "quantity", "value"])
    rows = []
    for pc in cfg.policies:
        if pc.policy not in GRAPH_POLICIES:
            continue
        lap = LaplacianOperator(graph, pc.lam)
        offset = resolve_offset(pc.offset, cfg.tau)
        report = analysis.complexities(inst.mu, cfg.tau, cfg.epsilon, lap, offset)
        spec = analysis.Spectrum.from_laplacian(lap)
        base = [pc.name, pc.gamma]
        if pc.lam not in done_lams:
            done_lams.add(pc.lam)
            for key in ("H", "H_tilde", "H_star", "N_small", "smoothness"):
                out.writerow(base + [key, getattr(report, key)])
        if R > 0:
            try:
                gs = analysis.gamma_star(inst.mu, cfg.tau, cfg.epsilon, lap, pc.alpha, R, offset=offset, spectrum=spec)
                out.writerow(base + ["gamma_star", gs.gamma])
                out.writerow(base + ["d_prime", gs.d_prime])
            except (RuntimeError, ValueError) as exc:
                out.writerow(base + ["gamma_star", f"error: {exc}"])
            out.writerow(base + ["T_crit", analysis.critical_iteration(report, spec, pc.gamma, R, pc.alpha, pc.lam)])
        rows.append((pc, report, spec))

    print()
    out.writerow(["policy", "gamma", "T", "d_T", "bound_grapl", "grapl_condition", "bound_nonadaptive", "bound_oracle", "bound_simplified"])
    for pc, report, spec in rows:
        for T in t_grid:
            d_T = analysis.effective_dimension(spec, T, pc.gamma, pc.lam)
            if R > 0:
                th = analysis.bound_grapl(report, spec, T, pc.gamma, R, pc.alpha, pc.lam)
                p1 = analysis.bound_nonadaptive(report, spec, T, pc.gamma, R, pc.lam) if report.H_tilde else None
                p2 = analysis.bound_oracle(report, spec, T, pc.gamma, R, pc.lam) if report.H_star else None
                simp = analysis.bound_simplified(report, spec, T, pc.gamma, R, pc.alpha, pc.lam)
                vals = [
                    format(th.value, ".10g"),
                    int(th.condition_met),
                    "" if p1 is None else format(p1.value, ".10g"),
                    "" if p2 is None else format(p2.value, ".10g"),
                    format(simp.value, ".10g"),
                ]
            else:
                vals = ["", "", "", "", ""]
            out.writerow([pc.name, pc.gamma, T, d_T] + vals)
    if R == 0:
        print("# bounds undefined for noiseless arms (R = 0)", file=sys.stderr)
    return 0


def cmd_gen_graph(args: argparse.Namespace) -> int:
    spec = _parse_graph_spec(args.spec)
    graph, _ = build_graph(spec, np.random.SeedSequence(args.seed))
    path = Path(args.output)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {args.spec} seed={args.seed} n={graph.n_vertices}\n")
        for u, v, w in graph.edges():
            fh.write(f"{u} {v} {w:.10g}\n")
    print(f"wrote {graph.n_edges} edges on {graph.n_vertices} vertices to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grapl", description="Thresholding graph bandit experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config and write CSVs")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--out-dir", default="results")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="complexities, gamma*, and bound curves as CSV")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--points", type=int, default=20, help="size of the T grid")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gen-graph", help="write a generated graph as an edge list")
    p.add_argument("spec", help="e.g. sbm:n=200 or small_world:n=300,k_ring=4,p_new=0.01")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_graph)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"grapl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
