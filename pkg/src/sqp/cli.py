"""Command-line interface: ``sqp <command> ...``.

Exit codes: 0 success, 2 input-format error, 3 contract violation.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import baselines, data, harness, matcher, metrics, selection, synth
from .errors import ContractError, FormatError, SQPError

logger = logging.getLogger("sqp")


def _workers(args: argparse.Namespace) -> int:
    env = os.environ.get("SQP_WORKERS")
    cap = None
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise FormatError(f"SQP_WORKERS must be an integer, got {env!r}") from None
    n = args.workers if args.workers is not None else (cap or 1)
    return max(1, min(n, cap) if cap else n)


def _csv(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _reference_runs(path: str | None):
    if path is None:
        return None
    return {r.query_id: r for r in data.load_runs(path)}


def cmd_eval(args: argparse.Namespace) -> None:
    spec = metrics.parse_metric(args.metric)
    run_dir = Path(args.runs)
    if not run_dir.is_dir():
        raise FormatError(f"{run_dir} is not a directory")
    files = sorted(p for p in run_dir.iterdir() if p.is_file() and not p.name.startswith("."))
    if not files:
        raise FormatError(f"{run_dir}: no run files")
    runs = {}
    for p in files:
        if p.stem in runs:
            raise FormatError(f"two run files map to configuration id {p.stem!r}")
        runs[p.stem] = data.load_runs(p)
    qrels = data.load_qrels(args.qrels)
    matrix, residuals = metrics.build_matrix(runs, qrels, spec, workers=_workers(args))
    data.save_matrix(matrix, args.out)
    if args.rbp_residuals:
        if spec.kind != "rbp":
            raise ContractError("--rbp-residuals requires an rbp metric")
        with open(args.rbp_residuals, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# config_id\tquery_id\tbase\tresidual\n")
            for (c, q), res in residuals.items():
                fh.write(f"{c}\t{q}\t{matrix.score(c, q)!r}\t{res!r}\n")


def cmd_select(args: argparse.Namespace) -> None:
    matrix = data.load_matrix(args.matrix)
    params = selection.RiskParams(args.objective, args.beta, args.k, args.baseline)
    pool = selection.select_configurations(matrix.queries, matrix.configs, matrix, params)
    selection.save_pool(pool, args.out)


def cmd_train(args: argparse.Namespace) -> None:
    matrix = data.load_matrix(args.matrix)
    pool = selection.load_pool(args.pool)
    vectors = matcher.aggregate_all(
        data.load_features(args.features), args.depth,
        reference_runs=_reference_runs(args.reference_run),
    )
    reference = args.reference_run and Path(args.reference_run).name
    model = matcher.train_model(matrix, pool, vectors, zscore=args.zscore,
                                reference=reference, depth=args.depth)
    matcher.save_model(model, args.out)


def cmd_match(args: argparse.Namespace) -> None:
    model = matcher.load_model(args.model)
    vectors = matcher.aggregate_all(
        data.load_features(args.features), model.depth,
        reference_runs=_reference_runs(args.reference_run),
    )
    matches = {q: matcher.best_match_configuration(model, v) for q, v in vectors.items()}
    matcher.save_assignments(matches, args.out)


def cmd_fuse(args: argparse.Namespace) -> None:
    paths = _csv(args.runs)
    if not paths:
        raise FormatError("--runs needs at least one file")
    per_query: dict[str, list[data.RunList]] = {}
    for p in paths:
        for run in data.load_runs(p):
            per_query.setdefault(run.query_id, []).append(run)
    fused = [baselines.comb_sum(rs, args.norm).to_runlist("combsum") for rs in per_query.values()]
    data.save_runs(fused, args.out)


def cmd_experiment(args: argparse.Namespace) -> None:
    matrix = data.load_matrix(args.matrix)
    methods = _csv(args.methods)
    features = None
    if args.features:
        features = matcher.aggregate_all(
            data.load_features(args.features), args.depth,
            reference_runs=_reference_runs(args.reference_run),
        )
    descriptors = data.load_descriptors(args.descriptors) if args.descriptors else None
    params = harness.ExperimentParams(
        k=args.k, objective=args.objective, beta=args.beta, baseline=args.baseline,
        zscore=args.zscore, seed=args.seed, references=tuple(_csv(args.references or "")),
        reference_method=args.reference_method, workers=_workers(args),
    )
    plan = harness.split_folds(matrix.queries, args.draws, args.seed)
    report = harness.run_experiment(matrix, features, methods, plan, params, descriptors)
    out = Path(args.out)
    suffix = out.suffix.lower()
    if suffix == ".md":
        out.write_text(report.to_markdown(), encoding="utf-8")
    elif suffix == ".tsv":
        out.write_text(report.to_tsv(), encoding="utf-8")
    else:
        out.with_name(out.name + ".tsv").write_text(report.to_tsv(), encoding="utf-8")
        out.with_name(out.name + ".md").write_text(report.to_markdown(), encoding="utf-8")


def cmd_synth(args: argparse.Namespace) -> None:
    spec = synth.SynthSpec(
        n_clusters=args.clusters, configs_per_cluster=args.configs_per_cluster,
        queries_per_cluster=args.queries_per_cluster, base_effectiveness=args.base,
        planted_gap=args.gap, noise_sd=args.noise, feature_dim=args.feature_dim, seed=args.seed,
    )
    out = synth.synth_generate(spec)
    prefix = args.out_prefix
    data.save_matrix(out.matrix, f"{prefix}.matrix.tsv")
    data.save_features(synth.feature_records(out.features), f"{prefix}.features.tsv")
    data.save_descriptors(out.descriptors, f"{prefix}.descriptors.tsv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqp", description="Risk-sensitive configuration selection for selective query processing."
    )
    parser.add_argument("--workers", type=int, default=None,
                        help="parallel workers (capped by SQP_WORKERS when set)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate run files into an effectiveness matrix")
    p.add_argument("--runs", required=True, help="directory with one run file per configuration")
    p.add_argument("--qrels", required=True)
    p.add_argument("--metric", required=True, help="p@10 | ap | ndcg@10 | rr | rbp:0.5:1000")
    p.add_argument("--out", required=True)
    p.add_argument("--rbp-residuals", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("select", help="greedy risk-sensitive pool selection")
    p.add_argument("--matrix", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--objective", choices=["e", "n", "E", "N"], default="e")
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", help="build the query -> configuration matcher")
    p.add_argument("--matrix", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--zscore", action="store_true")
    p.add_argument("--depth", type=int, default=matcher.DEFAULT_DEPTH)
    p.add_argument("--reference-run", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("match", help="assign configurations to new queries")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--reference-run", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("fuse", help="CombSUM fusion of run files")
    p.add_argument("--runs", required=True, help="comma-separated run files")
    p.add_argument("--norm", choices=list(baselines.NORMALIZATIONS), default="minmax")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("experiment", help="cross-validated comparison of methods")
    p.add_argument("--matrix", required=True)
    p.add_argument("--features", default=None)
    p.add_argument("--methods", required=True, help=f"comma-separated from: {', '.join(harness.METHODS)}")
    p.add_argument("--draws", type=int, default=3)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--objective", choices=["e", "n", "E", "N"], default="e")
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--baseline", default=None, help="selection baseline (default: best-trained per fold)")
    p.add_argument("--descriptors", default=None)
    p.add_argument("--zscore", action="store_true")
    p.add_argument("--depth", type=int, default=matcher.DEFAULT_DEPTH)
    p.add_argument("--reference-run", default=None)
    p.add_argument("--references", default=None, help="methods to test significance against")
    p.add_argument("--reference-method", default=None, help="method for improved/degraded counts")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("synth", help="generate a synthetic landscape")
    p.add_argument("--clusters", type=int, default=4)
    p.add_argument("--configs-per-cluster", type=int, default=3)
    p.add_argument("--queries-per-cluster", type=int, default=10)
    p.add_argument("--base", type=float, default=0.4)
    p.add_argument("--gap", type=float, default=0.3)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--feature-dim", type=int, default=None)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except SQPError as exc:
        print(f"sqp {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as exc:
        print(f"sqp {args.command}: {exc}", file=sys.stderr)
        return FormatError.exit_code
    except KeyError as exc:
        print(f"sqp {args.command}: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return ContractError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
