"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data or model error. Diagnostics go
to stderr; results go to files or stdout. Every subcommand is a pure function
of its inputs, flags, and seed, so repeated runs produce byte-identical
outputs (timing files are opt-in via --timings for exactly this reason).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import aldag as aldag_mod
from . import inference
from .consensus import (
    ResamplePlan,
    bootstrap_orders,
    consensus_order,
    context_labels_for_depth,
    run_bootstrap_consensus,
    staging_heatmap_export,
)
from .dataset import load_csv, schema_to_json
from .errors import StagedTreeError
from .harness import report_export, run_cv
from .inference import joint_level_iter
from .learning import (
    LearnConfig,
    OrderSearchConfig,
    learn,
    order_search,
    order_search_dp,
    order_search_grouped,
)
from .tree import bic, tree_from_json, tree_to_json

DEFAULT_THREADS_ENV = "STAGEDTREE_THREADS"


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(DEFAULT_THREADS_ENV, "1")))
    except ValueError:
        return 1


def _add_learn_flags(parser):
    parser.add_argument("--algorithm", choices=["bhc", "kparents"], default="bhc")
    parser.add_argument("--k", type=int, default=None, help="parent budget for kparents")
    parser.add_argument("--smoothing", type=float, default=0.0)


def _add_order_flags(parser):
    parser.add_argument("--order", choices=["fixed", "dp", "grouped"], default="dp")
    parser.add_argument("--order-spec", default=None, help="comma-separated variable names for --order fixed")
    parser.add_argument("--groups", default=None, help="semicolon-separated groups of comma-separated names")
    parser.add_argument("--fixed-last", default=None, help="variable pinned to the last position")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stagedtree", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_learn = sub.add_parser("learn", help="learn a staged tree and write model JSON")
    p_learn.add_argument("--input", required=True)
    p_learn.add_argument("--no-header", action="store_true")
    _add_learn_flags(p_learn)
    _add_order_flags(p_learn)
    p_learn.add_argument("--seed", type=int, default=0)
    p_learn.add_argument("--output", required=True)

    p_order = sub.add_parser("order", help="search for a variable ordering")
    p_order.add_argument("--input", required=True)
    p_order.add_argument("--no-header", action="store_true")
    _add_learn_flags(p_order)
    p_order.add_argument("--mode", choices=["dp", "grouped"], default="dp")
    p_order.add_argument("--groups", default=None)
    p_order.add_argument("--fixed-last", default=None)
    p_order.add_argument("--output", default=None, help="optional file for the ordering")

    p_boot = sub.add_parser("bootstrap", help="bootstrap consensus learning pipeline")
    p_boot.add_argument("--input", required=True)
    p_boot.add_argument("--no-header", action="store_true")
    _add_learn_flags(p_boot)
    _add_order_flags(p_boot)
    p_boot.add_argument("--replicates", type=int, default=200)
    p_boot.add_argument("--seed", type=int, default=0)
    p_boot.add_argument("--cut", type=float, default=0.5)
    p_boot.add_argument("--linkage", choices=["average", "complete", "single"], default="average")
    p_boot.add_argument("--threads", type=int, default=_default_threads())
    p_boot.add_argument("--random-ties", type=int, default=None,
                        help="break order-vote ties randomly with this seed instead of by index")
    p_boot.add_argument("--outdir", required=True)

    p_cv = sub.add_parser("cv", help="k-fold cross-validation with within-fold bootstrap")
    p_cv.add_argument("--input", required=True)
    p_cv.add_argument("--no-header", action="store_true")
    p_cv.add_argument("--algorithms", default="bhc", help="e.g. bhc,kparents:4")
    p_cv.add_argument("--folds", type=int, default=10)
    p_cv.add_argument("--replicates", type=int, default=200)
    p_cv.add_argument("--cut", type=float, default=0.5)
    p_cv.add_argument("--linkage", choices=["average", "complete", "single"], default="average")
    p_cv.add_argument("--smoothing", type=float, default=0.0)
    p_cv.add_argument("--predictive-smoothing", type=float, default=1.0)
    p_cv.add_argument("--seed", type=int, default=0)
    p_cv.add_argument("--threads", type=int, default=_default_threads())
    p_cv.add_argument("--fixed-last", default=None)
    p_cv.add_argument("--order-spec", default=None)
    p_cv.add_argument("--reorder-per-fold", action="store_true")
    p_cv.add_argument("--timings", action="store_true",
                      help="also write wall-clock times (non-reproducible bytes)")
    p_cv.add_argument("--outdir", required=True)

    p_aldag = sub.add_parser("aldag", help="compress a model into its labeled DAG")
    p_aldag.add_argument("--model", required=True)
    p_aldag.add_argument("--dot", default=None)
    p_aldag.add_argument("--json", default=None)
    p_aldag.add_argument("--subtree", default=None, help="variable whose dependence subtree to render")
    p_aldag.add_argument("--subtree-dot", default=None)

    p_whatif = sub.add_parser("whatif", help="hard/soft evidence queries")
    p_whatif.add_argument("--model", required=True)
    p_whatif.add_argument("--evidence", action="append", default=[], metavar="VAR=LEVEL")
    p_whatif.add_argument("--soft", action="append", default=[], metavar="VAR=P1,P2,...")
    p_whatif.add_argument("--target", default=None, help="restrict the posterior CSV to one variable")
    p_whatif.add_argument("--virtual", action="store_true",
                          help="treat soft findings as likelihood weights instead of fixed marginals")
    p_whatif.add_argument("--tol", type=float, default=1e-9)
    p_whatif.add_argument("--max-iter", type=int, default=1000)
    p_whatif.add_argument("--output", required=True, help="posterior CSV path")
    p_whatif.add_argument("--dot", default=None, help="annotated DAG with evidence nodes in gray")

    p_mi = sub.add_parser("mi", help="sensitivity table: what-if deltas and mutual information")
    p_mi.add_argument("--model", required=True)
    p_mi.add_argument("--target", required=True)
    p_mi.add_argument("--output", required=True)

    p_export = sub.add_parser("export", help="export model artifacts")
    p_export.add_argument("--model", required=True)
    p_export.add_argument(
        "--what",
        required=True,
        choices=["tree-dot", "aldag-dot", "aldag-json", "schema-json", "joint-csv"],
    )
    p_export.add_argument("--output", required=True)

    return parser


def _load_dataset(args):
    return load_csv(args.input, has_header=not args.no_header)


def _parse_groups(schema, text):
    groups = []
    for chunk in text.split(";"):
        names = [n.strip() for n in chunk.split(",") if n.strip()]
        groups.append(tuple(schema.index(n) for n in names))
    return groups


def _resolve_fixed_last(schema, name):
    return None if name is None else schema.index(name)


def _learn_config(args) -> LearnConfig:
    return LearnConfig(algorithm=args.algorithm, k=args.k, smoothing=args.smoothing)


def _resolve_order(d, cfg, args):
    fixed_last = _resolve_fixed_last(d.schema, args.fixed_last)
    if args.order == "fixed":
        if not args.order_spec:
            raise StagedTreeError("--order fixed requires --order-spec")
        names = [n.strip() for n in args.order_spec.split(",")]
        return tuple(d.schema.index(n) for n in names)
    if args.order == "grouped" and not args.groups:
        raise StagedTreeError("--order grouped requires --groups")
    groups = tuple(_parse_groups(d.schema, args.groups)) if args.groups else None
    search = OrderSearchConfig(mode=args.order, groups=groups)
    order, _ = order_search(d, cfg, search, fixed_last=fixed_last)
    return order


def _cmd_learn(args) -> int:
    d = _load_dataset(args)
    cfg = _learn_config(args)
    order = _resolve_order(d, cfg, args)
    tree = learn(d, order, cfg)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(tree_to_json(tree))
        fh.write("\n")
    names = [d.schema.names[v] for v in order]
    print(f"order: {', '.join(names)}", file=sys.stderr)
    print(f"bic: {bic(tree, d)!r}", file=sys.stderr)
    print(f"model written to {args.output}", file=sys.stderr)
    return 0


def _cmd_order(args) -> int:
    d = _load_dataset(args)
    cfg = _learn_config(args)
    fixed_last = _resolve_fixed_last(d.schema, args.fixed_last)
    if args.mode == "grouped":
        if not args.groups:
            raise StagedTreeError("--mode grouped requires --groups")
        order, score = order_search_grouped(d, _parse_groups(d.schema, args.groups), cfg)
    else:
        order, score = order_search_dp(d, cfg, fixed_last=fixed_last)
    line = ",".join(d.schema.names[v] for v in order)
    print(line)
    print(f"score: {score!r}", file=sys.stderr)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(line + "\n")
    return 0


def _write_votes_csv(votes, names, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable"] + list(names))
        freq = votes.frequencies
        for j, name in enumerate(names):
            writer.writerow([name] + [repr(float(freq[j, k])) for k in range(len(names))])


def _write_edge_csv(edge_table, path):
    from .aldag import LABELS

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["parent", "child", "strength"] + [f"freq_{label}" for label in LABELS])
        for row in edge_table:
            writer.writerow(
                [row.parent, row.child, repr(row.strength)]
                + [repr(row.label_fraction(label)) for label in LABELS]
            )


def _cmd_bootstrap(args) -> int:
    d = _load_dataset(args)
    cfg = _learn_config(args)
    plan = ResamplePlan(args.replicates, args.seed)
    os.makedirs(args.outdir, exist_ok=True)

    votes = None
    if args.order == "fixed":
        if not args.order_spec:
            raise StagedTreeError("--order fixed requires --order-spec")
        order = tuple(d.schema.index(n.strip()) for n in args.order_spec.split(","))
    else:
        fixed_last = _resolve_fixed_last(d.schema, args.fixed_last)
        votes = bootstrap_orders(d, plan, cfg, fixed_last=fixed_last, threads=args.threads)
        decision = consensus_order(votes, tie_seed=args.random_ties)
        order = decision.order
        if fixed_last is not None:
            order = tuple(v for v in order if v != fixed_last) + (fixed_last,)
        if decision.cyclic:
            print("warning: pairwise order votes are cyclic; Copeland order used", file=sys.stderr)
        _write_votes_csv(votes, d.schema.names, os.path.join(args.outdir, "votes.csv"))

    result = run_bootstrap_consensus(
        d, order, plan, cfg, cut=args.cut, linkage=args.linkage, threads=args.threads, votes=votes
    )
    with open(os.path.join(args.outdir, "consensus_model.json"), "w", encoding="utf-8") as fh:
        fh.write(tree_to_json(result.averaged))
        fh.write("\n")
    for depth in range(1, len(order)):
        labels = context_labels_for_depth(d.schema, order, depth)
        staging_heatmap_export(
            result.ensemble.dissimilarity[depth],
            labels,
            os.path.join(args.outdir, f"dissimilarity_depth_{depth}.csv"),
        )
    _write_edge_csv(result.edge_table, os.path.join(args.outdir, "edge_strength.csv"))
    with open(os.path.join(args.outdir, "order.txt"), "w", encoding="utf-8") as fh:
        fh.write(",".join(d.schema.names[v] for v in order) + "\n")
    print(f"consensus results written to {args.outdir}", file=sys.stderr)
    return 0


def _parse_algorithms(text) -> list[LearnConfig]:
    configs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if chunk == "bhc":
            configs.append(LearnConfig("bhc"))
        elif chunk.startswith("kparents:"):
            configs.append(LearnConfig("kparents", k=int(chunk.split(":", 1)[1])))
        else:
            raise StagedTreeError(f"unknown algorithm spec {chunk!r}")
    if not configs:
        raise StagedTreeError("no algorithms given")
    return configs


def _cmd_cv(args) -> int:
    d = _load_dataset(args)
    algorithms = [
        LearnConfig(c.algorithm, k=c.k, smoothing=args.smoothing) for c in _parse_algorithms(args.algorithms)
    ]
    order = None
    if args.order_spec:
        order = tuple(d.schema.index(n.strip()) for n in args.order_spec.split(","))
    report = run_cv(
        d,
        algorithms,
        folds=args.folds,
        bootstrap_replicates=args.replicates,
        cut=args.cut,
        seed=args.seed,
        order=order,
        fixed_last=_resolve_fixed_last(d.schema, args.fixed_last),
        predictive_smoothing=args.predictive_smoothing,
        linkage=args.linkage,
        threads=args.threads,
        reorder_per_fold=args.reorder_per_fold,
    )
    os.makedirs(args.outdir, exist_ok=True)
    report_export(
        report,
        os.path.join(args.outdir, "cv_records.csv"),
        os.path.join(args.outdir, "cv_summary.csv"),
        include_timings=False,
    )
    if args.timings:
        with open(os.path.join(args.outdir, "cv_timings.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fold", "algorithm", "wall_time"])
            for r in report.records:
                writer.writerow([r.fold, r.algorithm, repr(r.wall_time)])
    print(f"cross-validation results written to {args.outdir}", file=sys.stderr)
    return 0


def _load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        return tree_from_json(fh.read())


def _cmd_aldag(args) -> int:
    tree = _load_model(args.model)
    graph = aldag_mod.compress(tree)
    if args.dot:
        aldag_mod.to_dot(graph, args.dot)
        print(f"DOT written to {args.dot}", file=sys.stderr)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(aldag_mod.aldag_to_json(graph))
            fh.write("\n")
        print(f"JSON written to {args.json}", file=sys.stderr)
    if args.subtree:
        if not args.subtree_dot:
            raise StagedTreeError("--subtree requires --subtree-dot PATH")
        child = tree.schema.index(args.subtree)
        sub = aldag_mod.dependence_subtree(tree, graph, child)
        aldag_mod.to_dot(sub, args.subtree_dot)
        print(f"dependence subtree written to {args.subtree_dot}", file=sys.stderr)
    if not (args.dot or args.json or args.subtree):
        for e in sorted(graph.edges, key=lambda e: (e.parent, e.child)):
            names = tree.schema.names
            print(f"{names[e.parent]} -> {names[e.child]} [{e.label}]")
    return 0


def _parse_evidence(pairs):
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise StagedTreeError(f"evidence must look like VAR=LEVEL, got {pair!r}")
        var, level = pair.split("=", 1)
        out[var.strip()] = level.strip()
    return out


def _parse_soft(pairs):
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise StagedTreeError(f"soft evidence must look like VAR=P1,P2,..., got {pair!r}")
        var, values = pair.split("=", 1)
        out[var.strip()] = tuple(float(x) for x in values.split(","))
    return out


def _cmd_whatif(args) -> int:
    tree = _load_model(args.model)
    spec = inference.EvidenceSpec(_parse_evidence(args.evidence), _parse_soft(args.soft))
    if args.virtual:
        weights = {name: np.asarray(w, dtype=float) for name, w in spec.soft.items()}
        for name, label in spec.hard.items():
            var = tree.schema.index(name)
            one_hot = np.zeros(tree.schema.level_counts[var])
            one_hot[tree.schema.level_index(var, label)] = 1.0
            weights[name] = one_hot
        result = inference.condition_virtual(tree, weights)
    else:
        result = inference.run_query(tree, spec, tol=args.tol, max_iter=args.max_iter)
    names = [args.target] if args.target else list(tree.schema.names)
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "level", "probability"])
        for name in names:
            var = tree.schema.index(name)
            vec = result.marginals[tree.schema.names[var]]
            for level, level_name in enumerate(tree.schema.variables[var].levels):
                writer.writerow([name, level_name, repr(float(vec[level]))])
    if result.evidence_probability is not None:
        print(f"evidence probability: {result.evidence_probability!r}", file=sys.stderr)
    if result.iterations is not None:
        print(
            f"soft update converged in {result.iterations} cycles "
            f"(deviation {result.max_deviation!r})",
            file=sys.stderr,
        )
    if args.dot:
        graph = aldag_mod.compress(tree)
        evidence_vars = set(spec.hard) | set(spec.soft)
        annotations = {}
        for name in tree.schema.names:
            vec = result.marginals[name]
            levels = tree.schema.variables[tree.schema.index(name)].levels
            annotations[name] = "\\n".join(
                f"{levels[i]}: {float(vec[i]):.3f}" for i in range(len(levels))
            )
        aldag_mod.to_dot(graph, args.dot, highlight=evidence_vars, annotations=annotations)
        print(f"annotated DAG written to {args.dot}", file=sys.stderr)
    return 0


def _cmd_mi(args) -> int:
    tree = _load_model(args.model)
    target = tree.schema.index(args.target)
    rows = inference.whatif_sweep(tree, target)
    mi_values = {
        tree.schema.names[v]: inference.mutual_information(tree, v, target)
        for v in range(tree.p)
        if v != target
    }
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["predictor", "target_level", "max_change", "direction", "mutual_information"])
        for row in rows:
            writer.writerow(
                [row.predictor, row.target_level, repr(row.max_change), row.direction,
                 repr(mi_values[row.predictor])]
            )
    print(f"sensitivity table written to {args.output}", file=sys.stderr)
    return 0


def _cmd_export(args) -> int:
    tree = _load_model(args.model)
    if args.what == "tree-dot":
        aldag_mod.to_dot(tree, args.output)
    elif args.what == "aldag-dot":
        aldag_mod.to_dot(aldag_mod.compress(tree), args.output)
    elif args.what == "aldag-json":
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(aldag_mod.aldag_to_json(aldag_mod.compress(tree)))
            fh.write("\n")
    elif args.what == "schema-json":
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(schema_to_json(tree.schema))
            fh.write("\n")
    elif args.what == "joint-csv":
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(tree.schema.names) + ["probability"])
            for labels, prob in joint_level_iter(tree):
                writer.writerow(list(labels) + [repr(prob)])
    print(f"{args.what} written to {args.output}", file=sys.stderr)
    return 0


_COMMANDS = {
    "learn": _cmd_learn,
    "order": _cmd_order,
    "bootstrap": _cmd_bootstrap,
    "cv": _cmd_cv,
    "aldag": _cmd_aldag,
    "whatif": _cmd_whatif,
    "mi": _cmd_mi,
    "export": _cmd_export,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except StagedTreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
