"""Command-line driver: ``simulate``, ``estimate``, ``experiment``, ``variance``."""
from __future__ import annotations

import argparse
import os
import sys

from .errors import TomographyError
from .estimators import EstimatorId, estimate_tree, parse_estimator
from .experiment import DEFAULT_SIZES, PRESETS, ExperimentConfig, emit_table, preset, run_experiment
from .simulate import inject_missing, read_trace, simulate, write_trace
from .tree import load_tree
from .variance import context_from_tree, empirical_variance_check, estimator_variance, variance_table


def split_suite(text: str) -> list[EstimatorId]:
    """Split ``full,pair,local(2,3)`` on commas that sit outside parentheses."""
    items, depth, cur = [], 0, ""
    for ch in text:
        if ch == "," and depth == 0:
            items.append(cur)
            cur = ""
            continue
        depth += (ch == "(") - (ch == ")")
        cur += ch
    items.append(cur)
    return [parse_estimator(s) for s in items if s.strip()]


def _topology(name: str):
    """A JSON file path or one of the preset names; returns (tree, preset suite or None)."""
    if name in PRESETS and not os.path.exists(name):
        return preset(name)
    return load_tree(name), None


def _write(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _cmd_simulate(args) -> None:
    t, _ = _topology(args.topology)
    tr = simulate(t, args.n, args.seed)
    if args.missing:
        tr = inject_missing(tr, args.missing, (args.seed, 1))
    if args.out in (None, "-"):
        write_trace(tr, sys.stdout)
    else:
        write_trace(tr, args.out)


def _cmd_estimate(args) -> None:
    t, _ = _topology(args.topology)
    tr = read_trace(args.trace) if args.trace else simulate(t, args.n, args.seed)
    if tuple(tr.receivers) != t.receivers:
        raise TomographyError(f"trace receivers {tr.receivers} do not match topology receivers {t.receivers}")
    suite = split_suite(args.suite) if args.suite else ()
    _write(estimate_tree(tr, t, suite=suite).to_text(), args.out)


def _cmd_experiment(args) -> None:
    t, suite = _topology(args.topology)
    if args.suite is not None:
        suite = split_suite(args.suite)
    sizes = [int(s) for s in args.n.split(",")] if args.n else list(DEFAULT_SIZES)
    cfg = ExperimentConfig(t, sizes, args.reps, suite, args.seed, args.missing, args.node)
    _write(emit_table(run_experiment(cfg), args.format), args.out)


def _cmd_variance(args) -> None:
    t, _ = _topology(args.topology)
    node = args.node if args.node is not None else t.children[0][0]
    suite = split_suite(args.suite) if args.suite else [EstimatorId.composite(2), EstimatorId.composite(3)]
    rows = []
    for eid in suite:
        ctx = context_from_tree(t, node, eid.order or 2)
        v = estimator_variance(ctx, eid)
        ratio = float("nan")
        if args.reps:
            ratio = empirical_variance_check(t, node, eid, args.n, args.reps, args.seed).ratio
        rows.append((eid.label, v, ctx.s_k, v - ctx.s_k, ratio))
    _write(variance_table(rows), args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="losstomo", description="Multicast loss tomography toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, n_default):
        sp.add_argument("--topology", required=True,
                        help=f"topology JSON file or preset name ({', '.join(sorted(PRESETS))})")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="output file (default: stdout)")
        if n_default is not None:
            sp.add_argument("--n", type=int, default=n_default, help="number of probes")

    sp = sub.add_parser("simulate", help="simulate a probe trace and write it as CSV")
    common(sp, 1000)
    sp.add_argument("--missing", type=float, help="MCAR rate for hidden observations")
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("estimate", help="estimate path and link rates from a trace")
    common(sp, 1000)
    sp.add_argument("--trace", help="trace CSV; simulated from the topology when omitted")
    sp.add_argument("--suite", help="extra estimators to report, e.g. full,pair,local(2,3)")
    sp.set_defaults(func=_cmd_estimate)

    sp = sub.add_parser("experiment", help="replicated mean/variance table")
    common(sp, None)
    sp.add_argument("--n", help="comma-separated sample sizes (default 300..3000 step 300, 4800, 9900)")
    sp.add_argument("--reps", type=int, default=20)
    sp.add_argument("--suite", help="estimators in column order")
    sp.add_argument("--missing", type=float, help="MCAR rate for hidden observations")
    sp.add_argument("--node", type=int, help="node whose link loss is reported")
    sp.add_argument("--format", choices=("csv", "markdown"), default="csv")
    sp.set_defaults(func=_cmd_experiment)

    sp = sub.add_parser("variance", help="asymptotic variances, optionally checked by simulation")
    common(sp, 100_000)
    sp.add_argument("--node", type=int)
    sp.add_argument("--suite", help="estimators, default composite(2),composite(3)")
    sp.add_argument("--reps", type=int, default=0, help="Monte Carlo replications (>= 100, 0 to skip)")
    sp.set_defaults(func=_cmd_variance)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (TomographyError, ValueError, OSError) as exc:
        print(f"losstomo {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
