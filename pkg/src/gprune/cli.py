"""Command-line entry point: ``gprune <subcommand> ...``.

Exit codes: 0 success, 1 validation / usage error, 2 infeasible budget or
oracle cap exceeded. Results go to ``--out`` (or stdout), summaries to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import ValueDist, find_adversarial_instance, improvement_report, recovery_sweep
from .core import ValidationError, kernel_norm_matrix
from .equivalence import (
    export_grouped,
    export_sparse,
    grouped_forward,
    masked_forward,
    relative_error,
)
from .io import (
    RunReport,
    dumps_json,
    load_manifest,
    write_grouped_export,
    write_report,
    write_sparse_export,
)
from .pruner import DEFAULT_NS, DEFAULT_ORACLE_CAP, OracleTooLargeError, brute_force_oracle, prune_mask, solve_layer
from .search import (
    DEFAULT_CONFIG_CAP,
    BudgetConstraint,
    ConfigSpaceTooLargeError,
    InfeasibleBudgetError,
    exhaustive_config_oracle,
    local_search,
    num_ops,
    num_params,
)

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE = 0, 1, 2

# flags that never influence results and stay out of the command echo
_NOT_ECHOED = {"out", "out_dir", "threads", "timing", "report", "func", "started"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("GPRUNE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"GPRUNE_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _echo(args) -> list[str]:
    out = [args.cmd] + ([args.bench_cmd] if args.cmd == "bench" else [])
    for k, v in sorted(vars(args).items()):
        if k in _NOT_ECHOED or k in ("cmd", "bench_cmd") or v is None or v is False:
            continue
        flag = "--" + k.replace("_", "-")
        if v is True:
            out.append(flag)
        else:
            out.extend([flag, ",".join(map(str, v)) if isinstance(v, list) else str(v)])
    return out


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_report(report: RunReport, args) -> None:
    out = args.out
    if getattr(args, "timing", False):
        report.timing = {"seconds": time.perf_counter() - args.started}
    if out:
        write_report(report, out)
    else:
        report.validate()
        sys.stdout.write(dumps_json(report.to_dict()))


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _budget(args) -> BudgetConstraint:
    return BudgetConstraint(args.max_params, args.max_ops)


def _config_report(args, cfg, seeds=()) -> RunReport:
    d = cfg.to_dict()
    return RunReport(_echo(args), list(seeds), d["layers"],
                     {"params": cfg.total_params, "ops": cfg.total_ops, "cost": cfg.total_cost,
                      "scope": d["scope"]})


def _layer_entry(layer, sol, ns=None) -> dict:
    e = {"name": layer.spec.name}
    if ns is not None:
        e["n_s"] = ns
    e.update(sol.to_dict())
    return e


def _layer_totals(layer, g, cost) -> dict:
    return {"params": num_params(layer.spec, g), "ops": num_ops(layer.spec, g), "cost": cost,
            "scope": "conv-only"}


# -- subcommands ------------------------------------------------------------

def cmd_prune_layer(args) -> int:
    layer = load_manifest(args.manifest).layer(args.layer)
    sol = solve_layer(layer.norms, args.groups, args.ns)
    report = RunReport(_echo(args), [], [_layer_entry(layer, sol, args.ns)],
                       _layer_totals(layer, args.groups, sol.cost))
    _emit_report(report, args)
    _say(f"{layer.spec.name}: G={args.groups} objective={sol.objective!r} "
         f"cost={sol.cost!r} recovery_ratio={sol.recovery_ratio:.6f}")
    return EXIT_OK


def cmd_search(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = local_search(manifest.search_layers(), _budget(args), args.ns, args.direction,
                       args.normalized, threads=_threads(args))
    _emit_report(_config_report(args, cfg), args)
    _say(f"{args.direction}: groups={cfg.groups} params={cfg.total_params} ops={cfg.total_ops} "
         f"cost={cfg.total_cost!r} (conv-only)")
    return EXIT_OK


def cmd_oracle(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.config:
        cap = args.cap if args.cap is not None else DEFAULT_CONFIG_CAP
        cfg = exhaustive_config_oracle(manifest.search_layers(), _budget(args), args.ns,
                                       args.normalized, cap, threads=_threads(args))
        _emit_report(_config_report(args, cfg), args)
        _say(f"config oracle: groups={cfg.groups} cost={cfg.total_cost!r}")
        return EXIT_OK
    if args.layer is None or args.groups is None:
        raise ValidationError("oracle needs --layer and --groups (or --config)")
    layer = manifest.layer(args.layer)
    cap = args.cap if args.cap is not None else DEFAULT_ORACLE_CAP
    sol = brute_force_oracle(layer.norms, args.groups, cap)
    report = RunReport(_echo(args), [], [_layer_entry(layer, sol)],
                       _layer_totals(layer, args.groups, sol.cost))
    _emit_report(report, args)
    _say(f"{layer.spec.name}: optimal objective={sol.objective!r} recovery_ratio={sol.recovery_ratio:.6f}")
    return EXIT_OK


def cmd_bench_sweep(args) -> int:
    dist = ValueDist(args.dist, args.low, args.high)
    report = recovery_sweep(args.samples, args.size, args.groups, args.ns, args.seed, dist,
                            threads=_threads(args))
    _emit(report.histogram_csv(), args.out)
    if args.report:
        run = RunReport(_echo(args), [args.seed], extra=report.to_dict())
        if args.timing:
            run.timing = {"seconds": time.perf_counter() - args.started}
        write_report(run, args.report)
    _say(f"# generator={report.generator} seed={args.seed} dist={report.dist}")
    for e in report.entries:
        _say(f"size={e.size} g={e.g} n_s={e.ns}: full={e.full_fraction:.4f} "
             f">=0.9={e.ge_090_fraction:.4f} mean={e.mean_ratio:.6f}")
    return EXIT_OK


def cmd_bench_adversarial(args) -> int:
    res = find_adversarial_instance(args.size, args.groups, args.trials, args.seed, args.ns)
    report = RunReport(_echo(args), [args.seed], extra=res.to_dict())
    _emit_report(report, args)
    if res.found:
        _say(f"found after {res.trials} trials ({res.pattern}): greedy ratio "
             f"{res.greedy.recovery_ratio:.6f} vs oracle {res.oracle.recovery_ratio:.6f}")
    else:
        _say(f"no adversarial instance found in {res.trials} trials")
    return EXIT_OK


def cmd_bench_improvement(args) -> int:
    manifest = load_manifest(args.manifest)
    rows = improvement_report([l.norms for l in manifest.layers], args.groups, args.ns)
    report = RunReport(_echo(args), [], extra={"kind": "improvement", "n_s": args.ns,
                                               "rows": [r.to_dict() for r in rows]})
    _emit_report(report, args)
    for r in rows:
        _say(f"G={r.g}: ratio={r.ratio:.6f} plain={r.plain_ratio:.6f} "
             f"improvement={r.improvement:+.6f} over {r.layers} layers")
    return EXIT_OK


def _weights(layer):
    if layer.weights is None:
        raise ValidationError(f"layer {layer.spec.name!r} has no data_file; weights are required")
    return layer.weights


def cmd_export(args) -> int:
    layer = load_manifest(args.manifest).layer(args.layer)
    w = _weights(layer)
    sol = solve_layer(kernel_norm_matrix(w), args.groups, args.ns)
    if args.format == "grouped":
        path = write_grouped_export(args.out_dir, layer.spec.name, export_grouped(w, sol.perms, args.groups))
    else:
        mask = prune_mask(w.shape[0], w.shape[1], args.groups, sol.perms)
        path = write_sparse_export(args.out_dir, layer.spec.name, export_sparse(w, mask))
    _say(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    layer = load_manifest(args.manifest).layer(args.layer)
    w = _weights(layer)
    sol = solve_layer(kernel_norm_matrix(w), args.groups, args.ns)
    mask = prune_mask(w.shape[0], w.shape[1], args.groups, sol.perms)
    grouped = export_grouped(w, sol.perms, args.groups)
    sparse = export_sparse(w, mask)
    exact = bool(np.array_equal(grouped.reassemble(), w * mask[:, :, None, None]))
    pad = args.padding if args.padding is not None else layer.spec.k_h // 2
    h = layer.spec.h_out - 2 * pad + layer.spec.k_h - 1
    wd = layer.spec.w_out - 2 * pad + layer.spec.k_w - 1
    if h < 1 or wd < 1:
        raise ValidationError("padding too large for the layer's output size")
    rng = np.random.Generator(np.random.PCG64(args.seed))
    worst_grouped = worst_sparse = 0.0
    one_by_one = layer.spec.k_h == layer.spec.k_w == 1
    for _ in range(args.cases):
        x = rng.standard_normal((layer.spec.c_in, h, wd))
        ref = masked_forward(x, w, mask, pad)
        worst_grouped = max(worst_grouped, relative_error(grouped_forward(x, grouped, pad), ref))
        if one_by_one:
            worst_sparse = max(worst_sparse, relative_error(sparse.matvec(x), ref))
    ok = exact and worst_grouped <= args.tol and worst_sparse <= args.tol
    report = RunReport(_echo(args), [args.seed], [_layer_entry(layer, sol, args.ns)], extra={
        "kind": "equivalence",
        "cases": args.cases,
        "tol": args.tol,
        "reassembly_bit_exact": exact,
        "max_rel_err_grouped": worst_grouped,
        "max_rel_err_sparse": worst_sparse if one_by_one else None,
        "passed": ok,
    })
    _emit_report(report, args)
    _say(f"{layer.spec.name}: reassembly exact={exact} grouped err={worst_grouped:.3e} "
         f"sparse err={worst_sparse:.3e} -> {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_INVALID


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker cap (default: $GPRUNE_THREADS or CPU count); never changes results")
    common.add_argument("--timing", action="store_true",
                        help="record wall-clock time in JSON reports (output is then not byte-reproducible)")

    p = _Parser(prog="gprune", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"gprune {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def layer_args(sp, need_layer=True):
        sp.add_argument("--manifest", required=True)
        sp.add_argument("--layer", required=need_layer)
        sp.add_argument("--groups", type=int, required=need_layer)

    sp = sub.add_parser("prune-layer", parents=[common], help="greedy-prune one layer")
    layer_args(sp)
    sp.add_argument("--ns", type=int, default=DEFAULT_NS)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_prune_layer)

    def budget_args(sp):
        sp.add_argument("--max-params", type=int)
        sp.add_argument("--max-ops", type=int)
        sp.add_argument("--ns", type=int, default=DEFAULT_NS)
        sp.add_argument("--normalized", action="store_true",
                        help="divide each layer's cost by its total magnitude")

    sp = sub.add_parser("search", parents=[common], help="local search over group configurations")
    sp.add_argument("--manifest", required=True)
    budget_args(sp)
    sp.add_argument("--direction", choices=["densify", "sparsify"], default="densify")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("oracle", parents=[common], help="exhaustive layer or configuration oracle")
    layer_args(sp, need_layer=False)
    sp.add_argument("--config", action="store_true", help="run the configuration oracle instead")
    budget_args(sp)
    sp.add_argument("--cap", type=int, default=None,
                    help=f"enumeration cap (default {DEFAULT_ORACLE_CAP} for layers, {DEFAULT_CONFIG_CAP} for --config)")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_oracle)

    bench = sub.add_parser("bench", parents=[common], help="randomized evaluations")
    bsub = bench.add_subparsers(dest="bench_cmd", required=True, parser_class=_Parser)

    sp = bsub.add_parser("sweep", parents=[common], help="recovery-ratio sweep on planted instances")
    sp.add_argument("--samples", type=int, default=10000)
    sp.add_argument("--size", type=_int_list, default=[16])
    sp.add_argument("--groups", type=_int_list, default=[4])
    sp.add_argument("--ns", type=_int_list, default=[0, 1, 2, 5, 10])
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--dist", choices=["uniform", "halfnormal"], default="uniform")
    sp.add_argument("--low", type=float, default=0.5)
    sp.add_argument("--high", type=float, default=1.5)
    sp.add_argument("--out", help="histogram CSV (default stdout)")
    sp.add_argument("--report", help="also write the JSON sweep report here")
    sp.set_defaults(func=cmd_bench_sweep)

    sp = bsub.add_parser("adversarial", parents=[common], help="search for a greedy failure case")
    sp.add_argument("--size", type=int, default=4)
    sp.add_argument("--groups", type=int, default=2)
    sp.add_argument("--trials", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--ns", type=int, default=DEFAULT_NS)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bench_adversarial)

    sp = bsub.add_parser("improvement", parents=[common], help="recovery ratio vs the unsorted baseline")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--groups", type=_int_list, default=[2, 4, 8])
    sp.add_argument("--ns", type=int, default=DEFAULT_NS)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bench_improvement)

    sp = sub.add_parser("export", parents=[common], help="export a pruned layer")
    layer_args(sp)
    sp.add_argument("--ns", type=int, default=DEFAULT_NS)
    sp.add_argument("--format", choices=["grouped", "sparse"], default="grouped")
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_export)

    sp = sub.add_parser("verify", parents=[common], help="check masked / grouped / sparse forwards agree")
    layer_args(sp)
    sp.add_argument("--ns", type=int, default=DEFAULT_NS)
    sp.add_argument("--cases", type=int, default=100)
    sp.add_argument("--tol", type=float, default=1e-5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--padding", type=int, default=None)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_verify)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    started = args.started = time.perf_counter()
    try:
        code = args.func(args)
    except (InfeasibleBudgetError, OracleTooLargeError, ConfigSpaceTooLargeError) as exc:
        _say(f"error: {exc}")
        return EXIT_INFEASIBLE
    except (ValidationError, OSError, json.JSONDecodeError, KeyError) as exc:
        _say(f"error: {exc}")
        return EXIT_INVALID
    _say(f"done in {time.perf_counter() - started:.2f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
