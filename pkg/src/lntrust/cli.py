"""Command line entry point: ``lntrust run | ablate | verify | export-graph``.

Exit codes: 0 success, 1 a verification check failed, 2 usage or config error.
Outputs go under ``$LNTRUST_OUTPUT`` (default ``./runs``).
"""

import argparse
import dataclasses
import os
import sys
import time

from .ablation import ABLATIONS, run_ablation, write_ablation
from .config import ConfigError, RunConfig, dump_config, load_config, parse_assignments
from .export import write_run
from .graph import make_graph

OUTPUT_ENV = "LNTRUST_OUTPUT"
EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


def output_root():
    return os.environ.get(OUTPUT_ENV, "runs")


def _stamped_dir(prefix):
    base = os.path.join(output_root(), f"{prefix}-{time.strftime('%Y%m%d-%H%M%S')}")
    path, k = base, 1
    while os.path.exists(path):
        path = f"{base}-{k}"
        k += 1
    return path


def build_config(args):
    sets = list(args.set or [])
    if getattr(args, "method", None):
        sets.append(f"method = {args.method}")
    if getattr(args, "seed", None) is not None:
        sets.append(f"seed = {args.seed}")
    if args.config:
        return load_config(args.config, sets)
    return RunConfig(**parse_assignments(sets, source="--set"))


def cmd_run(args):
    from .protocol import run_experiment

    cfg = build_config(args)
    t0 = time.perf_counter()
    result = run_experiment(cfg)
    out = args.out or _stamped_dir(f"run-{cfg.method}-seed{cfg.seed}")
    write_run(result, out)
    print(f"method={cfg.method} seed={cfg.seed} rounds={cfg.stage2_rounds} "
          f"test={result.final.mean_test:.4f} self={result.final.mean_self:.4f} "
          f"logit_bytes={result.final.cum_logit_bytes} time={time.perf_counter() - t0:.1f}s")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_ablate(args):
    cfg = build_config(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = run_ablation(args.which, cfg, seeds, log=print if args.verbose else None)
    out = args.out or _stamped_dir(f"ablate-{args.which}")
    os.makedirs(out, exist_ok=True)
    write_ablation(rows, os.path.join(out, f"{args.which}.csv"))
    with open(os.path.join(out, "config.txt"), "w", newline="\n") as fh:
        fh.write(dump_config(cfg))
    print(f"{'setting':>12s} {'test':>7s} {'self':>7s} {'gain':>7s}")
    for r in rows:
        print(f"{r[1]:>12s} {r[3]:7.4f} {r[5]:7.4f} {r[8]:+7.4f}")
    print(f"wrote {out}")
    return EXIT_OK


def theory_config(assignments):
    from .verify import TheoryConfig

    types = {f.name: f.type for f in dataclasses.fields(TheoryConfig)}
    values = {}
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"--set: expected key=value, got {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        if key not in types:
            raise ConfigError(f"--set: unknown theory key {key!r}")
        t = types[key]
        if t in (tuple, "tuple"):
            values[key] = tuple(int(v) for v in raw.split(",") if v.strip())
        elif t in (int, "int"):
            values[key] = int(raw)
        else:
            values[key] = float(raw)
    try:
        return TheoryConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_verify(args):
    from . import verify

    tcfg = theory_config(args.set or [])
    reports = verify.run_all(tcfg)
    for r in reports:
        print(r.line())
    out = args.out or _stamped_dir("verify")
    os.makedirs(out, exist_ok=True)
    verify.write_report(reports, os.path.join(out, "verify.json"))
    print(f"wrote {out}")
    return EXIT_OK if verify.suite_ok(reports) else EXIT_CHECK


def cmd_export_graph(args):
    cfg = build_config(args)
    graph = make_graph(cfg.topology_spec())
    out = args.out or os.path.join(output_root(), f"graph-{cfg.topology}-seed{cfg.seed}.{args.format}")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    if args.format == "json":
        graph.to_json(out)
    else:
        graph.to_edgelist(out)
    print(f"{graph.n} nodes, {graph.n_edges} edges -> {out}")
    return EXIT_OK


def _add_config_args(p, method=True):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")
    p.add_argument("--seed", type=int)
    if method:
        p.add_argument("--method")
    p.add_argument("--out", help="output path (default: timestamped directory under $%s)" % OUTPUT_ENV)


def parser():
    ap = argparse.ArgumentParser(prog="lntrust", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment and write its artifacts")
    _add_config_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="sweep one hyperparameter over several seeds")
    p.add_argument("which", choices=ABLATIONS)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--verbose", action="store_true")
    _add_config_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("verify", help="run the numerical guarantee checks")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a theory-check setting")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export-graph", help="write the communication graph of a config")
    _add_config_args(p, method=False)
    p.add_argument("--format", choices=("json", "edgelist"), default="json")
    p.set_defaults(func=cmd_export_graph)
    return ap


def main(argv=None):
    args = parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
