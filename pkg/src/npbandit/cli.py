"""Command-line entry point: ``npbandit run|compare|topology|dataset fetch``.

Exit codes: 0 success, 1 configuration error, 2 data error (missing or
corrupt dataset, unwritable output directory), 3 a ``--check`` failed.
"""

from __future__ import annotations

import argparse
import logging
import operator
import re
import sys
from dataclasses import replace

from .core import ValidationError
from .environments import IdxFormatError, fetch_mnist
from .experiment import (
    METHODS,
    OUTPUT_ENV,
    WORLDS,
    DataError,
    build_config,
    compare,
    read_config_file,
    read_manifest,
    run,
    topology_config,
    topology_recovered,
)

log = logging.getLogger("npbandit")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3

_OPS = {"<=": operator.le, ">=": operator.ge, "<": operator.lt, ">": operator.gt, "==": operator.eq}
_CHECK_RE = re.compile(r"^\s*([A-Za-z_][\w]*)\s*(<=|>=|==|<|>)\s*([-+0-9.eE]+|inf)\s*$")


def parse_check(expr: str):
    m = _CHECK_RE.match(expr)
    if not m:
        raise ValidationError(f"bad --check expression {expr!r}; expected e.g. 'top_arm_error<=0.05'")
    return m.group(1), m.group(2), float(m.group(3))


def evaluate_checks(exprs, values: dict) -> list[tuple[str, bool]]:
    out = []
    for expr in exprs:
        name, op, bound = parse_check(expr)
        if name not in values:
            raise ValidationError(f"--check refers to unknown quantity {name!r}; have {', '.join(sorted(values))}")
        out.append((expr, bool(_OPS[op](values[name], bound))))
    return out


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment")
    g.add_argument("--config", help="flat key=value config file (flags win)")
    g.add_argument("--scenario", choices=WORLDS)
    g.add_argument("--dataset", help="directory holding IDX image/label files")
    g.add_argument("--T", type=int, help="horizon")
    g.add_argument("--warmup", type=int)
    g.add_argument("--width-scale", dest="width_scale", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--intrinsic-dim", dest="intrinsic_dim", type=int)
    g.add_argument("--k", type=int, help="neighbor count (default: n^(2/(2+d)))")
    g.add_argument("--R", type=float, help="graph radius for region recovery")
    g.add_argument("--l2-alpha", dest="l2_alpha", type=float)
    g.add_argument("--confidence", type=float)
    g.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    g.add_argument("--ambient-dim", dest="ambient_dim", type=int)
    g.add_argument("--subset", type=int)
    g.add_argument("--test-size", dest="test_size", type=int)
    g.add_argument("--seed", "--seeds", dest="seeds", type=int, nargs="+")
    g.add_argument("--out", dest="out_dir", help=f"output directory (default ${OUTPUT_ENV} or ./runs)")
    g.add_argument("--workers", type=int)
    g.add_argument("--check", action="append", default=[], metavar="EXPR",
                   help="acceptance check such as 'top_arm_error<=0.05'; exit 3 if it fails")


_CONFIG_KEYS = ("scenario", "dataset", "T", "warmup", "width_scale", "delta", "intrinsic_dim", "k", "R",
                "l2_alpha", "confidence", "noise_sigma", "ambient_dim", "subset", "test_size", "seeds",
                "out_dir", "workers")


def _flags(args, **overrides) -> dict:
    d = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    if d["seeds"] is not None:
        d["seeds"] = tuple(d["seeds"])
    d.update({k: v for k, v in overrides.items() if v is not None})
    return d


def _file_values(path):
    return read_config_file(path) if path else {}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="npbandit", description="Nonparametric contextual bandit experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one method and write reports")
    _add_config_flags(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--manifest", help="replay the config recorded in a manifest.json")

    p = sub.add_parser("compare", help="two methods on shared context streams")
    _add_config_flags(p)
    p.add_argument("--methods", nargs=2, choices=METHODS, metavar=("A", "B"))
    p.add_argument("--config-b", help="config file for method B (default: same as --config)")

    p = sub.add_parser("topology", help="recover the regions where each arm is top")
    _add_config_flags(p)

    p = sub.add_parser("dataset", help="dataset utilities")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    f = dsub.add_parser("fetch", help="download the MNIST IDX files")
    f.add_argument("dest")
    f.add_argument("--url", default=None, help="mirror base URL")
    return parser


def _report_checks(results) -> int:
    ok = True
    for expr, passed in results:
        print(f"check {expr}: {'PASS' if passed else 'FAIL'}")
        ok &= passed
    return EXIT_OK if ok else EXIT_CHECK


def _echo(config) -> None:
    for k, v in config.to_dict().items():
        print(f"{k} = {v}")


def cmd_run(args) -> int:
    if args.manifest:
        config = read_manifest(args.manifest)
        overrides = {k: v for k, v in _flags(args, method=args.method).items() if v is not None}
        if overrides:
            config = replace(config, **overrides)
    else:
        config = build_config(_file_values(args.config), **_flags(args), method=args.method)
    _echo(config)
    results = run(config)
    for r in results:
        print(f"seed {r.seed}: " + ", ".join(f"{k}={v:.6g}" for k, v in r.metrics.items()))
    print(f"wrote reports to {config.out_dir}")
    checks = []
    for r in results:
        checks += [(f"{e} [seed {r.seed}]", p) for e, p in evaluate_checks(args.check, r.metrics)]
    return _report_checks(checks)


def cmd_compare(args) -> int:
    file_a = _file_values(args.config)
    file_b = _file_values(args.config_b) if args.config_b else dict(file_a)
    if args.methods:
        method_a, method_b = args.methods
    else:
        method_a, method_b = file_a.get("method"), file_b.get("method")
        if method_a is None or method_b is None:
            raise ValidationError("give --methods A B or method= in both config files")
    a = build_config(file_a, **_flags(args), method=method_a)
    b = build_config(file_b, **_flags(args), method=method_b)
    cmp = compare(a, b)
    print(f"seed  {a.method:>14}  {b.method:>14}  outcome (regret)")
    for seed, va, vb, outcome in cmp.per_seed():
        print(f"{seed:<4}  {va:14.4f}  {vb:14.4f}  {outcome}")
    tally = cmp.tally()
    print("{win} wins, {loss} losses, {tie} ties for {a}".format(a=a.method, **tally))
    values = {"wins": tally["win"], "losses": tally["loss"], "ties": tally["tie"]}
    return _report_checks(evaluate_checks(args.check, values))


def cmd_topology(args) -> int:
    config = topology_config(build_config(_file_values(args.config), **_flags(args), method="knn-uniform"))
    _echo(config)
    results = run(config)
    successes = 0
    for r in results:
        m = r.metrics
        arms = range(r.env.num_arms)
        line = ", ".join(f"arm {a + 1}: {m[f'components_arm{a}']} components" for a in arms)
        ok = topology_recovered(r, config.R)
        if ok is not None:
            successes += ok
            line += f"; matches truth: {'yes' if ok else 'no'}"
        print(f"seed {r.seed}: {line}")
    values = {"successes": successes, "seeds": len(results)}
    return _report_checks(evaluate_checks(args.check, values))


def cmd_dataset(args) -> int:
    kwargs = {"base_url": args.url} if args.url else {}
    path = fetch_mnist(args.dest, **kwargs)
    print(f"MNIST files ready in {path}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "topology": cmd_topology, "dataset": cmd_dataset}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; report those as config errors.
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, IdxFormatError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
