"""Command-line runner: ``qsgd {train,compare,verify,dump}``.

Exit codes: 0 success, 1 configuration error, 2 verification failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .datasets import dump_samples
from .experiments import (
    DATA_TAG,
    ConfigError,
    RunConfig,
    compare,
    compare_table,
    data_rng,
    load_key_values,
    records_to_csv,
    run_method,
    with_overrides,
    write_atomic,
)
from .verify import CHECKS, DEPTHS, run_checks

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_run_flags(p: argparse.ArgumentParser, multi_method: bool) -> None:
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--experiment", help="exp1, exp2, exp2-bell or exp3")
    p.add_argument("--method", help="comma-separated methods" if multi_method else "qsgd, rqsgd, psr or exact")
    p.add_argument("--samples", type=int, help="sample budget (default: the experiment's)")
    p.add_argument("--eta", type=float, help="fixed step size (default: committed grid-search value)")
    p.add_argument("--schedule", help="fixed, decaying or averaged")
    p.add_argument("--shots", type=int, help="shots per shifted circuit (psr)")
    p.add_argument("--seed", type=int)
    p.add_argument("--eval-every", type=int, help="iterations between evaluation records")
    p.add_argument("--variant", help="exp2 target state: bell (default) or as-written")
    p.add_argument("--out", help="output file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qsgd", description="Shadow-gradient training experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    train = sub.add_parser("train", help="train one method and write its learning curve as CSV")
    _add_run_flags(train, multi_method=False)
    cmp_ = sub.add_parser("compare", help="train several methods and tabulate validation accuracy")
    _add_run_flags(cmp_, multi_method=True)
    cmp_.add_argument("--jobs", type=int, help="worker processes")
    cmp_.add_argument("--curves", help="directory for per-method curve CSVs")
    ver = sub.add_parser("verify", help="run the registered checks and emit JSON lines")
    ver.add_argument("--depth", choices=DEPTHS, default="fast")
    ver.add_argument("--only", help="comma-separated check numbers")
    ver.add_argument("--out", help="report file (default: stdout)")
    dump = sub.add_parser("dump", help="write a generated dataset in the binary dump format")
    _add_run_flags(dump, multi_method=False)
    return parser


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    base = RunConfig()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        base = RunConfig.from_mapping(load_key_values(text))
    methods = tuple(m.strip() for m in args.method.split(",")) if args.method else None
    return with_overrides(
        base, experiment=args.experiment, methods=methods, samples=args.samples, eta=args.eta,
        schedule=args.schedule, shots=args.shots, seed=args.seed, eval_every=args.eval_every,
        variant=args.variant, out=args.out, jobs=getattr(args, "jobs", None),
    )


def _emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def cmd_train(config: RunConfig) -> int:
    if len(config.methods) != 1:
        raise ConfigError("train takes exactly one method")
    records = run_method(config, config.methods[0])
    _emit(records_to_csv(records), config.out)
    return EXIT_OK


def cmd_compare(config: RunConfig, curves: str | None = None) -> int:
    rows = compare(config)
    if curves:
        Path(curves).mkdir(parents=True, exist_ok=True)
        for row in rows:
            write_atomic(Path(curves) / f"{config.exp_id}_{row.method}.csv", records_to_csv(list(row.records)))
    _emit(compare_table(rows), config.out)
    return EXIT_OK


def cmd_verify(depth: str, only: list[str] | None, out: str | None) -> int:
    results = run_checks(depth, only)
    _emit("".join(r.to_json() + "\n" for r in results), out)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}", file=sys.stderr)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_dump(config: RunConfig) -> int:
    if not config.out:
        raise ConfigError("dump needs --out")
    spec = config.spec()
    dump_samples(config.out, spec.generate(config.budget(), data_rng(config.seed, DATA_TAG)))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            only = [k.strip() for k in args.only.split(",")] if args.only else None
            if only and not set(only) <= set(CHECKS):
                raise ConfigError(f"unknown checks {sorted(set(only) - set(CHECKS))}; choose from {list(CHECKS)}")
            return cmd_verify(args.depth, only, args.out)
        config = run_config_from_args(args)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "compare":
            return cmd_compare(config, args.curves)
        return cmd_dump(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
