"""Command-line entry point: simulate, train, generate, benchmark.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import data as data_mod
from .config import RunConfig
from .errors import ConfigError, DataError, DavidError, NumericError
from .evaluation import BenchmarkError, run_benchmark
from .generators import GeneratorKind, generate
from .kvfile import write_kv
from .vae import load_model, save_model, train

log = logging.getLogger("david")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# flags handled explicitly by a subcommand rather than through the config
_EXPLICIT = {"data", "target", "out_dir", "seed"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--seed", type=int, help="master random seed")
    group = p.add_argument_group("config overrides (any config key)")
    for f in fields(RunConfig):
        if f.name not in _EXPLICIT:
            group.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, metavar="VALUE")


def _run_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    for key in ("data", "target", "out_dir", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    return cfg.with_items(overrides).validate()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="david", description="Synthetic rare-target data for imbalanced regression.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write the toy nonlinear dataset as CSV")
    p.add_argument("--n", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="train the VAE on a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--model-out", type=Path, required=True)
    _add_config_flags(p)

    p = sub.add_parser("generate", help="generate synthetic rows from a trained model")
    p.add_argument("--model", type=Path)
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--kind", required=True, help="baseline, os, csb, 0vae, bvae, kbvae, bvaew, kbvaew|david, kpca")
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)

    p = sub.add_parser("benchmark", help="run the repeated train/test comparison")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data")
    src.add_argument("--simulate", action="store_true", help="use the toy dataset (simulate_n rows)")
    p.add_argument("--target")
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    return parser


def cmd_simulate(args) -> int:
    ds = data_mod.simulate_illustration(args.n, args.seed)
    data_mod.write_csv(ds, args.out, with_origin=False)
    print(f"wrote {ds.n} rows to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    ds = data_mod.load_csv(cfg.data, cfg.target)
    scaled, _ = data_mod.minmax_fit_transform(ds)
    model, report = train(scaled, cfg.vae_config("train"))
    sidecar = save_model(model, args.model_out)
    losses = args.model_out.with_name(args.model_out.name + ".losses.csv")
    report.write_csv(losses)
    cfg.write(args.model_out.with_name(args.model_out.name + ".config"))
    print(f"trained {report.epochs} epochs in {report.wall_clock:.1f}s, final loss {report.total[-1]:.6g}")
    print(f"model: {args.model_out}  sidecar: {sidecar}  losses: {losses}")
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = _run_config(args)
    kind = GeneratorKind.parse(args.kind)
    ds = data_mod.load_csv(cfg.data, cfg.target)
    model = None
    if args.model is not None:
        model = load_model(args.model)
    elif kind.needs_model:
        raise ConfigError(f"--kind {args.kind} needs --model")
    if model is not None and model.scaler is not None:
        scaler = model.scaler
    else:
        scaler = data_mod.minmax_fit(ds)
    scaled = data_mod.minmax_transform(ds, scaler)
    synthetic = generate(kind, scaled, model, cfg.plan("generate"))
    out = data_mod.minmax_inverse(synthetic, scaler)
    out = out.with_joint(out.joint(), origin=[True] * out.n)
    data_mod.write_csv(out, args.out, with_origin=True)
    print(f"wrote {out.n} synthetic rows ({kind.label}) to {args.out}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _run_config(args)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.simulate:
        ds = data_mod.simulate_illustration(cfg.simulate_n, cfg.seed)
    else:
        if not cfg.target:
            raise ConfigError("--target is required with --data")
        ds = data_mod.load_csv(cfg.data, cfg.target)
    cfg.write(out_dir / "config.effective")
    try:
        report = run_benchmark(
            ds, cfg.generator_kinds(), cfg.regressor_kinds(), cfg.folds, cfg.benchmark_config()
        )
    except BenchmarkError as exc:
        exc.partial.write_rows_csv(out_dir / "rows.partial.csv")
        print(f"benchmark failed; partial rows in {out_dir / 'rows.partial.csv'}", file=sys.stderr)
        raise exc.cause if exc.cause is not None else exc
    report.write_rows_csv(out_dir / "rows.csv")
    report.write_aggregates_csv(out_dir / "aggregates.csv")
    table = report.format_table()
    (out_dir / "aggregates.txt").write_text(table, encoding="utf-8")
    write_kv(out_dir / "provenance.txt", report.provenance, header="benchmark provenance")
    print(table, end="")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "generate": cmd_generate,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DavidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
