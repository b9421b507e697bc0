"""Command-line entry point: ``gsmflow <command> ...``.

Exit codes: 0 success, 1 invalid input (bad config, missing or malformed
files), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import RunConfig, parse_assignments
from .data import BenchmarkTruth, generate_benchmark, load_data_dir, save_dataset, write_features
from .errors import (
    ConfigError, ContractError, DimensionError, IntegrityError, ParseError, UnsupportedOperationError,
)
from .pipeline import evaluate_run, load_run, save_run, synthesize_raw, train_run
from .selftest import run_selftest

VALIDATION_ERRORS = (ConfigError, ParseError, IntegrityError, DimensionError, ContractError,
                     UnsupportedOperationError, FileNotFoundError, NotADirectoryError)


def _overrides(args) -> dict:
    values = parse_assignments(args.set or [], "--set")
    if getattr(args, "seed", None) is not None:
        values["seed"] = str(args.seed)
    return values


def _common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", type=Path, help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, help="global seed")


def cmd_gen_bench(args) -> int:
    values = _overrides(args)
    flags = {"n_seen": "bench.n_seen", "n_unseen": "bench.n_unseen", "d": "bench.d", "a": "bench.a",
             "samples_per_class": "bench.samples_per_class", "map_scale": "bench.map_scale"}
    for attr, key in flags.items():
        if getattr(args, attr) is not None:
            values[key] = str(getattr(args, attr))
    cfg = RunConfig.load(args.config, values)
    dataset, truth = generate_benchmark(cfg.bench_spec())
    save_dataset(dataset, args.out)
    truth.save(Path(args.out) / "truth.json")
    print(f"wrote benchmark ({dataset.features.shape[0]} rows, d={dataset.dim}, "
          f"{len(dataset.table.seen_ids)} seen / {len(dataset.table.unseen_ids)} unseen) to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config, _overrides(args))
    dataset = load_data_dir(args.data_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run, result = train_run(dataset, cfg, log_path=out / cfg["train.log"])
    save_run(run, out)
    if result.state.history:
        _, nll, geom, total = result.state.history[-1]
        print(f"trained {len(result.state.history)} epochs: nll={nll:.4f} geom={geom:.6f} total={total:.4f}")
    print(f"checkpoint written to {out}")
    return 0


def cmd_synthesize(args) -> int:
    run = load_run(args.checkpoint, _overrides(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    synthetic = synthesize_raw(run)
    write_features(out / "synthetic.bin", synthetic.features, synthetic.labels)
    print(f"wrote {synthetic.features.shape[0]} synthetic rows to {out / 'synthetic.bin'}")
    return 0


def cmd_evaluate(args) -> int:
    run = load_run(args.checkpoint, _overrides(args))
    dataset = load_data_dir(args.data_dir)
    if dataset.table.class_ids != run.table.class_ids:
        raise IntegrityError("data directory classes differ from the checkpoint's classes")
    truth_path = Path(args.data_dir) / "truth.json"
    truth = BenchmarkTruth.load(truth_path) if truth_path.is_file() else None
    report = evaluate_run(run, dataset, truth)
    out = Path(args.out) if args.out else Path(args.checkpoint)
    if out.is_file():
        out = out.parent
    out.mkdir(parents=True, exist_ok=True)
    txt, _ = report.write(out)
    print(report.table())
    print(f"report written to {txt}")
    return 0


def cmd_selftest(args) -> int:
    return 0 if run_selftest() else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsmflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-bench", help="write a synthetic GZSL benchmark with ground truth")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--n-seen", type=int)
    p.add_argument("--n-unseen", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--a", type=int)
    p.add_argument("--samples-per-class", type=int)
    p.add_argument("--map-scale", type=float)
    _common(p)
    p.set_defaults(func=cmd_gen_bench)

    p = sub.add_parser("train", help="train flow + embedder on seen classes")
    p.add_argument("--data-dir", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synthesize", help="write synthetic unseen-class features (GSMX)")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _common(p, config=False)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", help="CZSL/GZSL metrics and shift diagnostics")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--data-dir", required=True, type=Path)
    p.add_argument("--out", type=Path, help="report directory (default: the checkpoint)")
    _common(p, config=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("selftest", help="gradient, roundtrip and log-det checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
