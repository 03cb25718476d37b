"""Command-line entry point.

Subcommands: search (find worst-case tuples), train (fit the builtin
classifier with one of the four procedures), density (random-search fitness
histogram and quantile threshold), transform (apply a tuple to images), and
eval (clean accuracy plus worst tuples found by both search methods).

Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 external
oracle adapter error. Seeds are mandatory so every run is reproducible.
"""

import argparse
import contextlib
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import AdapterError, ConfigError, ShiftSearchError
from .mlp import load_model, save_model
from .oracle import (
    MANIFEST_NAME,
    BuiltinOracle,
    ExternalOracle,
    load_dataset,
    make_synthetic_dataset,
)
from .png_io import read_png, write_png
from .robust_train import EvalBudget, TrainConfig, evaluate_robustness, train
from .search import EsConfig, density_report, evolution_search, random_search, write_density_csv
from .transform_space import (
    IDENTITY,
    PRESET_NAMES,
    apply_tuple,
    load_transform_set,
    parse_tuple,
    preset_set,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_ADAPTER = 4


@dataclass
class RunManifest:
    """Provenance block embedded in every JSON report."""

    command: str
    config: dict
    seed: int
    version: str
    input_digests: dict
    started_at: str
    finished_at: str = ""

    def finish(self):
        self.finished_at = _utc_now()

    def to_dict(self):
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "version": self.version,
            "input_digests": self.input_digests,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


def _utc_now():
    return datetime.now(timezone.utc).isoformat()


def _sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _manifest_for(args, digests):
    config = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in ("func", "command") and not callable(value)
    }
    return RunManifest(
        command=args.command,
        config=config,
        seed=args.seed,
        version=__version__,
        input_digests=digests,
        started_at=_utc_now(),
    )


def _write_report(path, doc):
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


# flag groups shared between subcommands


def _add_seed(parser):
    parser.add_argument("--seed", type=int, required=True, help="run seed (mandatory)")


def _add_workers(parser):
    parser.add_argument(
        "--workers",
        type=int,
        default=1,
        help="parallel fitness evaluations (honored only for concurrency-safe oracles)",
    )


def _add_dataset_flags(parser):
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--dataset", help=f"directory with {MANIFEST_NAME} and PNGs")
    group.add_argument(
        "--synthetic",
        help="generate a glyph dataset: CLASSES,PER_CLASS,SIDE (e.g. 10,50,16)",
    )
    parser.add_argument("--limit", type=int, help="uniform subsample size")


def _add_oracle_flags(parser):
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--model", help="builtin model file")
    group.add_argument("--oracle-cmd", help="external oracle command line")
    parser.add_argument("--oracle-timeout", type=float, default=60.0)


def _add_set_flags(parser, default_n=3):
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", help=f"one of: {', '.join(PRESET_NAMES)}")
    group.add_argument("--set-json", help="custom transform set JSON file")
    parser.add_argument("--n", type=int, default=default_n, help="tuple length")


def _resolve_set(args, digests):
    if args.preset:
        digests["transform_set"] = f"preset:{args.preset}"
        return preset_set(args.preset)
    digests["transform_set"] = _sha256_file(args.set_json)
    return load_transform_set(args.set_json)


def _resolve_data(args, seed, digests):
    rng = np.random.default_rng([seed, 1])
    if args.dataset:
        digests["dataset"] = _sha256_file(os.path.join(args.dataset, MANIFEST_NAME))
        return load_dataset(args.dataset, limit=args.limit, rng=rng)
    try:
        classes, per_class, side = (int(x) for x in args.synthetic.split(","))
    except ValueError:
        raise ConfigError(
            f"--synthetic expects CLASSES,PER_CLASS,SIDE, got {args.synthetic!r}"
        )
    digests["dataset"] = f"synthetic:{classes},{per_class},{side}:seed={seed}"
    data = make_synthetic_dataset(classes, per_class, side, rng)
    if args.limit is not None and args.limit < len(data):
        data = data.subset(rng.choice(len(data), size=args.limit, replace=False))
    return data


def _open_oracle(args, digests):
    if args.model:
        digests["model"] = _sha256_file(args.model)
        return contextlib.nullcontext(BuiltinOracle(load_model(args.model)))
    digests["model"] = f"command:{args.oracle_cmd}"
    return ExternalOracle(args.oracle_cmd, timeout=args.oracle_timeout)


def _parse_hidden(text):
    try:
        widths = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"--hidden expects comma-separated widths, got {text!r}")
    if not widths:
        raise ConfigError("--hidden needs at least one width")
    return widths


# subcommands


def cmd_search(args):
    digests = {}
    tset = _resolve_set(args, digests)
    data = _resolve_data(args, args.seed, digests)
    manifest = _manifest_for(args, digests)
    rng = np.random.default_rng([args.seed, 2])
    with _open_oracle(args, digests) as oracle:
        if args.method == "rs":
            result = random_search(
                oracle, data, tset, args.n, args.iters, rng, workers=args.workers
            )
        else:
            es_cfg = EsConfig(
                population_size=args.pop,
                generations=args.gens,
                mutation_rate=args.mutation_rate,
                seed=int(rng.integers(2**63)),
            )
            result = evolution_search(
                oracle, data, tset, args.n, es_cfg, workers=args.workers
            )
    manifest.finish()
    report = {
        "manifest": manifest.to_dict(),
        "seed": args.seed,
        "config": manifest.config,
        **result.to_dict(),
    }
    _write_report(args.out, report)
    print(f"f_min={result.f_min:.6f} tuple={result.best_tuple.text()}", file=sys.stderr)
    return EXIT_OK


def cmd_train(args):
    digests = {}
    tset = _resolve_set(args, digests)
    data = _resolve_data(args, args.seed, digests)
    manifest = _manifest_for(args, digests)
    if args.method in ("erm", "rda") and (args.H is not None or args.J is not None):
        print(
            f"warning: method={args.method} ignores --H/--J (no search rounds)",
            file=sys.stderr,
        )
        rounds, steps_per_round = 0, 0
    else:
        rounds = args.H or 0
        steps_per_round = args.J or 0
    cfg = TrainConfig(
        method=args.method,
        rounds=rounds,
        steps_per_round=steps_per_round,
        extra_steps=args.extra_steps,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        hidden=_parse_hidden(args.hidden),
        rs_iterations=args.rs_iters,
        es_population=args.es_pop,
        es_generations=args.es_gens,
        mutation_rate=args.mutation_rate,
        search_subset=args.subset_size,
        workers=args.workers,
        seed=args.seed,
    )
    model, augmentation, log = train(data, cfg, tset, args.n)
    save_model(model, args.out)
    aug_path = args.aug_list or args.out + ".aug.txt"
    with open(aug_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(augmentation.lines()) + "\n")
    log_path = args.log_csv or args.out + ".log.csv"
    with open(log_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "augmentation_set_size"])
        for step, loss, size in log:
            writer.writerow([step, repr(loss), size])
    manifest.finish()
    report = {
        "manifest": manifest.to_dict(),
        "model_path": args.out,
        "augmentation_list_path": aug_path,
        "log_path": log_path,
        "augmentation_set_size": len(augmentation),
        "total_updates": cfg.total_updates,
        "final_loss": log[-1][1] if log else None,
    }
    _write_report(args.report, report)
    return EXIT_OK


def cmd_density(args):
    digests = {}
    tset = _resolve_set(args, digests)
    data = _resolve_data(args, args.seed, digests)
    manifest = _manifest_for(args, digests)
    rng = np.random.default_rng([args.seed, 2])
    with _open_oracle(args, digests) as oracle:
        result = random_search(
            oracle, data, tset, args.n, args.iters, rng, workers=args.workers
        )
    report = density_report(result.history, args.q)
    write_density_csv(report, args.out_csv)
    manifest.finish()
    doc = {
        "manifest": manifest.to_dict(),
        "threshold": report.threshold,
        "quantile": report.quantile,
        "iterations": args.iters,
        "csv_path": args.out_csv,
        "f_min": result.f_min,
        "best_tuple": result.best_tuple.text(),
    }
    _write_report(args.out, doc)
    print(f"threshold[q={args.q}]={report.threshold:.6f}", file=sys.stderr)
    return EXIT_OK


def cmd_transform(args):
    if args.tuple.strip() == "identity":
        t = IDENTITY
    else:
        if not (args.preset or args.set_json):
            raise ConfigError("--preset or --set-json is required to resolve tuple levels")
        tset = preset_set(args.preset) if args.preset else load_transform_set(args.set_json)
        t = parse_tuple(args.tuple, tset)
    os.makedirs(args.out_dir, exist_ok=True)
    for path in args.inputs:
        img = read_png(path)
        out_path = os.path.join(args.out_dir, os.path.basename(path))
        write_png(out_path, apply_tuple(t, img))
    return EXIT_OK


def cmd_eval(args):
    digests = {}
    tset = _resolve_set(args, digests)
    data = _resolve_data(args, args.seed, digests)
    manifest = _manifest_for(args, digests)
    budget = EvalBudget(
        rs_iterations=args.rs_iters,
        es_population=args.es_pop,
        es_generations=args.es_gens,
        es_restarts=args.es_restarts,
        mutation_rate=args.mutation_rate,
        workers=args.workers,
        seed=args.seed,
    )
    with _open_oracle(args, digests) as oracle:
        report = evaluate_robustness(oracle, data, tset, args.n, budget)
    manifest.finish()
    doc = {"manifest": manifest.to_dict(), **report.to_dict()}
    _write_report(args.out, doc)
    print(
        f"clean={report.clean_accuracy:.4f} rs_worst={report.rs_f_min:.4f} "
        f"es_worst={report.es_best_f_min:.4f}",
        file=sys.stderr,
    )
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="shiftsearch",
        description="search worst-case image transformation tuples and train hardened models",
    )
    parser.add_argument("--version", action="version", version=f"shiftsearch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run RS or ES against an oracle")
    p.add_argument("--method", choices=["rs", "es"], required=True)
    p.add_argument("--iters", type=int, default=1000, help="RS fitness evaluations")
    p.add_argument("--pop", type=int, default=10, help="ES population size")
    p.add_argument("--gens", type=int, default=99, help="ES generations")
    p.add_argument("--mutation-rate", type=float, default=0.1)
    _add_set_flags(p)
    _add_dataset_flags(p)
    _add_oracle_flags(p)
    _add_seed(p)
    _add_workers(p)
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("train", help="train the builtin classifier")
    p.add_argument("--method", choices=["erm", "rda", "rsda", "esda"], required=True)
    p.add_argument("--H", type=int, default=None, help="search rounds (rsda/esda)")
    p.add_argument("--J", type=int, default=None, help="update steps per round")
    p.add_argument("--extra-steps", type=int, default=0, help="steps after the rounds")
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--hidden", default="128", help="comma-separated hidden widths")
    p.add_argument("--rs-iters", type=int, default=100, help="in-training RS budget")
    p.add_argument("--es-pop", type=int, default=10)
    p.add_argument("--es-gens", type=int, default=10, help="in-training ES generations")
    p.add_argument("--mutation-rate", type=float, default=0.1)
    p.add_argument("--subset-size", type=int, default=1000, help="search subset size")
    _add_set_flags(p)
    _add_dataset_flags(p)
    _add_seed(p)
    _add_workers(p)
    p.add_argument("--out", required=True, help="model file path")
    p.add_argument("--aug-list", help="augmentation listing path (default OUT.aug.txt)")
    p.add_argument("--log-csv", help="training log path (default OUT.log.csv)")
    p.add_argument("--report", help="training report JSON path (default: stdout)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("density", help="RS fitness histogram and quantile threshold")
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--q", type=float, default=0.001, help="quantile in (0, 1)")
    _add_set_flags(p)
    _add_dataset_flags(p)
    _add_oracle_flags(p)
    _add_seed(p)
    _add_workers(p)
    p.add_argument("--out-csv", default="density.csv", help="histogram CSV path")
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("transform", help="apply a tuple to PNG images")
    p.add_argument("--tuple", required=True, help='tuple text, e.g. "brightness@3+solarize@0"')
    group = p.add_mutually_exclusive_group()
    group.add_argument("--preset", help=f"one of: {', '.join(PRESET_NAMES)}")
    group.add_argument("--set-json")
    p.add_argument("--out-dir", required=True)
    p.add_argument("inputs", nargs="+", help="input PNG paths")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("eval", help="robustness report: clean, RS-worst, ES-worst")
    p.add_argument("--rs-iters", type=int, default=1000)
    p.add_argument("--es-pop", type=int, default=10)
    p.add_argument("--es-gens", type=int, default=30)
    p.add_argument("--es-restarts", type=int, default=3)
    p.add_argument("--mutation-rate", type=float, default=0.1)
    _add_set_flags(p)
    _add_dataset_flags(p)
    _add_oracle_flags(p)
    _add_seed(p)
    _add_workers(p)
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AdapterError as exc:
        print(f"adapter error: {exc}", file=sys.stderr)
        return EXIT_ADAPTER
    except (ShiftSearchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
