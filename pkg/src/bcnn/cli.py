"""Command line entry point: ``bcnn generate | train | eval | report``.

Exit codes: 0 success, 2 usage or config error, 3 missing file or shape
mismatch, 4 model and dataset belong to different state families.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
from pathlib import Path

from . import analysis
from .config import ConfigError, load_config, preset_names
from .model import load_model, save_model
from .states import Dataset, StateFamily, read_dataset, sample_dataset, write_dataset
from .training import evaluate, operator_count, train

EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_INCOMPATIBLE = 4

log = logging.getLogger("bcnn")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _load_dataset(path: Path) -> Dataset:
    if not path.is_file():
        raise CliError(f"dataset not found: {path}", EXIT_MISSING)
    try:
        return read_dataset(path)
    except (ValueError, KeyError, IndexError) as exc:
        raise CliError(f"cannot read dataset {path}: {exc}", EXIT_MISSING) from None


def _load_model(path: Path):
    if not path.is_file():
        raise CliError(f"model not found: {path}", EXIT_MISSING)
    try:
        return load_model(path)
    except (ValueError, KeyError, IndexError) as exc:
        raise CliError(f"cannot read model {path}: {exc}", EXIT_MISSING) from None


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_generate(args) -> int:
    family = StateFamily.parse(args.family)
    ds = sample_dataset(family, args.size, args.seed, balance=args.balance, split=args.split)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out)
    n_ent = int(ds.labels.sum())
    print(f"wrote {len(ds)} {family.value} states to {out}: {n_ent} entangled, {len(ds) - n_ent} separable")
    return 0


def cmd_train(args) -> int:
    try:
        run = load_config(args.config, args.preset, args.seed)
    except ConfigError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from None
    train_path = Path(args.train_data) if args.train_data else run.train_path
    test_path = Path(args.test_data) if args.test_data else run.test_path
    train_set = _load_dataset(train_path)
    test_set = _load_dataset(test_path) if test_path else None
    for ds in filter(None, (train_set, test_set)):
        if ds.family is not run.family:
            raise CliError(f"dataset family {ds.family.value} does not match config family {run.family.value}",
                           EXIT_INCOMPATIBLE)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params, history = train(train_set, run.arch, run.train)
    save_model(params, out / "model.txt")
    with (out / "history.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "accuracy"])
        for e, (loss, acc) in enumerate(zip(history.loss, history.accuracy), start=1):
            w.writerow([e, f"{loss:.17g}", f"{acc:.17g}"])
    # wall-clock is kept apart so every other artifact is reproducible byte for byte
    (out / "timing.txt").write_text("".join(f"epoch {e} seconds {s:.3f}\n"
                                            for e, s in enumerate(history.seconds, start=1)))
    manifest = run.manifest_lines()
    manifest.append(f"train_sha256 = {_sha256(train_path)}")
    manifest.append(f"train_seed = {train_set.seed}")
    if test_set is not None:
        manifest.append(f"test_sha256 = {_sha256(test_path)}")
        manifest.append(f"test_seed = {test_set.seed}")
    result = ""
    if test_set is not None:
        acc, errors = evaluate(params, test_set)
        manifest.append(f"test_accuracy = {acc:.17g}")
        result = f"test accuracy {100 * acc:.2f}% ({len(errors)} errors of {len(test_set)})"
    (out / "manifest.txt").write_text("\n".join(manifest) + "\n")
    print(f"trained {run.arch.describe()} on {len(train_set)} {run.family.value} states")
    if result:
        print(result)
    return 0


def _check_family(params, ds: Dataset) -> None:
    if params.family and params.family != ds.family.value:
        raise CliError(f"model was trained on {params.family} states, dataset holds {ds.family.value}",
                       EXIT_INCOMPATIBLE)


def _write_errors(errors, path: Path) -> None:
    def f(x):
        return "" if x is None else f"{x:.17g}"

    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "p", "theta", "phi", "lambda_min", "label", "probability"])
        for e in errors:
            w.writerow([e.index, f(e.p), f(e.theta), f(e.phi), f(e.lambda_min), e.label, f(e.probability)])


def cmd_eval(args) -> int:
    params = _load_model(Path(args.model))
    ds = _load_dataset(Path(args.data))
    _check_family(params, ds)
    acc, errors = evaluate(params, ds)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_errors(errors, out / "errors.csv")
    print(f"accuracy {100 * acc:.2f}% ({len(errors)} errors of {len(ds)})")
    return 0


DEFAULT_AXIS = {
    StateFamily.WERNER: "p",
    StateFamily.G1_WERNER: "p",
    StateFamily.G2_WERNER: "theta_p",
    StateFamily.GENERAL: "lambda_min",
}


def cmd_report(args) -> int:
    params = _load_model(Path(args.model))
    ds = _load_dataset(Path(args.data))
    _check_family(params, ds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "curve-point":
        acc, _ = evaluate(params, ds)
        seeds = [] if args.seed is None else [args.seed]
        point = analysis.CurvePoint(params.arch.m, operator_count(params.arch), [acc], seeds)
        curve = analysis.AccuracyCurve(ds.family.value, params.arch.describe(), [point])
        analysis.write_curve(curve, out / "curve.csv")
        print(f"m={point.m} accuracy {100 * acc:.2f}%")
    elif args.kind == "errors":
        _, errors = evaluate(params, ds)
        axis = args.axis or DEFAULT_AXIS[ds.family]
        try:
            dist = analysis.error_distribution(errors, axis, bins=args.bins, population=ds)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_INCOMPATIBLE) from None
        analysis.write_distribution(dist, out / "errors_hist.csv")
        _write_errors(errors, out / "errors.csv")
        print(f"{len(errors)} misclassified of {len(ds)}; histogram over {axis} written")
    elif args.kind == "operators":
        rows = analysis.extract_operators(params)
        analysis.write_operators(rows, out / "operators.csv")
        print(f"{len(rows)} operators written")
        for r in rows:
            print(" ".join(f"{c:6.2f}" for c in r.coeffs))
    else:
        before, after = analysis.round_and_retest(params, ds, args.decimals)
        with (out / "round_retest.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["decimals", "original_accuracy", "rounded_accuracy", "drop"])
            w.writerow([args.decimals, f"{before:.17g}", f"{after:.17g}", f"{before - after:.17g}"])
        print(f"original {100 * before:.2f}%  rounded({args.decimals}) {100 * after:.2f}%  "
              f"drop {100 * (before - after):.2f} points")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a labelled dataset")
    g.add_argument("--family", required=True, help="werner | g1werner | g2werner | general")
    g.add_argument("--size", type=_positive, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--balance", action="store_true", help="1:1 entangled/separable (general family)")
    g.add_argument("--split", default="train", choices=["train", "test"])
    g.add_argument("--out", required=True, help="output CSV path")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a model from a config file or preset")
    src = t.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="config file")
    src.add_argument("--preset", help=f"named preset ({', '.join(preset_names())})")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--seed", type=int, help="override [run] seed")
    t.add_argument("--train-data", help="override [data] train")
    t.add_argument("--test-data", help="override [data] test")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="accuracy of a model on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", help="directory for errors.csv")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="analysis artifacts for a trained model")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--kind", required=True, choices=["curve-point", "errors", "operators", "round-retest"])
    r.add_argument("--out", required=True)
    r.add_argument("--axis", choices=list(analysis.AXES))
    r.add_argument("--bins", type=_positive, default=50)
    r.add_argument("--decimals", type=int, default=2)
    r.add_argument("--seed", type=int, help="training seed recorded in the curve file")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"bcnn: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"bcnn: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
