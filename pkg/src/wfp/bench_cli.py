"""Benchmark harness: ``wfp train | eval | sweep``.

Machine-readable JSON reports go to standard output; progress and the
human-readable sweep table go to standard error, so reports pipe
cleanly. Dataset paths default to ``$WFP_DATA_DIR`` with the standard
MNIST file names (raw or ``.gz``). Model files are written atomically
(temp file + rename), so an interrupted run never leaves a partial
model at the output path.

Evaluation bank presets:

* ``none``         - plain dot-product similarity;
* ``shift1``       - max over the 3x3 one-pixel shift grid;
* ``shift1rot10``  - shifts combined with -10/0/+10 degree rotations.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .classifier import Model, confusion_matrix, evaluate
from .dataset import load_dataset
from .errors import WfpError
from .perception import SeriesConfig
from .trainer import TrainConfig, deserialize_model, serialize_model, train
from .transforms import TransformSpec, build_bank

BANK_PRESETS: dict[str, TransformSpec] = {
    "none": TransformSpec(max_shift=0, rotation_degrees=(0.0,)),
    "shift1": TransformSpec(max_shift=1, rotation_degrees=(0.0,)),
    "shift1rot10": TransformSpec(max_shift=1, rotation_degrees=(-10.0, 0.0, 10.0)),
}

DEFAULT_SWEEP_UNITS = (300, 600, 1200, 2400, 4000)

_DATA_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": [
        "config",
        "units_used",
        "train_error_pct",
        "test_error_pct",
        "per_class_errors",
        "wall_time_s",
        "model_sha256",
    ],
    "properties": {
        "config": {"type": "object"},
        "units_used": {"type": "integer", "minimum": 0},
        "train_error_pct": {"type": ["number", "null"], "minimum": 0},
        "test_error_pct": {"type": ["number", "null"], "minimum": 0},
        "per_class_errors": {
            "type": ["array", "null"],
            "items": {"type": "integer", "minimum": 0},
            "minItems": 10,
            "maxItems": 10,
        },
        "wall_time_s": {"type": "number", "minimum": 0},
        "model_sha256": {"type": ["string", "null"], "pattern": "^[0-9a-f]{64}$"},
    },
}


@dataclass
class EvalReport:
    """One benchmark row: config echo plus error rates and timing."""

    config: dict
    units_used: int
    train_error_pct: float | None
    test_error_pct: float | None
    per_class_errors: list[int] | None
    wall_time_s: float
    model_sha256: str | None

    def to_dict(self) -> dict:
        return asdict(self)


class _Parser(argparse.ArgumentParser):
    # Flag misuse is a user error, not a crash: usage + exit code 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _atomic_write(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def _resolve_data_path(flag_value: str | None, key: str, required: bool) -> Path | None:
    if flag_value is not None:
        path = Path(flag_value)
        if not path.exists():
            raise WfpError(f"dataset file not found: {path}")
        return path
    root = os.environ.get("WFP_DATA_DIR")
    if root:
        base = Path(root) / _DATA_FILES[key]
        for candidate in (base, base.with_name(base.name + ".gz")):
            if candidate.exists():
                return candidate
    if required:
        raise WfpError(
            f"no --{key.replace('_', '-')} given and $WFP_DATA_DIR does not "
            f"provide {_DATA_FILES[key]}[.gz]"
        )
    return None


def _load_test_set(args, required: bool):
    images = _resolve_data_path(args.test_images, "test_images", required)
    labels = _resolve_data_path(args.test_labels, "test_labels", required)
    if images is None or labels is None:
        return None
    return load_dataset(images, labels)


def _print_report(report: EvalReport, json_path: str | None) -> None:
    text = json.dumps(report.to_dict(), indent=2)
    print(text)
    if json_path:
        Path(json_path).write_text(text + "\n")


def _train_config(args) -> TrainConfig:
    train_bank = None
    if args.train_bank != "none":
        train_bank = build_bank(BANK_PRESETS[args.train_bank])
    return TrainConfig(
        n_max=args.units,
        alpha=args.alpha,
        epochs=args.epochs,
        train_bank=train_bank,
        shuffle_seed=args.shuffle_seed,
        max_terms=args.max_terms,
        attract=args.attract,
        allow_negative=args.allow_negative,
        update_top_k=args.update_top_k,
    )


def _config_echo(args, **extra) -> dict:
    echo = {
        "alpha": args.alpha,
        "epochs": args.epochs,
        "bank": args.bank,
        "train_bank": getattr(args, "train_bank", "none"),
        "max_terms": args.max_terms,
        "shuffle_seed": getattr(args, "shuffle_seed", None),
        "attract": getattr(args, "attract", False),
        "allow_negative": getattr(args, "allow_negative", False),
        "update_top_k": getattr(args, "update_top_k", None),
        "threads": args.threads,
    }
    echo.update(extra)
    return echo


def _evaluate_model(model: Model, test, bank_name: str, batch_size: int = 64):
    """Error percent and per-class error counts under a bank preset."""
    X_test, y_test = test
    bank = build_bank(BANK_PRESETS[bank_name])
    cm = confusion_matrix(model, X_test, y_test, bank, batch_size=batch_size)
    errors = cm.sum(axis=1) - np.diag(cm)
    total = cm.sum()
    pct = float(100.0 * errors.sum() / total)
    return pct, [int(e) for e in errors], cm


def cmd_train(args) -> int:
    X, y = load_dataset(
        _resolve_data_path(args.train_images, "train_images", True),
        _resolve_data_path(args.train_labels, "train_labels", True),
    )
    test = _load_test_set(args, required=False)
    cfg = _train_config(args)
    _log(f"training: {X.shape[0]} samples, n_max={cfg.n_max}, alpha={cfg.alpha}")
    t0 = time.perf_counter()
    with threadpool_limits(limits=args.threads):
        model, trace = train(
            X,
            y,
            cfg,
            on_epoch=lambda e, s: _log(
                f"epoch {e + 1}/{cfg.epochs}: train_error={100 * s.train_error:.2f}% "
                f"added={s.units_added} updates={s.update_count}"
            ),
        )
        data = serialize_model(model)
        _atomic_write(args.out, data)
        _log(f"model written: {args.out} ({len(model)} units)")
        test_pct = per_class = None
        if test is not None:
            test_pct, per_class, _ = _evaluate_model(model, test, args.bank)
    wall = time.perf_counter() - t0
    report = EvalReport(
        config=_config_echo(args, units=args.units, out=str(args.out)),
        units_used=len(model),
        train_error_pct=100.0 * trace.epochs[-1].train_error,
        test_error_pct=test_pct,
        per_class_errors=per_class,
        wall_time_s=wall,
        model_sha256=hashlib.sha256(data).hexdigest(),
    )
    _print_report(report, args.json)
    return 0


def cmd_eval(args) -> int:
    model_bytes = Path(args.model).read_bytes()
    model = deserialize_model(model_bytes)
    if args.max_terms is not None:
        model.series_cfg = SeriesConfig(args.max_terms)
    test = _load_test_set(args, required=True)
    t0 = time.perf_counter()
    with threadpool_limits(limits=args.threads):
        test_pct, per_class, _ = _evaluate_model(model, test, args.bank)
    wall = time.perf_counter() - t0
    report = EvalReport(
        config=_config_echo(args, model=str(args.model)),
        units_used=len(model),
        train_error_pct=None,
        test_error_pct=test_pct,
        per_class_errors=per_class,
        wall_time_s=wall,
        model_sha256=hashlib.sha256(model_bytes).hexdigest(),
    )
    _print_report(report, args.json)
    return 0


def _sweep_markdown(rows: list[dict], bank_names: list[str]) -> str:
    lines = ["| # units | " + " | ".join(bank_names) + " |"]
    lines.append("|---:" + "|---:" * len(bank_names) + "|")
    by_units: dict[int, dict[str, float]] = {}
    for r in rows:
        if r["best_for_n"]:
            by_units.setdefault(r["config"]["units"], {})[r["config"]["bank"]] = r[
                "test_error_pct"
            ]
        by_units.setdefault(r["config"]["units"], {})
    for n in sorted(by_units):
        cells = [f"{by_units[n].get(b, float('nan')):.2f}" for b in bank_names]
        lines.append(f"| {n} | " + " | ".join(cells) + " |")
    return "\n".join(lines)


def cmd_sweep(args) -> int:
    X, y = load_dataset(
        _resolve_data_path(args.train_images, "train_images", True),
        _resolve_data_path(args.train_labels, "train_labels", True),
    )
    test = _load_test_set(args, required=True)
    units_grid = [int(u) for u in args.units_grid.split(",")]
    alpha_grid = (
        [float(a) for a in args.alpha_grid.split(",")]
        if args.alpha_grid
        else [args.alpha]
    )
    bank_names = list(BANK_PRESETS)
    rows: list[dict] = []
    with threadpool_limits(limits=args.threads):
        for n in units_grid:
            for alpha in alpha_grid:
                run_args = argparse.Namespace(**{**vars(args), "units": n, "alpha": alpha})
                cfg = _train_config(run_args)
                _log(f"sweep: training n={n} alpha={alpha}")
                t0 = time.perf_counter()
                model, trace = train(X, y, cfg)
                train_time = time.perf_counter() - t0
                data = serialize_model(model)
                sha = hashlib.sha256(data).hexdigest()
                if args.out_dir:
                    out = Path(args.out_dir) / f"wfp-n{n}-a{alpha}.wfc"
                    out.parent.mkdir(parents=True, exist_ok=True)
                    _atomic_write(out, data)
                for bank_name in bank_names:
                    t1 = time.perf_counter()
                    test_pct, per_class, _ = _evaluate_model(model, test, bank_name)
                    report = EvalReport(
                        config=_config_echo(
                            run_args, units=n, bank=bank_name, alpha=alpha
                        ),
                        units_used=len(model),
                        train_error_pct=100.0 * trace.epochs[-1].train_error,
                        test_error_pct=test_pct,
                        per_class_errors=per_class,
                        wall_time_s=train_time + time.perf_counter() - t1,
                        model_sha256=sha,
                    )
                    rows.append(report.to_dict())
                    _log(f"sweep: n={n} alpha={alpha} bank={bank_name} -> {test_pct:.2f}%")
    # Mark the best alpha per (units, bank) cell.
    for row in rows:
        same = [
            r
            for r in rows
            if r["config"]["units"] == row["config"]["units"]
            and r["config"]["bank"] == row["config"]["bank"]
        ]
        row["best_for_n"] = row["test_error_pct"] == min(r["test_error_pct"] for r in same)
    text = json.dumps(rows, indent=2)
    print(text)
    if args.json:
        Path(args.json).write_text(text + "\n")
    if args.csv:
        header = "units,alpha,bank,units_used,train_error_pct,test_error_pct,wall_time_s,model_sha256,best_for_n"
        lines = [header]
        for r in rows:
            c = r["config"]
            lines.append(
                f"{c['units']},{c['alpha']},{c['bank']},{r['units_used']},"
                f"{r['train_error_pct']:.4f},{r['test_error_pct']:.4f},"
                f"{r['wall_time_s']:.2f},{r['model_sha256']},{int(r['best_for_n'])}"
            )
        Path(args.csv).write_text("\n".join(lines) + "\n")
    _log(_sweep_markdown(rows, bank_names))
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bank", choices=sorted(BANK_PRESETS), default="none",
                   help="evaluation transform bank preset")
    p.add_argument("--max-terms", type=int, default=None,
                   help="truncate the score series to this many leading terms")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="BLAS thread cap for heavy phases")
    p.add_argument("--json", default=None, help="also write the JSON report here")
    p.add_argument("--test-images", default=None)
    p.add_argument("--test-labels", default=None)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train-images", default=None)
    p.add_argument("--train-labels", default=None)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--train-bank", choices=sorted(BANK_PRESETS), default="none",
                   help="apply the bank during training updates as well")
    p.add_argument("--shuffle-seed", type=int, default=None,
                   help="per-epoch sample shuffling (default: dataset order)")
    p.add_argument("--attract", action="store_true",
                   help="also pull true-class units toward misclassified samples")
    p.add_argument("--allow-negative", action="store_true",
                   help="skip the non-negativity clamp after updates")
    p.add_argument("--update-top-k", type=int, default=None,
                   help="update only the k highest-ranked units of the wrong class")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wfp", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_train = sub.add_parser("train", help="train a model and write a .wfc file")
    _add_train_flags(p_train)
    _add_common(p_train)
    p_train.add_argument("--units", type=int, required=True, help="unit capacity n")
    p_train.add_argument("--out", required=True, help="model file output path")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a model file on a test set")
    p_eval.add_argument("--model", required=True, help="path to a .wfc model file")
    _add_common(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="unit-capacity sweep over all bank presets")
    _add_train_flags(p_sweep)
    _add_common(p_sweep)
    p_sweep.add_argument("--units-grid", default=",".join(str(u) for u in DEFAULT_SWEEP_UNITS),
                         help="comma-separated capacities to train")
    p_sweep.add_argument("--alpha-grid", default=None,
                         help="comma-separated step sizes to try per capacity")
    p_sweep.add_argument("--csv", default=None, help="also write rows as CSV here")
    p_sweep.add_argument("--out-dir", default=None, help="save each trained model here")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WfpError as exc:
        print(f"wfp: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"wfp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
