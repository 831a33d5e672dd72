"""Command-line entry point: synth, split, train, predict, eval, gradcheck.

Exit codes: 0 success, 1 usage/config error, 2 data or format error,
3 numeric failure (non-finite loss, failed gradient check). Every subcommand
that writes files puts them under --out-dir and emits a config.json that
fully describes the run.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .datamodel import (
    SynthConfig,
    generate_synthetic,
    load_dataset,
    read_labels_file,
    write_labels_file,
    write_manifest,
)
from .errors import (
    ConfigError,
    DataError,
    FormatError,
    NumericError,
    PackingError,
    SequencingError,
    ShapeError,
)
from .evaluation import (
    confusion_from_timelines,
    macro_report,
    write_confusion_csv,
    write_confusion_normalized_csv,
)
from .models import (
    build_baseline,
    build_piggyback,
    build_sliding,
    model_from_params,
    model_input_dim,
    predict_baseline,
    predict_piggyback_sequence,
    predict_sliding_sequence,
    read_timelines_json,
    write_timelines_json,
)
from .nnet import grad_check, read_checkpoint, write_checkpoint
from .splitter import select_split
from .training import (
    TrainConfig,
    train_baseline,
    train_piggyback,
    train_sliding,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# (architecture, timestep) -> (learning rate, epochs) defaults
_SCHEDULES = {
    ("sliding", 5): (2.5e-5, 5),
    ("sliding", 10): (1e-4, 4),
    ("sliding", 15): (1e-4, 2),
    ("piggyback", 5): (2.5e-5, 10),
    ("piggyback", 10): (1e-4, 10),
    ("piggyback", 15): (1e-4, 10),
}
_FALLBACK_SCHEDULE = (2.5e-5, 10)
_BASELINE_SCHEDULE = (1e-5, 10)


def default_schedule(architecture: str, timestep: int) -> tuple[float, int]:
    if architecture == "baseline":
        return _BASELINE_SCHEDULE
    return _SCHEDULES.get((architecture, timestep), _FALLBACK_SCHEDULE)


class _UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise _UsageError(message)


def _write_config(out_dir: Path, payload: dict) -> None:
    (out_dir / "config.json").write_text(json.dumps(payload, indent=2) + "\n",
                                         encoding="utf-8")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_synth(args) -> int:
    cfg = SynthConfig(
        num_classes=args.classes,
        feature_dim=args.feature_dim,
        ambiguous_pair=(args.ambiguous[0], args.ambiguous[1]),
        context_map={args.ambiguous[0]: args.context[0],
                     args.ambiguous[1]: args.context[1]},
        self_transition_prob=args.self_transition,
        noise_sigma=args.noise_sigma,
        mean_scale=args.mean_scale,
        num_sequences=args.sequences,
        frames_per_sequence=args.frames,
        seed=args.seed,
    )
    dataset = generate_synthetic(cfg)
    out = _out_dir(args)
    write_labels_file(dataset.label_set, out / "labels.txt")
    write_manifest(dataset, out / "manifest.json", out / "sequences")
    _write_config(out, {
        "command": "synth",
        "classes": cfg.num_classes,
        "feature_dim": cfg.feature_dim,
        "ambiguous": list(cfg.ambiguous_pair),
        "context": [cfg.context_map[c] for c in cfg.ambiguous_pair],
        "self_transition": cfg.self_transition_prob,
        "noise_sigma": cfg.noise_sigma,
        "mean_scale": cfg.mean_scale,
        "sequences": cfg.num_sequences,
        "frames": cfg.frames_per_sequence,
        "seed": cfg.seed,
    })
    print(f"wrote {len(dataset.sequences)} sequences under {out}")
    return EXIT_OK


def _cmd_split(args) -> int:
    dataset = load_dataset(args.manifest, args.labels)
    result = select_split(dataset, args.bins, args.test_bins, args.val_bins,
                          capacity=args.capacity,
                          stage2_reference=args.stage2_reference)
    out = _out_dir(args)
    result.write_json(out / "split.json")
    _write_config(out, {
        "command": "split",
        "manifest": str(args.manifest),
        "labels": str(args.labels),
        "bins": args.bins,
        "test_bins": args.test_bins,
        "val_bins": args.val_bins,
        "capacity": args.capacity,
        "stage2_reference": args.stage2_reference,
    })
    print(f"split objectives: test={result.objective_test:.6f} "
          f"val={result.objective_val:.6f}")
    return EXIT_OK


def _read_split_ids(path: str | Path) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    for key in ("test", "val", "train"):
        if key not in obj:
            raise FormatError(f"{path}: split manifest lacks {key!r}")
    return obj


def _cmd_train(args) -> int:
    lr, epochs = default_schedule(args.arch, args.timestep)
    cfg = TrainConfig(
        architecture=args.arch,
        timestep=args.timestep,
        overlap=args.overlap,
        learning_rate=args.lr if args.lr is not None else lr,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        epochs=args.epochs if args.epochs is not None else epochs,
        patience=args.patience,
        dropout=args.dropout,
        seed=args.seed,
        phase=args.phase,
    )
    if cfg.architecture == "piggyback" and cfg.phase == 2 and not args.init_from:
        raise SequencingError("phase 2 requires --init-from with a phase-1 checkpoint")

    dataset = load_dataset(args.manifest, args.labels)
    split = _read_split_ids(args.split)
    train_seqs = [dataset.by_id(sid) for sid in split["train"]]
    val_seqs = [dataset.by_id(sid) for sid in split["val"]]
    feature_dim = dataset.feature_dim
    num_classes = dataset.label_set.size

    if args.init_from:
        model = model_from_params(read_checkpoint(args.init_from))
        arch = _infer_architecture(model)
        if arch != cfg.architecture:
            raise ShapeError(
                f"checkpoint holds a {arch!r} model, requested {cfg.architecture!r}"
            )
        if model.head.out_dim != num_classes:
            raise ShapeError("checkpoint class count does not match the label set")
        if model_input_dim(model) != feature_dim:
            raise ShapeError("checkpoint input width does not match the dataset")
    elif cfg.architecture == "baseline":
        model = build_baseline(feature_dim, num_classes, seed=cfg.seed)
    elif cfg.architecture == "sliding":
        model = build_sliding(feature_dim, num_classes, hidden=args.hidden,
                              seed=cfg.seed)
    else:
        model = build_piggyback(feature_dim, num_classes, hidden=args.hidden,
                                seed=cfg.seed)

    trainers = {"baseline": train_baseline, "sliding": train_sliding,
                "piggyback": train_piggyback}
    result = trainers[cfg.architecture](model, train_seqs, val_seqs, cfg)

    out = _out_dir(args)
    _write_config(out, {
        "command": "train",
        "manifest": str(args.manifest),
        "labels": str(args.labels),
        "split": str(args.split),
        "hidden": args.hidden,
        "init_from": str(args.init_from) if args.init_from else None,
        **cfg.to_json_obj(),
    })
    result.report.write_json(out / "report.json")
    write_checkpoint(model.params(), out / "last.egomdl")
    if result.best_params is not None:
        write_checkpoint(result.best_params, out / "best.egomdl")
    for idx, stats in enumerate(result.report.epochs):
        print(f"epoch {idx}: train_loss={stats.train_loss:.6f} "
              f"val_loss={stats.val_loss:.6f} val_acc={stats.val_accuracy:.4f}")
    print(f"stop reason: {result.report.stop_reason} "
          f"(best epoch {result.report.best_epoch})")
    if result.report.stop_reason == "numeric_failure":
        raise NumericError("training aborted on a non-finite loss")
    return EXIT_OK


def _infer_architecture(model) -> str:
    if getattr(model, "embed", None) is not None:
        return "piggyback"
    if getattr(model, "lstm", None) is not None:
        return "sliding"
    return "baseline"


def _cmd_predict(args) -> int:
    dataset = load_dataset(args.manifest, args.labels)
    model = model_from_params(read_checkpoint(args.model))
    if model.head.out_dim != dataset.label_set.size:
        raise ShapeError("model class count does not match the label set")
    if model_input_dim(model) != dataset.feature_dim:
        raise ShapeError("model input width does not match the dataset")
    if args.split:
        ids = _read_split_ids(args.split)[args.subset]
        sequences = [dataset.by_id(sid) for sid in ids]
    else:
        sequences = dataset.sequences

    arch = _infer_architecture(model)
    timelines = []
    for seq in sequences:
        if arch == "baseline":
            timelines.append(predict_baseline(model, seq))
        elif arch == "sliding":
            timelines.append(predict_sliding_sequence(model, seq, args.timestep))
        else:
            timelines.append(predict_piggyback_sequence(
                model, seq, args.timestep, args.overlap, retention=args.retention))

    out = _out_dir(args)
    write_timelines_json(timelines, out / "timelines.json",
                         include_probs=args.include_probs)
    _write_config(out, {
        "command": "predict",
        "model": str(args.model),
        "manifest": str(args.manifest),
        "labels": str(args.labels),
        "split": str(args.split) if args.split else None,
        "subset": args.subset,
        "architecture": arch,
        "timestep": args.timestep,
        "overlap": args.overlap,
        "retention": args.retention,
        "include_probs": args.include_probs,
    })
    print(f"predicted {len(timelines)} sequences -> {out / 'timelines.json'}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    label_set = read_labels_file(args.labels)
    timelines = read_timelines_json(args.timelines, label_set.size)
    matrix = confusion_from_timelines(timelines, label_set.size)
    report = macro_report(matrix)
    out = _out_dir(args)
    report.write_json(out / "report.json")
    write_confusion_csv(matrix, label_set, out / "confusion.csv")
    write_confusion_normalized_csv(matrix, label_set,
                                   out / "confusion_normalized.csv")
    _write_config(out, {
        "command": "eval",
        "timelines": str(args.timelines),
        "labels": str(args.labels),
    })
    print(f"accuracy={report.accuracy:.4f} macro_f1={report.macro_f1:.4f}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    root = np.random.SeedSequence(args.seed)
    feature_dim, hidden, num_classes, steps = 6, 5, 4, 8
    results = []
    worst = 0.0
    for name, seed_seq in zip(("baseline", "sliding", "piggyback"), root.spawn(3)):
        data_rng = np.random.default_rng(seed_seq)
        model_seed = int(data_rng.integers(2 ** 31))
        if name == "baseline":
            model = build_baseline(feature_dim, num_classes, seed=model_seed)
        elif name == "sliding":
            model = build_sliding(feature_dim, num_classes, hidden=hidden,
                                  seed=model_seed)
        else:
            model = build_piggyback(feature_dim, num_classes, hidden=hidden,
                                    seed=model_seed)
        # scale 2 keeps gradient magnitudes above the finite-difference
        # noise floor for most seeds (see README on near-zero coordinates)
        inputs = data_rng.normal(size=(steps, feature_dim)) * 2.0
        labels = data_rng.integers(num_classes, size=steps)
        report = grad_check(model, inputs, labels, epsilon=args.epsilon)
        worst = max(worst, report.max_rel_error)
        for tensor in report.tensors:
            print(f"{name:9s} {tensor.name:12s} max_rel_err={tensor.max_rel_error:.3e}")
        results.append({
            "architecture": name,
            "max_rel_error": report.max_rel_error,
            "tensors": [
                {"name": t.name, "max_rel_error": t.max_rel_error,
                 "coords_checked": t.coords_checked}
                for t in report.tensors
            ],
        })
    passed = worst < args.tolerance
    print(f"overall max_rel_err={worst:.3e} tolerance={args.tolerance:.1e} "
          f"-> {'PASS' if passed else 'FAIL'}")
    if args.out_dir:
        out = _out_dir(args)
        (out / "gradcheck.json").write_text(
            json.dumps({"max_rel_error": worst, "tolerance": args.tolerance,
                        "passed": passed, "architectures": results}, indent=2) + "\n",
            encoding="utf-8")
        _write_config(out, {"command": "gradcheck", "seed": args.seed,
                            "epsilon": args.epsilon, "tolerance": args.tolerance})
    if not passed:
        raise NumericError(f"gradient check failed: {worst:.3e} >= {args.tolerance:.1e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="egobatch",
                     description="Batch-based recurrent activity classification "
                                 "over photo-stream day sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--classes", type=int, default=6, help="number of categories")
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--ambiguous", type=int, nargs=2, default=(4, 5),
                   metavar=("A", "B"), help="pair of classes sharing one emission mean")
    p.add_argument("--context", type=int, nargs=2, default=(0, 1),
                   metavar=("PRED_A", "PRED_B"),
                   help="sole predecessor class of each ambiguous class")
    p.add_argument("--self-transition", type=float, default=0.80)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--mean-scale", type=float, default=1.0)
    p.add_argument("--sequences", type=int, default=40)
    p.add_argument("--frames", type=int, default=300, help="frames per sequence")
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("split", help="select test/val/train day splits")
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--bins", type=int, required=True,
                   help="requested bin count (sets the packing capacity)")
    p.add_argument("--test-bins", type=int, required=True)
    p.add_argument("--val-bins", type=int, required=True)
    p.add_argument("--capacity", type=int, default=None,
                   help="frame budget per bin (overrides the derived capacity)")
    p.add_argument("--stage2-reference", choices=("whole", "rest"), default="whole",
                   help="reference distribution for the validation-split stage")
    p.set_defaults(handler=_cmd_split)

    p = sub.add_parser("train", help="train one architecture")
    p.add_argument("--arch", required=True,
                   choices=("baseline", "sliding", "piggyback"))
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", required=True, help="split manifest JSON")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--timestep", type=int, default=5,
                   help="window length (sliding) or batch size n (piggyback)")
    p.add_argument("--overlap", type=int, default=0, help="overlap m (piggyback)")
    p.add_argument("--lr", type=float, default=None,
                   help="default depends on architecture and timestep")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=5e-6)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=256,
                   help="recurrent units (ignored with --init-from)")
    p.add_argument("--phase", type=int, default=1, choices=(1, 2),
                   help="piggyback training phase")
    p.add_argument("--init-from", default=None, help="checkpoint to start from")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("predict", help="emit per-frame prediction timelines")
    p.add_argument("--model", required=True, help=".egomdl checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", default=None, help="restrict to one split subset")
    p.add_argument("--subset", choices=("test", "val", "train"), default="test")
    p.add_argument("--timestep", type=int, default=5)
    p.add_argument("--overlap", type=int, default=2)
    p.add_argument("--retention", choices=("earlier", "later"), default="earlier",
                   help="which batch's prediction overlapped frames keep")
    p.add_argument("--include-probs", action="store_true")
    p.set_defaults(handler=_cmd_predict)

    p = sub.add_parser("eval", help="score prediction timelines")
    p.add_argument("--timelines", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of built-in small models")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(handler=_cmd_gradcheck)

    return parser


def dispatch(argv: list[str]) -> int:
    """Parse and run one invocation, mapping errors to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, DataError, ShapeError, PackingError, SequencingError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
