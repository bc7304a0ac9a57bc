"""Command-line entry point.

Subcommands: preprocess (merge/validate landmark CSVs), train, crossval,
eval, infer (one clip from CSV), stream (NDJSON frames on stdin -> prediction
records on stdout). Exit codes: 0 success, 1 usage error, 2 data error.

Config files are flat ``key = value`` text; keys are ModelConfig and
TrainConfig field names (`#` comments allowed). Stream records are NDJSON:
in ``{"ts": seconds, "features": [144 floats or nulls]}``, out
``{"type": "prediction", ...}`` — see README for the full shapes.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import queue
import sys
import threading
import time
import typing
from typing import Optional

from . import checkpoint as ckpt
from . import landmarks as lm
from . import training as tr
from .inference import infer_clip, parse_sampler
from .model import ModelConfig
from .segment import SegmenterConfig, StreamSegmenter
from .training import TrainConfig


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


_DATA_ERRORS = (ValueError, ckpt.CheckpointError, OSError)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this artifact reserves 2 for data."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

def _field_types() -> dict[str, type]:
    types: dict[str, type] = {}
    for cls in (ModelConfig, TrainConfig):
        types.update(typing.get_type_hints(cls))
    return types


def parse_config_text(text: str) -> dict:
    """Flat key=value lines -> typed dict over ModelConfig+TrainConfig fields."""
    types = _field_types()
    values: dict = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        if key not in types:
            raise ConfigError(f"line {ln}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        try:
            values[key] = types[key](value)
        except ValueError:
            raise ConfigError(
                f"line {ln}: {key!r} expects {types[key].__name__}, got {value!r}"
            ) from None
    return values


def _split_config(values: dict) -> tuple[dict, dict]:
    model_fields = {f.name for f in dataclasses.fields(ModelConfig)}
    model = {k: v for k, v in values.items() if k in model_fields}
    train = {k: v for k, v in values.items() if k not in model_fields}
    return model, train


def _load_config_file(path: Optional[str]) -> tuple[dict, dict]:
    if path is None:
        return {}, {}
    with open(path, "r", encoding="utf-8") as fh:
        return _split_config(parse_config_text(fh.read()))


# ---------------------------------------------------------------------------
# dataset plumbing
# ---------------------------------------------------------------------------

def _read_records(path: str) -> list[lm.FrameRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return lm.parse_landmark_csv(fh)


def _clip_tensors(clips: list[lm.VideoClip], vocabulary: lm.ClassVocabulary,
                  t_data: int) -> list[lm.ClipTensor]:
    tensors = []
    for clip in clips:
        try:
            label_index = vocabulary.index_of(clip.label)
        except KeyError:
            raise DataError(f"clip {clip.video_id!r}: label {clip.label!r} "
                            "not in the model's vocabulary") from None
        imputed = [lm.impute_missing(f) for f in clip.frames]
        keep = lm.sample_frames(len(imputed), t_data)
        tensors.append(lm.build_clip_tensor([imputed[k] for k in keep], t_data,
                                            label_index))
    return tensors


def _load_dataset(path: str, t_data: int,
                  vocabulary: Optional[lm.ClassVocabulary] = None):
    clips = lm.group_clips(_read_records(path))
    if not clips:
        raise DataError(f"{path}: no clips")
    labels = [c.label for c in clips]
    if vocabulary is None:
        if any(not lab for lab in labels):
            raise DataError(f"{path}: clips without labels cannot be used here")
        vocabulary = lm.ClassVocabulary.from_labels(labels)
    return _clip_tensors(clips, vocabulary, t_data), labels, vocabulary


def _model_config(model_kwargs: dict, num_classes: int, t_data: int) -> ModelConfig:
    merged = dict(model_kwargs)
    merged.setdefault("input_dim", lm.DEFAULT_LAYOUT.feature_count)
    merged.setdefault("num_classes", num_classes)
    merged.setdefault("max_seq_len", t_data + 1)
    if merged["num_classes"] != num_classes:
        raise DataError(f"config num_classes {merged['num_classes']} but the "
                        f"dataset has {num_classes} classes")
    if merged["max_seq_len"] < t_data + 1:
        raise DataError("max_seq_len must cover t_data + 1 rows")
    return ModelConfig(**merged)


def _metric_line(report: tr.MetricsReport) -> str:
    return (f"accuracy {report.accuracy:.4f} recall_macro {report.recall_macro:.4f} "
            f"f1_macro {report.f1_macro:.4f}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_preprocess(args) -> int:
    merged: list[lm.FrameRecord] = []
    seen_ids: dict[str, str] = {}
    missing = 0
    for path in args.data:
        records = _read_records(path)
        for rec in records:
            owner = seen_ids.setdefault(rec.video_id, path)
            if owner != path:
                raise DataError(f"video id {rec.video_id!r} appears in both "
                                f"{owner} and {path}")
            missing += sum(v is None for v in rec.features)
        merged.extend(records)
    clips = lm.group_clips(merged)
    labels = sorted({c.label for c in clips if c.label})
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(lm.write_landmark_csv(merged))
    print(f"files {len(args.data)} clips {len(clips)} "
          f"frames {len(merged)} classes {len(labels)} missing_values {missing}")
    return 0


def cmd_train(args) -> int:
    model_kwargs, train_kwargs = _load_config_file(args.config)
    if args.seed is not None:
        train_kwargs["seed"] = args.seed
    train_config = TrainConfig(**train_kwargs)
    clips, labels, vocabulary = _load_dataset(args.data, train_config.t_data)
    model_config = _model_config(model_kwargs, len(vocabulary), train_config.t_data)
    train_clips, val_clips = tr.stratified_split(clips, labels, args.val_fraction,
                                                 train_config.seed)
    params, log = tr.train_loop(train_clips, val_clips, model_config, train_config)
    report = tr.evaluate(params, model_config, val_clips, vocabulary)
    ckpt.save_checkpoint(params, model_config, vocabulary, args.checkpoint,
                         seed=train_config.seed,
                         metrics={"val_accuracy": report.accuracy,
                                  "val_f1_macro": report.f1_macro,
                                  "epochs": len(log)})
    if args.epoch_log:
        with open(args.epoch_log, "w", encoding="utf-8") as fh:
            for entry in log:
                fh.write(json.dumps(entry) + "\n")
    print(f"trained {len(log)} epochs on {len(train_clips)} clips "
          f"(val {len(val_clips)}), val {_metric_line(report)}")
    print(f"checkpoint written to {args.checkpoint}")
    return 0


def cmd_crossval(args) -> int:
    model_kwargs, train_kwargs = _load_config_file(args.config)
    if args.seed is not None:
        train_kwargs["seed"] = args.seed
    if args.folds is not None:
        train_kwargs["k_folds"] = args.folds
    if args.test_fraction is not None:
        train_kwargs["test_fraction"] = args.test_fraction
    train_config = TrainConfig(**train_kwargs)
    clips, labels, vocabulary = _load_dataset(args.data, train_config.t_data)
    model_config = _model_config(model_kwargs, len(vocabulary), train_config.t_data)
    dev, held_out = tr.stratified_split(clips, labels, train_config.test_fraction,
                                        train_config.seed)
    dev_labels = [vocabulary.name_of(c.label_index) for c in dev]
    folds = tr.stratified_kfold(dev, dev_labels, train_config.k_folds,
                                train_config.seed)
    print(f"{len(dev)} development clips ({len(held_out)} held out), "
          f"{train_config.k_folds} folds")
    reports = []
    for i, (fold_train, fold_val) in enumerate(folds):
        params, log = tr.train_loop(fold_train, fold_val, model_config, train_config)
        report = tr.evaluate(params, model_config, fold_val, vocabulary)
        reports.append(report)
        print(f"fold {i + 1}/{len(folds)}: {_metric_line(report)} "
              f"({len(log)} epochs)")
    def mean(key):
        return sum(getattr(r, key) for r in reports) / len(reports)

    print(f"mean accuracy {mean('accuracy'):.4f} "
          f"recall_macro {mean('recall_macro'):.4f} "
          f"f1_macro {mean('f1_macro'):.4f}")
    return 0


def cmd_eval(args) -> int:
    params, model_config, vocabulary = ckpt.load_checkpoint(args.checkpoint)
    t_data = model_config.max_seq_len - 1
    clips, _, _ = _load_dataset(args.data, t_data, vocabulary)
    report = tr.evaluate(params, model_config, clips, vocabulary)
    for name in ("accuracy", "recall_micro", "recall_macro", "f1_macro",
                 "f1_weighted"):
        print(f"{name} {getattr(report, name):.4f}")
    if args.confusion_out:
        with open(args.confusion_out, "w", encoding="utf-8") as fh:
            fh.write(tr.confusion_csv(report, vocabulary))
    return 0


def cmd_infer(args) -> int:
    params, model_config, vocabulary = ckpt.load_checkpoint(args.checkpoint)
    thin, t_override = parse_sampler(args.sampler)
    t_data = t_override if t_override is not None else model_config.max_seq_len - 1
    if t_data + 1 > model_config.max_seq_len:
        raise DataError(f"sampler t_data {t_data} exceeds the model's capacity")
    clips = lm.group_clips(_read_records(args.data))
    if len(clips) != 1:
        raise DataError(f"{args.data}: expected exactly 1 clip, found {len(clips)}")
    frames = [f.features for f in clips[0].frames]
    ranked = infer_clip(frames, params, model_config, vocabulary,
                        t_data=t_data, k=args.top_k, sampler=thin)
    for rank, (label, prob) in enumerate(ranked, start=1):
        print(json.dumps({"rank": rank, "label": label, "probability": prob}))
    return 0


class _TsFrame(list):
    """Feature list plus the stream timestamp it arrived with."""

    __slots__ = ("ts",)

    def __init__(self, features, ts):
        super().__init__(features)
        self.ts = ts


def _decode_stream_record(line: str, width: int) -> Optional[_TsFrame]:
    try:
        record = json.loads(line)
        features = record["features"]
        if not isinstance(features, list) or len(features) != width:
            return None
        ts = record.get("ts")
        frame = _TsFrame(
            [None if v is None else float(v) for v in features],
            None if ts is None else float(ts),
        )
        return frame
    except (json.JSONDecodeError, TypeError, ValueError, KeyError):
        return None


def cmd_stream(args) -> int:
    params, model_config, vocabulary = ckpt.load_checkpoint(args.checkpoint)
    thin, t_override = parse_sampler(args.sampler)
    t_data = t_override if t_override is not None else model_config.max_seq_len - 1
    if t_data + 1 > model_config.max_seq_len:
        raise DataError(f"sampler t_data {t_data} exceeds the model's capacity")
    seg_config = SegmenterConfig(
        start_threshold=args.start_threshold, stop_threshold=args.stop_threshold,
        start_hold=args.start_hold, stop_hold=args.stop_hold,
        max_clip_frames=args.max_clip_frames)
    segmenter = StreamSegmenter(seg_config)
    width = model_config.input_dim

    # One classification in flight at a time; ingestion keeps pace with the
    # camera while the worker chews on the previous clip.
    clip_q: queue.Queue = queue.Queue(maxsize=2)
    out = sys.stdout

    worker_errors: list[str] = []

    def classify_worker():
        # Never dies mid-stream: an error is recorded and the queue keeps
        # draining, otherwise the producer could block on a full queue.
        while True:
            item = clip_q.get()
            if item is None:
                return
            if worker_errors:
                continue
            clip, done_at = item
            try:
                stamps = [f.ts for f in clip]
                timestamps = stamps if all(t is not None for t in stamps) else None
                ranked = infer_clip(clip, params, model_config, vocabulary,
                                    t_data=t_data, k=args.top_k,
                                    timestamps=timestamps, sampler=thin)
                record = {
                    "type": "prediction",
                    "clip_frames": len(clip),
                    "top": [{"label": lab, "probability": p} for lab, p in ranked],
                    "latency_ms": (time.monotonic() - done_at) * 1000.0,
                }
                out.write(json.dumps(record) + "\n")
                out.flush()
            except Exception as exc:  # noqa: BLE001 - reported at exit
                worker_errors.append(str(exc))

    worker = threading.Thread(target=classify_worker, daemon=True)
    worker.start()
    bad_lines = 0
    try:
        for line in sys.stdin:
            if not line.strip():
                continue
            frame = _decode_stream_record(line, width)
            if frame is None:
                bad_lines += 1
                continue
            for clip in segmenter.push(frame):
                clip_q.put((clip, time.monotonic()))
        for clip in segmenter.flush():
            clip_q.put((clip, time.monotonic()))
    finally:
        clip_q.put(None)
        worker.join()
    skipped = bad_lines + segmenter.skipped
    if skipped:
        print(f"skipped {skipped} malformed frame record(s)", file=sys.stderr)
    if worker_errors:
        print(f"signseq stream: {worker_errors[0]}", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="signseq",
                     description="Skeletal-landmark sign clip classifier.")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")

    p = sub.add_parser("preprocess", help="merge and validate landmark CSVs")
    p.add_argument("--data", action="append", required=True,
                   help="landmark CSV (repeatable)")
    p.add_argument("--out", help="write the merged CSV here")
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("train", help="train a model, write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--checkpoint", required=True, help="output path")
    p.add_argument("--seed", type=int)
    p.add_argument("--val-fraction", type=float, default=0.2,
                   help="stratified slice used for scheduling/early stop")
    p.add_argument("--epoch-log", help="write per-epoch NDJSON here")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("crossval",
                       help="stratified split + K-fold cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--test-fraction", type=float)
    p.set_defaults(fn=cmd_crossval)

    p = sub.add_parser("eval", help="metrics for a labeled CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--confusion-out", help="write the confusion matrix CSV here")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("infer", help="top-k for one clip CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--sampler", default="fixed:16", help="fixed:<n> or fps:<rate>")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("stream",
                       help="NDJSON frames on stdin -> predictions on stdout")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--sampler", default="fps:15", help="fixed:<n> or fps:<rate>")
    p.add_argument("--start-threshold", type=float, default=0.01)
    p.add_argument("--stop-threshold", type=float, default=0.004)
    p.add_argument("--start-hold", type=int, default=3)
    p.add_argument("--stop-hold", type=int, default=10)
    p.add_argument("--max-clip-frames", type=int, default=150)
    p.set_defaults(fn=cmd_stream)
    return parser


def run_cli(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "fn", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.fn(args)
    except _DATA_ERRORS as exc:
        print(f"signseq {args.command}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
