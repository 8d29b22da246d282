"""Command-line entry point: ``dwnhar <subcommand> ...``.

Errors print a single line ``error: <category>: <message>`` on stderr and exit
with a non-zero status.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import datahar, energy, infer, rtlgen
from .datahar import DatasetFormatError
from .encoding import DegenerateChannelError, encode
from .infer import ModelFormatError
from .model import load_checkpoint, save_checkpoint
from .train import (
    ConfigError, TrainConfig, dump_config, evaluate, format_confusion, make_config,
    parse_config_text, split_validation, train,
)

log = logging.getLogger("dwnhar")

EXIT_CODES = {"usage": 2, "missing-file": 3, "config": 4, "data-format": 5,
              "model-format": 6, "check-failed": 7, "value": 8}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def _write_json_line(fh, record: dict) -> None:
    fh.write(json.dumps(record, sort_keys=True) + "\n")


def _set_threads(n: int) -> None:
    if n and n > 0:
        import numba
        numba.set_num_threads(n)


def _load_data(args, split: str):
    if getattr(args, "synthetic", 0):
        from .synthetic import make_har_like
        seed = 1 if split == "train" else 2
        subjects = range(1, 22) if split == "train" else range(22, 31)
        return make_har_like(args.synthetic, seed=seed, subjects=subjects, split=split)
    if not args.data_root:
        raise CliError("usage", "--data-root is required (or --synthetic N)")
    return datahar.load_split(args.data_root, split)


def _add_data_args(p) -> None:
    p.add_argument("--data-root", help="extracted 'UCI HAR Dataset' directory")
    p.add_argument("--synthetic", type=int, default=0, metavar="N",
                   help="use N synthetic samples instead of the real dataset")


# -- subcommands -------------------------------------------------------------

def cmd_prepare_data(args) -> int:
    subjects = {}
    for split in datahar.SPLITS:
        ds = _load_data(args, split)
        subjects[split] = set(int(s) for s in np.unique(ds.subjects))
        _write_json_line(sys.stdout, {
            "split": split, "samples": len(ds), "subjects": len(subjects[split]),
            "class_counts": {str(k): v for k, v in datahar.class_distribution(ds).items()},
        })
    overlap = subjects["train"] & subjects["test"]
    if overlap:
        raise CliError("data-format", f"train and test share subjects {sorted(overlap)}")
    return 0


def _config_from_args(args) -> TrainConfig:
    overrides = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError("missing-file", f"config file not found: {path}")
        overrides.update(parse_config_text(path.read_text(), str(path)))
    for f in dataclasses.fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            overrides[f.name] = v
    return make_config(overrides)


def cmd_train(args) -> int:
    config = _config_from_args(args)
    _set_threads(config.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_ds = _load_data(args, "train")
    eval_sets = {}
    if config.val_fraction > 0:
        train_ds, eval_sets["val"] = split_validation(train_ds, config.val_fraction, config.seed)
    test_ds = None if args.no_test else _load_data(args, "test")
    if test_ds is not None:
        eval_sets["test"] = test_ds
    (out / "config.txt").write_text(dump_config(config))
    with open(out / "epochs.jsonl", "w") as fh:
        def on_epoch(rec):
            _write_json_line(fh, rec)
            fh.flush()
            if not args.quiet:
                print(json.dumps(rec), flush=True)
        model, history = train(train_ds, config, eval_sets, on_epoch)
    save_checkpoint(model, out / "checkpoint.npz")
    frozen = infer.freeze(model)
    infer.save(frozen, out / "model.dwnm")
    summary = {"model": str(out / "model.dwnm"), "size_bytes": infer.model_size_bytes(frozen)}
    if test_ds is not None:
        m = evaluate(model, test_ds)
        summary.update(test_accuracy=m.accuracy, test_macro_f1=m.macro_f1,
                       confusion=m.confusion.tolist())
    (out / "metrics.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(json.dumps({k: v for k, v in summary.items() if k != "confusion"}))
    return 0


def _load_model(path) -> infer.FrozenModel:
    p = Path(path)
    if not p.is_file():
        raise CliError("missing-file", f"model file not found: {p}")
    return infer.load(p)


def cmd_eval(args) -> int:
    frozen = _load_model(args.model)
    if frozen.encoder is None:
        raise CliError("model-format", "model carries no encoder thresholds")
    ds = _load_data(args, args.split)
    m = evaluate(frozen, ds)
    _write_json_line(sys.stdout, {"split": args.split, "samples": len(ds),
                                  "accuracy": m.accuracy, "macro_f1": m.macro_f1})
    names = datahar.ACTIVITY_NAMES if frozen.num_classes == 6 else None
    grid = format_confusion(m.confusion, names)
    print(grid)
    if args.confusion_out:
        Path(args.confusion_out).write_text(grid + "\n")
    return 0


def cmd_export(args) -> int:
    src = Path(args.checkpoint)
    if not src.is_file():
        raise CliError("missing-file", f"checkpoint not found: {src}")
    frozen = infer.freeze(load_checkpoint(src))
    infer.save(frozen, args.out)
    size = infer.model_size_bytes(frozen)
    _write_json_line(sys.stdout, {"model": args.out, "size_bytes": size,
                                  "size_kib": round(size / 1024, 2),
                                  "luts": [l.num_luts for l in frozen.layers]})
    return 0


def cmd_emit_rtl(args) -> int:
    frozen = _load_model(args.model)
    net = rtlgen.lower(frozen, args.pipeline_stages)
    text = rtlgen.emit_verilog(net, args.module_name)
    out = Path(args.out)
    out.write_text(text)
    out.with_suffix(".report.txt").write_text(rtlgen.report(net, args.module_name))
    record = {"rtl": str(out), **rtlgen.node_counts(net)}
    if args.check:
        rng = np.random.default_rng(args.seed)
        bits = (rng.random((args.check, frozen.input_width)) < 0.5).astype(np.uint8)
        want, _ = infer.predict_bits(frozen, bits)
        got, _ = rtlgen.interpret(net, bits)
        agree = int((want == got).sum())
        record.update(checked=args.check, agree=agree)
        if agree != args.check:
            _write_json_line(sys.stdout, record)
            raise CliError("check-failed", f"netlist disagrees on {args.check - agree} inputs")
    _write_json_line(sys.stdout, record)
    return 0


def cmd_bench(args) -> int:
    _set_threads(1)
    frozen = _load_model(args.model)
    if args.random:
        rng = np.random.default_rng(args.seed)
        bits = (rng.random((args.random, frozen.input_width)) < 0.5).astype(np.uint8)
    else:
        ds = _load_data(args, args.split)
        bits = encode(frozen.encoder, ds.windows)
    result = infer.bench(frozen, bits, args.repetitions)
    _write_json_line(sys.stdout, result)
    return 0


def cmd_estimate_energy(args) -> int:
    mj = energy.estimate_energy(args.flops)
    _write_json_line(sys.stdout, {"flops": args.flops, "energy_mj": round(mj, 6),
                                  "energy_mj_rounded": round(mj)})
    return 0


def _local_row(model_path: Path, metrics_path: Path | None) -> dict:
    frozen = _load_model(model_path)
    row = {"name": model_path.parent.name + "/" + model_path.name,
           "size_bytes": infer.model_size_bytes(frozen),
           "layers": len(frozen.layers),
           "luts": sum(l.num_luts for l in frozen.layers),
           "arity": ",".join(sorted({str(l.arity) for l in frozen.layers})),
           "lut_bits": frozen.total_lut_bits, "accuracy": None, "f1": None}
    if metrics_path is not None and metrics_path.is_file():
        m = json.loads(metrics_path.read_text())
        row["accuracy"] = m.get("test_accuracy")
        row["f1"] = m.get("test_macro_f1")
    return row


def cmd_report(args) -> int:
    manifest = energy.DEFAULT_MANIFEST
    if args.manifest:
        if not Path(args.manifest).is_file():
            raise CliError("missing-file", f"manifest not found: {args.manifest}")
        manifest = energy.load_manifest(args.manifest)
    local = []
    for run in args.run or []:
        run = Path(run)
        local.append(_local_row(run / "model.dwnm", run / "metrics.json"))
    for model in args.model or []:
        local.append(_local_row(Path(model), None))
    text = energy.comparison_table(manifest, local)
    if local:
        text += "\n" + energy.size_table(local)
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text)
    return 0


# -- parser ------------------------------------------------------------------

def _add_config_flags(p) -> None:
    for f in dataclasses.fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        default = f.default
        if isinstance(default, tuple):
            p.add_argument(flag, dest=f.name, default=None,
                           type=lambda s: tuple(int(v) for v in s.split(",") if v),
                           help="comma-separated LUT counts per layer")
        elif isinstance(default, int):
            p.add_argument(flag, dest=f.name, type=int, default=None)
        elif isinstance(default, float):
            p.add_argument(flag, dest=f.name, type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dwnhar", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("prepare-data", help="parse and cache both splits, print class counts")
    _add_data_args(s)
    s.set_defaults(func=cmd_prepare_data)

    s = sub.add_parser("train", help="train a model; writes model.dwnm, epochs.jsonl, config.txt")
    _add_data_args(s)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--config", help="flat key=value config file")
    s.add_argument("--no-test", action="store_true", help="skip test-split evaluation")
    s.add_argument("--quiet", action="store_true")
    _add_config_flags(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="accuracy, macro-F1 and confusion matrix of a model file")
    _add_data_args(s)
    s.add_argument("--model", required=True)
    s.add_argument("--split", choices=datahar.SPLITS, default="test")
    s.add_argument("--confusion-out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("export", help="freeze a training checkpoint into a model file")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("emit-rtl", help="write SystemVerilog for a model file")
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--module-name", default="dwn_top")
    s.add_argument("--pipeline-stages", type=int, default=2)
    s.add_argument("--check", type=int, default=0, metavar="N",
                   help="verify the netlist against the model on N random inputs")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_emit_rtl)

    s = sub.add_parser("bench", help="single-threaded inference throughput")
    _add_data_args(s)
    s.add_argument("--model", required=True)
    s.add_argument("--split", choices=datahar.SPLITS, default="test")
    s.add_argument("--random", type=int, default=0, metavar="N",
                   help="benchmark on N random input vectors instead of a dataset")
    s.add_argument("--repetitions", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("estimate-energy", help="energy per inference from a FLOP count")
    s.add_argument("--flops", type=int, required=True)
    s.set_defaults(func=cmd_estimate_energy)

    s = sub.add_parser("report", help="comparison and model-size tables")
    s.add_argument("--manifest", help="JSON list of {name, accuracy, f1, size_kib, flops}")
    s.add_argument("--run", action="append", help="training output directory (repeatable)")
    s.add_argument("--model", action="append", help="bare model file (repeatable)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s")
        if hasattr(args, "threads") and args.threads:
            _set_threads(args.threads)
        return args.func(args)
    except CliError as exc:
        category, msg = exc.category, str(exc)
    except ConfigError as exc:
        category, msg = "config", str(exc)
    except FileNotFoundError as exc:
        category, msg = "missing-file", str(exc)
    except ModelFormatError as exc:
        category, msg = "model-format", str(exc)
    except (DatasetFormatError, DegenerateChannelError) as exc:
        category, msg = "data-format", str(exc)
    except ValueError as exc:
        category, msg = "value", str(exc)
    print(f"error: {category}: {' '.join(msg.split())}", file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
