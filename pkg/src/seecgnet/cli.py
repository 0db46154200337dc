"""Command-line interface: preprocess | synth | train | eval | crossval | gradcheck.

A run is described by one JSON config file with ``model``, ``train``, and
``data`` sections plus ``seed`` and ``out_dir``; any field can be overridden
on the command line with ``--set section.key=value``. The fully resolved
config is echoed into the output directory before work begins, and that echo
alone reproduces the run. Exit codes: 0 success, 1 usage or config error,
2 runtime or data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .autodiff import active_graph, grad_check, ops
from .autodiff.tensor import Tensor
from .data import (load_dataset, read_record, resample_record, save_dataset,
                   split_records, synth_dataset, write_record)
from .errors import ConfigError, DataError, ShapeError
from .model import ModelConfig, build_model, load_weights, param_count, save_weights
from .seeding import derive_seed
from .signal import default_target_len
from .training import TrainConfig, crossvalidate, evaluate, train
from . import __version__

GRADCHECK_PARAM_LIMIT = 20_000

_DEFAULT_DATA = {
    "manifest": None,
    "val_fraction": 0.0,
    "by_subject": True,
    "folds": 5,
    "target_len": None,
}


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def _nest_dotted(flat: dict) -> dict:
    """Expand dotted keys ({"model.use_se": x}) into nested sections."""
    out: dict = {}
    for key, value in flat.items():
        parts = key.split(".")
        cursor = out
        for part in parts[:-1]:
            cursor = cursor.setdefault(part, {})
            if not isinstance(cursor, dict):
                raise ConfigError(f"config key {key!r} conflicts with a scalar value")
        if isinstance(value, dict):
            existing = cursor.setdefault(parts[-1], {})
            if not isinstance(existing, dict):
                raise ConfigError(f"config key {key!r} conflicts with a scalar value")
            for sub_key, sub_value in _nest_dotted(value).items():
                existing[sub_key] = sub_value
        else:
            cursor[parts[-1]] = value
    return out


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, _, raw = text.partition("=")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_run_config(path: str | None, overrides, args) -> dict:
    """Merge file config, --set overrides, and convenience flags."""
    config: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p}: line {exc.lineno}: {exc.msg}")
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {p} must hold a JSON object")
        config = _nest_dotted(raw)
    config.setdefault("seed", 0)
    config.setdefault("model", {})
    config.setdefault("train", {})
    data = dict(_DEFAULT_DATA)
    data.update(config.get("data", {}))
    config["data"] = data

    for item in overrides or []:
        key, value = _parse_override(item)
        merged = _nest_dotted({key: value})
        _deep_update(config, merged)

    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    if getattr(args, "out_dir", None) is not None:
        config["out_dir"] = str(args.out_dir)
    if getattr(args, "manifest", None) is not None:
        config["data"]["manifest"] = str(args.manifest)
    if getattr(args, "no_se", False):
        config["model"]["use_se"] = False
    if getattr(args, "no_2d_blocks", False):
        config["model"]["use_2d_blocks"] = False
    if getattr(args, "no_parallel", False):
        config["model"]["use_parallel"] = False
    return config


def _deep_update(base: dict, extra: dict) -> None:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value


def _resolve_for_dataset(config: dict, manifest, records) -> tuple[ModelConfig, TrainConfig]:
    model_section = dict(config["model"])
    model_section.setdefault("n_leads", manifest.n_leads)
    model_section.setdefault("n_samples", records[0].n_samples)
    model_section.setdefault("n_classes", len(manifest.class_names))
    try:
        model_config = ModelConfig.from_dict(model_section)
    except TypeError as exc:
        raise ConfigError(f"model config: {exc}")
    train_section = dict(config["train"])
    train_section.setdefault("seed", int(config["seed"]))
    try:
        train_config = TrainConfig(**train_section)
    except TypeError as exc:
        raise ConfigError(f"train config: {exc}")
    config["model"] = model_config.to_dict()
    config["train"] = train_config.to_dict()
    return model_config, train_config


def _echo_config(config: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require_out_dir(config: dict) -> Path:
    if "out_dir" not in config or not config["out_dir"]:
        raise ConfigError("out_dir is required (set it in the config or pass --out-dir)")
    return Path(config["out_dir"])


def _require_manifest(config: dict) -> Path:
    manifest = config["data"].get("manifest")
    if not manifest:
        raise ConfigError("data.manifest is required (set it in the config or pass --manifest)")
    return Path(manifest)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    records = synth_dataset(
        seed=derive_seed(args.seed, "synth"),
        n_records=args.n_records, n_classes=args.n_classes, n_leads=args.n_leads,
        n_samples=args.n_samples, noise_std=args.noise_std,
        records_per_subject=args.records_per_subject)
    manifest_path = save_dataset(records, args.out_dir)
    print(f"wrote {len(records)} records and {manifest_path}")
    return 0


def cmd_preprocess(args) -> int:
    from .data import DatasetManifest, ManifestEntry, read_manifest, write_manifest

    manifest = read_manifest(args.manifest)
    base = Path(args.manifest).parent
    out_dir = Path(args.out_dir)
    (out_dir / "records").mkdir(parents=True, exist_ok=True)
    failures: list[str] = []
    entries: list[ManifestEntry] = []
    target = args.target_len
    new_rate = None
    for entry in manifest.entries:
        try:
            record = read_record(base / entry.path, record_id=entry.record_id,
                                 subject_id=entry.subject_id, label=entry.label)
            if target is None:
                target = default_target_len(record.n_samples)
            resampled = resample_record(record, target)
            rel = f"records/{entry.record_id}.ecg"
            write_record(resampled, out_dir / rel)
            entries.append(ManifestEntry(entry.record_id, entry.subject_id,
                                         entry.label, rel))
            new_rate = resampled.sample_rate_hz
        except (DataError, ValueError, OSError) as exc:
            failures.append(f"{entry.record_id}: {exc}")
    for failure in failures:
        print(f"preprocess: {failure}", file=sys.stderr)
    if entries:
        write_manifest(DatasetManifest(
            n_leads=manifest.n_leads,
            sample_rate_hz=new_rate if new_rate is not None else manifest.sample_rate_hz,
            class_names=manifest.class_names, entries=entries), out_dir / "manifest.txt")
        print(f"resampled {len(entries)} records to length {target} in {out_dir}")
    return 2 if failures else 0


def _load_training_inputs(config: dict):
    manifest_path = _require_manifest(config)
    manifest, records = load_dataset(manifest_path)
    model_config, train_config = _resolve_for_dataset(config, manifest, records)
    return manifest, records, model_config, train_config


def cmd_train(args) -> int:
    config = load_run_config(args.config, args.set, args)
    out_dir = _require_out_dir(config)
    manifest, records, model_config, train_config = _load_training_inputs(config)
    _echo_config(config, out_dir)

    val_fraction = float(config["data"]["val_fraction"])
    by_subject = bool(config["data"]["by_subject"])
    if val_fraction > 0:
        train_records, val_records = split_records(
            records, 1.0 - val_fraction, seed=derive_seed(int(config["seed"]), "val-split"),
            by_subject=by_subject)
    else:
        train_records, val_records = records, []

    model = build_model(model_config, seed=derive_seed(int(config["seed"]), "init"))
    _, history = train(model, train_records, val_records, train_config)
    save_weights(model, out_dir / "weights.bin")

    final_eval = evaluate(model, val_records if val_records else train_records,
                          train_config.batch_size)
    report = {
        "config": config,
        "epochs": [h.to_dict() for h in history],
        "final": final_eval.to_dict(),
        "final_split": "validation" if val_records else "train",
    }
    (out_dir / "history.json").write_text(json.dumps(report, indent=2) + "\n",
                                          encoding="utf-8")
    print(f"trained {len(history)} epochs; final micro-F1 "
          f"{final_eval.micro_f1:.4f} on {report['final_split']} split")
    print(f"artifacts in {out_dir}")
    return 0


def cmd_eval(args) -> int:
    config = load_run_config(args.config, args.set, args)
    manifest, records, model_config, train_config = _load_training_inputs(config)
    model = load_weights(model_config, args.weights)
    if args.workers > 1:
        print("note: parallel evaluation merges results deterministically, but only "
              "training (always single-threaded) guarantees bitwise-identical weights",
              file=sys.stderr)
    report = evaluate(model, records, train_config.batch_size, workers=args.workers)
    out_path = Path(args.out) if args.out else Path(args.weights).parent / "metrics.json"
    out_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"micro-F1 {report.micro_f1:.4f} macro-F1 {report.macro_f1:.4f} "
          f"on {report.n_samples} records; report in {out_path}")
    return 0


def cmd_crossval(args) -> int:
    config = load_run_config(args.config, args.set, args)
    out_dir = _require_out_dir(config)
    manifest, records, model_config, train_config = _load_training_inputs(config)
    _echo_config(config, out_dir)
    k = int(config["data"]["folds"])
    reports, summary = crossvalidate(records, model_config, train_config, k=k)
    payload = {
        "config": config,
        "folds": [r.to_dict() for r in reports],
        "summary": summary,
    }
    (out_dir / "crossval.json").write_text(json.dumps(payload, indent=2) + "\n",
                                           encoding="utf-8")
    mean = summary["micro_f1"]["mean"]
    std = summary["micro_f1"]["std"]
    print(f"{k}-fold micro-F1 {mean:.4f} +/- {std:.4f}; report in {out_dir}")
    return 0


@contextmanager
def _corrupted_backward():
    """Self-test hook: mis-scale the relu backward rule by 5 percent."""
    original = ops.relu

    def bad_relu(t):
        out = original(t)
        graph = active_graph()
        if graph is not None and out._node is not None:
            node = graph.nodes[out._node]
            true_vjp = node.vjp
            if true_vjp is not None:
                node.vjp = lambda g: tuple(
                    None if piece is None else piece * 1.05 for piece in true_vjp(g))
        return out

    ops.relu = bad_relu
    try:
        yield
    finally:
        ops.relu = original


def _gradcheck_model_config(config: dict) -> ModelConfig:
    section = dict(config["model"])
    defaults = {
        "n_leads": 2, "n_samples": 64, "n_classes": 3,
        "stem_kernel": 9, "stage2_kernel": 5, "branch_kernels": [3, 5, 7],
        "stem_channels": 4, "stage2_channels": 4, "branch_channels": 4,
        "block1d_channels": 4, "blocks_per_branch_2d": 1, "blocks_per_branch_1d": 1,
        "se_ratio": 4,
    }
    for key, value in defaults.items():
        section.setdefault(key, value)
    return ModelConfig.from_dict(section)


def cmd_gradcheck(args) -> int:
    from .training import cross_entropy

    config = load_run_config(args.config, args.set, args)
    if args.config is None and args.seed is None:
        # Central differences are only meaningful away from relu kinks; this
        # default probe keeps every pre-activation clear of the eps window.
        config["seed"] = 4
    model_config = _gradcheck_model_config(config)
    model = build_model(model_config, seed=derive_seed(int(config["seed"]), "init"),
                        dtype=np.float64)
    count = param_count(model)
    if count > GRADCHECK_PARAM_LIMIT and not args.force:
        print(f"gradcheck: model has {count} parameters "
              f"(limit {GRADCHECK_PARAM_LIMIT}); pass --force to run anyway",
              file=sys.stderr)
        return 1
    rng = np.random.default_rng(
        np.random.SeedSequence(derive_seed(int(config["seed"]), "gradcheck-probe")))
    batch = rng.standard_normal((2, model_config.n_leads, model_config.n_samples))
    targets = rng.integers(0, model_config.n_classes, size=2)

    def forward():
        logits = model.forward(batch, training=True)
        return cross_entropy(logits, targets)

    if args.corrupt_backward:
        with _corrupted_backward():
            report = grad_check(forward, model.params, epsilon=1e-4)
    else:
        report = grad_check(forward, model.params, epsilon=1e-4)
    print(f"gradcheck: {count} parameters, max relative error "
          f"{report.max_relative_error:.3e} (worst: {report.worst_parameter})")
    return 0 if report.max_relative_error < 1e-4 else 2


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_config_options(sub, with_out_dir=True, with_manifest=True):
    sub.add_argument("--config", help="JSON run config file")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config field with a dotted key")
    sub.add_argument("--seed", type=int, help="run seed")
    if with_out_dir:
        sub.add_argument("--out-dir", help="output directory")
    if with_manifest:
        sub.add_argument("--manifest", help="dataset manifest path")
    sub.add_argument("--no-se", action="store_true",
                     help="disable the squeeze-excitation modules")
    sub.add_argument("--no-2d-blocks", action="store_true",
                     help="drop the 2-d residual blocks")
    sub.add_argument("--no-parallel", action="store_true",
                     help="keep only the kernel-5 branch")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seecgnet",
        description="Multi-scale residual network for multi-lead signal classification")
    parser.add_argument("--version", action="version", version=f"seecgnet {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    synth = subs.add_parser("synth", help="generate a deterministic synthetic dataset")
    synth.add_argument("--out-dir", required=True)
    synth.add_argument("--n-records", type=int, default=200)
    synth.add_argument("--n-classes", type=int, default=5)
    synth.add_argument("--n-leads", type=int, default=8)
    synth.add_argument("--n-samples", type=int, default=2048)
    synth.add_argument("--noise-std", type=float, default=0.0)
    synth.add_argument("--records-per-subject", type=int, default=1)
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(func=cmd_synth)

    prep = subs.add_parser("preprocess", help="resample a dataset to a fixed length")
    prep.add_argument("--manifest", required=True)
    prep.add_argument("--target-len", type=int, default=None,
                      help="output samples per lead (default: power-of-two floor)")
    prep.add_argument("--out-dir", required=True)
    prep.set_defaults(func=cmd_preprocess)

    tr = subs.add_parser("train", help="train a model and write weights plus history")
    _add_config_options(tr)
    tr.set_defaults(func=cmd_train)

    ev = subs.add_parser("eval", help="evaluate saved weights on a dataset")
    _add_config_options(ev, with_out_dir=False)
    ev.add_argument("--weights", required=True)
    ev.add_argument("--out", help="metrics report path (default: beside the weights)")
    ev.add_argument("--workers", type=int, default=1,
                    help="evaluation batches run on this many threads")
    ev.set_defaults(func=cmd_eval)

    cv = subs.add_parser("crossval", help="k-fold cross-validation")
    _add_config_options(cv)
    cv.set_defaults(func=cmd_crossval)

    gc = subs.add_parser("gradcheck",
                         help="finite-difference check of the recorded gradients")
    _add_config_options(gc, with_out_dir=False, with_manifest=False)
    gc.add_argument("--force", action="store_true",
                    help="run even above the parameter-count guard")
    gc.add_argument("--corrupt-backward", action="store_true", help=argparse.SUPPRESS)
    gc.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        for detail in exc.details:
            print(f"  {detail}", file=sys.stderr)
        return 2
    except (ShapeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
