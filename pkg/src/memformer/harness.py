"""Training loop, evaluation, ablation drivers, and report writers.

Training is plain mini-batch Adam on cross-entropy with seeded shuffling.
Per epoch it records the mean train-mode batch loss plus eval-mode accuracy
on the train and validation splits, and it keeps a snapshot of the best
validation accuracy to restore at the end. Memory banks mutate only inside
train-mode forwards, in batch order, so a (seed, config, data) triple fixes
the loss trace bitwise.

The ablation drivers retrain fresh models that differ in exactly one config
field and emit one row per variant: metrics, census, the split-manifest
hash, and a fingerprint of everything that was held fixed.
"""

from __future__ import annotations

import csv
import hashlib
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import extract_window, manifest_sha256
from .metrics import EvalReport, confusion_matrix
from .model import MemFormer, ModelConfig
from .optim import Adam

__all__ = [
    "TrainConfig",
    "EpochStats",
    "TrainResult",
    "extract_samples",
    "train",
    "evaluate",
    "ablate_attention",
    "ablate_pe",
    "sweep_memory",
    "DEFAULT_MEMORY_SIZES",
    "config_fingerprint",
    "parse_config_file",
    "write_report_csv",
    "write_report_text",
    "write_epoch_log",
]

DEFAULT_MEMORY_SIZES = (1, 5, 10, 15, 20, 25, 30)


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 1e-6
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainResult:
    history: list
    best_epoch: int
    best_val_acc: float
    seconds: float


def extract_samples(cube, part, window):
    """Windows and 0-based labels for one manifest split (possibly empty)."""
    if len(part) == 0:
        return np.zeros((0, window, window, cube.bands)), np.zeros(0, dtype=np.int64)
    windows = np.stack([extract_window(cube, r, c, window) for r, c, _ in part])
    labels = np.asarray(part[:, 2], dtype=np.int64) - 1
    return windows, labels


def _batched_logits(model, windows, batch_size):
    out = []
    for start in range(0, len(windows), batch_size):
        out.append(model.forward(windows[start : start + batch_size], train=False).data)
    return np.concatenate(out, axis=0)


def _eval_loss_acc(model, windows, labels, batch_size):
    if len(windows) == 0:
        return float("nan"), float("nan")
    logits = _batched_logits(model, windows, batch_size)
    loss = ad.cross_entropy(ad.constant(logits), labels).data
    acc = float((np.argmax(logits, axis=1) == labels).mean())
    return float(loss), acc


def train(model, cube, manifest, cfg):
    """Fit ``model`` on the manifest's train split; returns the epoch log.

    The model is mutated in place and finishes holding the parameters (and
    memory banks) of the best-validation-accuracy epoch; with an empty
    validation split the final epoch is kept and val columns are NaN.
    """
    started = time.perf_counter()
    if len(manifest.train) == 0:
        raise ValueError("train split is empty")
    window = model.config.window
    x_train, y_train = extract_samples(cube, manifest.train, window)
    x_val, y_val = extract_samples(cube, manifest.val, window)
    if y_train.max() >= model.config.classes or (len(y_val) and y_val.max() >= model.config.classes):
        raise ValueError("manifest contains a class id beyond the model's class count")

    opt = Adam(
        model.parameters(),
        lr=cfg.lr,
        weight_decay=cfg.weight_decay,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
    )
    shuffle_rng = np.random.default_rng(cfg.seed)
    history = []
    best_epoch = -1
    best_val = -np.inf
    best_state = None

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(x_train))
        # per-sample losses keyed by dataset index, so the epoch mean does not
        # depend on the shuffle's summation order or on a ragged final batch
        sample_losses = np.zeros(len(x_train))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            opt.zero_grad()
            logits = model.forward(x_train[idx], train=True)
            loss = ad.cross_entropy(logits, y_train[idx])
            if not np.isfinite(loss.data):
                raise ValueError(f"epoch {epoch}: non-finite training loss")
            loss.backward()
            opt.step()
            peak = logits.data.max(axis=1, keepdims=True)
            lse = peak[:, 0] + np.log(np.exp(logits.data - peak).sum(axis=1))
            sample_losses[idx] = lse - logits.data[np.arange(len(idx)), y_train[idx]]
        train_loss = float(sample_losses.mean())
        _, train_acc = _eval_loss_acc(model, x_train, y_train, cfg.batch_size)
        val_loss, val_acc = _eval_loss_acc(model, x_val, y_val, cfg.batch_size)
        history.append(EpochStats(epoch, train_loss, train_acc, val_loss, val_acc))
        # ties go to the later epoch: equal validation, more training
        if len(y_val) and val_acc >= best_val:
            best_val = val_acc
            best_epoch = epoch
            best_state = (
                {name: p.data.copy() for name, p in model.parameters().items()},
                {name: b.copy() for name, b in model.buffers().items()},
            )

    if best_state is not None:
        params, banks = best_state
        for name, p in model.parameters().items():
            p.data = params[name]
        for name, values in banks.items():
            model.set_buffer(name, values)
    else:
        best_epoch = cfg.epochs
        best_val = float("nan")
    return TrainResult(
        history=history,
        best_epoch=best_epoch,
        best_val_acc=best_val,
        seconds=time.perf_counter() - started,
    )


def evaluate(model, cube, part, batch_size=64):
    """EvalReport over one manifest split (typically test)."""
    if len(part) == 0:
        raise ValueError("evaluation split is empty")
    started = time.perf_counter()
    model.freeze_memory()
    try:
        windows, labels = extract_samples(cube, part, model.config.window)
        if labels.max() >= model.config.classes:
            raise ValueError("manifest contains a class id beyond the model's class count")
        logits = _batched_logits(model, windows, batch_size)
    finally:
        model.thaw_memory()
    predicted = np.argmax(logits, axis=1)
    confusion = confusion_matrix(labels, predicted, model.config.classes)
    trainable, non_trainable = model.count_params()
    return EvalReport.from_confusion(
        confusion,
        trainable_params=trainable,
        non_trainable_params=non_trainable,
        seconds=time.perf_counter() - started,
    )


# -- ablation drivers ---------------------------------------------------------


def config_fingerprint(model_cfg, train_cfg, exclude=()):
    """Hash of every config field not being swept; identical across variants."""
    parts = []
    for f in fields(model_cfg):
        if f.name not in exclude:
            parts.append(f"model.{f.name}={getattr(model_cfg, f.name)!r}")
    for f in fields(train_cfg):
        parts.append(f"train.{f.name}={getattr(train_cfg, f.name)!r}")
    return hashlib.sha256("\n".join(parts).encode()).hexdigest()[:16]


def _run_trial(cube, manifest, model_cfg, train_cfg):
    model = MemFormer(model_cfg)
    result = train(model, cube, manifest, train_cfg)
    report = evaluate(model, cube, manifest.test, batch_size=train_cfg.batch_size)
    return model, result, report


def _trial_row(key, value, cube, manifest, model_cfg, train_cfg, exclude):
    model, result, report = _run_trial(cube, manifest, model_cfg, train_cfg)
    trainable, non_trainable = model.count_params()
    return {
        key: value,
        "oa": report.oa,
        "aa": report.aa,
        "kappa": report.kappa,
        "trainable_params": trainable,
        "non_trainable_params": non_trainable,
        "best_epoch": result.best_epoch,
        "train_seconds": round(result.seconds, 3),
        "manifest_sha256": manifest_sha256(manifest),
        "fingerprint": config_fingerprint(model_cfg, train_cfg, exclude=exclude),
    }


def ablate_attention(cube, manifest, model_cfg, train_cfg):
    """Two rows: memory vs standard attention, everything else identical."""
    rows = []
    for mode in ("memory", "standard"):
        cfg = replace(model_cfg, attention=mode)
        rows.append(
            _trial_row("attention", mode, cube, manifest, cfg, train_cfg, ("attention",))
        )
    return rows


def ablate_pe(cube, manifest, model_cfg, train_cfg):
    """Four rows, one per positional-embedding mode."""
    rows = []
    for mode in ("none", "learnable", "sinusoidal1d", "sspe"):
        cfg = replace(model_cfg, pe_mode=mode)
        rows.append(_trial_row("pe_mode", mode, cube, manifest, cfg, train_cfg, ("pe_mode",)))
    return rows


def sweep_memory(cube, manifest, model_cfg, train_cfg, sizes=DEFAULT_MEMORY_SIZES):
    """One row per memory capacity, shared seed and split."""
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValueError("memory size list is empty")
    if min(sizes) < 1:
        raise ValueError(f"memory sizes must be >= 1, got {sizes}")
    rows = []
    for size in sizes:
        cfg = replace(model_cfg, memory=size, attention="memory")
        rows.append(
            _trial_row("memory_size", size, cube, manifest, cfg, train_cfg, ("memory",))
        )
    return rows


# -- config files and reports -------------------------------------------------

_MODEL_FIELDS = {f.name: f.type for f in fields(ModelConfig)}
_TRAIN_FIELDS = {f.name: f.type for f in fields(TrainConfig)}


def parse_config_file(path):
    """Flat ``key = value`` text -> (model overrides, train overrides).

    Keys are ModelConfig / TrainConfig field names; ``seed`` sets both.
    Blank lines and ``#`` comments are ignored; unknown keys are rejected.
    """
    model_kwargs = {}
    train_kwargs = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        known = False
        if key in _MODEL_FIELDS:
            model_kwargs[key] = _coerce(key, value, _MODEL_FIELDS[key], path, lineno)
            known = True
        if key in _TRAIN_FIELDS:
            train_kwargs[key] = _coerce(key, value, _TRAIN_FIELDS[key], path, lineno)
            known = True
        if not known:
            raise ValueError(f"{path}: line {lineno}: unknown config key {key!r}")
    return model_kwargs, train_kwargs


def _coerce(key, value, typ, path, lineno):
    want = typ if isinstance(typ, str) else typ.__name__
    try:
        if want == "int":
            return int(value)
        if want == "float":
            return float(value)
        return value
    except ValueError:
        raise ValueError(f"{path}: line {lineno}: {key} expects {want}, got {value!r}") from None


def write_report_csv(rows, path):
    """Header plus one metric row per trial."""
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def write_report_text(rows, path, title, notes=()):
    """Aligned human-readable twin of the CSV report."""
    if not rows:
        raise ValueError("no rows to write")
    keys = list(rows[0].keys())
    cells = [[_fmt(row[k]) for k in keys] for row in rows]
    widths = [max(len(k), *(len(r[i]) for r in cells)) for i, k in enumerate(keys)]
    lines = [title, ""]
    lines.append("  ".join(k.ljust(w) for k, w in zip(keys, widths)))
    for r in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    for note in notes:
        lines.append("")
        lines.append(note)
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def write_epoch_log(history, path):
    """Per-epoch CSV: epoch, train_loss, train_acc, val_loss, val_acc."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for s in history:
            writer.writerow(
                [s.epoch, repr(s.train_loss), repr(s.train_acc), repr(s.val_loss), repr(s.val_acc)]
            )
