"""Training loop, optimizer and evaluation metrics."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass

import numpy as np

from .augment import AugmentConfig, augment_batch, sample_stream
from .encoding import encode, fit_distributive
from .model import DwnModel, ModelConfig, backward_efd, forward_hard, init_model

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    lr: float = 0.01
    lr_decay: float = 0.1
    lr_step: int = 14
    epochs: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    # model
    layers: tuple = (2000,)
    arity: int = 4
    tau: float = 1 / 0.03
    pool_size: int = 256
    num_classes: int = 6
    bits_per_value: int = 20
    efd_radius: int = 0
    efd_decay: float = 1.0
    # augmentation
    aug_p: float = 0.3
    aug_max_shift: int = 10
    aug_scale_min: float = 0.9
    aug_scale_max: float = 1.1
    aug_jitter_sigma: float = 0.05
    aug_max_mask_len: int = 10
    aug_max_flip_axes: int = -1   # -1: any number of channels
    aug_max_rotation_deg: float = 10.0
    aug_lowpass_cutoff_hz: float = 20.0   # <= 0 disables the filter
    aug_sample_rate_hz: float = 50.0
    # runtime
    val_fraction: float = 0.0
    threads: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0 or self.epochs < 0 or self.lr_step <= 0:
            raise ValueError("lr, batch_size and lr_step must be positive, epochs non-negative")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")
        object.__setattr__(self, "layers", tuple(int(v) for v in self.layers))
        self.augment  # validates the augmentation fields

    @property
    def model(self) -> ModelConfig:
        return ModelConfig(self.layers, self.arity, self.pool_size, self.tau, self.num_classes)

    @property
    def augment(self) -> AugmentConfig:
        return AugmentConfig(
            p=self.aug_p,
            max_shift=self.aug_max_shift,
            scale_range=(self.aug_scale_min, self.aug_scale_max),
            jitter_sigma=self.aug_jitter_sigma,
            max_mask_len=self.aug_max_mask_len,
            max_flip_axes=None if self.aug_max_flip_axes < 0 else self.aug_max_flip_axes,
            max_rotation_deg=self.aug_max_rotation_deg,
            lowpass_cutoff_hz=self.aug_lowpass_cutoff_hz if self.aug_lowpass_cutoff_hz > 0 else None,
            sample_rate_hz=self.aug_sample_rate_hz,
            seed=self.seed,
        )


class ConfigError(ValueError):
    pass


def _convert(field: dataclasses.Field, raw: str):
    default = field.default
    if isinstance(default, tuple):
        return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        if "/" in raw:
            num, den = raw.split("/", 1)
            return float(num) / float(den)
        return float(raw)
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse flat ``key = value`` lines (``#`` comments) into typed overrides."""
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in fields:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _convert(fields[key], raw)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {raw!r}") from None
    return out


def make_config(overrides: dict | None = None) -> TrainConfig:
    try:
        return TrainConfig(**(overrides or {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def dump_config(config: TrainConfig) -> str:
    lines = []
    for f in dataclasses.fields(config):
        v = getattr(config, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    return config.lr * config.lr_decay ** (epoch // config.lr_step)


def cross_entropy_grad(scores, labels):
    """Softmax cross-entropy. Returns (loss, dL/dscores) per sample.

    For a single score vector ``[K]`` and int label, returns a float and ``[K]``.
    """
    z = np.asarray(scores, dtype=np.float64)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(len(y))
    loss = logsum - shifted[rows, y]
    grad = np.exp(shifted - logsum[:, None])
    grad[rows, y] -= 1.0
    if single:
        return float(loss[0]), grad[0]
    return loss, grad


class Adam:
    """Adam with bias correction; moments are kept per parameter tensor."""

    def __init__(self, params: list, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list, grads: list, lr: float) -> None:
        """Update ``params`` in place."""
        if len(params) != len(self.m) or len(grads) != len(params):
            raise ValueError("parameter/gradient lists do not match optimizer state")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(state: Adam, params: list, grads: list, lr: float) -> list:
    state.step(params, grads, lr)
    return params


# -- metrics -----------------------------------------------------------------

@dataclass
class Metrics:
    accuracy: float
    macro_f1: float
    confusion: np.ndarray  # [K, K], rows true, columns predicted

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "macro_f1": self.macro_f1,
                "confusion": self.confusion.tolist()}


def confusion_matrix(true, pred, num_classes: int) -> np.ndarray:
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    return np.bincount(true * num_classes + pred, minlength=num_classes ** 2).reshape(
        num_classes, num_classes
    )


def macro_f1_from_confusion(cm) -> float:
    """Unweighted mean of per-class F1 over classes that occur in truth or predictions."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    present = denom > 0
    if not present.any():
        return 0.0
    return float(np.mean(2 * tp[present] / denom[present]))


def metrics_from_predictions(true, pred, num_classes: int) -> Metrics:
    cm = confusion_matrix(true, pred, num_classes)
    n = cm.sum()
    acc = float(np.trace(cm) / n) if n else 0.0
    return Metrics(acc, macro_f1_from_confusion(cm), cm)


def predict_labels(model, bits) -> np.ndarray:
    """Argmax class (ties to lowest index) of a DwnModel or FrozenModel."""
    if isinstance(model, DwnModel):
        scores, _ = forward_hard(model, bits)
        return np.argmax(np.atleast_2d(scores), axis=1)
    from .infer import predict_bits
    labels, _ = predict_bits(model, bits)
    return np.atleast_1d(labels)


def evaluate(model, dataset, batch_size: int = 1024) -> Metrics:
    """Hard inference on un-augmented, encoded windows of a HarDataset."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    encoder = model.encoder
    preds = []
    for start in range(0, len(dataset), batch_size):
        bits = encode(encoder, dataset.windows[start:start + batch_size])
        preds.append(predict_labels(model, bits))
    return metrics_from_predictions(dataset.class_indices, np.concatenate(preds), model.num_classes)


def format_confusion(cm, names=None) -> str:
    cm = np.asarray(cm)
    k = cm.shape[0]
    names = list(names) if names else [str(i) for i in range(k)]
    width = max(max(len(n) for n in names), len(str(cm.max())), 4)
    head = " " * (width + 1) + " ".join(f"{n[:width]:>{width}}" for n in names)
    rows = [head]
    for i in range(k):
        rows.append(f"{names[i][:width]:>{width}} " + " ".join(f"{v:>{width}d}" for v in cm[i]))
    return "\n".join(rows)


# -- training ----------------------------------------------------------------

def split_validation(dataset, fraction: float, seed: int):
    """Random (train, validation) split of a HarDataset."""
    n = len(dataset)
    perm = sample_stream(seed, 3).permutation(n)
    n_val = int(round(n * fraction))
    return dataset.subset(np.sort(perm[n_val:])), dataset.subset(np.sort(perm[:n_val]))


def train(dataset, config: TrainConfig, eval_sets: dict | None = None, on_epoch=None,
          encoder=None):
    """Train a model from scratch; returns (model, epoch log records).

    Each epoch shuffles the data, then for every batch: augment, encode, hard
    forward, cross-entropy, EFD backward, Adam step. The final model is the one
    after the last epoch.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if config.threads > 0:
        import numba
        numba.set_num_threads(config.threads)
    timesteps = dataset.windows.shape[-1]
    if encoder is None:
        encoder = fit_distributive(dataset.windows, config.bits_per_value)
    model = init_model(config.model, encoder.input_width(timesteps),
                       sample_stream(config.seed, 0), encoder, timesteps)
    optim = Adam(model.parameters(), config.beta1, config.beta2, config.eps)
    aug = config.augment
    labels = dataset.class_indices
    n = len(dataset)
    history = []
    for epoch in range(config.epochs):
        lr = lr_at_epoch(config, epoch)
        order = sample_stream(config.seed, 2, epoch).permutation(n)
        losses, correct, batch_losses = 0.0, 0, []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            windows = dataset.windows[idx]
            if aug.p > 0:
                windows = augment_batch(windows, aug, [(1, epoch, int(i)) for i in idx])
            bits = encode(encoder, windows)
            scores, trace = forward_hard(model, bits)
            loss, dscores = cross_entropy_grad(scores, labels[idx])
            grads = backward_efd(model, trace, dscores / len(idx),
                                 radius=config.efd_radius, decay=config.efd_decay)
            optim.step(model.parameters(), grads.as_list(), lr)
            losses += float(loss.sum())
            correct += int((np.argmax(scores, axis=1) == labels[idx]).sum())
            batch_losses.append(float(loss.mean()))
        record = {
            "epoch": epoch,
            "lr": lr,
            "loss": losses / n,
            "train_batch_accuracy": correct / n,
            "first_batch_loss": batch_losses[0],
            "last_batch_loss": batch_losses[-1],
        }
        for name, ds in (eval_sets or {}).items():
            m = evaluate(model, ds)
            record[f"{name}_accuracy"] = m.accuracy
            record[f"{name}_macro_f1"] = m.macro_f1
        history.append(record)
        log.info("epoch %s", json.dumps(record))
        if on_epoch is not None:
            on_epoch(record)
    return model, history


def loss_of(model: DwnModel, bits, labels) -> float:
    scores, _ = forward_hard(model, bits)
    loss, _ = cross_entropy_grad(scores, labels)
    return float(np.mean(loss))

