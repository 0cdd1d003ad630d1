"""Small convolutional segmenter, overlap metrics, leave-one-out protocol.

The model is two 3x3 stride-1 conv layers (8 channels, swish) with a 1x1
per-pixel logit head, trained on pixel cross-entropy plus soft-Dice with a
hand-derived gradient. Evaluation holds one domain out, trains on the rest
with or without bridge-sample augmentation, and reports IoU and Dice.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, LeakageError, NumericError
from .nets import conv2d_backward, conv2d_forward, sigmoid, swish, swish_grad
from .numerics import AdamHyper, adam_step, derive_stream, init_adam_state
from .pipeline import AugmentedDataset, assemble_training_stream
from .synth import MultiDomainDataset


@dataclass(frozen=True)
class SegArch:
    in_channels: int = 1
    hidden_channels: int = 8

    @property
    def param_count(self) -> int:
        c, h = self.in_channels, self.hidden_channels
        return (h * c * 9 + h) + (h * h * 9 + h) + h + 1

    def to_meta(self) -> dict:
        return {"in_channels": self.in_channels, "hidden_channels": self.hidden_channels}


@dataclass
class SegModel:
    arch: SegArch
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (self.arch.param_count,):
            raise DimensionError(
                f"theta length {self.theta.shape} does not match arch ({self.arch.param_count},)"
            )


def init_seg_model(arch: SegArch, seed: int) -> SegModel:
    stream = derive_stream(seed, [("seg_init", 0)])
    c, h = arch.in_channels, arch.hidden_channels
    w1 = stream.standard_normal((h, c, 3, 3)) * np.sqrt(2.0 / (c * 9))
    w2 = stream.standard_normal((h, h, 3, 3)) * np.sqrt(2.0 / (h * 9))
    wh = stream.standard_normal(h) / np.sqrt(h)
    theta = np.concatenate([w1.ravel(), np.zeros(h), w2.ravel(), np.zeros(h), wh, np.zeros(1)])
    return SegModel(arch=arch, theta=theta)


def _unpack(arch: SegArch, theta: np.ndarray):
    c, h = arch.in_channels, arch.hidden_channels
    i = 0
    w1 = theta[i:i + h * c * 9].reshape(h, c, 3, 3); i += h * c * 9
    b1 = theta[i:i + h]; i += h
    w2 = theta[i:i + h * h * 9].reshape(h, h, 3, 3); i += h * h * 9
    b2 = theta[i:i + h]; i += h
    wh = theta[i:i + h]; i += h
    bh = theta[i]
    return w1, b1, w2, b2, wh, bh


def seg_logits(model: SegModel, X: np.ndarray):
    """Per-pixel logits (N, H, W) plus the cache for the backward pass."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 4 or X.shape[1] != model.arch.in_channels:
        raise DimensionError(f"expected (N, {model.arch.in_channels}, H, W), got {X.shape}")
    w1, b1, w2, b2, wh, bh = _unpack(model.arch, model.theta)
    z1, xp1 = conv2d_forward(X, w1, b1, stride=1)
    a1 = swish(z1)
    z2, xp2 = conv2d_forward(a1, w2, b2, stride=1)
    a2 = swish(z2)
    logits = np.einsum("nchw,c->nhw", a2, wh, optimize=True) + bh
    return logits, {"xp1": xp1, "z1": z1, "xp2": xp2, "z2": z2, "a2": a2}


def seg_loss_and_grad(model: SegModel, X: np.ndarray, M: np.ndarray):
    """Cross-entropy plus (1 - soft Dice), with the exact theta gradient."""
    logits, cache = seg_logits(model, X)
    M = np.asarray(M, dtype=np.float64)
    if M.shape != logits.shape:
        raise DimensionError(f"mask shape {M.shape} vs logits {logits.shape}")
    n = X.shape[0]
    p = sigmoid(logits)
    bce = float(np.mean(np.logaddexp(0.0, logits) - M * logits))
    inter = (p * M).sum(axis=(1, 2))
    sums = p.sum(axis=(1, 2)) + M.sum(axis=(1, 2))
    dice_soft = (2.0 * inter + 1.0) / (sums + 1.0)
    loss = bce + float(np.mean(1.0 - dice_soft))
    if not np.isfinite(loss):
        raise NumericError("non-finite segmentation loss")

    dlogits = (p - M) / M.size
    ddice_dp = -(2.0 * M * (sums + 1.0)[:, None, None]
                 - (2.0 * inter + 1.0)[:, None, None]) / ((sums + 1.0) ** 2)[:, None, None]
    dlogits = dlogits + (ddice_dp / n) * p * (1.0 - p)

    w1, b1, w2, b2, wh, bh = _unpack(model.arch, model.theta)
    a2 = cache["a2"]
    dwh = np.einsum("nhw,nchw->c", dlogits, a2, optimize=True)
    dbh = float(dlogits.sum())
    da2 = dlogits[:, None, :, :] * wh[None, :, None, None]
    dz2 = da2 * swish_grad(cache["z2"])
    da1, dw2, db2 = conv2d_backward(dz2, cache["xp2"], w2, stride=1)
    dz1 = da1 * swish_grad(cache["z1"])
    _, dw1, db1 = conv2d_backward(dz1, cache["xp1"], w1, stride=1)
    grad = np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2, dwh, [dbh]])
    return loss, grad


@dataclass
class SegTrainConfig:
    epochs: int = 30
    batch_size: int = 8
    mix_ratio: float = 0.5
    adam: AdamHyper = field(default_factory=lambda: AdamHyper(lr=0.003))

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")


def train_segmenter(src_images, src_masks, config: SegTrainConfig, seed: int,
                    aug_images=None, aug_masks=None) -> SegModel:
    """Adam training over per-epoch streams; deterministic in seed."""
    src_images = np.asarray(src_images, dtype=np.float64)
    src_masks = np.asarray(src_masks, dtype=np.float64)
    if src_images.shape[0] == 0:
        raise ConfigError("empty training set")
    have_aug = aug_images is not None and len(aug_images) > 0
    mix = config.mix_ratio if have_aug else 0.0
    n_aug = len(aug_images) if have_aug else 0
    arch = SegArch(in_channels=src_images.shape[1])
    model = init_seg_model(arch, seed)
    state = init_adam_state(arch.param_count, config.adam)
    for epoch in range(config.epochs):
        stream = assemble_training_stream(src_images.shape[0], n_aug, mix, seed,
                                          batch_size=config.batch_size, epoch=epoch)
        for start in range(0, len(stream), config.batch_size):
            batch = stream[start:start + config.batch_size]
            xs = np.stack([src_images[i] if kind == "src" else aug_images[i] for kind, i in batch])
            ms = np.stack([src_masks[i] if kind == "src" else aug_masks[i] for kind, i in batch])
            try:
                _, grad = seg_loss_and_grad(model, xs, ms)
            except NumericError as err:
                raise NumericError(f"epoch {epoch}, batch at {start}: {err}") from err
            theta, state = adam_step(model.theta, grad, state)
            model = SegModel(arch=arch, theta=theta)
    return model


def predict_mask(model: SegModel, image: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    single = image.ndim == 3
    X = image[None, ...] if single else image
    logits, _ = seg_logits(model, X)
    masks = (sigmoid(logits) >= threshold).astype(np.float64)
    return masks[0] if single else masks


def dice(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise DimensionError(f"mask shapes differ: {a.shape} vs {b.shape}")
    sa, sb = int(a.sum()), int(b.sum())
    if sa == 0 and sb == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / (sa + sb)


def iou(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise DimensionError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int((a | b).sum())
    if union == 0:
        return 1.0
    return int((a & b).sum()) / union


@dataclass
class EvalResult:
    fold: int
    method: str
    seed: int
    mean_dice: float
    mean_iou: float
    per_sample: list = field(default_factory=list)


def evaluate_model(model: SegModel, images: np.ndarray, masks: np.ndarray,
                   fold: int, method: str, seed: int) -> EvalResult:
    preds = predict_mask(model, images)
    per_sample = [(dice(p, m), iou(p, m)) for p, m in zip(preds, masks)]
    return EvalResult(
        fold=fold, method=method, seed=seed,
        mean_dice=float(np.mean([d for d, _ in per_sample])),
        mean_iou=float(np.mean([i for _, i in per_sample])),
        per_sample=per_sample,
    )


def leave_one_out_eval(dataset: MultiDomainDataset, aug_builder, config: SegTrainConfig,
                       seeds=(0, 1, 2, 3, 4), methods=("erm", "erm+langaug")) -> list[EvalResult]:
    """Cross table of held-out-domain scores.

    ``aug_builder(source_domains)`` must return an AugmentedDataset built
    from those domains only; any entry tagged with the held-out domain
    raises LeakageError.
    """
    if dataset.n_domains < 3:
        raise ConfigError("leave-one-out needs at least 3 domains")
    results = []
    for held_out in range(dataset.n_domains):
        sources = [d for d in range(dataset.n_domains) if d != held_out]
        src_images = np.concatenate([dataset.train_images(d) for d in sources])
        src_masks = np.concatenate([dataset.train_masks(d) for d in sources])
        aug = None
        if "erm+langaug" in methods:
            aug = aug_builder(sources)
            if aug is not None and held_out in aug.domains_touched():
                raise LeakageError(
                    f"augmented data for fold {held_out} touches the held-out domain"
                )
        eval_images = dataset.images[held_out]
        eval_masks = dataset.masks[held_out]
        for method in methods:
            for seed in seeds:
                model = train_segmenter(
                    src_images, src_masks, config, seed=seed + 1000 * held_out,
                    aug_images=aug.images if (method == "erm+langaug" and aug is not None) else None,
                    aug_masks=aug.masks if (method == "erm+langaug" and aug is not None) else None,
                )
                results.append(evaluate_model(model, eval_images, eval_masks,
                                              held_out, method, seed))
    return results


def write_results_csv(results: list[EvalResult], path, per_sample: bool = False) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "method", "seed", "mean_dice", "mean_iou"])
        for r in sorted(results, key=lambda r: (r.fold, r.method, r.seed)):
            writer.writerow([r.fold, r.method, r.seed, repr(r.mean_dice), repr(r.mean_iou)])
    if per_sample:
        detail = Path(path).with_suffix(".per_sample.csv")
        with open(detail, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fold", "method", "seed", "sample", "dice", "iou"])
            for r in sorted(results, key=lambda r: (r.fold, r.method, r.seed)):
                for s, (d, i) in enumerate(r.per_sample):
                    writer.writerow([r.fold, r.method, r.seed, s, repr(d), repr(i)])
