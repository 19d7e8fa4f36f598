"""Standalone numeric kernels for the training-time formulas.

These are oracle-tested reference implementations — no gradients, no
optimizer state. All accumulation happens in float64.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import cos, pi

import numpy as np

from .exceptions import ValidationError


def gem_pool(activations, p=3.0) -> np.ndarray:
    """Generalized-mean pooling per channel.

    `activations` is (channels, positions) or (channels, h, w) with
    non-negative entries; `p` is a scalar exponent >= 1 or one exponent per
    channel. p=1 is mean pooling; p -> inf approaches max pooling. Each
    channel is scaled by its max before the power sum so large exponents do
    not overflow.
    """
    acts = np.asarray(activations, dtype=np.float64)
    if acts.ndim == 3:
        acts = acts.reshape(acts.shape[0], -1)
    if acts.ndim != 2:
        raise ValidationError(
            f"activations must be (channels, positions) or (channels, h, w), got shape {acts.shape}"
        )
    if acts.shape[1] == 0:
        raise ValidationError("empty activation set")
    if not np.all(np.isfinite(acts)):
        raise ValidationError("activations contain NaN or Inf")
    if np.any(acts < 0.0):
        raise ValidationError("activations must be non-negative for real p-th powers")

    p_arr = np.asarray(p, dtype=np.float64)
    if p_arr.ndim == 0:
        p_arr = np.full(acts.shape[0], float(p_arr))
    if p_arr.shape != (acts.shape[0],):
        raise ValidationError(
            f"p must be scalar or one exponent per channel, got shape {p_arr.shape}"
        )
    if np.any(p_arr < 1.0):
        raise ValidationError("pooling exponent p must be >= 1")

    peak = acts.max(axis=1)
    out = np.zeros(acts.shape[0], dtype=np.float64)
    nonzero = peak > 0.0
    if np.any(nonzero):
        scaled = acts[nonzero] / peak[nonzero, None]
        pk = p_arr[nonzero, None]
        mean_pow = np.mean(scaled**pk, axis=1)
        out[nonzero] = peak[nonzero] * mean_pow ** (1.0 / p_arr[nonzero])
    return out


@dataclass(frozen=True)
class ScheduleConfig:
    """Warmup / plateau / cosine-annealing learning-rate schedule knobs."""

    warmup_epochs: float = 5.0
    plateau_end: float = 10.0
    total_epochs: float = 25.0
    base_lr: float = 3.5e-4
    start_ratio: float = 0.01

    def __post_init__(self):
        if not 0 < self.warmup_epochs <= self.plateau_end < self.total_epochs:
            raise ValidationError(
                "schedule requires 0 < warmup_epochs <= plateau_end < total_epochs, got "
                f"{self.warmup_epochs}/{self.plateau_end}/{self.total_epochs}"
            )
        if not 0 < self.start_ratio <= 1:
            raise ValidationError(f"start_ratio must be in (0, 1], got {self.start_ratio}")
        if not self.base_lr > 0:
            raise ValidationError(f"base_lr must be > 0, got {self.base_lr}")


def lr_ratio(epoch: float, config: ScheduleConfig | None = None) -> float:
    """Learning-rate ratio at a (possibly fractional) epoch.

    Linear ramp from `start_ratio` to 1 over the warmup, a plateau at 1,
    then a half-cosine decay to 0 at `total_epochs`. Continuous at both
    branch boundaries.
    """
    cfg = config or ScheduleConfig()
    if not 0 <= epoch < cfg.total_epochs:
        raise ValidationError(
            f"epoch must be in [0, {cfg.total_epochs}), got {epoch}"
        )
    if epoch < cfg.warmup_epochs:
        return (1.0 - cfg.start_ratio) * epoch / cfg.warmup_epochs + cfg.start_ratio
    if epoch < cfg.plateau_end:
        return 1.0
    span = cfg.total_epochs - cfg.plateau_end
    return 0.5 * (cos((epoch - cfg.plateau_end) / span * pi) + 1.0)


def schedule_rows(config: ScheduleConfig, iterations_per_epoch: int):
    """Yield (iteration, epoch, ratio, lr) rows sampled once per iteration."""
    if iterations_per_epoch < 1:
        raise ValidationError(
            f"iterations_per_epoch must be >= 1, got {iterations_per_epoch}"
        )
    total_iters = int(round(config.total_epochs * iterations_per_epoch))
    for it in range(total_iters):
        epoch = it / iterations_per_epoch
        ratio = lr_ratio(epoch, config)
        yield it, epoch, ratio, ratio * config.base_lr


def _pairwise_distances(feats: np.ndarray) -> np.ndarray:
    # ||a-b||^2 = ||a||^2 - 2<a,b> + ||b||^2, clamped before the sqrt.
    dots = feats @ feats.T
    sq = np.diag(dots)
    d2 = sq[:, None] - 2.0 * dots + sq[None, :]
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def batch_hard_triplet(features, labels, margin: float = 0.3) -> float:
    """Batch-hard triplet loss with Euclidean distances.

    Per anchor: hinge on (hardest-positive distance - hardest-negative
    distance + margin), averaged over all anchors. Every class in the batch
    needs at least two samples, and the batch needs at least two classes.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ValidationError(f"features must be 2-D, got shape {feats.shape}")
    if not np.all(np.isfinite(feats)):
        raise ValidationError("features contain NaN or Inf")
    labs = np.asarray(labels)
    if labs.shape != (feats.shape[0],):
        raise ValidationError(
            f"labels must have one entry per feature row, got shape {labs.shape}"
        )
    if margin < 0:
        raise ValidationError(f"margin must be >= 0, got {margin}")
    classes, counts = np.unique(labs, return_counts=True)
    if len(classes) < 2:
        raise ValidationError("triplet mining needs at least two classes in the batch")
    if np.any(counts < 2):
        bad = classes[np.argmin(counts)]
        raise ValidationError(f"class {bad!r} has fewer than 2 samples")

    dist = _pairwise_distances(feats)
    same = labs[:, None] == labs[None, :]
    np.fill_diagonal(same, False)
    diff = labs[:, None] != labs[None, :]

    hardest_pos = np.where(same, dist, -np.inf).max(axis=1)
    hardest_neg = np.where(diff, dist, np.inf).min(axis=1)
    hinges = np.maximum(margin + hardest_pos - hardest_neg, 0.0)
    return float(hinges.mean())


def soft_cross_entropy(logits, target_probs) -> float:
    """Cross-entropy of a probability target against log-softmax of logits.

    Uses a max-shifted log-sum-exp; the target must be a distribution
    (non-negative, summing to 1 within 1e-6).
    """
    z = np.asarray(logits, dtype=np.float64)
    t = np.asarray(target_probs, dtype=np.float64)
    if z.ndim != 1 or t.ndim != 1:
        raise ValidationError("logits and target_probs must be 1-D")
    if z.shape != t.shape:
        raise ValidationError(
            f"logits have {z.shape[0]} classes but target has {t.shape[0]}"
        )
    if not np.all(np.isfinite(z)):
        raise ValidationError("logits contain NaN or Inf")
    if np.any(t < 0.0):
        raise ValidationError("target probabilities must be non-negative")
    total = float(t.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValidationError(f"target probabilities sum to {total!r}, expected 1")

    shift = z - z.max()
    log_softmax = shift - np.log(np.exp(shift).sum())
    return float(-(t @ log_softmax))
