"""Overlap metrics, loss terms, and the compute-cost ledger."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, ValidationError
from .types import BinaryMask


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """2|A∩B| / (|A|+|B|); two empty masks count as perfect overlap (1)."""
    if a.data.shape != b.data.shape:
        raise DimensionMismatchError("mask shape mismatch")
    na = int(a.data.sum())
    nb = int(b.data.sum())
    if na + nb == 0:
        return 1.0
    inter = int((a.data & b.data).sum())
    return 2.0 * inter / (na + nb)


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """|A∩B| / |A∪B|; two empty masks count as 1."""
    if a.data.shape != b.data.shape:
        raise DimensionMismatchError("mask shape mismatch")
    inter = int((a.data & b.data).sum())
    union = int((a.data | b.data).sum())
    if union == 0:
        return 1.0
    return inter / union


@dataclass(frozen=True)
class ProbabilityField:
    """Per-pixel class probabilities p and one-hot ground truth g, both (C, N)."""

    p: np.ndarray
    g: np.ndarray
    epsilon: float = 1e-6

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        g = np.asarray(self.g, dtype=np.float64)
        if p.shape != g.shape or p.ndim != 2:
            raise DimensionMismatchError("p and g must share a (C, N) shape")
        if not np.allclose(p.sum(axis=0), 1.0, atol=1e-6):
            raise ValidationError("per-pixel class probabilities must sum to 1")
        if not (np.isin(g, (0.0, 1.0)).all() and np.allclose(g.sum(axis=0), 1.0)):
            raise ValidationError("g must be one-hot per pixel")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "g", g)


def dice_loss(f: ProbabilityField) -> float:
    """1 - 2*sum(p*g) / (sum(p) + sum(g) + eps), summed over classes and pixels."""
    num = 2.0 * float((f.p * f.g).sum())
    den = float(f.p.sum()) + float(f.g.sum()) + f.epsilon
    return 1.0 - num / den


def ce_loss(f: ProbabilityField) -> float:
    """Cross entropy -sum(g * log p), with p clamped at 1e-12."""
    p = np.clip(f.p, 1e-12, None)
    return float(-(f.g * np.log(p)).sum())


def total_loss(f: ProbabilityField) -> float:
    return dice_loss(f) + ce_loss(f)


@dataclass(frozen=True)
class FlopsLedger:
    roi_flops: int
    calls: int
    flops_per_call: int

    def __post_init__(self):
        if self.roi_flops < 0 or self.calls < 0 or self.flops_per_call < 0:
            raise ValidationError("ledger entries must be non-negative")

    @property
    def total(self) -> int:
        return self.roi_flops + self.calls * self.flops_per_call


def ledger(roi_flops: int, calls: int, flops_per_call: int) -> FlopsLedger:
    return FlopsLedger(roi_flops=roi_flops, calls=calls, flops_per_call=flops_per_call)
