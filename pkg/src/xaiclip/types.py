"""Shared raster types used by every other module.

All rasters are row-major with the origin at the top-left corner. Instances
are frozen and their numpy buffers are marked read-only, so they can be
shared freely across worker threads.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, OutOfRangeError, ValidationError


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def round_half_up(x):
    """Round to nearest integer with halves rounding up (platform-independent)."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def normalize01(raw: np.ndarray) -> np.ndarray:
    """Min-max normalize to [0,1]; a constant input maps to all zeros."""
    raw = np.asarray(raw, dtype=np.float64)
    lo = raw.min()
    hi = raw.max()
    if hi == lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


@dataclass(frozen=True)
class ImageGrid:
    """2-D scalar raster, either 8-bit integers or floats in [0,1].

    ``data`` has shape (height, width) for grayscale or (height, width, 3)
    for color.
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim == 2:
            pass
        elif a.ndim == 3 and a.shape[2] == 3:
            pass
        else:
            raise DimensionMismatchError(
                f"image must be (h, w) or (h, w, 3), got shape {a.shape}"
            )
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise DimensionMismatchError("image dimensions must be >= 1")
        if a.dtype == np.uint8:
            pass
        elif np.issubdtype(a.dtype, np.floating):
            a = a.astype(np.float64)
            if a.size and (a.min() < 0.0 or a.max() > 1.0):
                raise OutOfRangeError("float image values must lie in [0, 1]")
        else:
            raise ValidationError(f"unsupported image dtype {a.dtype}")
        object.__setattr__(self, "data", _freeze(a))

    @classmethod
    def from_flat(cls, width, height, channels, values, dtype=np.uint8):
        values = np.asarray(values, dtype=dtype)
        expected = width * height * channels
        if values.size != expected:
            raise DimensionMismatchError(
                f"expected {expected} values for {width}x{height}x{channels}, "
                f"got {values.size}"
            )
        shape = (height, width) if channels == 1 else (height, width, channels)
        return cls(values.reshape(shape))

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def channels(self):
        return 1 if self.data.ndim == 2 else self.data.shape[2]

    @property
    def is_float(self):
        return self.data.dtype != np.uint8


def validate(image: ImageGrid) -> None:
    """Re-check the ImageGrid invariants, raising ValidationError on failure."""
    ImageGrid(np.array(image.data))


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel {0,1} raster with shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2:
            raise DimensionMismatchError(f"mask must be 2-D, got shape {a.shape}")
        a = a.astype(np.uint8, copy=True)
        if a.size and not np.isin(a, (0, 1)).all():
            raise OutOfRangeError("mask values must be 0 or 1")
        object.__setattr__(self, "data", _freeze(a))

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    def count(self):
        return int(self.data.sum())


@dataclass(frozen=True)
class SaliencyMap:
    """Attribution raster: raw accumulator plus its min-max normalization."""

    raw: np.ndarray
    normalized: np.ndarray
    coverage: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.float64)
        cov = np.asarray(self.coverage, dtype=np.float64)
        if raw.shape != cov.shape:
            raise DimensionMismatchError("raw/coverage shape mismatch")
        if cov.size and cov.min() < 0:
            raise OutOfRangeError("coverage must be non-negative")
        object.__setattr__(self, "raw", _freeze(raw))
        object.__setattr__(self, "normalized", _freeze(np.asarray(self.normalized, dtype=np.float64)))
        object.__setattr__(self, "coverage", _freeze(cov))

    @classmethod
    def from_raw(cls, raw, coverage=None):
        raw = np.asarray(raw, dtype=np.float64)
        if coverage is None:
            coverage = np.ones_like(raw)
        return cls(raw=raw, normalized=normalize01(raw), coverage=coverage)

    @property
    def width(self):
        return self.raw.shape[1]

    @property
    def height(self):
        return self.raw.shape[0]


@dataclass(frozen=True)
class PatchGrid:
    """Sliding-window descriptor with per-position retained flags."""

    patch_size: int
    stride: int
    positions: tuple  # ((x, y), ...) top-left corners
    retained: np.ndarray = field(default=None)

    def __post_init__(self):
        retained = self.retained
        if retained is None:
            retained = np.ones(len(self.positions), dtype=bool)
        retained = np.asarray(retained, dtype=bool)
        if retained.size != len(self.positions):
            raise DimensionMismatchError("retained flags must match positions")
        object.__setattr__(self, "positions", tuple(tuple(p) for p in self.positions))
        object.__setattr__(self, "retained", _freeze(retained))

    @property
    def n_patch_full(self):
        return len(self.positions)

    @property
    def n_patch(self):
        return int(self.retained.sum())

    @property
    def rho(self):
        if self.n_patch_full == 0:
            return 0.0
        return self.n_patch / self.n_patch_full

    def retained_positions(self):
        return [p for p, keep in zip(self.positions, self.retained) if keep]


@dataclass(frozen=True)
class ExplainReport:
    """Per-run accounting: patch counts, pruning ratio, timing, FLOPs, fidelity."""

    method: str
    gated: bool
    n_patch: int
    n_patch_full: int
    rho: float
    wall_clock_ms: float
    flops_roi: int
    flops_calls: int
    flops_per_call: int
    flops_total: int
    dice_vs_baseline: float
    iou_vs_baseline: float
    seed: int
    warnings: tuple = ()

    def __post_init__(self):
        if self.method not in ("occlusion", "rise", "lime"):
            raise ValidationError(f"unknown method {self.method!r}")
        if not (0.0 <= self.rho <= 1.0):
            raise OutOfRangeError(f"rho must lie in [0, 1], got {self.rho}")
        if self.flops_total != self.flops_roi + self.flops_calls * self.flops_per_call:
            raise ValidationError("flops_total inconsistent with ledger parts")
        object.__setattr__(self, "warnings", tuple(self.warnings))
