"""Randomized soft-mask attribution with dual saliency maps.

Masks are sampled on a coarse Bernoulli grid, bilinearly upsampled past the
output size, and cropped at a random cell-sized shift. Each mask index draws
from its own seeded RNG substream, so sampling is reproducible regardless of
worker scheduling. Masks are generated lazily and processed in bounded
chunks; the full mask stack is never materialized.

Two raw maps are accumulated as sum(score_i * M_i) / sum(M_i) per pixel:
fidelity weights each mask by Dice against the unperturbed baseline, and
relevance weights it by the predictor's score inside the ROI. Each map is
min-max normalized independently.
"""

import time
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from ..errors import (
    DimensionMismatchError,
    EngineError,
    OutOfRangeError,
    PredictorError,
    ValidationError,
)
from ..metrics import dice
from ..parallel import effective_jobs, run_indexed
from ..types import (
    BinaryMask,
    ExplainReport,
    ImageGrid,
    SaliencyMap,
    normalize01,
    round_half_up,
)
from .common import fidelity_vs_baseline, resolve_fill


@dataclass(frozen=True)
class RiseConfig:
    n_masks: int = 2000
    p1: float = 0.5
    base_grid: tuple = (7, 7)
    random_shift: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_masks < 1:
            raise ValidationError("n_masks must be >= 1")
        if not (0.0 < self.p1 < 1.0) and self.p1 not in (0.0, 1.0):
            raise ValidationError("p1 must lie in [0, 1]")
        if self.base_grid[0] < 1 or self.base_grid[1] < 1:
            raise ValidationError("base_grid must be at least 1x1")


@dataclass(frozen=True)
class SoftMask:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DimensionMismatchError("soft mask must be 2-D")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise OutOfRangeError("soft mask values must lie in [0, 1]")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def _mask_rng(seed: int, index: int) -> np.random.Generator:
    """Per-mask RNG substream; keyed by (seed, index) so parallelism cannot
    change which mask a given index produces."""
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, index]))


def upsample_bilinear(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear upsample with half-pixel center alignment, edges clamped."""
    gh, gw = grid.shape

    def coords(n_out, n_in):
        c = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
        return np.clip(c, 0.0, n_in - 1.0)

    ys = coords(out_h, gh)
    xs = coords(out_w, gw)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, gh - 1)
    x1 = np.minimum(x0 + 1, gw - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    g = grid.astype(np.float64)
    # nested lerps keep constant grids exact; clip guards rounding overshoot
    top = g[np.ix_(y0, x0)] + wx * (g[np.ix_(y0, x1)] - g[np.ix_(y0, x0)])
    bottom = g[np.ix_(y1, x0)] + wx * (g[np.ix_(y1, x1)] - g[np.ix_(y1, x0)])
    out = top + wy * (bottom - top)
    lo = min(g.min(), 0.0) if g.size else 0.0
    hi = max(g.max(), 0.0) if g.size else 0.0
    return np.clip(out, lo, hi)


def make_mask(cfg: RiseConfig, index: int, out_w: int, out_h: int) -> SoftMask:
    """Sample mask #index: Bernoulli grid, upsample past size, crop at shift."""
    bh, bw = cfg.base_grid
    cell_h = int(np.ceil(out_h / bh))
    cell_w = int(np.ceil(out_w / bw))
    rng = _mask_rng(cfg.seed, index)
    grid = (rng.random((bh, bw)) < cfg.p1).astype(np.float64)
    up = upsample_bilinear(grid, out_h + cell_h, out_w + cell_w)
    if cfg.random_shift:
        dy = int(rng.integers(0, cell_h))
        dx = int(rng.integers(0, cell_w))
    else:
        dy = dx = 0
    return SoftMask(up[dy:dy + out_h, dx:dx + out_w])


def sample_masks(cfg: RiseConfig, out_w: int, out_h: int) -> Iterable[SoftMask]:
    for i in range(cfg.n_masks):
        yield make_mask(cfg, i, out_w, out_h)


def apply_roi_constraint(mask: SoftMask, roi: BinaryMask) -> SoftMask:
    """Pixels outside the ROI are preserved exactly: multiplier fixed at 1.0."""
    if mask.values.shape != roi.data.shape:
        raise DimensionMismatchError("mask/ROI shape mismatch")
    return SoftMask(np.where(roi.data == 0, 1.0, mask.values))


def run(image: ImageGrid, predictor, roi: Optional[BinaryMask] = None,
        cfg: RiseConfig = RiseConfig(), jobs: int = 1, roi_flops: int = 0,
        masks: Optional[list] = None):
    """Returns (fidelity: SaliencyMap, relevance: SaliencyMap, ExplainReport).

    ``masks`` overrides sampling with an explicit SoftMask list (used for
    exhaustive-enumeration checks); the ROI constraint still applies.
    """
    t0 = time.perf_counter()
    predictor.reset_calls()
    baseline = predictor.segment(image)
    intensity = image.data.astype(np.float64)
    region = roi.data == 1 if roi is not None else np.ones(image.data.shape, dtype=bool)

    n_masks = cfg.n_masks if masks is None else len(masks)

    def get_mask(i):
        m = make_mask(cfg, i, image.width, image.height) if masks is None else masks[i]
        if roi is not None:
            m = apply_roi_constraint(m, roi)
        return m

    def evaluate(i):
        m = get_mask(i)
        perturbed = round_half_up(intensity * m.values).astype(np.uint8)
        pred = predictor.segment(ImageGrid(perturbed))
        s_fid = dice(pred.mask, baseline.mask)
        if pred.score_map is not None:
            s_rel = float(pred.score_map[region].mean()) if region.any() else 0.0
        else:
            s_rel = float(pred.mask.data[region].mean()) if region.any() else 0.0
        return s_fid, s_rel, m.values

    num_fid = np.zeros(image.data.shape, dtype=np.float64)
    num_rel = np.zeros_like(num_fid)
    den = np.zeros_like(num_fid)
    coverage = np.zeros_like(num_fid)

    chunk = max(4 * effective_jobs(jobs, predictor.info.max_concurrency), 16)
    try:
        for start in range(0, n_masks, chunk):
            count = min(chunk, n_masks - start)
            results = run_indexed(lambda k: evaluate(start + k), count, jobs,
                                  predictor.info.max_concurrency)
            for s_fid, s_rel, values in results:
                num_fid += s_fid * values
                num_rel += s_rel * values
                den += values
                coverage += values > 0
    except PredictorError as exc:
        report = _report(predictor, roi, n_masks, 0.0, 0.0, cfg.seed, roi_flops,
                         time.perf_counter() - t0,
                         warnings=("invalid: predictor failure",))
        raise EngineError(f"predictor failed mid-run: {exc}", report=report) from exc

    raw_fid = np.divide(num_fid, den, out=np.zeros_like(num_fid), where=den > 0)
    raw_rel = np.divide(num_rel, den, out=np.zeros_like(num_rel), where=den > 0)
    fidelity = SaliencyMap(raw=raw_fid, normalized=normalize01(raw_fid), coverage=coverage)
    relevance = SaliencyMap(raw=raw_rel, normalized=normalize01(raw_rel), coverage=coverage)

    fill_value = resolve_fill(image, "foreground_mean")
    d, j = fidelity_vs_baseline(predictor, image, roi, fill_value, baseline.mask)
    report = _report(predictor, roi, n_masks, d, j, cfg.seed, roi_flops,
                     time.perf_counter() - t0)
    return fidelity, relevance, report


def _report(predictor, roi, n_masks, dice_vs_baseline, iou_vs_baseline, seed,
            roi_flops, elapsed_s, warnings=()):
    calls = predictor.calls
    per_call = predictor.info.flops_per_call
    return ExplainReport(
        method="rise",
        gated=roi is not None,
        n_patch=n_masks,
        n_patch_full=n_masks,
        rho=1.0,
        wall_clock_ms=elapsed_s * 1000.0,
        flops_roi=roi_flops,
        flops_calls=calls,
        flops_per_call=per_call,
        flops_total=roi_flops + calls * per_call,
        dice_vs_baseline=dice_vs_baseline,
        iou_vs_baseline=iou_vs_baseline,
        seed=seed,
        warnings=warnings,
    )
