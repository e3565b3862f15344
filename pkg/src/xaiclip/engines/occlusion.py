"""Sliding-window occlusion sensitivity with optional ROI gating.

Each retained patch is replaced by a fill value, the segmentation is
recomputed, and the patch's attribution is 1 - Dice(perturbed, baseline).
Attributions are accumulated per pixel, averaged by coverage, and min-max
normalized. Patch evaluations run on a worker pool but are reduced in patch
index order, so results are independent of scheduling.
"""

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import EngineError, PredictorError, ValidationError
from ..metrics import dice
from ..roi import gate_patches, patch_grid
from ..types import BinaryMask, ExplainReport, ImageGrid, SaliencyMap, normalize01
from ..parallel import run_indexed
from .common import FillSpec, fidelity_vs_baseline, resolve_fill


@dataclass(frozen=True)
class OcclusionConfig:
    patch: int = 64
    stride: int = 32
    fill: FillSpec = "foreground_mean"
    seed: int = 0

    def __post_init__(self):
        if self.patch < 1 or self.stride < 1:
            raise ValidationError("patch and stride must be >= 1")


def run(image: ImageGrid, predictor, roi: Optional[BinaryMask] = None,
        cfg: OcclusionConfig = OcclusionConfig(), jobs: int = 1, roi_flops: int = 0):
    """Returns (SaliencyMap, ExplainReport)."""
    t0 = time.perf_counter()
    predictor.reset_calls()
    fill_value = resolve_fill(image, cfg.fill)

    baseline = predictor.segment(image)
    grid = patch_grid(image.width, image.height, cfg.patch, cfg.stride)
    if roi is not None:
        grid = gate_patches(grid, roi)
    retained = grid.retained_positions()

    warnings = []

    def evaluate(i):
        x, y = retained[i]
        perturbed = np.array(image.data)
        perturbed[y:y + cfg.patch, x:x + cfg.patch] = fill_value
        pred = predictor.segment(ImageGrid(perturbed))
        return 1.0 - dice(pred.mask, baseline.mask)

    try:
        scores = run_indexed(evaluate, len(retained), jobs,
                             predictor.info.max_concurrency)
    except PredictorError as exc:
        report = _report(grid, predictor, roi, 0.0, 0.0, cfg.seed, roi_flops,
                         time.perf_counter() - t0,
                         warnings=("invalid: predictor failure",))
        raise EngineError(f"predictor failed mid-run: {exc}", report=report) from exc

    raw = np.zeros((image.height, image.width), dtype=np.float64)
    coverage = np.zeros_like(raw)
    for (x, y), a in zip(retained, scores):
        raw[y:y + cfg.patch, x:x + cfg.patch] += a
        coverage[y:y + cfg.patch, x:x + cfg.patch] += 1.0

    averaged = np.divide(raw, coverage, out=np.zeros_like(raw), where=coverage > 0)
    saliency = SaliencyMap(raw=averaged, normalized=normalize01(averaged),
                           coverage=coverage)

    d, j = fidelity_vs_baseline(predictor, image, roi, fill_value, baseline.mask)
    report = _report(grid, predictor, roi, d, j, cfg.seed, roi_flops,
                     time.perf_counter() - t0, warnings=tuple(warnings))
    return saliency, report


def _report(grid, predictor, roi, dice_vs_baseline, iou_vs_baseline, seed,
            roi_flops, elapsed_s, warnings=()):
    calls = predictor.calls
    per_call = predictor.info.flops_per_call
    return ExplainReport(
        method="occlusion",
        gated=roi is not None,
        n_patch=grid.n_patch,
        n_patch_full=grid.n_patch_full,
        rho=grid.rho,
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
