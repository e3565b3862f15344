"""Superpixel-ablation surrogate attribution with ROI restriction and
multi-scale aggregation.

Per scale: Felzenszwalb partition, optional ROI restriction, Bernoulli(0.5)
ablation sampling (row 0 forced all-ones), Dice-vs-baseline scoring, then a
weighted ridge fit whose coefficients are painted back onto the superpixels
and min-max normalized. The final map is the pixelwise mean of the per-scale
normalized maps.
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import EngineError, PredictorError, SingularFitError, ValidationError
from ..metrics import dice
from ..parallel import run_indexed
from ..superpixel import FelzConfig, LabelMap, felzenszwalb, restrict_to_roi
from ..types import BinaryMask, ExplainReport, ImageGrid, SaliencyMap, normalize01
from .common import FillSpec, resolve_fill, fidelity_vs_baseline


@dataclass(frozen=True)
class LimeConfig:
    n_samples: int = 300
    scales: tuple = (50.0, 100.0, 200.0)
    kernel_width: float = 0.25
    ridge_lambda: float = 0.01
    fill: FillSpec = "foreground_mean"
    seed: int = 0
    felz_sigma: float = 0.5
    felz_min_size: int = 50

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValidationError("n_samples must be >= 1")
        if self.kernel_width <= 0:
            raise ValidationError("kernel_width must be positive")
        if self.ridge_lambda < 0:
            raise ValidationError("ridge_lambda must be non-negative")
        object.__setattr__(self, "scales", tuple(self.scales))


def sample_ablations(k: int, n: int, seed: int) -> np.ndarray:
    """n x k binary presence matrix, i.i.d. Bernoulli(0.5); row 0 all ones."""
    if k < 1:
        raise ValidationError("need at least one superpixel")
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF]))
    z = (rng.random((n, k)) < 0.5).astype(np.uint8)
    z[0] = 1
    return z


def render_ablation(image: ImageGrid, labels: LabelMap, z: np.ndarray,
                    fill_value: int) -> ImageGrid:
    """Fill the pixels of every disabled superpixel; label-0 pixels stay put."""
    z = np.asarray(z)
    if z.size != labels.n_labels:
        raise ValidationError("z length must equal the number of superpixels")
    out = np.array(image.data)
    disabled = np.flatnonzero(z == 0) + 1
    if disabled.size:
        out[np.isin(labels.labels, disabled)] = fill_value
    return ImageGrid(out)


def fit_surrogate(z: np.ndarray, scores: np.ndarray, kernel_width: float,
                  ridge_lambda: float) -> np.ndarray:
    """Weighted ridge fit of scores on region presence.

    Sample weight w_i = exp(-d_i^2 / kernel_width^2) with d_i the fraction of
    disabled regions in row i. The intercept is absorbed by weighted-centering
    both the presence columns and the scores.
    """
    z = np.asarray(z, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    n, k = z.shape
    d = 1.0 - z.mean(axis=1)
    w = np.exp(-(d ** 2) / kernel_width ** 2)
    wsum = w.sum()
    zc = z - (w @ z) / wsum
    sc = s - (w @ s) / wsum
    a = zc.T @ (w[:, None] * zc) + ridge_lambda * np.eye(k)
    b = zc.T @ (w * sc)
    try:
        beta = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularFitError("surrogate normal equations are singular") from exc
    if not np.isfinite(beta).all():
        raise SingularFitError("surrogate fit produced non-finite coefficients")
    return beta


def paint_weights(labels: LabelMap, beta: np.ndarray) -> np.ndarray:
    """Broadcast per-superpixel coefficients back onto the pixel raster."""
    lut = np.concatenate(([0.0], np.asarray(beta, dtype=np.float64)))
    return lut[labels.labels]


def run(image: ImageGrid, predictor, roi: Optional[BinaryMask] = None,
        cfg: LimeConfig = LimeConfig(), jobs: int = 1, roi_flops: int = 0):
    """Returns (SaliencyMap, ExplainReport)."""
    t0 = time.perf_counter()
    predictor.reset_calls()
    fill_value = resolve_fill(image, cfg.fill)
    baseline = predictor.segment(image)

    warnings = []
    scale_maps = []
    coverage = np.zeros(image.data.shape, dtype=np.float64)
    n_regions = 0
    n_regions_full = 0

    for scale_idx, scale in enumerate(cfg.scales):
        labels = felzenszwalb(image, FelzConfig(scale=scale, sigma=cfg.felz_sigma,
                                                min_size=cfg.felz_min_size))
        n_regions_full += labels.n_labels
        if roi is not None:
            labels = restrict_to_roi(labels, roi)
        k = labels.n_labels
        n_regions += k
        if k == 0:
            warnings.append(f"scale {scale:g}: no superpixels inside ROI, skipped")
            continue

        seed_scale = int(np.random.SeedSequence(
            [cfg.seed & 0xFFFFFFFFFFFFFFFF, scale_idx]).generate_state(1)[0])
        z = sample_ablations(k, cfg.n_samples, seed_scale)

        def evaluate(i, z=z, labels=labels):
            rendered = render_ablation(image, labels, z[i], fill_value)
            pred = predictor.segment(rendered)
            return dice(pred.mask, baseline.mask)

        try:
            scores = np.array(run_indexed(evaluate, cfg.n_samples, jobs,
                                          predictor.info.max_concurrency))
        except PredictorError as exc:
            report = _report(predictor, roi, n_regions, max(n_regions_full, 1),
                             0.0, 0.0, cfg.seed, roi_flops,
                             time.perf_counter() - t0,
                             warnings=("invalid: predictor failure",))
            raise EngineError(f"predictor failed mid-run: {exc}",
                              report=report) from exc

        beta = fit_surrogate(z, scores, cfg.kernel_width, cfg.ridge_lambda)
        scale_maps.append(normalize01(paint_weights(labels, beta)))
        coverage += labels.labels > 0

    if scale_maps:
        raw = np.mean(scale_maps, axis=0)
    else:
        warnings.append("no scale produced superpixels; empty saliency")
        raw = np.zeros(image.data.shape, dtype=np.float64)

    saliency = SaliencyMap(raw=raw, normalized=normalize01(raw), coverage=coverage)
    d, j = fidelity_vs_baseline(predictor, image, roi, fill_value, baseline.mask)
    report = _report(predictor, roi, n_regions, max(n_regions_full, 1), d, j,
                     cfg.seed, roi_flops, time.perf_counter() - t0,
                     warnings=tuple(warnings))
    return saliency, report


def _report(predictor, roi, n_regions, n_regions_full, dice_vs_baseline,
            iou_vs_baseline, seed, roi_flops, elapsed_s, warnings=()):
    calls = predictor.calls
    per_call = predictor.info.flops_per_call
    return ExplainReport(
        method="lime",
        gated=roi is not None,
        n_patch=n_regions,
        n_patch_full=n_regions_full,
        rho=min(n_regions / n_regions_full, 1.0) if n_regions_full else 0.0,
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
