"""Helpers shared by the perturbation engines."""

from typing import Optional, Union

import numpy as np

from ..errors import ValidationError
from ..metrics import dice, iou
from ..preprocess import DEFAULT_BACKGROUND_THRESHOLD
from ..types import BinaryMask, ImageGrid, round_half_up

FillSpec = Union[str, int]


def resolve_fill(image: ImageGrid, fill: FillSpec) -> int:
    """Turn a fill spec into a concrete 8-bit intensity.

    "zero" fills with 0; "foreground_mean" fills with the mean intensity of
    pixels at or above the background threshold (falling back to the global
    mean when everything is background); an integer is used verbatim.
    """
    if isinstance(fill, (int, np.integer)):
        v = int(fill)
        if not (0 <= v <= 255):
            raise ValidationError("constant fill must lie in [0, 255]")
        return v
    if fill == "zero":
        return 0
    if fill == "foreground_mean":
        fg = image.data[image.data >= DEFAULT_BACKGROUND_THRESHOLD]
        source = fg if fg.size else image.data
        return int(round_half_up(float(source.mean())))
    raise ValidationError(f"unknown fill spec {fill!r}")


def fidelity_vs_baseline(predictor, image: ImageGrid, roi: Optional[BinaryMask],
                         fill_value: int, baseline_mask: BinaryMask):
    """Dice/IoU between the baseline segmentation and the segmentation of the
    image restricted to the ROI (non-ROI pixels filled).

    Ungated runs compare the baseline to itself, costing no extra call.
    """
    if roi is None:
        return 1.0, 1.0
    restricted = np.array(image.data)
    restricted[roi.data == 0] = fill_value
    pred = predictor.segment(ImageGrid(restricted))
    return dice(pred.mask, baseline_mask), iou(pred.mask, baseline_mask)
