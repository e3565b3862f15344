"""Byte-stable serialization of reports and heatmaps."""

import json

import numpy as np
from PIL import Image

from .colormap import HEATMAP_COLORMAP
from .types import ExplainReport, SaliencyMap

_COLORMAP = np.array(HEATMAP_COLORMAP, dtype=np.uint8)


def _fixed(x: float) -> float:
    """Pin floats to 6 decimal places so serialization is byte-deterministic."""
    return float(f"{float(x):.6f}")


def report_to_dict(report: ExplainReport, include_timing: bool = True) -> dict:
    return {
        "method": report.method,
        "gated": report.gated,
        "n_patch": report.n_patch,
        "n_patch_full": report.n_patch_full,
        "rho": _fixed(report.rho),
        "wall_clock_ms": _fixed(report.wall_clock_ms if include_timing else 0.0),
        "flops": {
            "roi": report.flops_roi,
            "calls": report.flops_calls,
            "per_call": report.flops_per_call,
            "total": report.flops_total,
        },
        "dice_vs_baseline": _fixed(report.dice_vs_baseline),
        "iou_vs_baseline": _fixed(report.iou_vs_baseline),
        "seed": report.seed,
        "warnings": list(report.warnings),
    }


def write_report(report: ExplainReport, include_timing: bool = True) -> bytes:
    doc = report_to_dict(report, include_timing=include_timing)
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8")


def parse_report(data: bytes) -> ExplainReport:
    doc = json.loads(data.decode("utf-8"))
    flops = doc["flops"]
    return ExplainReport(
        method=doc["method"],
        gated=doc["gated"],
        n_patch=doc["n_patch"],
        n_patch_full=doc["n_patch_full"],
        rho=doc["rho"],
        wall_clock_ms=doc["wall_clock_ms"],
        flops_roi=flops["roi"],
        flops_calls=flops["calls"],
        flops_per_call=flops["per_call"],
        flops_total=flops["total"],
        dice_vs_baseline=doc["dice_vs_baseline"],
        iou_vs_baseline=doc["iou_vs_baseline"],
        seed=doc["seed"],
        warnings=tuple(doc["warnings"]),
    )


def heatmap_to_rgb(saliency: SaliencyMap) -> np.ndarray:
    """Map normalized saliency through the fixed 256-entry colormap."""
    idx = np.clip(np.floor(saliency.normalized * 255.0 + 0.5), 0, 255).astype(np.uint8)
    return _COLORMAP[idx]


def write_heatmap(saliency: SaliencyMap, path) -> None:
    Image.fromarray(heatmap_to_rgb(saliency), mode="RGB").save(path, format="PNG")
