"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 degenerate data, 4 predictor or
transport failure, 5 internal error. All option values can also be supplied
via XAICLIP_-prefixed environment variables or a flat key=value config file
(flags take precedence).
"""

import csv
import functools
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import fileio
from .engines import lime as lime_engine
from .engines import occlusion as occlusion_engine
from .engines import rise as rise_engine
from .engines.lime import LimeConfig
from .engines.occlusion import OcclusionConfig
from .engines.rise import RiseConfig
from .errors import (
    DegenerateImportanceError,
    NoForegroundError,
    PredictorError,
    ValidationError,
    XaiClipError,
)
from .predictor import HttpPredictor, LinearOracle, RegionOracle
from .preprocess import PreprocessConfig, enhance
from .report import report_to_dict, write_heatmap, write_report
from .roi import RoiConfig, binarize_importance

EXIT_INPUT = 2
EXIT_DEGENERATE = 3
EXIT_PREDICTOR = 4
EXIT_INTERNAL = 5


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (DegenerateImportanceError, NoForegroundError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_DEGENERATE)
        except PredictorError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_PREDICTOR)
        except (FileNotFoundError, IsADirectoryError, PermissionError,
                ValidationError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INPUT)
        except XaiClipError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INTERNAL)
    return wrapper


def _read_config_file(path):
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


@click.group(context_settings={"auto_envvar_prefix": "XAICLIP"})
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Flat key=value config file (flags win).")
@click.pass_context
def main(ctx, config):
    """ROI-gated perturbation explainability for image segmentation."""
    if config:
        values = _read_config_file(config)
        ctx.default_map = {name: dict(values) for name in
                           ("preprocess", "roi", "explain", "compare")}


def parse_fill(value):
    if value in ("zero", "foreground_mean"):
        return value
    try:
        return int(value)
    except ValueError:
        raise click.BadParameter(
            "fill must be 'zero', 'foreground_mean', or an integer 0-255")


def build_predictor(spec, timeout=30.0):
    """`region:<maskfile>:<sensitivity>`, `linear:<weightsfile>`, or an HTTP URI."""
    if spec.startswith(("http://", "https://")):
        return HttpPredictor(spec, timeout=timeout)
    if spec.startswith("region:"):
        _, maskfile, sensitivity = spec.split(":", 2)
        return RegionOracle(fileio.load_mask(maskfile), float(sensitivity))
    if spec.startswith("linear:"):
        _, weightsfile = spec.split(":", 1)
        doc = json.loads(Path(weightsfile).read_text())
        labels = fileio.load_labelmap_pgm16(
            Path(weightsfile).parent / doc["labels"])
        return LinearOracle(doc["weights"], labels, bias=doc.get("bias", 0.0))
    raise ValidationError(f"unknown predictor spec {spec!r}")


@main.command("preprocess")
@click.argument("input_path", type=click.Path(exists=True))
@click.argument("output_path", type=click.Path())
@click.option("--t-bg", default=20, show_default=True)
@click.option("--pct-low", default=5.0, show_default=True)
@click.option("--pct-high", default=95.0, show_default=True)
@click.option("--clahe-clip", default=2.0, show_default=True)
@click.option("--tile-grid", default="8x8", show_default=True)
@click.option("--target-size", default=224, show_default=True)
@click.option("--jobs", default=0, show_default="logical CPUs")
@handle_errors
def cmd_preprocess(input_path, output_path, t_bg, pct_low, pct_high,
                   clahe_clip, tile_grid, target_size, jobs):
    """Enhance one image file or every image in a directory."""
    rows, cols = (int(t) for t in tile_grid.lower().split("x"))
    cfg = PreprocessConfig(t_bg=t_bg, pct_low=pct_low, pct_high=pct_high,
                           clahe_clip=clahe_clip, tile_grid=(rows, cols),
                           target_size=target_size)
    src = Path(input_path)
    dst = Path(output_path)

    def process(pair):
        in_file, out_file = pair
        fileio.save_image(enhance(fileio.load_image(in_file), cfg), out_file)

    if src.is_dir():
        dst.mkdir(parents=True, exist_ok=True)
        files = sorted(p for p in src.iterdir()
                       if p.suffix.lower() in (".png", ".pgm"))
        pairs = [(p, dst / p.name) for p in files]
        workers = jobs if jobs > 0 else None
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(process, pairs))
        click.echo(f"processed {len(pairs)} images")
    else:
        dst.parent.mkdir(parents=True, exist_ok=True)
        process((src, dst))


@main.command("roi")
@click.argument("importance_path", type=click.Path(exists=True))
@click.argument("output_path", type=click.Path())
@click.option("--gauss-sigma", default=2.0, show_default=True)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--top-fraction", type=float, default=None,
              help="Keep this fraction of pixels instead of thresholding.")
@handle_errors
def cmd_roi(importance_path, output_path, gauss_sigma, threshold, top_fraction):
    """Binarize an importance map into an ROI mask."""
    cfg = RoiConfig(gauss_sigma=gauss_sigma, threshold=threshold,
                    top_fraction=top_fraction)
    importance = fileio.load_importance(importance_path)
    fileio.save_mask(binarize_importance(importance, cfg), output_path)


def engine_options(fn):
    opts = [
        click.option("--method", type=click.Choice(["occlusion", "rise", "lime"]),
                     required=True),
        click.option("--roi", "roi_path", type=click.Path(exists=True), default=None),
        click.option("--predictor", "predictor_spec", required=True),
        click.option("--seed", default=0, show_default=True),
        click.option("--jobs", default=0, show_default="logical CPUs"),
        click.option("--roi-flops", default=0, show_default=True,
                     help="Declared FLOPs spent deriving the ROI."),
        click.option("--timeout", default=30.0, show_default=True),
        click.option("--patch", default=64, show_default=True),
        click.option("--stride", default=32, show_default=True),
        click.option("--fill", default="foreground_mean", show_default=True),
        click.option("--n-masks", default=2000, show_default=True),
        click.option("--p1", default=0.5, show_default=True),
        click.option("--base-grid", default="7x7", show_default=True),
        click.option("--shift/--no-shift", "random_shift", default=True),
        click.option("--n-samples", default=300, show_default=True),
        click.option("--scales", default="50,100,200", show_default=True),
        click.option("--kernel-width", default=0.25, show_default=True),
        click.option("--ridge-lambda", default=0.01, show_default=True),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def run_engine(image, predictor, roi, method, seed, jobs, roi_flops, params):
    if method == "occlusion":
        cfg = OcclusionConfig(patch=params["patch"], stride=params["stride"],
                              fill=parse_fill(params["fill"]), seed=seed)
        saliency, rep = occlusion_engine.run(image, predictor, roi, cfg,
                                             jobs=jobs, roi_flops=roi_flops)
        return {"": saliency}, rep
    if method == "rise":
        bh, bw = (int(t) for t in params["base_grid"].lower().split("x"))
        cfg = RiseConfig(n_masks=params["n_masks"], p1=params["p1"],
                         base_grid=(bh, bw), random_shift=params["random_shift"],
                         seed=seed)
        fid, rel, rep = rise_engine.run(image, predictor, roi, cfg,
                                        jobs=jobs, roi_flops=roi_flops)
        return {"_fidelity": fid, "_relevance": rel}, rep
    scales = tuple(float(t) for t in params["scales"].split(","))
    cfg = LimeConfig(n_samples=params["n_samples"], scales=scales,
                     kernel_width=params["kernel_width"],
                     ridge_lambda=params["ridge_lambda"],
                     fill=parse_fill(params["fill"]), seed=seed)
    saliency, rep = lime_engine.run(image, predictor, roi, cfg,
                                    jobs=jobs, roi_flops=roi_flops)
    return {"": saliency}, rep


def write_outputs(out_dir, prefix, maps, rep, include_timing):
    out_dir.mkdir(parents=True, exist_ok=True)
    for suffix, saliency in maps.items():
        write_heatmap(saliency, out_dir / f"{prefix}heatmap{suffix}.png")
    (out_dir / f"{prefix}report.json").write_bytes(
        write_report(rep, include_timing=include_timing))


@main.command("explain")
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--record-timing", is_flag=True, default=False,
              help="Write measured wall-clock into the report JSON "
                   "(off by default so outputs are byte-reproducible).")
@engine_options
@handle_errors
def cmd_explain(image_path, out_dir, record_timing, method, roi_path,
                predictor_spec, seed, jobs, roi_flops, timeout, **params):
    """Run one explainability method and write heatmap(s) plus report JSON."""
    image = fileio.load_image(image_path)
    roi = fileio.load_mask(roi_path) if roi_path else None
    predictor = build_predictor(predictor_spec, timeout=timeout)
    maps, rep = run_engine(image, predictor, roi, method, seed, jobs,
                           roi_flops, params)
    write_outputs(Path(out_dir), "", maps, rep, include_timing=record_timing)
    click.echo(f"{method}: n_patch={rep.n_patch} rho={rep.rho:.4f} "
               f"wall_clock_ms={rep.wall_clock_ms:.1f}")


def _pct_delta(gated, traditional):
    if traditional == 0:
        return 0.0
    return (gated - traditional) / traditional * 100.0


@main.command("compare")
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), required=True)
@engine_options
@handle_errors
def cmd_compare(image_path, out_dir, method, roi_path, predictor_spec, seed,
                jobs, roi_flops, timeout, **params):
    """Run traditional and ROI-gated variants back to back and emit deltas."""
    if not roi_path:
        raise click.UsageError("compare requires --roi")
    image = fileio.load_image(image_path)
    roi = fileio.load_mask(roi_path)
    predictor = build_predictor(predictor_spec, timeout=timeout)
    out = Path(out_dir)

    trad_maps, trad = run_engine(image, predictor, None, method, seed, jobs,
                                 roi_flops, params)
    gated_maps, gated = run_engine(image, predictor, roi, method, seed, jobs,
                                   roi_flops, params)
    write_outputs(out, "traditional_", trad_maps, trad, include_timing=True)
    write_outputs(out, "gated_", gated_maps, gated, include_timing=True)

    delta = {
        "delta_dice_pct": round(_pct_delta(gated.dice_vs_baseline,
                                           trad.dice_vs_baseline), 6),
        "delta_iou_pct": round(_pct_delta(gated.iou_vs_baseline,
                                          trad.iou_vs_baseline), 6),
        "delta_gflops_pct": round(_pct_delta(gated.flops_total,
                                             trad.flops_total), 6),
        "delta_time_pct": round(_pct_delta(gated.wall_clock_ms,
                                           trad.wall_clock_ms), 6),
    }
    (out / "delta.json").write_text(json.dumps(delta, sort_keys=True, indent=2) + "\n")
    _write_summary_csv(out / "summary.csv", trad, gated, delta)
    _write_comparison_figure(out / "comparison.png", trad, gated)
    click.echo(json.dumps(delta, sort_keys=True))


def _write_summary_csv(path, trad, gated, delta):
    rows = [
        ("dice_vs_baseline", trad.dice_vs_baseline, gated.dice_vs_baseline,
         delta["delta_dice_pct"]),
        ("iou_vs_baseline", trad.iou_vs_baseline, gated.iou_vs_baseline,
         delta["delta_iou_pct"]),
        ("flops_total", trad.flops_total, gated.flops_total,
         delta["delta_gflops_pct"]),
        ("wall_clock_ms", trad.wall_clock_ms, gated.wall_clock_ms,
         delta["delta_time_pct"]),
        ("n_patch", trad.n_patch, gated.n_patch, ""),
        ("rho", trad.rho, gated.rho, ""),
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "traditional", "gated", "delta_pct"])
        writer.writerows(rows)


def _write_comparison_figure(path, trad, gated):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    metrics = [
        ("Dice", trad.dice_vs_baseline, gated.dice_vs_baseline),
        ("IoU", trad.iou_vs_baseline, gated.iou_vs_baseline),
        ("Time (ms)", trad.wall_clock_ms, gated.wall_clock_ms),
        ("GFLOPs", trad.flops_total / 1e9, gated.flops_total / 1e9),
    ]
    fig, axes = plt.subplots(1, len(metrics), figsize=(3 * len(metrics), 3))
    for ax, (name, t, g) in zip(np.atleast_1d(axes), metrics):
        ax.bar(["traditional", "gated"], [t, g], color=["#777777", "#2a788e"])
        ax.set_title(name)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


if __name__ == "__main__":
    main()
