"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/parameter error, 3 internal
error. Usage failures from argparse are remapped from its default exit code
to 1.
"""

import argparse
import os
import sys
import time

import numpy as np

from .feature_bank import build_model, load_model, save_model
from .config import PipelineConfig, load_config_file, resolve_config
from .errors import LoomspectError
from .imaging import (
    load_gray,
    load_map,
    load_mask,
    preprocess,
    save_gray,
    save_map,
    save_mask,
    standardize,
)
from .evaluation import (
    DEFECT_KINDS,
    confusion,
    metrics,
    parse_threshold_range,
    report_to_csv,
    sweep_curves,
    sweep_rows_to_csv,
    synth_fabric,
)
from .periodicity import autocorrelate, derive_filter_size, detect_peaks, estimate_period, projection_means
from .harness import (
    atomic_write_text,
    discover_dataset,
    discover_fabric,
    format_summary,
    load_test_tuples,
    run_pipeline,
    summarize,
    summary_to_csv,
    write_results,
)
from .anomaly import calibrate_threshold, defect_probability_map
from .segmentation import segment_map


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_or_auto(text: str):
    if text.lower() == "auto":
        return "auto"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got {text!r}") from None


def _float_or_auto(text: str):
    if text.lower() == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def _add_config_flags(sub, *, training: bool):
    """Flags shared by commands that resolve a PipelineConfig."""
    sub.add_argument("--config", metavar="FILE", help="flat key=value config file")
    if training:
        sub.add_argument("--threshold", type=float, dest="similarity_threshold",
                         help="similarity threshold for joining a feature (default 0.7)")
        sub.add_argument("--layers", type=int, dest="num_layers",
                         help="number of layers (default 1)")
        sub.add_argument("--stride", type=int,
                         help="patch step and inter-layer downsampling (default 1)")
        sub.add_argument("--filter-size", type=_int_or_auto, dest="filter_size",
                         help="odd patch size, or 'auto' to estimate from the period")
        sub.add_argument("--seed", type=int, help="master seed for the patch shuffle (default 42)")
        sub.add_argument("--contrast-threshold", type=float, dest="contrast_threshold",
                         help="variance cutoff for keeping patches (default 0)")
        sub.add_argument("--min-prominence", type=float, dest="min_prominence",
                         help="autocorrelation peak prominence (default 0.05)")
        sub.add_argument("--aggregate", choices=("max", "mean"),
                         help="deeper-layer response merge (default max)")
        sub.add_argument("--no-equalize", dest="equalize", action="store_const", const=False,
                         help="skip histogram equalization")
        sub.add_argument("--anomaly-threshold", type=_float_or_auto, dest="anomaly_threshold",
                         help="fixed anomaly threshold, or 'auto' to calibrate (default auto)")
    sub.add_argument("--sigma", type=_float_or_auto,
                     help="Gaussian deposit spread (default filter_size/6)")
    sub.add_argument("--levels", type=int, help="entropy quantization levels (default 256)")
    sub.add_argument("--n", type=int, dest="neighborhood",
                     help="local-mean window for 2D entropy (default 3)")
    sub.add_argument("--se", type=int, dest="struct_size",
                     help="opening structuring element size (default 3)")


_CONFIG_FIELDS = (
    "filter_size", "num_layers", "stride", "similarity_threshold", "anomaly_threshold",
    "contrast_threshold", "seed", "equalize", "aggregate", "sigma", "min_prominence",
    "levels", "neighborhood", "struct_size", "map_threshold", "jobs",
)


def _resolve(args) -> PipelineConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else None
    cli_values = {
        name: getattr(args, name)
        for name in _CONFIG_FIELDS
        if getattr(args, name, None) is not None
    }
    return resolve_config(file_values, cli_values)


# --- subcommand implementations ----------------------------------------------


def _series_csv(values) -> str:
    lines = ["index,value"]
    lines.extend(
        f"{i},{float(v)!r}" for i, v in enumerate(np.asarray(values, dtype=np.float64))
    )
    return "\n".join(lines) + "\n"


def _cmd_period(args) -> int:
    img = load_gray(args.input)
    pre = standardize(img)
    estimate = estimate_period(pre, args.min_prominence)
    print(f"row_period={estimate.row_period}")
    print(f"col_period={estimate.col_period}")
    print(f"filter_size={derive_filter_size(estimate)}")
    if args.plot:
        os.makedirs(args.plot, exist_ok=True)
        row_means, col_means = projection_means(pre)
        for axis, profile, peaks in (
            ("row", row_means, estimate.row_peaks),
            ("col", col_means, estimate.col_peaks),
        ):
            auto = autocorrelate(profile)
            atomic_write_text(os.path.join(args.plot, f"{axis}_projection.csv"),
                              _series_csv(profile))
            atomic_write_text(os.path.join(args.plot, f"{axis}_autocorrelation.csv"),
                              _series_csv(auto))
            peak_lines = ["index,value"]
            peak_lines.extend(f"{i},{float(auto[i])!r}" for i in peaks)
            atomic_write_text(os.path.join(args.plot, f"{axis}_peaks.csv"),
                              "\n".join(peak_lines) + "\n")
    return 0


def _cmd_train(args) -> int:
    cfg = _resolve(args)
    img = load_gray(args.input)
    started = time.perf_counter()
    model = build_model(img, cfg, fabric_id=args.fabric_id)
    if model.anomaly_threshold is None:
        calibrate_threshold(model, preprocess(img, cfg.equalize))
    elapsed = time.perf_counter() - started
    save_model(model, args.out)
    for i, layer in enumerate(model.layers, start=1):
        print(f"layer {i}: filter_size={layer.filter_size} features={layer.feature_count}")
    print(f"parameters={model.parameter_count()}")
    print(f"anomaly_threshold={model.anomaly_threshold!r}")
    print(f"training_seconds={elapsed:.2f}")
    print(f"model={args.out}")
    return 0


def _cmd_detect(args) -> int:
    model = load_model(args.model)
    img = load_gray(args.input)
    pre = preprocess(img, model.equalize)
    threshold = None if args.anomaly_threshold in (None, "auto") else float(args.anomaly_threshold)
    sigma = None if args.sigma in (None, "auto") else float(args.sigma)
    values = defect_probability_map(model, pre, threshold_override=threshold, sigma=sigma)
    save_map(args.map, values)
    print(f"map={args.map} max_probability={float(values.max())!r}")
    if args.mask:
        cfg = PipelineConfig(
            levels=args.levels if args.levels is not None else 256,
            neighborhood=args.neighborhood if args.neighborhood is not None else 3,
            struct_size=args.struct_size if args.struct_size is not None else 3,
        ).validate()
        mask = segment_map(values, cfg.levels, cfg.neighborhood, cfg.struct_size)
        save_mask(args.mask, mask)
        print(f"mask={args.mask} positive_pixels={int(mask.sum())}")
    return 0


def _cmd_segment(args) -> int:
    values = load_map(args.map)
    mask = segment_map(
        values,
        args.levels if args.levels is not None else 256,
        args.neighborhood if args.neighborhood is not None else 3,
        args.struct_size if args.struct_size is not None else 3,
    )
    save_mask(args.out, mask)
    print(f"mask={args.out} positive_pixels={int(mask.sum())}")
    return 0


def _cmd_evaluate(args) -> int:
    pred = load_mask(args.pred)
    truth = load_mask(args.truth)
    counts = confusion(pred, truth)
    report = metrics(counts)
    atomic_write_text(args.out, report_to_csv(counts, report))

    def show(value):
        return "N/A" if value is None else f"{value:.4f}"

    print(f"tp={counts.tp} tn={counts.tn} fp={counts.fp} fn={counts.fn}")
    print(f"recall={show(report.tpr)} precision={show(report.ppv)} "
          f"dsr={show(report.acc)} f1={show(report.f1)}")
    print(f"csv={args.out}")
    return 0


def _cmd_sweep(args) -> int:
    model = load_model(args.model)
    dataset = discover_fabric(args.dataset)
    labeled = []
    for ref, (image_id, _dtype, img, truth) in zip(dataset.tests, load_test_tuples(dataset)):
        if truth is None:
            truth = np.zeros(np.asarray(img).shape, dtype=np.uint8)
        labeled.append((image_id, img, truth))
    thresholds = parse_threshold_range(args.thresholds)
    sigma = None if args.sigma in (None, "auto") else float(args.sigma)
    rows = sweep_curves(
        model, labeled, thresholds, sigma=sigma,
        map_threshold=args.map_threshold if args.map_threshold is not None else 0.0,
    )
    atomic_write_text(args.out, sweep_rows_to_csv(rows))
    print(f"csv={args.out} rows={len(rows)}")
    return 0


def _cmd_synth(args) -> int:
    img, truth = synth_fabric(
        args.period,
        args.size,
        defect=args.defect,
        noise=args.noise,
        seed=args.seed,
        noise_seed=args.noise_seed,
        width=args.width,
        orientation=args.orientation,
    )
    save_gray(args.out, img)
    print(f"image={args.out}")
    if args.truth:
        save_mask(args.truth, truth)
        print(f"truth={args.truth}")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _resolve(args)
    datasets = discover_dataset(args.dataset, args.fabric or None)
    os.makedirs(args.out, exist_ok=True)
    failures = 0
    for ds in datasets:
        train_raw = load_gray(ds.reference_path)
        tests = load_test_tuples(ds)
        model, results = run_pipeline(train_raw, tests, cfg, fabric_id=ds.name)
        fabric_out = os.path.join(args.out, ds.name)
        os.makedirs(fabric_out, exist_ok=True)
        save_model(model, os.path.join(fabric_out, "model.json"))
        write_results(fabric_out, results)
        rows = summarize(results)
        atomic_write_text(os.path.join(fabric_out, "summary.csv"), summary_to_csv(rows))
        atomic_write_text(os.path.join(fabric_out, "summary.txt"), format_summary(rows))
        print(f"== {ds.name} ==")
        for r in results:
            if r.error is not None:
                failures += 1
                print(f"error: {r.image_id}: {r.error}", file=sys.stderr)
        print(format_summary(rows), end="")
    return 2 if failures else 0


# --- parser wiring -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="loomspect",
                     description="Unsupervised defect detection for patterned fabrics")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub = subs.add_parser("period", help="estimate the fabric repeat period")
    sub.add_argument("--input", required=True, help="fabric image (PNG or PGM)")
    sub.add_argument("--min-prominence", type=float, default=0.05)
    sub.add_argument("--plot", metavar="DIR",
                     help="write projection/autocorrelation/peak CSV series here")
    sub.set_defaults(func=_cmd_period)

    sub = subs.add_parser("train", help="learn a feature bank from a defect-free image")
    sub.add_argument("--input", required=True, help="defect-free reference image")
    sub.add_argument("--out", required=True, help="model file to write")
    sub.add_argument("--fabric-id", default="", help="label stored in the model")
    _add_config_flags(sub, training=True)
    sub.set_defaults(func=_cmd_train)

    sub = subs.add_parser("detect", help="score an image against a trained model")
    sub.add_argument("--model", required=True)
    sub.add_argument("--input", required=True)
    sub.add_argument("--map", required=True, help="16-bit probability map PNG to write")
    sub.add_argument("--mask", help="also segment and write a binary mask here")
    sub.add_argument("--anomaly-threshold", type=_float_or_auto, dest="anomaly_threshold",
                     help="override the model's calibrated threshold")
    sub.add_argument("--sigma", type=_float_or_auto)
    sub.add_argument("--levels", type=int)
    sub.add_argument("--n", type=int, dest="neighborhood")
    sub.add_argument("--se", type=int, dest="struct_size")
    sub.set_defaults(func=_cmd_detect)

    sub = subs.add_parser("segment", help="binarize a probability map")
    sub.add_argument("--map", required=True, help="16-bit probability map PNG")
    sub.add_argument("--out", required=True, help="mask PNG to write")
    sub.add_argument("--levels", type=int)
    sub.add_argument("--n", type=int, dest="neighborhood")
    sub.add_argument("--se", type=int, dest="struct_size")
    sub.set_defaults(func=_cmd_segment)

    sub = subs.add_parser("evaluate", help="compare a predicted mask with ground truth")
    sub.add_argument("--pred", required=True)
    sub.add_argument("--truth", required=True)
    sub.add_argument("--out", required=True, help="CSV to write")
    sub.set_defaults(func=_cmd_evaluate)

    sub = subs.add_parser("sweep", help="anomaly-threshold sweep over a fabric dataset")
    sub.add_argument("--model", required=True)
    sub.add_argument("--dataset", required=True, help="fabric dir with test/ and truth/")
    sub.add_argument("--thresholds", required=True, help="start:stop:step, e.g. 0:1:0.1")
    sub.add_argument("--out", required=True, help="CSV to write")
    sub.add_argument("--sigma", type=_float_or_auto)
    sub.add_argument("--map-threshold", type=float, dest="map_threshold",
                     help="probability cutoff for sweep masks (default 0)")
    sub.set_defaults(func=_cmd_sweep)

    sub = subs.add_parser("synth", help="generate a synthetic fabric image")
    sub.add_argument("--period", type=int, required=True)
    sub.add_argument("--size", type=int, default=256)
    sub.add_argument("--defect", choices=DEFECT_KINDS, default="none")
    sub.add_argument("--out", required=True, help="image PNG/PGM to write")
    sub.add_argument("--truth", help="truth mask PNG to write")
    sub.add_argument("--noise", type=float, default=0.0, help="Gaussian pixel noise std")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--noise-seed", type=int, dest="noise_seed",
                     help="separate stream for defect content and noise")
    sub.add_argument("--width", type=int, help="bar width in pixels (default 2 periods)")
    sub.add_argument("--orientation", choices=("vertical", "horizontal"), default="vertical")
    sub.set_defaults(func=_cmd_synth)

    sub = subs.add_parser("pipeline", help="train + detect + segment + evaluate a dataset")
    sub.add_argument("--dataset", required=True, help="dataset root directory")
    sub.add_argument("--fabric", action="append", help="restrict to named fabrics (repeatable)")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--jobs", type=int, help="parallel image workers (default 1)")
    sub.add_argument("--map-threshold", type=float, dest="map_threshold")
    _add_config_flags(sub, training=True)
    sub.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LoomspectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not crashes
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
