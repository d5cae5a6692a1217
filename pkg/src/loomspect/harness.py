"""End-to-end orchestration: train, calibrate, detect, segment, evaluate.

Also owns the on-disk dataset convention:

    <root>/<fabric>/reference.png      defect-free training image
    <root>/<fabric>/test/<type>_<i>.png
    <root>/<fabric>/truth/<type>_<i>.png   optional; absent = defect-free

A test image's defect type is the filename stem up to the last underscore.
Images whose truth mask is absent or empty are pooled into the summary's
"defect-free" row.
"""

import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .feature_bank import Model, build_model
from .config import PipelineConfig
from .errors import ImageIOError, LoomspectError
from .imaging import load_gray, load_mask, preprocess, save_map, save_mask
from .evaluation import ConfusionCounts, MetricsReport, confusion, metrics
from .anomaly import calibrate_threshold, map_from_scan, scan_image
from .segmentation import segment_map

IMAGE_SUFFIXES = (".png", ".pgm")


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class TestImageRef:
    image_id: str
    path: str
    truth_path: str | None
    defect_type: str


@dataclass(frozen=True)
class FabricDataset:
    name: str
    reference_path: str
    tests: tuple


def _defect_type(stem: str) -> str:
    return stem.rsplit("_", 1)[0] if "_" in stem else stem


def discover_fabric(fabric_dir: str) -> FabricDataset:
    """Read one fabric directory into its reference and test listing."""
    name = os.path.basename(os.path.normpath(fabric_dir))
    reference = None
    for suffix in IMAGE_SUFFIXES:
        candidate = os.path.join(fabric_dir, "reference" + suffix)
        if os.path.isfile(candidate):
            reference = candidate
            break
    if reference is None:
        raise ImageIOError(f"{fabric_dir}: no reference.png or reference.pgm")
    tests = []
    test_dir = os.path.join(fabric_dir, "test")
    truth_dir = os.path.join(fabric_dir, "truth")
    if os.path.isdir(test_dir):
        for fname in sorted(os.listdir(test_dir)):
            stem, ext = os.path.splitext(fname)
            if ext.lower() not in IMAGE_SUFFIXES:
                continue
            truth_path = None
            for suffix in IMAGE_SUFFIXES:
                candidate = os.path.join(truth_dir, stem + suffix)
                if os.path.isfile(candidate):
                    truth_path = candidate
                    break
            tests.append(
                TestImageRef(
                    image_id=f"{name}/{fname}",
                    path=os.path.join(test_dir, fname),
                    truth_path=truth_path,
                    defect_type=_defect_type(stem),
                )
            )
    return FabricDataset(name, reference, tuple(tests))


def discover_dataset(root: str, fabrics=None) -> list:
    """All fabric datasets under a root directory (optionally a named subset)."""
    if not os.path.isdir(root):
        raise ImageIOError(f"dataset root {root} is not a directory")
    names = sorted(
        entry for entry in os.listdir(root) if os.path.isdir(os.path.join(root, entry))
    )
    if fabrics:
        missing = sorted(set(fabrics) - set(names))
        if missing:
            raise ImageIOError(f"dataset root {root} has no fabric dirs named {missing}")
        names = [n for n in names if n in set(fabrics)]
    if not names:
        raise ImageIOError(f"dataset root {root} contains no fabric directories")
    return [discover_fabric(os.path.join(root, n)) for n in names]


@dataclass
class ImageResult:
    image_id: str
    defect_type: str
    flagged: bool | None          # mask has any positive pixel; None on error
    counts: ConfusionCounts | None
    report: MetricsReport | None
    truth_positive: bool          # ground truth marks this image defective
    error: str | None = None
    values: np.ndarray | None = None
    mask: np.ndarray | None = None


def _process_one(model: Model, cfg: PipelineConfig, image_id, defect_type, raw, truth):
    try:
        pre = preprocess(np.asarray(raw, dtype=np.float64), model.equalize)
        scan = scan_image(model, pre)
        values = map_from_scan(scan, model.anomaly_threshold, cfg.sigma)
        mask = segment_map(values, cfg.levels, cfg.neighborhood, cfg.struct_size)
    except LoomspectError as exc:
        return ImageResult(
            image_id, defect_type, None, None, None,
            truth_positive=bool(truth is not None and np.any(truth)),
            error=str(exc),
        )
    counts = report = None
    truth_positive = False
    if truth is not None:
        truth = np.asarray(truth)
        counts = confusion(mask, truth)
        report = metrics(counts)
        truth_positive = bool(counts.tp + counts.fn)
    return ImageResult(
        image_id, defect_type, bool(mask.any()), counts, report,
        truth_positive=truth_positive, values=values, mask=mask,
    )


def run_pipeline(train_img, tests, cfg: PipelineConfig | None = None, fabric_id: str = ""):
    """Train on the reference, then score, segment, and evaluate every test.

    tests: iterable of (image_id, defect_type, raw_image, truth_mask_or_None).
    Returns (model, [ImageResult]). Per-image errors are captured in the
    result rather than aborting the batch. Images are processed in parallel
    when cfg.jobs > 1; results keep input order and are bit-identical either
    way (the model is immutable after calibration).
    """
    cfg = (cfg if cfg is not None else PipelineConfig()).validate()
    train_arr = np.asarray(train_img, dtype=np.float64)
    model = build_model(train_arr, cfg, fabric_id)
    if model.anomaly_threshold is None:
        calibrate_threshold(model, preprocess(train_arr, cfg.equalize))
    tests = list(tests)
    if cfg.jobs > 1 and len(tests) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(
                pool.map(lambda t: _process_one(model, cfg, *t), tests)
            )
    else:
        results = [_process_one(model, cfg, *t) for t in tests]
    return model, results


@dataclass(frozen=True)
class SummaryRow:
    label: str
    images: int
    flagged: int
    errors: int
    counts: ConfusionCounts
    report: MetricsReport


def _pool(label: str, results) -> SummaryRow:
    counts = ConfusionCounts(0, 0, 0, 0)
    flagged = 0
    errors = 0
    for r in results:
        if r.error is not None:
            errors += 1
            continue
        if r.flagged:
            flagged += 1
        if r.counts is not None:
            counts = counts + r.counts
    return SummaryRow(label, len(results), flagged, errors, counts, metrics(counts))


def summarize(results) -> list:
    """Per-defect-type rows plus a defect-free row and an overall row.

    Pooling sums pixel counts across a row's images before computing rates;
    per-image metrics are never averaged.
    """
    defective = [r for r in results if r.truth_positive]
    clean = [r for r in results if not r.truth_positive]
    rows = []
    for dtype in sorted({r.defect_type for r in defective}):
        rows.append(_pool(dtype, [r for r in defective if r.defect_type == dtype]))
    if clean:
        rows.append(_pool("defect-free", clean))
    rows.append(_pool("overall", results))
    return rows


def _fmt(value) -> str:
    return "N/A" if value is None else f"{value:.2f}"


def format_summary(rows) -> str:
    header = f"{'category':<14}{'images':>7}{'flagged':>8}{'errors':>7}{'DSR':>7}{'recall':>8}{'precision':>10}{'F1':>7}"
    lines = [header]
    for row in rows:
        lines.append(
            f"{row.label:<14}{row.images:>7}{row.flagged:>8}{row.errors:>7}"
            f"{_fmt(row.report.acc):>7}{_fmt(row.report.tpr):>8}"
            f"{_fmt(row.report.ppv):>10}{_fmt(row.report.f1):>7}"
        )
    return "\n".join(lines) + "\n"


def summary_to_csv(rows) -> str:
    def cell(value):
        return "NA" if value is None else (repr(value) if isinstance(value, float) else str(value))

    lines = ["category,images,flagged,errors,tp,tn,fp,fn,dsr,recall,precision,f1"]
    for row in rows:
        lines.append(
            ",".join(
                cell(v)
                for v in (
                    row.label, row.images, row.flagged, row.errors,
                    row.counts.tp, row.counts.tn, row.counts.fp, row.counts.fn,
                    row.report.acc, row.report.tpr, row.report.ppv, row.report.f1,
                )
            )
        )
    return "\n".join(lines) + "\n"


def load_test_tuples(dataset: FabricDataset):
    """Materialize (image_id, defect_type, image, truth) tuples for run_pipeline."""
    out = []
    for ref in dataset.tests:
        img = load_gray(ref.path)
        truth = load_mask(ref.truth_path) if ref.truth_path else None
        out.append((ref.image_id, ref.defect_type, img, truth))
    return out


def write_results(out_dir: str, results) -> None:
    """Per-image probability maps and masks, written atomically."""
    os.makedirs(out_dir, exist_ok=True)
    for r in results:
        if r.error is not None or r.values is None:
            continue
        stem = os.path.splitext(os.path.basename(r.image_id))[0]
        save_map(os.path.join(out_dir, stem + "_map.png"), r.values)
        save_mask(os.path.join(out_dir, stem + "_mask.png"), r.mask)
