"""Pixel-level evaluation, threshold sweeps, and synthetic test fabrics."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .imaging import preprocess
from .anomaly import map_from_scan, scan_image

SWEEP_COLUMNS = ("threshold", "tp", "tn", "fp", "fn", "tpr", "fpr", "ppv", "f1")
REPORT_COLUMNS = ("tp", "tn", "fp", "fn", "tpr", "tnr", "fnr", "fpr", "ppv", "acc", "f1")

# Marker for metrics whose denominator is zero (a defect-free image has no
# positives, so recall is not 0 — it is not a number at all).
NA = "NA"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn
        )

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricsReport:
    """The seven ratios; None encodes an undefined (0/0) metric."""

    tpr: float | None
    tnr: float | None
    fnr: float | None
    fpr: float | None
    ppv: float | None
    acc: float | None
    f1: float | None


def confusion(pred: np.ndarray, truth: np.ndarray) -> ConfusionCounts:
    """Per-pixel confusion tally of two binary masks."""
    p = np.asarray(pred) != 0
    t = np.asarray(truth) != 0
    if p.shape != t.shape:
        raise DimensionError(f"prediction {p.shape} and truth {t.shape} differ in size")
    tp = int(np.count_nonzero(p & t))
    tn = int(np.count_nonzero(~p & ~t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    return ConfusionCounts(tp, tn, fp, fn)


def metrics(c: ConfusionCounts) -> MetricsReport:
    """Recall/TNR/FNR/FPR/precision/accuracy/F1 from raw counts.

    Each ratio follows its textbook definition; a zero denominator yields
    None rather than a made-up 0 or 1. F1 is the harmonic mean of precision
    and recall and is undefined when either is, or when both are zero.
    """
    def ratio(num, den):
        return num / den if den else None

    tpr = ratio(c.tp, c.tp + c.fn)
    tnr = ratio(c.tn, c.tn + c.fp)
    fnr = ratio(c.fn, c.fn + c.tp)
    fpr = ratio(c.fp, c.fp + c.tn)
    ppv = ratio(c.tp, c.tp + c.fp)
    acc = ratio(c.tp + c.tn, c.total)
    if tpr is None or ppv is None or (tpr + ppv) == 0:
        f1 = None
    else:
        f1 = 2.0 * ppv * tpr / (ppv + tpr)
    return MetricsReport(tpr, tnr, fnr, fpr, ppv, acc, f1)


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    counts: ConfusionCounts
    tpr: float | None
    fpr: float | None
    ppv: float | None
    f1: float | None


def parse_threshold_range(spec: str) -> list:
    """Parse 'start:stop:step' into an inclusive list, or a single value.

    Values are rounded to 10 decimals so 0:1:0.1 yields 0.1, 0.2, ... rather
    than float-accumulation noise.
    """
    parts = spec.split(":")
    try:
        if len(parts) == 1:
            return [float(parts[0])]
        if len(parts) != 3:
            raise ValueError
        start, stop, step = (float(x) for x in parts)
    except ValueError:
        raise ParameterError(
            f"thresholds must be a number or start:stop:step, got {spec!r}"
        ) from None
    if step <= 0 or stop < start:
        raise ParameterError(f"bad threshold range {spec!r}")
    out = []
    k = 0
    while True:
        value = round(start + k * step, 10)
        if value > stop + 1e-12:
            break
        out.append(min(value, stop))
        k += 1
    return out


def sweep_curves(model, labeled, thresholds, sigma=None, map_threshold=0.0):
    """Pooled confusion counts and rates across an anomaly-threshold sweep.

    labeled: iterable of (image_id, raw_image, truth_mask). Each image is
    preprocessed per the model, scanned once, and binarized at every
    threshold by the fixed cutoff mask = probability > map_threshold (the
    adaptive segmentation stage is deliberately bypassed so the sweep
    reflects the anomaly threshold alone). Counts are pooled by summation
    over images, then converted to rates.
    """
    thresholds = [float(t) for t in thresholds]
    for t in thresholds:
        if not (0.0 <= t <= 1.0):
            raise ParameterError(f"sweep thresholds must lie in [0,1], got {t}")
    scans = []
    for image_id, raw, truth in labeled:
        try:
            pre = preprocess(np.asarray(raw, dtype=np.float64), model.equalize)
            scan = scan_image(model, pre)
        except Exception as exc:
            raise type(exc)(f"{image_id}: {exc}") from exc
        t = np.asarray(truth) != 0
        if t.shape != scan.shape:
            raise DimensionError(
                f"{image_id}: truth {t.shape} does not match image {scan.shape}"
            )
        scans.append((image_id, scan, t))
    if not scans:
        raise ParameterError("sweep needs at least one labeled image")

    rows = []
    for thr in thresholds:
        pooled = ConfusionCounts(0, 0, 0, 0)
        for image_id, scan, truth in scans:
            values = map_from_scan(scan, thr, sigma)
            pooled = pooled + confusion(values > map_threshold, truth)
        rep = metrics(pooled)
        rows.append(SweepRow(thr, pooled, rep.tpr, rep.fpr, rep.ppv, rep.f1))
    return rows


def _cell(value) -> str:
    if value is None:
        return NA
    if isinstance(value, float):
        return repr(value)
    return str(value)


def sweep_rows_to_csv(rows) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        lines.append(
            ",".join(
                _cell(v)
                for v in (
                    r.threshold,
                    r.counts.tp,
                    r.counts.tn,
                    r.counts.fp,
                    r.counts.fn,
                    r.tpr,
                    r.fpr,
                    r.ppv,
                    r.f1,
                )
            )
        )
    return "\n".join(lines) + "\n"


def report_to_csv(c: ConfusionCounts, rep: MetricsReport) -> str:
    values = (
        c.tp, c.tn, c.fp, c.fn,
        rep.tpr, rep.tnr, rep.fnr, rep.fpr, rep.ppv, rep.acc, rep.f1,
    )
    return ",".join(REPORT_COLUMNS) + "\n" + ",".join(_cell(v) for v in values) + "\n"


DEFECT_KINDS = ("none", "bar", "hole", "block")

# Tile composition: a cosine motif per axis plus rough texture. The texture
# is double-centered (all tile row and column means forced to zero) so the
# image projections are exactly the cosine profiles, whose autocorrelation
# peaks only at multiples of the period; amplitudes keep 128 +/- (90 + 32)
# inside [0, 255] so no construction-time clipping disturbs that.
_MOTIF_AMPLITUDE = 45.0
_TEXTURE_AMPLITUDE = 8.0


def _motif_tile(period: int, rng: np.random.Generator) -> np.ndarray:
    phase_y, phase_x = rng.uniform(0.0, 2.0 * np.pi, size=2)
    angle = 2.0 * np.pi * np.arange(period) / period
    prof_y = _MOTIF_AMPLITUDE * np.cos(angle + phase_y)
    prof_x = _MOTIF_AMPLITUDE * np.cos(angle + phase_x)
    texture = rng.uniform(-_TEXTURE_AMPLITUDE, _TEXTURE_AMPLITUDE, size=(period, period))
    texture -= texture.mean(axis=1, keepdims=True)
    texture -= texture.mean(axis=0, keepdims=True)
    return 128.0 + prof_y[:, None] + prof_x[None, :] + texture


def synth_fabric(
    period: int,
    size: int,
    defect: str = "none",
    noise: float = 0.0,
    seed: int = 0,
    noise_seed: int | None = None,
    width: int | None = None,
    orientation: str = "vertical",
):
    """Synthetic patterned fabric with a known defect mask.

    A seeded random period x period tile (cosine motif plus rough texture) is
    repeated to size x size. Defects: 'bar' shifts a stripe's intensity by
    +70 with saturation at 255 (width defaults to 2 periods, vertical or
    horizontal), 'hole' darkens a filled disk of radius one period, 'block'
    replaces a square of side 2 periods with unstructured noise. Additive
    Gaussian pixel noise with std `noise` is applied last and everything is
    clipped to [0, 255].

    noise_seed, when given, drives defect content and pixel noise from its
    own stream so several test images can share one fabric (same master seed,
    same tile) with independent noise. Returns (image, truth mask).
    """
    if not isinstance(period, (int, np.integer)) or period < 1:
        raise ParameterError(f"period must be a positive integer, got {period}")
    if not isinstance(size, (int, np.integer)) or size < 1:
        raise ParameterError(f"size must be a positive integer, got {size}")
    if period * 4 > size:
        raise ParameterError(f"period {period} must be at most size/4 = {size / 4:g}")
    if defect not in DEFECT_KINDS:
        raise ParameterError(f"defect must be one of {DEFECT_KINDS}, got {defect!r}")
    if noise < 0:
        raise ParameterError(f"noise std must be >= 0, got {noise}")
    if orientation not in ("vertical", "horizontal"):
        raise ParameterError(f"orientation must be vertical or horizontal, got {orientation!r}")

    tile_rng = np.random.default_rng(seed)
    tile = _motif_tile(period, tile_rng)
    reps = -(-size // period)
    img = np.tile(tile, (reps, reps))[:size, :size].copy()
    truth = np.zeros((size, size), dtype=np.uint8)
    detail_rng = tile_rng if noise_seed is None else np.random.default_rng(noise_seed)

    if defect == "bar":
        w = int(width) if width is not None else 2 * period
        if w < 1 or w > size:
            raise ParameterError(f"bar width {w} does not fit a {size}x{size} image")
        lo = (size - w) // 2
        if orientation == "vertical":
            img[:, lo:lo + w] += 70.0
            truth[:, lo:lo + w] = 1
        else:
            img[lo:lo + w, :] += 70.0
            truth[lo:lo + w, :] = 1
    elif defect == "hole":
        radius = period
        if 2 * radius > size:
            raise ParameterError(f"hole of radius {radius} does not fit a {size}x{size} image")
        center = size // 2
        yy, xx = np.ogrid[:size, :size]
        disk = (yy - center) ** 2 + (xx - center) ** 2 <= radius * radius
        img[disk] = 16.0
        truth[disk] = 1
    elif defect == "block":
        side = 2 * period
        if side > size:
            raise ParameterError(f"block of side {side} does not fit a {size}x{size} image")
        lo = (size - side) // 2
        img[lo:lo + side, lo:lo + side] = detail_rng.integers(0, 256, size=(side, side))
        truth[lo:lo + side, lo:lo + side] = 1

    if noise > 0:
        img += detail_rng.normal(0.0, noise, size=img.shape)
    np.clip(img, 0.0, 255.0, out=img)
    return img, truth
