"""Patch scoring against a trained bank and defect-probability accumulation.

All functions here expect images already preprocessed the same way training
preprocessed its reference image (the pipeline layer owns that symmetry).

Scoring splits into two phases: scan_image computes every patch's nearest-
feature distance (expensive, threshold-independent), and map_from_scan turns
a scan into a probability map for one threshold (cheap). Threshold sweeps
reuse one scan per image across all thresholds.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from . import _backend
from .feature_bank import Layer, Model, layer_inputs
from .errors import DimensionError, ModelFormatError, ParameterError
from .imaging import gaussian_kernel
from .patching import extract_patches

# Default Gaussian spread relative to the patch: +/-3 sigma spans the window,
# so evidence fades to ~1% of the peak at the patch border.
SIGMA_FRACTION = 1.0 / 6.0


def range_normalize(rows: np.ndarray) -> np.ndarray:
    """Min-max scale each row to [0, 1]; constant rows map to all 0.5.

    Removes contrast and offset before Manhattan comparison, mirroring the
    contrast invariance of the cosine similarity used in training.
    """
    arr = np.asarray(rows, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    lo = arr.min(axis=1, keepdims=True)
    hi = arr.max(axis=1, keepdims=True)
    span = hi - lo
    out = np.divide(arr - lo, span, out=np.full_like(arr, 0.5), where=span > 0)
    return out[0] if squeeze else out


def manhattan_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized Manhattan distance in [0, 1].

    Both vectors are range-normalized, then the absolute differences are
    summed and divided by the vector length.
    """
    va = np.asarray(a, dtype=np.float64).ravel()
    vb = np.asarray(b, dtype=np.float64).ravel()
    if va.shape != vb.shape:
        raise DimensionError(f"vector lengths differ: {va.size} vs {vb.size}")
    if va.size == 0:
        raise DimensionError("empty vectors have no distance")
    return float(np.abs(range_normalize(va) - range_normalize(vb)).sum() / va.size)


def _layer_distances(values: np.ndarray, layer: Layer, backend=None):
    """Nearest-feature distance and argmin index for every patch row."""
    if layer.feature_count == 0:
        raise ModelFormatError("layer has no features")
    if values.shape[1] != layer.weights.shape[1]:
        raise DimensionError(
            f"patch length {values.shape[1]} does not match layer's {layer.weights.shape[1]}"
        )
    queries = range_normalize(values)
    bank = range_normalize(layer.weights)
    sums, idx = _backend.nearest_l1(queries, bank, backend=backend)
    return sums / values.shape[1], idx


def nearest_distance(patch: np.ndarray, layer: Layer):
    """Distance to the most similar feature: (distance, feature index).

    Lowest index wins exact ties.
    """
    vec = np.asarray(patch, dtype=np.float64).ravel()
    dists, idx = _layer_distances(vec[None, :], layer)
    return float(dists[0]), int(idx[0])


@dataclass(frozen=True)
class _LayerScan:
    filter_size: int
    stride: int
    grid_shape: tuple      # valid-origin grid of the layer input
    origins: np.ndarray    # (N, 2) patch origins in layer coordinates
    distances: np.ndarray  # (N,) nearest-feature distances


@dataclass(frozen=True)
class ImageScan:
    """Threshold-independent scoring of one image against a model."""

    shape: tuple
    layers: tuple

    @property
    def max_distance(self) -> float:
        return max(float(ls.distances.max()) for ls in self.layers)


def scan_image(model: Model, img: np.ndarray) -> ImageScan:
    """Nearest-feature distances for every patch of every layer."""
    arr = np.asarray(img, dtype=np.float64)
    scans = []
    for layer, limg in zip(model.layers, layer_inputs(model, arr)):
        p = layer.filter_size
        ps = extract_patches(limg, p, layer.stride)
        dists, _ = _layer_distances(ps.values, layer)
        grid = (limg.shape[0] - p + 1, limg.shape[1] - p + 1)
        scans.append(_LayerScan(p, layer.stride, grid, ps.origins, dists))
    return ImageScan(arr.shape, tuple(scans))


def calibrate_threshold(model: Model, train_img: np.ndarray) -> float:
    """Anomaly threshold = worst nearest-distance over all training patches.

    Scans every patch of every layer's input image (no variance filtering:
    detection scores them all, so calibration must bound them all). Strictly
    greater-than gating therefore flags nothing on the training image. The
    threshold is stored on the model and returned.
    """
    worst = scan_image(model, train_img).max_distance
    model.anomaly_threshold = worst
    return worst


def map_from_scan(scan: ImageScan, threshold: float, sigma: float | None = None) -> np.ndarray:
    """Assemble the probability map from a scan at one anomaly threshold.

    Every patch with distance > threshold deposits dist * G over its
    footprint; every patch deposits G into the weight accumulator; a pixel's
    value is deposit / weight (0 where nothing covered it). The accumulation
    is phrased as a convolution of the origin-indexed grids with G — exactly
    the per-patch deposit loop, but run in C. Deeper-layer results are mapped
    back through the stride by pixel replication.
    """
    if not (0.0 <= threshold <= 1.0):
        raise ParameterError(f"anomaly threshold must lie in [0,1], got {threshold}")
    if sigma is not None and not (sigma > 0):
        raise ParameterError(f"sigma must be positive, got {sigma}")
    h, w = scan.shape
    total_deposit = np.zeros((h, w))
    total_weight = np.zeros((h, w))
    scale = 1
    for ls in scan.layers:
        deposit_grid = np.zeros(ls.grid_shape)
        weight_grid = np.zeros(ls.grid_shape)
        rows = ls.origins[:, 0]
        cols = ls.origins[:, 1]
        anomalous = ls.distances > threshold
        deposit_grid[rows[anomalous], cols[anomalous]] = ls.distances[anomalous]
        weight_grid[rows, cols] = 1.0

        p = ls.filter_size
        g = gaussian_kernel(p, sigma if sigma is not None else p * SIGMA_FRACTION)
        deposit = convolve2d(deposit_grid, g, mode="full")
        weight = convolve2d(weight_grid, g, mode="full")
        if scale > 1:
            ones = np.ones((scale, scale))
            deposit = np.kron(deposit, ones)[:h, :w]
            weight = np.kron(weight, ones)[:h, :w]
        total_deposit += deposit
        total_weight += weight
        scale *= ls.stride

    values = np.divide(
        total_deposit, total_weight, out=np.zeros((h, w)), where=total_weight > 0
    )
    # Mathematically values <= max distance <= 1; the clip only guards the
    # last-ulp rounding of long accumulations.
    return np.clip(values, 0.0, 1.0)


def defect_probability_map(
    model: Model,
    img: np.ndarray,
    threshold_override: float | None = None,
    sigma: float | None = None,
) -> np.ndarray:
    """Per-pixel defect probability in [0, 1] for a preprocessed image."""
    thr = model.anomaly_threshold if threshold_override is None else float(threshold_override)
    if thr is None:
        raise ParameterError(
            "model has no calibrated anomaly threshold; run calibration or pass an override"
        )
    return map_from_scan(scan_image(model, img), thr, sigma)
