"""Overlapping patch extraction, variance filtering, deterministic shuffle."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .rng import permutation


@dataclass(frozen=True)
class PatchSet:
    """Patches from one image: flattened row-major values plus their origins.

    values has shape (N, p*p) and row i is the window whose top-left corner
    sits at (origins[i, 0], origins[i, 1]) in the source image. Rows are in
    row-by-row scan order until shuffled.
    """

    p: int
    stride: int
    values: np.ndarray   # (N, p*p) float64
    origins: np.ndarray  # (N, 2) int64

    def __len__(self) -> int:
        return self.values.shape[0]


def extract_patches(img: np.ndarray, p: int, stride: int = 1) -> PatchSet:
    """All p x p windows with top-left corners on the stride grid.

    Origins run over (r*stride, c*stride) for every placement that keeps the
    window inside the image: (floor((H-p)/stride)+1) * (floor((W-p)/stride)+1)
    patches, scanned row by row.
    """
    arr = np.ascontiguousarray(np.asarray(img, dtype=np.float64))
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2D image, got shape {arr.shape}")
    if not isinstance(p, (int, np.integer)) or p < 1:
        raise ParameterError(f"patch size must be a positive integer, got {p}")
    if not isinstance(stride, (int, np.integer)) or stride < 1:
        raise ParameterError(f"stride must be a positive integer, got {stride}")
    h, w = arr.shape
    if p > min(h, w):
        raise DimensionError(f"patch size {p} exceeds image {h}x{w}")
    windows = np.lib.stride_tricks.sliding_window_view(arr, (p, p))[::stride, ::stride]
    nr, nc = windows.shape[:2]
    values = windows.reshape(nr * nc, p * p).copy()
    rows = np.repeat(np.arange(nr, dtype=np.int64) * stride, nc)
    cols = np.tile(np.arange(nc, dtype=np.int64) * stride, nr)
    origins = np.stack([rows, cols], axis=1)
    return PatchSet(int(p), int(stride), values, origins)


def filter_by_variance(ps: PatchSet, contrast_threshold: float) -> PatchSet:
    """Keep patches whose population variance is strictly above the threshold.

    Constant patches are forced to variance exactly 0 (float means of equal
    values can otherwise leave ~1e-34 residue), so they are always dropped at
    threshold 0.
    """
    if not (contrast_threshold >= 0):
        raise ParameterError(f"contrast threshold must be >= 0, got {contrast_threshold}")
    var = np.var(ps.values, axis=1)
    flat = ps.values.max(axis=1) == ps.values.min(axis=1)
    var[flat] = 0.0
    keep = var > contrast_threshold
    return PatchSet(ps.p, ps.stride, ps.values[keep].copy(), ps.origins[keep].copy())


def shuffle_patches(ps: PatchSet, seed: int) -> PatchSet:
    """Reorder patches by the seeded Fisher-Yates permutation (see rng)."""
    n = len(ps)
    if n <= 1:
        return PatchSet(ps.p, ps.stride, ps.values.copy(), ps.origins.copy())
    idx = permutation(n, seed)
    return PatchSet(ps.p, ps.stride, ps.values[idx].copy(), ps.origins[idx].copy())
