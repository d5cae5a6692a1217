"""Probability-map binarization: 2D maximum entropy plus morphological opening.

The thresholder works on the joint distribution of (gray level, local mean
level): picking the pair (s*, t*) that maximizes background entropy plus
anomaly entropy separates blob-like anomalies from texture noise better than
a 1D histogram split, because isolated bright pixels lack bright
neighborhoods and stay in the background quadrant.
"""

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, DimensionError, ParameterError
from .imaging import round_half_up


def quantize_map(values: np.ndarray, levels: int = 256) -> np.ndarray:
    """Map probabilities in [0, 1] to integer levels 0..levels-1.

    v -> floor(v * (levels-1) + 0.5), so 0 and 1 hit the end levels exactly.
    """
    if not isinstance(levels, (int, np.integer)) or not (2 <= levels <= 256):
        raise ParameterError(f"levels must lie in [2, 256], got {levels}")
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2D map, got shape {arr.shape}")
    if not np.isfinite(arr).all() or arr.min() < 0 or arr.max() > 1:
        raise ParameterError("probability values must be finite and within [0, 1]")
    return round_half_up(arr * (levels - 1)).astype(np.int32)


def neighborhood_mean(img: np.ndarray, n: int = 3) -> np.ndarray:
    """Integer-rounded n x n window mean with symmetric borders.

    Window sums come from an integral image over the mirror-padded input, in
    int64, so the result is exact before the final rounding. n odd means the
    true mean is never exactly halfway between levels, making the half-up
    rounding unambiguous.
    """
    if not isinstance(n, (int, np.integer)) or n < 1 or n % 2 == 0:
        raise ParameterError(f"neighborhood size must be a positive odd integer, got {n}")
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionError(f"expected a non-empty 2D image, got shape {arr.shape}")
    if n == 1:
        return arr.astype(np.int32)
    half = n // 2
    if half >= arr.shape[0] or half >= arr.shape[1]:
        raise DimensionError(f"neighborhood {n} too large for image {arr.shape}")
    padded = np.pad(arr.astype(np.int64), half, mode="reflect")
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.int64)
    integral[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    h, w = arr.shape
    sums = (
        integral[n:n + h, n:n + w]
        - integral[:h, n:n + w]
        - integral[n:n + h, :w]
        + integral[:h, :w]
    )
    return round_half_up(sums / (n * n)).astype(np.int32)


def entropy_threshold_2d(img: np.ndarray, mean_img: np.ndarray, levels: int = 256):
    """Maximize background + anomaly entropy over all (s, t) threshold pairs.

    The background quadrant holds histogram cells with gray < s and mean < t
    (mass P1), the anomaly quadrant cells with gray >= s and mean >= t (mass
    P2); candidates with empty mass on either side are skipped. Entropies use
    H = -sum (p/P) log(p/P) with 0 log 0 = 0. Prefix/suffix sums make the
    scan O(L^2) while matching the exhaustive definition exactly. Ties go to
    the lexicographically lowest (s, t).
    """
    a = np.asarray(img)
    b = np.asarray(mean_img)
    if a.shape != b.shape:
        raise DimensionError(f"image {a.shape} and mean image {b.shape} differ")
    if a.ndim != 2 or a.size == 0:
        raise DimensionError(f"expected non-empty 2D images, got shape {a.shape}")
    if a.min() < 0 or a.max() >= levels or b.min() < 0 or b.max() >= levels:
        raise ParameterError(f"inputs must be quantized to 0..{levels - 1}")

    pairs = a.astype(np.int64).ravel() * levels + b.astype(np.int64).ravel()
    hist = np.bincount(pairs, minlength=levels * levels).reshape(levels, levels)
    p = hist / a.size
    plogp = np.zeros_like(p)
    nz = p > 0
    plogp[nz] = p[nz] * np.log(p[nz])

    # P1/S1 over the strict-lower quadrant i<s, j<t; P2/S2 over i>=s, j>=t.
    lower = np.zeros((levels, levels))
    lower_log = np.zeros((levels, levels))
    lower[1:, 1:] = p.cumsum(axis=0).cumsum(axis=1)[:-1, :-1]
    lower_log[1:, 1:] = plogp.cumsum(axis=0).cumsum(axis=1)[:-1, :-1]
    upper = p[::-1, ::-1].cumsum(axis=0).cumsum(axis=1)[::-1, ::-1]
    upper_log = plogp[::-1, ::-1].cumsum(axis=0).cumsum(axis=1)[::-1, ::-1]

    valid = (lower > 0) & (upper > 0)
    if not valid.any():
        raise DegenerateInputError(
            "no threshold pair separates the histogram (single-level input)"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        h_total = (np.log(lower) - lower_log / lower) + (np.log(upper) - upper_log / upper)
    h_total[~valid] = -np.inf
    flat = int(np.argmax(h_total))  # row-major argmax = lexicographic tie-break
    return flat // levels, flat % levels


def binarize(img: np.ndarray, s: int, t: int, mean_img: np.ndarray) -> np.ndarray:
    """1 where gray >= s and neighborhood mean >= t, else 0."""
    a = np.asarray(img)
    b = np.asarray(mean_img)
    if a.shape != b.shape:
        raise DimensionError(f"image {a.shape} and mean image {b.shape} differ")
    return ((a >= s) & (b >= t)).astype(np.uint8)


def opening(mask: np.ndarray, struct_size: int = 3) -> np.ndarray:
    """Binary erosion then dilation with a square structuring element."""
    if not isinstance(struct_size, (int, np.integer)) or struct_size < 1 or struct_size % 2 == 0:
        raise ParameterError(
            f"structuring element size must be a positive odd integer, got {struct_size}"
        )
    m = np.asarray(mask) != 0
    if m.ndim != 2:
        raise DimensionError(f"expected a 2D mask, got shape {m.shape}")
    if struct_size == 1:
        return m.astype(np.uint8)
    structure = np.ones((struct_size, struct_size), dtype=bool)
    eroded = ndimage.binary_erosion(m, structure=structure)
    return ndimage.binary_dilation(eroded, structure=structure).astype(np.uint8)


def segment_map(values: np.ndarray, levels: int = 256, neighborhood: int = 3,
                struct_size: int = 3) -> np.ndarray:
    """Full segmentation chain: quantize, threshold, binarize, open.

    A map with no separable structure (e.g. identically zero) yields an
    all-zero mask instead of an error: no evidence means no defect.
    """
    q = quantize_map(values, levels)
    m = neighborhood_mean(q, neighborhood)
    try:
        s, t = entropy_threshold_2d(q, m, levels)
    except DegenerateInputError:
        return np.zeros(q.shape, dtype=np.uint8)
    return opening(binarize(q, s, t, m), struct_size)
