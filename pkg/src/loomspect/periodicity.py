"""Repeat-period estimation from projection autocorrelation.

The fabric's motif repeats along both axes. Averaging the image along rows
and columns gives two 1D profiles whose autocorrelations peak at multiples of
the period; the median gap between successive peaks is a robust period
estimate even when single peaks are missed or spurious.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError, PeriodEstimationError

# Default peak prominence on the a[0]-normalized autocorrelation. Weak texture
# still clears 0.05 comfortably while sampling noise stays well below it.
DEFAULT_MIN_PROMINENCE = 0.05


@dataclass(frozen=True)
class PeriodEstimate:
    row_period: int
    col_period: int
    row_peaks: tuple
    col_peaks: tuple


def projection_means(img: np.ndarray):
    """Row-wise and column-wise average intensity profiles."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionError(f"expected a non-empty 2D image, got shape {arr.shape}")
    return arr.mean(axis=1), arr.mean(axis=0)


def autocorrelate(v: np.ndarray) -> np.ndarray:
    """Mean-removed, biased autocorrelation normalized to a[0] = 1.

    a[tau] = sum_t (v[t]-mean)(v[t+tau]-mean) for tau = 0..len-1. A constant
    vector has a[0] = 0 and yields all zeros rather than a division error.
    """
    x = np.asarray(v, dtype=np.float64).ravel()
    if x.size < 2:
        raise DimensionError("autocorrelation needs at least 2 samples")
    if np.all(x == x[0]):
        # Centering a constant vector leaves cancellation residue rather than
        # exact zeros, which would normalize to a spurious ramp.
        return np.zeros_like(x)
    xc = x - x.mean()
    # np.correlate computes the plain lag sums directly (no FFT), which keeps
    # the result deterministic across runs.
    full = np.correlate(xc, xc, mode="full")
    a = full[x.size - 1:]
    if a[0] > 0:
        a = a / a[0]
    else:
        a = np.zeros_like(a)
    return a


def detect_peaks(a: np.ndarray, min_prominence: float) -> list:
    """Strictly interior local maxima with prominence >= min_prominence.

    Prominence is the peak height above the higher of its two flanking
    minima, found by walking down each side until the series rises again;
    the array boundary counts as a minimum.
    """
    if min_prominence < 0:
        raise ParameterError(f"min_prominence must be >= 0, got {min_prominence}")
    v = np.asarray(a, dtype=np.float64).ravel()
    peaks = []
    for i in range(1, v.size - 1):
        if not (v[i] > v[i - 1] and v[i] > v[i + 1]):
            continue
        j = i - 1
        while j > 0 and v[j - 1] <= v[j]:
            j -= 1
        k = i + 1
        while k < v.size - 1 and v[k + 1] <= v[k]:
            k += 1
        prominence = v[i] - max(v[j], v[k])
        if prominence >= min_prominence:
            peaks.append(i)
    return peaks


def _axis_period(profile: np.ndarray, min_prominence: float, axis_name: str):
    a = autocorrelate(profile)
    hi = a.size // 2
    peaks = [p for p in detect_peaks(a, min_prominence) if 2 <= p <= hi]
    if len(peaks) < 2:
        raise PeriodEstimationError(
            f"fewer than 2 autocorrelation peaks on the {axis_name} axis; "
            "the pattern period cannot be estimated — pass an explicit filter size"
        )
    gaps = np.diff(np.asarray(peaks))
    gaps_sorted = np.sort(gaps)
    # Lower median keeps the period an integer for even-length gap lists.
    period = int(gaps_sorted[(gaps_sorted.size - 1) // 2])
    return period, tuple(int(p) for p in peaks)


def estimate_period(img: np.ndarray, min_prominence: float = DEFAULT_MIN_PROMINENCE) -> PeriodEstimate:
    """Estimate the repeat period along rows and columns.

    The row period comes from the autocorrelation of the row-means profile
    (vertical repeat), the column period from the column-means profile. Peaks
    are searched in lag range [2, len/2]; successive gaps are reduced by the
    lower median.
    """
    row_means, col_means = projection_means(img)
    row_period, row_peaks = _axis_period(row_means, min_prominence, "row")
    col_period, col_peaks = _axis_period(col_means, min_prominence, "column")
    return PeriodEstimate(row_period, col_period, row_peaks, col_peaks)


def derive_filter_size(estimate: PeriodEstimate) -> int:
    """Filter window size: the larger period, bumped to the next odd integer."""
    p = max(estimate.row_period, estimate.col_period)
    if p % 2 == 0:
        p += 1
    return p
