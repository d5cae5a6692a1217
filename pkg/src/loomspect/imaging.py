"""Grayscale image I/O and the preprocessing/convolution primitives.

Images are plain 2D float64 arrays, shape (H, W), intensities in [0, 255]
for raw images and zero-mean/unit-variance after standardize(). Probability
maps are float64 in [0, 1]. Binary masks are uint8 {0, 1}.
"""

import os
import tempfile

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DegenerateInputError, DimensionError, ImageIOError, ParameterError

# Intensities live on 256 levels everywhere an 8-bit file is involved.
GRAY_LEVELS = 256


def round_half_up(x):
    """floor(x + 0.5): deterministic tie handling, unlike numpy's half-to-even."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def _atomic_save(im: Image.Image, path: str) -> None:
    """Write via a sibling temp file + rename so readers never see partial files."""
    directory = os.path.dirname(os.path.abspath(path))
    suffix = os.path.splitext(path)[1]
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=suffix)
    try:
        with os.fdopen(fd, "wb") as fh:
            im.save(fh, format=Image.registered_extensions().get(suffix.lower()))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_gray(path: str) -> np.ndarray:
    """Load an 8-bit grayscale image (PNG or PGM) as float64 in [0, 255].

    Color inputs are reduced by the unweighted channel mean; an alpha channel
    is dropped. 16-bit or float inputs are rejected: this loader is the 8-bit
    entry point, probability maps go through load_map().
    """
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "1":
                im = im.convert("L")
                mode = "L"
            if mode in ("P", "PA"):
                im = im.convert("RGB")
                mode = "RGB"
            if mode == "LA":
                im = im.convert("L")
                mode = "L"
            if mode == "L":
                return np.asarray(im, dtype=np.float64)
            if mode in ("RGB", "RGBA"):
                arr = np.asarray(im, dtype=np.float64)[:, :, :3]
                return arr.mean(axis=2)
    except FileNotFoundError:
        raise ImageIOError(f"image file not found: {path}") from None
    except ImageIOError:
        raise
    except Exception as exc:
        raise ImageIOError(f"cannot read image {path}: {exc}") from exc
    raise ImageIOError(f"unsupported image mode {mode!r} in {path} (expected 8-bit gray)")


def save_gray(path: str, img: np.ndarray) -> None:
    """Save float64 intensities in [0, 255] as an 8-bit PNG or PGM."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2D image, got shape {arr.shape}")
    if not np.isfinite(arr).all() or arr.min() < 0 or arr.max() > 255:
        raise ParameterError("image intensities must be finite and within [0, 255]")
    out = round_half_up(arr).astype(np.uint8)
    _atomic_save(Image.fromarray(out), path)


def load_mask(path: str) -> np.ndarray:
    """Load a binary mask from an 8-bit image: positive means intensity > 127."""
    return (load_gray(path) > 127).astype(np.uint8)


def save_mask(path: str, mask: np.ndarray) -> None:
    """Save a {0,1} mask as an 8-bit PNG with positives at 255."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2D mask, got shape {m.shape}")
    save_gray(path, (m != 0).astype(np.float64) * 255.0)


def save_map(path: str, values: np.ndarray) -> None:
    """Save a probability map in [0, 1] as a 16-bit gray PNG (round(p * 65535))."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2D map, got shape {arr.shape}")
    if not np.isfinite(arr).all() or arr.min() < 0 or arr.max() > 1:
        raise ParameterError("probability values must be finite and within [0, 1]")
    out = round_half_up(arr * 65535.0).astype(np.uint16)
    _atomic_save(Image.fromarray(out), path)


def load_map(path: str) -> np.ndarray:
    """Load a 16-bit gray PNG probability map back to float64 in [0, 1]."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("I", "I;16"):
                raise ImageIOError(
                    f"{path}: expected a 16-bit grayscale map, got mode {im.mode!r}"
                )
            arr = np.asarray(im, dtype=np.int64)
    except ImageIOError:
        raise
    except FileNotFoundError:
        raise ImageIOError(f"map file not found: {path}") from None
    except Exception as exc:
        raise ImageIOError(f"cannot read map {path}: {exc}") from exc
    if arr.min() < 0 or arr.max() > 65535:
        raise ImageIOError(f"{path}: sample values outside the 16-bit range")
    return arr.astype(np.float64) / 65535.0


def equalize_histogram(img: np.ndarray) -> np.ndarray:
    """Classic histogram equalization on 256 levels.

    Each level v maps to round((cdf(v) - cdf_min) / (N - cdf_min) * 255) where
    cdf_min is the CDF at the lowest occupied level. Real-valued input is
    binned by rounding half-up. A constant image passes through unchanged:
    the mapping is 0/0 there, and a constant carries no contrast to spread.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionError(f"expected a non-empty 2D image, got shape {arr.shape}")
    if not np.isfinite(arr).all() or arr.min() < 0 or arr.max() > 255:
        raise ParameterError("image intensities must be finite and within [0, 255]")
    levels = round_half_up(arr).astype(np.int64)
    hist = np.bincount(levels.ravel(), minlength=GRAY_LEVELS)
    cdf = np.cumsum(hist)
    n = int(cdf[-1])
    cdf_min = int(cdf[int(levels.min())])
    if n == cdf_min:
        return arr.copy()
    lut = round_half_up((cdf - cdf_min) / (n - cdf_min) * 255.0)
    return lut[levels].astype(np.float64)


def standardize(img: np.ndarray) -> np.ndarray:
    """Scale to [0, 1] then remove the mean and divide by the population std."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionError(f"expected a non-empty 2D image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ParameterError("image intensities must be finite")
    if arr.max() == arr.min():
        raise DegenerateInputError("constant image cannot be standardized")
    x = arr / 255.0
    return (x - x.mean()) / x.std()


def preprocess(img: np.ndarray, equalize: bool = True) -> np.ndarray:
    """Full preprocessing chain: optional equalization, then standardize."""
    if equalize:
        img = equalize_histogram(img)
    return standardize(img)


def cross_correlate(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Same-size cross-correlation with whole-sample symmetric borders.

    The border pixel itself is not repeated in the reflection; this matches
    mirroring the image about its edge pixels.
    """
    a = np.asarray(img, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    if a.ndim != 2 or k.ndim != 2:
        raise DimensionError("image and kernel must both be 2D")
    if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise ParameterError(f"kernel dimensions must be odd, got {k.shape}")
    if k.shape[0] > a.shape[0] or k.shape[1] > a.shape[1]:
        raise DimensionError(f"kernel {k.shape} exceeds image {a.shape}")
    return ndimage.correlate(a, k, mode="mirror")


def downsample(img: np.ndarray, step: int) -> np.ndarray:
    """Keep every step-th pixel per axis, phase 0 (top-left sample kept)."""
    if not isinstance(step, (int, np.integer)) or step < 1:
        raise ParameterError(f"downsampling step must be a positive integer, got {step}")
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2D image, got shape {a.shape}")
    return a[::step, ::step].copy()


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Isotropic Gaussian weights on a size x size grid, normalized to sum 1.

    Built from G(i,j) = exp(-(i^2+j^2) / (2 sigma^2)) / (2 pi sigma^2) on
    integer offsets centered at 0; the leading constant cancels in the
    normalization but is kept for clarity.
    """
    if not isinstance(size, (int, np.integer)) or size < 1 or size % 2 == 0:
        raise ParameterError(f"kernel size must be a positive odd integer, got {size}")
    if not (sigma > 0):
        raise ParameterError(f"sigma must be positive, got {sigma}")
    half = size // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    sq = coords[:, None] ** 2 + coords[None, :] ** 2
    g = np.exp(-sq / (2.0 * sigma * sigma)) / (2.0 * np.pi * sigma * sigma)
    return g / g.sum()
