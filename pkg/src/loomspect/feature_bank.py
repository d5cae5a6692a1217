"""Similarity-gated feature-bank training and the trained-model container.

A layer's filters are discovered in a single pass over the shuffled training
patches: the first patch founds the bank, and each later patch either joins
the most similar existing feature (updating its running mean) or founds a new
one when no similarity reaches the threshold. No gradients, no epochs; the
feature count is an outcome, not a hyperparameter.
"""

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .config import PipelineConfig
from .errors import (
    DegenerateInputError,
    DimensionError,
    ModelFormatError,
    ParameterError,
    TrainingError,
)
from .imaging import cross_correlate, downsample, preprocess, standardize
from .patching import PatchSet, extract_patches, filter_by_variance, shuffle_patches
from .periodicity import derive_filter_size, estimate_period
from .rng import derive_seed

MODEL_FORMAT_VERSION = 1


@dataclass
class Layer:
    filter_size: int
    stride: int
    weights: np.ndarray  # (n_features, p*p) running means, un-normalized
    counts: np.ndarray   # (n_features,) supporter counts, int64

    @property
    def feature_count(self) -> int:
        return int(self.weights.shape[0])


@dataclass
class Model:
    fabric_id: str
    equalize: bool
    seed: int
    contrast_threshold: float
    similarity_threshold: float
    anomaly_threshold: float | None  # None until calibrated
    aggregate: str
    layers: list = field(default_factory=list)

    def parameter_count(self) -> int:
        """Stored weight scalars: sum over layers of feature count x p^2."""
        return int(sum(layer.weights.size for layer in self.layers))


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity clamped to [0, 1]. Zero vectors are rejected."""
    va = np.asarray(a, dtype=np.float64).ravel()
    vb = np.asarray(b, dtype=np.float64).ravel()
    if va.shape != vb.shape:
        raise DimensionError(f"vector lengths differ: {va.size} vs {vb.size}")
    na = np.sqrt(va @ va)
    nb = np.sqrt(vb @ vb)
    if na == 0 or nb == 0:
        raise DegenerateInputError("similarity of a zero vector is undefined")
    return max(0.0, float(va @ vb / (na * nb)))


def grow_features(values: np.ndarray, theta: float, backend: str | None = None):
    """Validated entry to the bank-growth kernel.

    values: (N, p*p) patch matrix in scan order. Returns (weights, supporter
    counts, assignments); assignments[i] is the feature index patch i founded
    or joined, so its length doubles as the single-epoch visit counter.
    """
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise TrainingError("cannot train on an empty patch set")
    if not (0.0 < theta < 1.0):
        raise ParameterError(f"similarity threshold must lie in (0,1), got {theta}")
    if (np.abs(arr).max(axis=1) == 0).any():
        raise DegenerateInputError(
            "zero-vector patch in training input; variance filtering removes these"
        )
    return _backend.grow_bank(arr, float(theta), backend=backend)


def train_layer(ps: PatchSet, theta: float) -> Layer:
    """Train one layer on an already filtered and shuffled patch set."""
    weights, counts, _ = grow_features(ps.values, theta)
    return Layer(ps.p, ps.stride, weights, counts)


def next_layer_input(img: np.ndarray, layer: Layer, aggregate: str = "max") -> np.ndarray:
    """Input image for the following layer.

    Every feature of `layer` is cross-correlated with `img` (symmetric
    borders); the per-feature response maps collapse to one image by
    per-pixel max (or mean), which is then downsampled by the layer stride.
    Aggregation runs incrementally so the full response stack is never held.
    """
    if aggregate not in ("max", "mean"):
        raise ParameterError(f"aggregate must be 'max' or 'mean', got {aggregate!r}")
    p = layer.filter_size
    agg = None
    for row in layer.weights:
        response = cross_correlate(img, row.reshape(p, p))
        if agg is None:
            agg = response
        elif aggregate == "max":
            np.maximum(agg, response, out=agg)
        else:
            agg += response
    if aggregate == "mean":
        agg /= layer.feature_count
    return downsample(agg, layer.stride)


def layer_inputs(model: Model, img: np.ndarray) -> list:
    """Per-layer input images for a preprocessed image, in layer order.

    Reproduces the cascade training used, from the stored feature banks, so
    calibration and detection see exactly the images training saw.
    """
    out = []
    cur = np.asarray(img, dtype=np.float64)
    for i, layer in enumerate(model.layers):
        if layer.filter_size > min(cur.shape):
            raise DimensionError(
                f"layer {i + 1} filter size {layer.filter_size} exceeds its "
                f"{cur.shape[0]}x{cur.shape[1]} input; image too small for this model"
            )
        out.append(cur)
        if i + 1 < len(model.layers):
            cur = next_layer_input(cur, layer, model.aggregate)
    return out


def build_model(img: np.ndarray, cfg: PipelineConfig | None = None, fabric_id: str = "") -> Model:
    """Train a model from one defect-free reference image.

    The image is preprocessed, the filter size is taken from the config or
    estimated from the pattern period, and each layer is trained on the
    variance-filtered, shuffled patches of its input image. Deeper layers see
    the previous layer's aggregated correlation responses downsampled by the
    stride, so the effective window grows by a factor of the stride per layer.
    """
    cfg = (cfg if cfg is not None else PipelineConfig()).validate()
    pre = preprocess(img, cfg.equalize)
    if cfg.filter_size is not None:
        p = cfg.filter_size
    else:
        # Autocorrelation is invariant to the affine standardization, but
        # histogram equalization is not: its nonlinear remap can add harmonic
        # structure to the projections, so the period always comes from the
        # un-equalized view of the image.
        p = derive_filter_size(estimate_period(standardize(img), cfg.min_prominence))
    layers = []
    cur = pre
    for li in range(cfg.num_layers):
        if p > min(cur.shape):
            raise TrainingError(
                f"layer {li + 1}: input {cur.shape[0]}x{cur.shape[1]} is smaller "
                f"than the {p}x{p} filter window"
            )
        ps = extract_patches(cur, p, cfg.stride)
        ps = filter_by_variance(ps, cfg.contrast_threshold)
        if len(ps) == 0:
            raise TrainingError(
                f"layer {li + 1}: no patches exceed contrast threshold {cfg.contrast_threshold}"
            )
        ps = shuffle_patches(ps, derive_seed(cfg.seed, li))
        layers.append(train_layer(ps, cfg.similarity_threshold))
        if li + 1 < cfg.num_layers:
            cur = next_layer_input(cur, layers[-1], cfg.aggregate)
    return Model(
        fabric_id=fabric_id,
        equalize=cfg.equalize,
        seed=cfg.seed,
        contrast_threshold=float(cfg.contrast_threshold),
        similarity_threshold=float(cfg.similarity_threshold),
        anomaly_threshold=cfg.anomaly_threshold,
        aggregate=cfg.aggregate,
        layers=layers,
    )


# --- model file round-trip ---------------------------------------------------
#
# JSON, but written by hand so every float carries 17 significant digits: that
# guarantees an exact float64 round-trip regardless of the reader's shortest-
# repr behavior.


def _emit(obj, out, indent):
    pad = "  " * indent
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format(float(obj), ".17g"))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(obj):
            out.append(pad + "  ")
            _emit(item, out, indent + 1)
            out.append(",\n" if i + 1 < len(obj) else "\n")
        out.append(pad + "]")
    elif isinstance(obj, dict):
        out.append("{\n")
        items = list(obj.items())
        for i, (key, value) in enumerate(items):
            out.append(pad + "  " + json.dumps(key) + ": ")
            _emit(value, out, indent + 1)
            out.append(",\n" if i + 1 < len(items) else "\n")
        out.append(pad + "}")
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")


def save_model(model: Model, path: str) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "fabric_id": model.fabric_id,
        "preprocessing": {
            "equalize": bool(model.equalize),
            "seed": int(model.seed),
            "contrast_threshold": float(model.contrast_threshold),
            "aggregate": model.aggregate,
        },
        "similarity_threshold": float(model.similarity_threshold),
        "anomaly_threshold": None if model.anomaly_threshold is None else float(model.anomaly_threshold),
        "layers": [
            {
                "filter_size": int(layer.filter_size),
                "stride": int(layer.stride),
                "features": [
                    {"supporters": int(c), "weights": [float(w) for w in row]}
                    for row, c in zip(layer.weights, layer.counts)
                ],
            }
            for layer in model.layers
        ],
    }
    out = []
    _emit(doc, out, 0)
    text = "".join(out) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _require(doc, key, kinds, where):
    if key not in doc:
        raise ModelFormatError(f"model file: missing {where}{key!r}")
    value = doc[key]
    if kinds is not None and not isinstance(value, kinds):
        raise ModelFormatError(f"model file: {where}{key!r} has wrong type {type(value).__name__}")
    return value


def load_model(path: str) -> Model:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError(f"model file {path}: top level must be an object")

    version = _require(doc, "format_version", int, "")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"model file {path}: unsupported format_version {version} "
            f"(this build reads {MODEL_FORMAT_VERSION})"
        )
    fabric_id = _require(doc, "fabric_id", str, "")
    pre = _require(doc, "preprocessing", dict, "")
    equalize = _require(pre, "equalize", bool, "preprocessing.")
    seed = _require(pre, "seed", int, "preprocessing.")
    contrast = float(_require(pre, "contrast_threshold", (int, float), "preprocessing."))
    aggregate = pre.get("aggregate", "max")
    if aggregate not in ("max", "mean"):
        raise ModelFormatError(f"model file {path}: bad aggregate {aggregate!r}")
    sim = float(_require(doc, "similarity_threshold", (int, float), ""))
    if not (0.0 < sim < 1.0):
        raise ModelFormatError(f"model file {path}: similarity_threshold {sim} outside (0,1)")
    raw_thr = _require(doc, "anomaly_threshold", (int, float, type(None)), "")
    anomaly = None if raw_thr is None else float(raw_thr)
    if anomaly is not None and not (0.0 <= anomaly <= 1.0):
        raise ModelFormatError(f"model file {path}: anomaly_threshold {anomaly} outside [0,1]")

    raw_layers = _require(doc, "layers", list, "")
    if not raw_layers:
        raise ModelFormatError(f"model file {path}: a trained model needs at least one layer")
    layers = []
    for i, entry in enumerate(raw_layers):
        if not isinstance(entry, dict):
            raise ModelFormatError(f"model file {path}: layers[{i}] must be an object")
        where = f"layers[{i}]."
        p = _require(entry, "filter_size", int, where)
        stride = _require(entry, "stride", int, where)
        if p < 1 or p % 2 == 0:
            raise ModelFormatError(f"model file {path}: {where}filter_size {p} must be odd")
        if stride < 1:
            raise ModelFormatError(f"model file {path}: {where}stride {stride} must be >= 1")
        raw_features = _require(entry, "features", list, where)
        if not raw_features:
            raise ModelFormatError(f"model file {path}: {where}features is empty")
        weights = np.empty((len(raw_features), p * p), dtype=np.float64)
        counts = np.empty(len(raw_features), dtype=np.int64)
        for j, feat in enumerate(raw_features):
            if not isinstance(feat, dict):
                raise ModelFormatError(f"model file {path}: {where}features[{j}] must be an object")
            supporters = _require(feat, "supporters", int, f"{where}features[{j}].")
            if supporters < 1:
                raise ModelFormatError(
                    f"model file {path}: {where}features[{j}].supporters must be >= 1"
                )
            row = _require(feat, "weights", list, f"{where}features[{j}].")
            if len(row) != p * p:
                raise ModelFormatError(
                    f"model file {path}: {where}features[{j}] has {len(row)} weights, "
                    f"expected {p * p}"
                )
            weights[j] = np.asarray(row, dtype=np.float64)
            counts[j] = supporters
        layers.append(Layer(int(p), int(stride), weights, counts))

    return Model(
        fabric_id=fabric_id,
        equalize=equalize,
        seed=seed,
        contrast_threshold=contrast,
        similarity_threshold=sim,
        anomaly_threshold=anomaly,
        aggregate=aggregate,
        layers=layers,
    )
