"""loomspect: unsupervised defect detection for patterned fabric images.

Learns a bank of p x p filters from a single defect-free reference image (no
backprop, one pass), scores test images by nearest-feature distance, and
turns the evidence into probability maps, binary masks, and pixel metrics.
"""

from ._backend import BACKEND, available_backends
from .feature_bank import (
    Layer,
    Model,
    build_model,
    grow_features,
    layer_inputs,
    load_model,
    next_layer_input,
    save_model,
    similarity,
    train_layer,
)
from .config import PipelineConfig, load_config_file, resolve_config
from .errors import (
    DegenerateInputError,
    DimensionError,
    ImageIOError,
    LoomspectError,
    ModelFormatError,
    ParameterError,
    PeriodEstimationError,
    TrainingError,
)
from .imaging import (
    cross_correlate,
    downsample,
    equalize_histogram,
    gaussian_kernel,
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
    ConfusionCounts,
    MetricsReport,
    SweepRow,
    confusion,
    metrics,
    parse_threshold_range,
    sweep_curves,
    synth_fabric,
)
from .patching import PatchSet, extract_patches, filter_by_variance, shuffle_patches
from .periodicity import (
    PeriodEstimate,
    autocorrelate,
    derive_filter_size,
    detect_peaks,
    estimate_period,
    projection_means,
)
from .harness import (
    FabricDataset,
    ImageResult,
    discover_dataset,
    discover_fabric,
    format_summary,
    run_pipeline,
    summarize,
    summary_to_csv,
)
from .anomaly import (
    ImageScan,
    calibrate_threshold,
    defect_probability_map,
    manhattan_distance,
    map_from_scan,
    nearest_distance,
    range_normalize,
    scan_image,
)
from .segmentation import (
    binarize,
    entropy_threshold_2d,
    neighborhood_mean,
    opening,
    quantize_map,
    segment_map,
)

__version__ = "0.1.0"
