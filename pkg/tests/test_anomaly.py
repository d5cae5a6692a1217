"""Distance scoring, threshold calibration, and probability-map assembly."""

import numpy as np
import pytest

import oracles
from conftest import checkerboard
from loomspect.anomaly import (
    calibrate_threshold,
    defect_probability_map,
    manhattan_distance,
    map_from_scan,
    nearest_distance,
    range_normalize,
    scan_image,
)
from loomspect.config import PipelineConfig
from loomspect.errors import DimensionError, ModelFormatError, ParameterError
from loomspect.feature_bank import Layer, Model, build_model
from loomspect.imaging import preprocess
from loomspect.patching import extract_patches


def _toy_model(weights, p=3, threshold=None):
    weights = np.asarray(weights, dtype=np.float64)
    layer = Layer(p, 1, weights, np.ones(len(weights), dtype=np.int64))
    return Model(
        fabric_id="toy",
        equalize=False,
        seed=0,
        contrast_threshold=0.0,
        similarity_threshold=0.7,
        anomaly_threshold=threshold,
        aggregate="max",
        layers=[layer],
    )


# --- normalization and distances -----------------------------------------------


def test_range_normalize_rows():
    out = range_normalize(np.array([[1.0, 1.0], [0.0, 2.0]]))
    assert np.array_equal(out, [[0.5, 0.5], [0.0, 1.0]])


def test_range_normalize_vector():
    assert np.array_equal(range_normalize(np.array([2.0, 4.0])), [0.0, 1.0])


def test_manhattan_identical_is_zero():
    v = np.array([0.1, 0.9, 0.4, 0.4])
    assert manhattan_distance(v, v) == 0.0


def test_manhattan_maximal_case():
    a = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0])
    b = 1.0 - a
    # After range normalization both span [0,1] in opposite phase: every
    # component differs by 1, so the normalized sum is 9/9.
    assert manhattan_distance(a, b) == pytest.approx(1.0, abs=1e-12)


def test_manhattan_contrast_invariance():
    # [0,2] and [0,1] both min-max scale to [0,1]: shape-identical patches.
    assert manhattan_distance(np.array([0.0, 2.0]), np.array([0.0, 1.0])) == 0.0


def test_manhattan_rejects_mismatch():
    with pytest.raises(DimensionError):
        manhattan_distance(np.ones(4), np.ones(5))


def test_manhattan_matches_reference():
    rng = np.random.default_rng(40)
    for _ in range(20):
        d = int(rng.integers(1, 30))
        a = rng.normal(size=d)
        b = rng.normal(size=d)
        assert manhattan_distance(a, b) == pytest.approx(
            oracles.manhattan_reference(a, b), abs=1e-12
        )
        assert 0.0 <= manhattan_distance(a, b) <= 1.0


def test_nearest_distance_exact_member():
    weights = np.array([[0.0, 1.0, 0.0, 1.0], [1.0, 0.0, 1.0, 0.0]])
    model = _toy_model(weights, p=2)
    dist, idx = nearest_distance(np.array([1.0, 0.0, 1.0, 0.0]), model.layers[0])
    assert dist == 0.0 and idx == 1


def test_nearest_distance_matches_bruteforce():
    rng = np.random.default_rng(41)
    weights = rng.normal(size=(5, 9))
    layer = Layer(3, 1, weights, np.ones(5, dtype=np.int64))
    for _ in range(20):
        patch = rng.normal(size=9)
        dist, idx = nearest_distance(patch, layer)
        ref_dist, ref_idx = oracles.nearest_bruteforce(patch, weights)
        assert dist == pytest.approx(ref_dist, abs=1e-12)
        assert idx == ref_idx


def test_nearest_distance_empty_layer_raises():
    layer = Layer(3, 1, np.empty((0, 9)), np.empty(0, dtype=np.int64))
    with pytest.raises(ModelFormatError):
        nearest_distance(np.ones(9), layer)


# --- calibration ------------------------------------------------------------------


def test_calibration_is_zero_on_checkerboard():
    # Two exact patch classes; each training patch sits exactly on its
    # feature, so the worst-case nearest distance is exactly zero.
    img = checkerboard(8)
    cfg = PipelineConfig(filter_size=3)
    model = build_model(img, cfg, fabric_id="checker")
    assert model.layers[0].feature_count == 2
    threshold = calibrate_threshold(model, preprocess(img, cfg.equalize))
    assert threshold == 0.0
    assert model.anomaly_threshold == 0.0


def test_calibration_matches_bruteforce_oracle():
    rng = np.random.default_rng(42)
    img = rng.uniform(-1.0, 1.0, size=(8, 8))
    weights = rng.normal(size=(3, 9))
    model = _toy_model(weights, p=3)
    result = calibrate_threshold(model, img)
    patches = extract_patches(img, 3, 1)
    expected = max(
        oracles.nearest_bruteforce(v, weights)[0] for v in patches.values
    )
    assert result == pytest.approx(expected, abs=1e-12)
    assert model.anomaly_threshold == result


def test_training_image_scores_within_threshold(fabric_model, fabric_image):
    pre = preprocess(fabric_image, fabric_model.equalize)
    scan = scan_image(fabric_model, pre)
    assert scan.max_distance <= fabric_model.anomaly_threshold


# --- probability maps ----------------------------------------------------------------


def test_map_zero_on_training_image(fabric_model, fabric_image):
    pre = preprocess(fabric_image, fabric_model.equalize)
    values = defect_probability_map(fabric_model, pre)
    assert values.shape == pre.shape
    assert not values.any()


def test_single_anomaly_blob_is_local():
    train = checkerboard(16)
    cfg = PipelineConfig(filter_size=3)
    model = build_model(train, cfg, fabric_id="checker16")
    calibrate_threshold(model, preprocess(train, cfg.equalize))

    test_img = checkerboard(16)
    test_img[6:9, 6:9] = 128.0
    pre = preprocess(test_img, model.equalize)
    values = defect_probability_map(model, pre)

    assert values.max() > 0.0
    peak = np.unravel_index(np.argmax(values), values.shape)
    assert 5 <= peak[0] <= 9 and 5 <= peak[1] <= 9
    # Locality: only pixels within a patch footprint of the defect can be
    # touched (p=3, so two pixels beyond the 6..8 block).
    reach = np.zeros_like(values, dtype=bool)
    reach[4:11, 4:11] = True
    assert not values[~reach].any()


def test_map_threshold_one_is_silent(fabric_model, hole_case):
    img, _ = hole_case
    pre = preprocess(img, fabric_model.equalize)
    values = defect_probability_map(fabric_model, pre, threshold_override=1.0)
    assert not values.any()


def test_map_threshold_zero_bounds(fabric_model, hole_case):
    img, _ = hole_case
    pre = preprocess(img, fabric_model.equalize)
    scan = scan_image(fabric_model, pre)
    values = map_from_scan(scan, 0.0)
    assert values.min() >= 0.0
    assert values.max() <= scan.max_distance + 1e-12
    assert values.any()


def test_map_monotone_in_threshold(fabric_model, hole_case):
    img, _ = hole_case
    pre = preprocess(img, fabric_model.equalize)
    scan = scan_image(fabric_model, pre)
    previous = map_from_scan(scan, 0.0)
    for threshold in (0.1, 0.25, 0.5, 0.75, 1.0):
        current = map_from_scan(scan, threshold)
        assert (current <= previous + 1e-15).all()
        previous = current


def test_map_detects_hole_defect(fabric_model, hole_case):
    img, truth = hole_case
    pre = preprocess(img, fabric_model.equalize)
    values = defect_probability_map(fabric_model, pre)
    assert values.max() > 0.0
    # The strongest evidence sits on the defect itself.
    peak = np.unravel_index(np.argmax(values), values.shape)
    assert truth[peak] == 1


def test_map_custom_sigma_changes_spread(fabric_model, hole_case):
    img, _ = hole_case
    pre = preprocess(img, fabric_model.equalize)
    narrow = defect_probability_map(fabric_model, pre, sigma=0.5)
    default = defect_probability_map(fabric_model, pre)
    assert narrow.shape == default.shape
    assert not np.array_equal(narrow, default)


def test_map_parameter_validation(fabric_model, fabric_image):
    pre = preprocess(fabric_image, fabric_model.equalize)
    scan = scan_image(fabric_model, pre)
    with pytest.raises(ParameterError):
        map_from_scan(scan, -0.1)
    with pytest.raises(ParameterError):
        map_from_scan(scan, 1.5)
    with pytest.raises(ParameterError):
        map_from_scan(scan, 0.5, sigma=0.0)


def test_map_requires_some_threshold(fabric_image):
    cfg = PipelineConfig()
    model = build_model(fabric_image, cfg, fabric_id="uncalibrated")
    pre = preprocess(fabric_image, cfg.equalize)
    with pytest.raises(ParameterError):
        defect_probability_map(model, pre)
    values = defect_probability_map(model, pre, threshold_override=0.9)
    assert values.shape == pre.shape


def test_scan_rejects_undersized_image(fabric_model):
    small = np.random.default_rng(43).uniform(-1, 1, size=(4, 4))
    with pytest.raises(DimensionError):
        scan_image(fabric_model, small)
