"""Similarity-gated feature growth, multi-layer training, model files."""

import numpy as np
import pytest

import oracles
from loomspect.config import PipelineConfig
from loomspect.errors import (
    DegenerateInputError,
    DimensionError,
    ModelFormatError,
    ParameterError,
    TrainingError,
)
from loomspect.evaluation import synth_fabric
from loomspect.feature_bank import (
    build_model,
    grow_features,
    load_model,
    save_model,
    similarity,
    train_layer,
)
from loomspect.patching import extract_patches, filter_by_variance, shuffle_patches


def _patch_set(img, p=3, stride=1, threshold=0.0, seed=42):
    ps = filter_by_variance(extract_patches(img, p, stride), threshold)
    return shuffle_patches(ps, seed)


# --- similarity ----------------------------------------------------------------


def test_similarity_self_is_one():
    v = np.array([0.3, -1.2, 4.0])
    assert similarity(v, v) == pytest.approx(1.0, abs=1e-12)


def test_similarity_orthogonal_is_zero():
    assert similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0


def test_similarity_opposite_clamps_to_zero():
    v = np.array([1.0, 2.0, -0.5])
    assert similarity(v, -v) == 0.0


def test_similarity_scale_invariant():
    rng = np.random.default_rng(30)
    a = rng.normal(size=9)
    b = rng.normal(size=9)
    assert similarity(a, b) == pytest.approx(similarity(3.0 * a, 0.5 * b), abs=1e-12)


def test_similarity_rejects_zero_vector_and_mismatch():
    with pytest.raises(DegenerateInputError):
        similarity(np.zeros(4), np.ones(4))
    with pytest.raises(DimensionError):
        similarity(np.ones(3), np.ones(4))


# --- feature growth ---------------------------------------------------------------


def test_first_patch_becomes_first_feature():
    values = np.array([[1.0, 2.0, 3.0, 4.0]])
    weights, counts, assignments = grow_features(values, 0.7)
    assert weights.shape == (1, 4)
    assert np.array_equal(weights[0], values[0])
    assert list(counts) == [1]
    assert list(assignments) == [0]


def test_identical_patches_merge_without_drift():
    values = np.tile([2.0, -1.0, 0.5, 3.0], (2, 1))
    weights, counts, assignments = grow_features(values, 0.7)
    assert weights.shape == (1, 4)
    assert np.array_equal(weights[0], values[0])
    assert list(counts) == [2]
    assert list(assignments) == [0, 0]


def test_incremental_mean_single_step():
    values = np.array([[1.0, 1.0], [3.0, 3.0]])  # similarity 1 >= theta
    weights, counts, _ = grow_features(values, 0.7)
    assert weights.shape == (1, 2)
    assert np.array_equal(weights[0], [2.0, 2.0])
    assert list(counts) == [2]


def test_dissimilar_patch_founds_new_feature():
    values = np.array([[1.0, 0.0], [0.0, 1.0]])  # similarity 0 < theta
    weights, counts, assignments = grow_features(values, 0.7)
    assert weights.shape == (2, 2)
    assert list(counts) == [1, 1]
    assert list(assignments) == [0, 1]


def test_tie_breaks_to_lowest_feature_index():
    # [1,1] is equidistant from the two orthogonal founders (similarity
    # 1/sqrt(2) to each, bit-identical arithmetic); the lower index wins.
    values = np.array([
        [1.0, 0.0],
        [0.0, 1.0],
        [1.0, 1.0],
    ])
    weights, counts, assignments = grow_features(values, 0.6)
    assert list(assignments) == [0, 1, 0]
    assert np.allclose(weights[0], [1.0, 0.5])
    assert list(counts) == [2, 1]


def test_replay_reproduces_batch_means():
    rng = np.random.default_rng(31)
    for _ in range(25):
        n = int(rng.integers(1, 60))
        d = int(rng.integers(2, 17))
        values = rng.normal(size=(n, d))
        theta = float(rng.uniform(0.05, 0.95))
        weights, counts, assignments = grow_features(values, theta)
        means, ref_counts = oracles.batch_means(values, assignments, len(counts))
        assert np.array_equal(counts, ref_counts)
        assert np.abs(weights - means).max() < 1e-9


def test_raising_theta_never_shrinks_the_bank():
    rng = np.random.default_rng(32)
    values = rng.normal(size=(200, 9)) + 1.0
    sizes = []
    for theta in (0.1, 0.3, 0.5, 0.7, 0.9):
        weights, _, _ = grow_features(values, theta)
        sizes.append(weights.shape[0])
    assert sizes == sorted(sizes)


def test_grow_rejects_bad_inputs():
    with pytest.raises(TrainingError):
        grow_features(np.empty((0, 4)), 0.7)
    with pytest.raises(ParameterError):
        grow_features(np.ones((2, 2)), 1.0)
    with pytest.raises(ParameterError):
        grow_features(np.ones((2, 2)), 0.0)
    with pytest.raises(DegenerateInputError):
        grow_features(np.array([[1.0, 1.0], [0.0, 0.0]]), 0.7)


def test_assignment_similarity_meets_threshold():
    # Whenever a patch joins an existing feature, its similarity to that
    # feature's pre-update weights reaches the threshold.
    rng = np.random.default_rng(33)
    values = rng.normal(size=(120, 8)) + 0.5
    theta = 0.6
    weights, counts, assignments = grow_features(values, theta)
    bank = []
    tally = []
    for row, j in zip(values, assignments):
        j = int(j)
        if j == len(bank):
            bank.append(row.copy())
            tally.append(1)
        else:
            assert similarity(row, bank[j]) >= theta
            bank[j] += (row - bank[j]) / (tally[j] + 1)
            tally[j] += 1
    assert np.allclose(np.array(bank), weights, atol=1e-12)
    assert tally == list(counts)


# --- layer and model training -------------------------------------------------------


def test_train_layer_single_patch():
    img = np.arange(9, dtype=np.float64).reshape(3, 3)
    layer = train_layer(_patch_set(img), 0.7)
    assert layer.feature_count == 1
    assert layer.filter_size == 3
    assert np.array_equal(layer.weights[0], img.ravel())
    assert list(layer.counts) == [1]


def test_train_layer_empty_set_raises():
    ps = filter_by_variance(extract_patches(np.zeros((4, 4)), 3, 1), 0.0)
    with pytest.raises(TrainingError):
        train_layer(ps, 0.7)


def test_training_visits_each_patch_once(fabric_image):
    cfg = PipelineConfig()
    model = build_model(fabric_image, cfg, fabric_id="visits")
    from loomspect.imaging import preprocess

    pre = preprocess(fabric_image, cfg.equalize)
    p = model.layers[0].filter_size
    kept = filter_by_variance(
        extract_patches(pre, p, cfg.stride), cfg.contrast_threshold
    )
    assert int(np.sum(model.layers[0].counts)) == len(kept)


def test_tiled_image_compresses_to_few_features():
    img, _ = synth_fabric(8, 64, seed=9)  # noise-free tiling
    ps = _patch_set(img, p=9)
    layer = train_layer(ps, 0.7)
    assert layer.feature_count >= 1
    assert layer.feature_count <= 64  # at most one feature per tile phase
    assert layer.feature_count < len(ps) / 10


def test_build_model_deterministic(fabric_image):
    cfg = PipelineConfig()
    a = build_model(fabric_image, cfg, fabric_id="det")
    b = build_model(fabric_image, cfg, fabric_id="det")
    assert len(a.layers) == len(b.layers)
    for la, lb in zip(a.layers, b.layers):
        assert np.array_equal(la.weights, lb.weights)
        assert np.array_equal(la.counts, lb.counts)


def test_build_model_two_layers(fabric_image):
    cfg = PipelineConfig(num_layers=2, stride=2, filter_size=9)
    model = build_model(fabric_image, cfg, fabric_id="deep")
    assert len(model.layers) == 2
    assert all(layer.filter_size == 9 for layer in model.layers)
    assert all(layer.stride == 2 for layer in model.layers)
    assert model.parameter_count() == sum(
        layer.feature_count * 81 for layer in model.layers
    )


def test_parameter_count_is_features_times_p_squared(fabric_model):
    layer = fabric_model.layers[0]
    assert fabric_model.parameter_count() == layer.feature_count * layer.filter_size**2


# --- model persistence ---------------------------------------------------------------


def test_model_round_trip_bit_exact(fabric_model, tmp_path):
    path = tmp_path / "model.json"
    save_model(fabric_model, str(path))
    back = load_model(str(path))
    assert back.fabric_id == fabric_model.fabric_id
    assert back.equalize == fabric_model.equalize
    assert back.seed == fabric_model.seed
    assert back.contrast_threshold == fabric_model.contrast_threshold
    assert back.similarity_threshold == fabric_model.similarity_threshold
    assert back.anomaly_threshold == fabric_model.anomaly_threshold
    assert back.aggregate == fabric_model.aggregate
    assert len(back.layers) == len(fabric_model.layers)
    for la, lb in zip(back.layers, fabric_model.layers):
        assert la.filter_size == lb.filter_size
        assert la.stride == lb.stride
        assert np.array_equal(la.weights, lb.weights)
        assert np.array_equal(la.counts, lb.counts)


def test_model_save_load_save_is_stable(fabric_model, tmp_path):
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    save_model(fabric_model, str(first))
    save_model(load_model(str(first)), str(second))
    assert first.read_bytes() == second.read_bytes()


def test_load_model_rejects_bad_files(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    with pytest.raises(ModelFormatError):
        load_model(str(empty))

    not_json = tmp_path / "garbage.json"
    not_json.write_text("{not json")
    with pytest.raises(ModelFormatError):
        load_model(str(not_json))

    missing = tmp_path / "missing.json"
    with pytest.raises(ModelFormatError):
        load_model(str(missing))


def test_load_model_rejects_unknown_version(fabric_model, tmp_path):
    import json

    path = tmp_path / "model.json"
    save_model(fabric_model, str(path))
    doc = json.loads(path.read_text())
    doc["format_version"] = 999
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="version"):
        load_model(str(path))


def test_load_model_rejects_corrupt_fields(fabric_model, tmp_path):
    import json

    path = tmp_path / "model.json"
    save_model(fabric_model, str(path))
    doc = json.loads(path.read_text())
    doc["layers"][0]["features"][0]["weights"] = doc["layers"][0]["features"][0][
        "weights"
    ][:-1]
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        load_model(str(path))
