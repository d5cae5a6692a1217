"""Cross-backend agreement between the compiled and NumPy scan kernels."""

import os
import subprocess
import sys

import numpy as np
import pytest

from loomspect import PipelineConfig, available_backends, preprocess
from loomspect._backend import grow_bank, nearest_l1
from loomspect.patching import extract_patches, filter_by_variance, shuffle_patches

needs_both = pytest.mark.skipif(
    len(available_backends()) < 2, reason="compiled extension not built"
)


@needs_both
def test_grow_bank_backends_agree_on_random_inputs():
    rng = np.random.default_rng(70)
    for theta in (0.3, 0.7, 0.95):
        for n, d in ((1, 4), (40, 9), (300, 25)):
            patches = rng.normal(size=(n, d))
            w_py, c_py, a_py = grow_bank(patches, theta, backend="python")
            w_cy, c_cy, a_cy = grow_bank(patches, theta, backend="compiled")
            assert np.array_equal(c_py, c_cy)
            assert np.array_equal(a_py, a_cy)
            assert w_py.shape == w_cy.shape
            assert np.allclose(w_py, w_cy, rtol=0.0, atol=1e-12)


@needs_both
def test_grow_bank_tie_breaks_identically():
    patches = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    for backend in ("python", "compiled"):
        weights, counts, assignments = grow_bank(patches, 0.6, backend=backend)
        assert list(assignments) == [0, 1, 0]
        assert list(counts) == [2, 1]
        assert np.array_equal(weights, [[1.0, 0.5], [0.0, 1.0]])


@needs_both
def test_grow_bank_backends_agree_on_real_patches(fabric_image):
    cfg = PipelineConfig()
    pre = preprocess(fabric_image, cfg.equalize)
    ps = shuffle_patches(
        filter_by_variance(extract_patches(pre, 9, 1), cfg.contrast_threshold),
        cfg.seed,
    )
    w_py, c_py, a_py = grow_bank(ps.values, cfg.similarity_threshold, backend="python")
    w_cy, c_cy, a_cy = grow_bank(ps.values, cfg.similarity_threshold, backend="compiled")
    assert np.array_equal(c_py, c_cy)
    assert np.array_equal(a_py, a_cy)
    assert np.allclose(w_py, w_cy, rtol=0.0, atol=1e-10)


@needs_both
def test_nearest_l1_backends_agree():
    rng = np.random.default_rng(71)
    for n, m, d in ((1, 1, 4), (64, 7, 9), (500, 33, 25)):
        queries = rng.normal(size=(n, d))
        bank = rng.normal(size=(m, d))
        s_py, i_py = nearest_l1(queries, bank, backend="python")
        s_cy, i_cy = nearest_l1(queries, bank, backend="compiled")
        assert np.array_equal(i_py, i_cy)
        assert np.allclose(s_py, s_cy, rtol=0.0, atol=1e-12)


@needs_both
def test_nearest_l1_duplicate_rows_pick_lowest_index():
    bank = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])
    queries = np.array([[1.0, 2.0], [0.9, 1.9]])
    for backend in ("python", "compiled"):
        sums, idx = nearest_l1(queries, bank, backend=backend)
        assert list(idx) == [0, 0]
        assert sums[0] == 0.0


def _import_backend(value):
    env = dict(os.environ, LOOMSPECT_BACKEND=value)
    return subprocess.run(
        [sys.executable, "-c", "import loomspect; print(loomspect.BACKEND)"],
        capture_output=True,
        text=True,
        env=env,
    )


def test_backend_env_forces_python():
    result = _import_backend("python")
    assert result.returncode == 0, result.stderr
    assert result.stdout.strip() == "python"


@needs_both
def test_backend_env_forces_compiled():
    result = _import_backend("compiled")
    assert result.returncode == 0, result.stderr
    assert result.stdout.strip() == "compiled"


def test_backend_env_rejects_unknown_value():
    result = _import_backend("fortran")
    assert result.returncode != 0
    assert "LOOMSPECT_BACKEND" in result.stderr


def test_backend_dispatch_rejects_unknown_name():
    with pytest.raises(ValueError):
        nearest_l1(np.ones((1, 2)), np.ones((1, 2)), backend="rust")
