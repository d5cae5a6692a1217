"""Shared fixtures: a small synthetic fabric, a trained model, a dataset dir.

Session scope keeps the expensive pieces (training) to one run each; every
fixture is deterministic, so sharing them across tests cannot couple results.
"""

import numpy as np
import pytest

from loomspect import PipelineConfig, build_model, preprocess
from loomspect.anomaly import calibrate_threshold
from loomspect.evaluation import synth_fabric
from loomspect.imaging import save_gray, save_mask

FABRIC_PERIOD = 8
FABRIC_SIZE = 64


def checkerboard(size, low=0.0, high=255.0):
    """size x size image alternating low/high pixel by pixel."""
    grid = np.indices((size, size)).sum(axis=0) % 2
    return np.where(grid == 0, low, high).astype(np.float64)


@pytest.fixture(scope="session")
def fabric_image():
    """Small noisy periodic fabric used as a shared training image."""
    img, _ = synth_fabric(FABRIC_PERIOD, FABRIC_SIZE, noise=2.0, seed=1)
    return img


@pytest.fixture(scope="session")
def fabric_model(fabric_image):
    """Model trained and calibrated on fabric_image with default settings."""
    cfg = PipelineConfig()
    model = build_model(fabric_image, cfg, fabric_id="unit-fabric")
    calibrate_threshold(model, preprocess(fabric_image, cfg.equalize))
    return model


@pytest.fixture(scope="session")
def hole_case():
    """(image, truth) for the shared fabric with a hole defect, mild noise."""
    return synth_fabric(
        FABRIC_PERIOD, FABRIC_SIZE, defect="hole", noise=1.0, seed=1, noise_seed=77
    )


@pytest.fixture(scope="session")
def dataset_root(tmp_path_factory):
    """On-disk dataset following <root>/<fabric>/{reference,test/,truth/}."""
    root = tmp_path_factory.mktemp("dataset")
    fabric = root / "weave"
    (fabric / "test").mkdir(parents=True)
    (fabric / "truth").mkdir()
    ref, _ = synth_fabric(FABRIC_PERIOD, FABRIC_SIZE, noise=3.0, seed=5)
    save_gray(str(fabric / "reference.png"), ref)
    cases = [
        ("bar_1", "bar", 1.0),
        ("hole_1", "hole", 1.0),
        ("none_1", "none", 1.0),
    ]
    for i, (name, defect, sigma) in enumerate(cases):
        img, truth = synth_fabric(
            FABRIC_PERIOD, FABRIC_SIZE, defect=defect, noise=sigma, seed=5,
            noise_seed=300 + i,
        )
        save_gray(str(fabric / "test" / f"{name}.png"), img)
        save_mask(str(fabric / "truth" / f"{name}.png"), truth)
    return root
