"""Shared fixtures for the test suite.

The expensive artifacts (a trained checkpoint, synthetic panoramas) are
session-scoped so the service/CLI/evaluation tests can share them instead
of re-training per test.
"""

from __future__ import annotations

import numpy as np
import pytest

from panocube.data import load_samples, ingest, save_image, synthesize_panorama
from panocube.training import TrainConfig, train


@pytest.fixture(scope="session")
def small_pano():
    """A busy but band-limited 128x64 panorama, values well inside [0, 1]."""
    return synthesize_panorama(3, 128, 64)


@pytest.fixture(scope="session")
def pano_dir(tmp_path_factory):
    """Directory with three small synthetic panoramas saved as PNG."""
    root = tmp_path_factory.mktemp("panos")
    for seed in range(3):
        save_image(root / f"pano_{seed}.png", synthesize_panorama(seed, 128, 64))
    return root


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory, pano_dir):
    """A 3-step training run at S=16 on two panoramas.

    Returns the TrainResult; .checkpoint_path feeds the inference-side tests.
    Kept deliberately tiny: the point is plumbing, not convergence.
    """
    out = tmp_path_factory.mktemp("tinyrun")
    manifest = ingest(pano_dir)
    config = TrainConfig(
        face_size=16, batch_size=2, max_steps=3, seed=0,
        checkpoint_interval=2,
    )
    samples = load_samples(manifest, config.face_size, config.seed,
                           equirect_size=(128, 64))
    return train(config, samples[:2], out)


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_run):
    return tiny_run.checkpoint_path
