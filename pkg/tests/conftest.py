"""Shared fixtures: synthetic scenes and corpora used across the suite."""

import numpy as np
import pytest

from artifact.datasets import make_clean_scene, synth_corpus


@pytest.fixture(scope="session")
def clean_scene():
    return make_clean_scene()


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """2 instances per artifact class + 2 clean, fixed seed."""
    root = tmp_path_factory.mktemp("small_corpus")
    synth_corpus(
        root,
        {"color_texture": 2, "deformation": 2, "cloth_design": 2, "clean": 2},
        seed=101,
    )
    return root


@pytest.fixture(scope="session")
def acceptance_corpus(tmp_path_factory):
    """20 instances per artifact class + 20 clean, fixed seed (the big oracle)."""
    root = tmp_path_factory.mktemp("acceptance_corpus")
    synth_corpus(
        root,
        {"color_texture": 20, "deformation": 20, "cloth_design": 20, "clean": 20},
        seed=424242,
    )
    return root


@pytest.fixture()
def rng():
    return np.random.default_rng(7)
