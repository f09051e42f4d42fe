"""Shared fixtures: analytic sphere meshes, cached synthetic garments and a
small on-disk dataset."""

import numpy as np
import pytest

from garmentrec.implicit import extract_surface, sphere_field
from garmentrec.pipeline import PipelineConfig
from garmentrec.synth import generate, save_garment
from garmentrec.template import ClothCategory

SPHERE_BOUNDS = ((-1.3, -1.3, -1.3), (1.3, 1.3, 1.3))


def unit_sphere_mesh(resolution: int):
    return extract_surface(sphere_field((0.0, 0.0, 0.0), 1.0), resolution,
                           SPHERE_BOUNDS)


@pytest.fixture(scope="session")
def sphere32():
    return unit_sphere_mesh(32)


@pytest.fixture(scope="session")
def sphere64():
    return unit_sphere_mesh(64)


@pytest.fixture(scope="session")
def dress_garment():
    return generate(ClothCategory.SHORT_SLEEVE_DRESS,
                    pose_magnitude=0.1, wrinkle_amplitude=0.0, seed=42)


@pytest.fixture(scope="session")
def oracle_config():
    """All-oracle configuration sized for fast unit-level runs."""
    return PipelineConfig(
        oracles=("category", "pose", "lines", "occupancy"),
        sigma=0.04, grid_resolution=64, eval_samples=256)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    """Four saved garments spanning sleeve/trouser/skirt categories."""
    root = tmp_path_factory.mktemp("dataset")
    cats = (ClothCategory.LONG_SLEEVE_COAT, ClothCategory.SHORT_SLEEVE_DRESS,
            ClothCategory.LONG_TROUSERS, ClothCategory.SHORT_SKIRT)
    for i, cat in enumerate(cats):
        g = generate(cat, pose_magnitude=0.1, wrinkle_amplitude=0.0,
                     seed=300 + i)
        save_garment(str(root / f"g{i:03d}"), g, {"seed": 300 + i})
    return str(root)
