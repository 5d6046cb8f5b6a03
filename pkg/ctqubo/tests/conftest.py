from dataclasses import dataclass

import numpy as np
import pytest

from ctqubo.core.images import BinaryImage, GridImage, scale_binary
from ctqubo.core.phantoms import generate_phantom
from ctqubo.models.ct_models import EncodingSpec, ProjectionGeometry
from ctqubo.projection.system_matrix import Sinogram, SystemMatrix, build_system_matrix, default_geometry, forward_project
from ctqubo.qubo.builder import build_segmentation_qubo
from ctqubo.qubo.model import QuboModel

DISK_ALPHA = 3.0

@dataclass
class DiskSetup:
    mask: BinaryImage
    truth: GridImage
    geometry: ProjectionGeometry
    sm: SystemMatrix
    sino: Sinogram
    encoding: EncodingSpec
    model: QuboModel

@pytest.fixture(autouse=True)
def isolated_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CTQUBO_CACHE_DISABLED", "1")
    monkeypatch.setenv("CTQUBO_OUTPUT_DIR", str(tmp_path / "output"))

@pytest.fixture(scope="session")
def disk16() -> DiskSetup:
    """16x16 disk, alpha 3, 18 angles every 10 degrees, 23 unit bins."""
    mask = generate_phantom("disk", 16, 16, seed=0)
    truth = scale_binary(mask, DISK_ALPHA)
    geometry = default_geometry(16, 16, angle_step=10.0)
    sm = build_system_matrix(geometry, (16, 16))
    sino = forward_project(sm, truth)
    encoding = EncodingSpec.segmentation((DISK_ALPHA,), 16, 16)
    model = build_segmentation_qubo(sm, sino, encoding)
    return DiskSetup(mask, truth, geometry, sm, sino, encoding, model)

@pytest.fixture
def rng():
    return np.random.default_rng(1234)

@pytest.fixture
def single_pixel():
    """Factory: 1x1 image, one angle, one unit bin with weight 1, sinogram [[value]]."""
    def make(value: float):
        geometry = ProjectionGeometry(angles=(0.0,), bin_count=1)
        sm = build_system_matrix(geometry, (1, 1))
        return sm, Sinogram(geometry, np.array([[value]]))
    return make
