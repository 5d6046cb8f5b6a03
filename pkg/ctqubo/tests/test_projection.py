import math

import numpy as np
import pytest

from ctqubo.core.images import BinaryImage, GridImage
from ctqubo.core.phantoms import generate_phantom
from ctqubo.models.ct_models import ProjectionGeometry, WeightModel
from ctqubo.models.errors import DimensionError, InvalidArgument
from ctqubo.projection.clipping import clip_to_strip, polygon_area, rotated_square, strip_overlap_area
from ctqubo.projection.system_matrix import (
    Sinogram,
    back_project,
    build_system_matrix,
    default_geometry,
    forward_project,
    reference_weight,
)

def test_full_overlap_single_entry():
    for width in (1.0, 2.5):
        geom = ProjectionGeometry(angles=(0.0,), bin_count=1, bin_width=width)
        sm = build_system_matrix(geom, (1, 1))
        assert sm.ray(0, 0) == [(0, 1.0)]

def test_half_bins_split_pixel():
    geom = ProjectionGeometry(angles=(0.0,), bin_count=2, bin_width=0.5)
    sm = build_system_matrix(geom, (1, 1))
    assert sm.weight(0, 0, 0) == pytest.approx(0.5, abs=1e-12)
    assert sm.weight(0, 0, 1) == pytest.approx(0.5, abs=1e-12)

def test_area_overlap_matches_subsample_at_45_degrees():
    geom = ProjectionGeometry(angles=(45.0,), bin_count=3)
    exact = build_system_matrix(geom, (2, 2)).matrix.toarray()
    sampled = build_system_matrix(geom, (2, 2), WeightModel.subsample(256)).matrix.toarray()
    assert np.max(np.abs(exact - sampled)) <= 2e-3

@pytest.mark.parametrize("k", [64, 256])
def test_subsample_error_shrinks_with_k(k):
    geom = default_geometry(5, 4, angle_step=15.0)
    exact = build_system_matrix(geom, (5, 4)).matrix.toarray()
    sampled = build_system_matrix(geom, (5, 4), WeightModel.subsample(k)).matrix.toarray()
    assert np.max(np.abs(exact - sampled)) <= 2.0 / k

def test_weights_are_positive_and_bounded(disk16):
    data = disk16.sm.matrix.data
    assert data.min() > 0.0
    assert data.max() <= 1.0 + 1e-12

def test_pixel_weights_partition_unity_per_angle(disk16):
    geom = disk16.geometry
    dense = disk16.sm.matrix.toarray().reshape(geom.num_angles, geom.bin_count, -1)
    np.testing.assert_allclose(dense.sum(axis=1), 1.0, atol=1e-6)

def test_forward_project_column_sums():
    geom = ProjectionGeometry(angles=(0.0,), bin_count=2)
    sm = build_system_matrix(geom, (2, 2))
    sino = forward_project(sm, GridImage(np.array([[1.0, 0.0], [0.0, 1.0]])))
    np.testing.assert_allclose(sino.values, [[1.0, 1.0]], atol=1e-12)

def test_forward_project_zero_image(disk16):
    sino = forward_project(disk16.sm, GridImage.zeros(16, 16))
    assert not sino.values.any()

def test_mass_conservation(disk16, rng):
    image = GridImage(rng.uniform(0.0, 2.0, size=(16, 16)))
    sino = forward_project(disk16.sm, image)
    np.testing.assert_allclose(sino.values.sum(axis=1), image.values.sum(), rtol=0, atol=1e-6)

def test_forward_project_is_linear(disk16, rng):
    x = GridImage(rng.normal(size=(16, 16)))
    y = GridImage(rng.normal(size=(16, 16)))
    a, b = 1.5, -0.25
    combined = forward_project(disk16.sm, GridImage(a * x.values + b * y.values)).values
    separate = a * forward_project(disk16.sm, x).values + b * forward_project(disk16.sm, y).values
    np.testing.assert_allclose(combined, separate, rtol=1e-12, atol=1e-12)

def test_rotational_consistency_of_centered_disk():
    geom = ProjectionGeometry(angles=(0.0, 90.0), bin_count=23)
    sm = build_system_matrix(geom, (16, 16))
    sino = forward_project(sm, generate_phantom("disk", 16, 16, 0))
    np.testing.assert_allclose(sino.values[0], sino.values[1], atol=1e-6)

def test_back_project_is_adjoint(disk16, rng):
    x = GridImage(rng.normal(size=(16, 16)))
    y = Sinogram(disk16.geometry, rng.normal(size=disk16.geometry.shape))
    lhs = float(forward_project(disk16.sm, x).flat() @ y.flat())
    rhs = float(x.flat() @ back_project(disk16.sm, y).flat())
    assert lhs == pytest.approx(rhs, rel=1e-9)

def test_back_project_examples(disk16):
    assert not back_project(disk16.sm, Sinogram.zeros(disk16.geometry)).values.any()

    geom = ProjectionGeometry(angles=(0.0,), bin_count=1)
    sm = build_system_matrix(geom, (1, 1))
    assert back_project(sm, Sinogram(geom, np.array([[7.0]]))).values.tolist() == [[7.0]]

def test_dimension_mismatch(disk16):
    with pytest.raises(DimensionError):
        forward_project(disk16.sm, GridImage.zeros(4, 4))
    with pytest.raises(DimensionError):
        forward_project(disk16.sm, BinaryImage(np.zeros((15, 16))))

    other = ProjectionGeometry(angles=(0.0,), bin_count=23)
    with pytest.raises(DimensionError):
        back_project(disk16.sm, Sinogram.zeros(other))

def test_reference_weight_examples():
    full = ProjectionGeometry(angles=(0.0,), bin_count=1)
    for k in (1, 3, 8):
        assert reference_weight(0, 0.0, 0, full, (1, 1), k) == 1.0

    halves = ProjectionGeometry(angles=(0.0,), bin_count=2, bin_width=0.5)
    for k in (2, 10, 64):
        assert reference_weight(0, 0.0, 0, halves, (1, 1), k) == 0.5

    with pytest.raises(InvalidArgument):
        reference_weight(0, 0.0, 0, full, (1, 1), 0)

def test_reference_weight_converges_to_area_overlap(rng):
    dims = (4, 5)
    raw = np.floor(rng.uniform(0.0, 180.0, size=12) * 1000.0) / 1000.0
    angles = tuple(sorted(set(raw.tolist())))

    checked = 0
    for bin_width, detector_offset in ((1.0, 0.3), (0.75, -0.45), (1.6, 0.9), (0.5, 0.0)):
        bin_count = math.ceil(math.hypot(*dims) / bin_width) + 2
        geom = ProjectionGeometry(
            angles=angles, bin_count=bin_count, bin_width=bin_width, detector_offset=detector_offset
        )
        sm = build_system_matrix(geom, dims)

        per_pixel = sm.matrix.toarray().reshape(len(angles), bin_count, -1).sum(axis=1)
        np.testing.assert_allclose(per_pixel, 1.0, atol=1e-6)

        for _ in range(25):
            pixel = int(rng.integers(0, 20))
            angle_index = int(rng.integers(0, len(angles)))
            bin_index = int(rng.integers(0, bin_count))
            exact = sm.weight(pixel, angle_index, bin_index)
            sampled = reference_weight(pixel, angles[angle_index], bin_index, geom, dims, 512)
            assert abs(exact - sampled) <= 2e-3, (bin_width, pixel, angle_index, bin_index)
            checked += 1
    assert checked == 100

def test_default_geometry():
    geom = default_geometry(16, 16, angle_step=10.0)
    assert geom.num_angles == 18
    assert geom.angles[0] == 0.0 and geom.angles[-1] == 170.0
    assert geom.bin_count == math.ceil(math.hypot(16, 16)) == 23

def test_geometry_validation():
    with pytest.raises(ValueError):
        ProjectionGeometry(angles=(10.0, 5.0), bin_count=3)
    with pytest.raises(ValueError):
        ProjectionGeometry(angles=(180.0,), bin_count=3)
    with pytest.raises(ValueError):
        ProjectionGeometry(angles=(0.0,), bin_count=0)

def test_strip_clipping_of_unit_square():
    square = rotated_square(0.0, 0.0)
    assert polygon_area(square) == pytest.approx(1.0)
    assert polygon_area(clip_to_strip(square, 0.0, 10.0)) == pytest.approx(0.5)
    assert strip_overlap_area(square, 2.0, 3.0) == 0.0

    diamond = rotated_square(0.0, math.pi / 4)
    # the corner triangle beyond s = 0.5 of a 45 degree square
    corner = (math.sqrt(2) / 2 - 0.5) ** 2
    assert strip_overlap_area(diamond, 0.5, 5.0) == pytest.approx(corner, abs=1e-12)
