import numpy as np
import pytest

from ctqubo.core.images import GridImage, scale_binary
from ctqubo.models.ct_models import EncodingSpec, ProjectionGeometry
from ctqubo.models.errors import DimensionError, EncodingError, InvalidArgument
from ctqubo.projection.system_matrix import Sinogram, build_system_matrix, forward_project
from ctqubo.qubo.builder import (
    build_qubo,
    build_reconstruction_qubo,
    build_segmentation_qubo,
    default_one_hot_penalty,
    residual,
)
from ctqubo.qubo.model import Assignment, QuboModel, decode, encode, energy, one_hot_violations

def test_single_pixel_segmentation_coefficients(single_pixel):
    sm, sino = single_pixel(2.0)
    model = build_segmentation_qubo(sm, sino, EncodingSpec.segmentation((2.0,), 1, 1))

    assert model.linear.tolist() == [-4.0]
    assert model.quadratic.nnz == 0
    assert model.offset == 4.0
    assert energy(model, Assignment(np.array([1]))) == -4.0
    assert energy(model, Assignment(np.array([0]))) == 0.0

def test_single_pixel_reconstruction_coefficients(single_pixel):
    sm, sino = single_pixel(3.0)
    model = build_reconstruction_qubo(sm, sino, EncodingSpec.reconstruction(2, 1, 1))

    assert model.linear.tolist() == [-5.0, -8.0]
    assert model.quadratic_terms() == {(0, 1): 4.0}
    assert model.offset == 9.0

    energies = {
        bits: energy(model, Assignment(np.array(bits)))
        for bits in [(0, 0), (1, 0), (0, 1), (1, 1)]
    }
    assert min(energies, key=energies.get) == (1, 1)
    assert energies[(1, 1)] == -9.0

def test_two_pixels_on_one_ray_couple():
    geom = ProjectionGeometry(angles=(90.0,), bin_count=1)
    sm = build_system_matrix(geom, (2, 1))
    sino = Sinogram(geom, np.array([[1.0]]))
    model = build_segmentation_qubo(sm, sino, EncodingSpec.segmentation((1.5,), 2, 1))

    c1, c2 = sm.weight(0, 0, 0), sm.weight(1, 0, 0)
    assert model.quadratic_terms()[(0, 1)] == pytest.approx(2.0 * c1 * c2 * 1.5 ** 2)

def test_zero_sinogram_has_nonnegative_coefficients(disk16):
    enc = EncodingSpec.segmentation((1.0, 2.0), 16, 16)
    model = build_segmentation_qubo(disk16.sm, Sinogram.zeros(disk16.geometry), enc)

    assert model.offset == 0.0
    assert model.linear.min() >= 0.0
    assert model.quadratic.data.min() >= 0.0
    assert energy(model, Assignment.zeros(model.num_vars)) == 0.0

def test_zero_sinogram_reconstruction_minimum_is_empty():
    geom = ProjectionGeometry(angles=(0.0, 90.0), bin_count=3)
    sm = build_system_matrix(geom, (2, 2))
    model = build_reconstruction_qubo(sm, Sinogram.zeros(geom), EncodingSpec.reconstruction(2, 2, 2))
    assert model.linear.min() >= 0.0
    assert model.quadratic.data.min() >= 0.0

def test_single_bit_reconstruction_matches_unit_segmentation(disk16):
    recon = build_reconstruction_qubo(disk16.sm, disk16.sino, EncodingSpec.reconstruction(1, 16, 16))
    seg = build_segmentation_qubo(disk16.sm, disk16.sino, EncodingSpec.segmentation((1.0,), 16, 16))

    assert np.array_equal(recon.linear, seg.linear)
    assert recon.quadratic_terms() == seg.quadratic_terms()
    assert recon.offset == seg.offset

def test_ground_truth_energy_is_negative_offset(disk16):
    x = encode(disk16.truth, disk16.encoding)
    assert energy(disk16.model, x) == pytest.approx(-disk16.model.offset, rel=1e-9)
    assert residual(disk16.sm, disk16.sino, disk16.truth) == pytest.approx(0.0, abs=1e-9)

def test_residual_of_zero_image_is_offset(disk16):
    zero = GridImage.zeros(16, 16)
    assert residual(disk16.sm, disk16.sino, zero) == pytest.approx(disk16.model.offset, rel=1e-12)

def test_energy_plus_offset_is_residual(disk16, rng):
    enc = EncodingSpec.reconstruction(2, 16, 16)
    model = build_reconstruction_qubo(disk16.sm, disk16.sino, enc)

    for _ in range(5):
        x = Assignment(rng.integers(0, 2, size=model.num_vars))
        expected = residual(disk16.sm, disk16.sino, decode(x, enc))
        assert energy(model, x) + model.offset == pytest.approx(expected, rel=1e-9)

def test_one_hot_penalty_separates_stacked_levels(disk16):
    enc = EncodingSpec.segmentation((1.0, 3.0), 16, 16)
    model = build_segmentation_qubo(disk16.sm, disk16.sino, enc)
    penalty = default_one_hot_penalty(disk16.sm, enc)

    assert penalty > 0.0
    pixel = 5 * 16 + 7
    column = disk16.sm.matrix[:, pixel].toarray().ravel()
    cross = 2.0 * 1.0 * 3.0 * float(column @ column)
    pair = (enc.var_index(pixel, 0), enc.var_index(pixel, 1))
    assert model.quadratic_terms()[pair] == pytest.approx(penalty + cross)

def test_explicit_zero_penalty_leaves_pairs_uncoupled():
    geom = ProjectionGeometry(angles=(0.0,), bin_count=1)
    sm = build_system_matrix(geom, (1, 1))
    sino = Sinogram(geom, np.array([[0.0]]))
    enc = EncodingSpec.segmentation((1.0, 2.0), 1, 1, one_hot_penalty=0.0)
    model = build_segmentation_qubo(sm, sino, enc)
    # only the projection cross term 2 * a1 * a2 remains
    assert model.quadratic_terms() == {(0, 1): 4.0}

def test_build_qubo_dispatches_on_mode(single_pixel):
    sm, sino = single_pixel(3.0)
    recon = build_qubo(sm, sino, EncodingSpec.reconstruction(2, 1, 1))
    assert recon.linear.tolist() == [-5.0, -8.0]

    with pytest.raises(InvalidArgument):
        build_segmentation_qubo(sm, sino, EncodingSpec.reconstruction(2, 1, 1))
    with pytest.raises(InvalidArgument):
        build_reconstruction_qubo(sm, sino, EncodingSpec.segmentation((1.0,), 1, 1))

def test_builder_dimension_checks(disk16, single_pixel):
    sm, sino = single_pixel(1.0)
    with pytest.raises(DimensionError):
        build_segmentation_qubo(disk16.sm, sino, disk16.encoding)
    with pytest.raises(DimensionError):
        build_segmentation_qubo(sm, sino, disk16.encoding)

def test_energy_examples(disk16):
    assert energy(disk16.model, Assignment.zeros(disk16.model.num_vars)) == 0.0
    with pytest.raises(DimensionError):
        energy(disk16.model, Assignment.zeros(3))

def test_decode_examples():
    seg = EncodingSpec.segmentation((2.5,), 1, 1)
    assert decode(Assignment(np.array([1])), seg).values.tolist() == [[2.5]]
    assert decode(Assignment(np.array([0])), seg).values.tolist() == [[0.0]]

    recon = EncodingSpec.reconstruction(3, 1, 1)
    assert decode(Assignment(np.array([1, 0, 1])), recon).values.tolist() == [[5.0]]

    with pytest.raises(DimensionError):
        decode(Assignment(np.array([1, 0])), recon)

def test_encode_examples(disk16):
    assert not encode(GridImage.zeros(16, 16), disk16.encoding).bits.any()

    x = encode(disk16.truth, disk16.encoding)
    assert np.array_equal(x.bits, disk16.mask.flat())

    recon = EncodingSpec.reconstruction(2, 1, 1)
    assert encode(GridImage(np.array([[3.0]])), recon).as_tuple() == (1, 1)

def test_encode_rejects_unrepresentable_values():
    with pytest.raises(EncodingError):
        encode(GridImage(np.array([[2.0]])), EncodingSpec.segmentation((1.0, 3.0), 1, 1))
    with pytest.raises(EncodingError):
        encode(GridImage(np.array([[4.0]])), EncodingSpec.reconstruction(2, 1, 1))
    with pytest.raises(EncodingError):
        encode(GridImage(np.array([[1.5]])), EncodingSpec.reconstruction(2, 1, 1))

def test_encode_decode_multilevel(rng):
    enc = EncodingSpec.segmentation((1.0, 2.5, 4.0), 4, 3)
    values = rng.choice([0.0, 1.0, 2.5, 4.0], size=(3, 4))
    image = GridImage(values)
    assert np.array_equal(decode(encode(image, enc), enc).values, values)

def test_one_hot_violations():
    enc = EncodingSpec.segmentation((1.0, 2.0), 3, 1)
    x = Assignment(np.array([1, 1, 0, 1, 1, 1]))
    assert one_hot_violations(x, enc) == 2
    assert one_hot_violations(x, EncodingSpec.reconstruction(2, 3, 1)) == 0

def test_from_terms_folds_diagonal_and_lower_pairs():
    model = QuboModel.from_terms(3, {0: 1.0}, {(1, 1): 2.0, (2, 0): -1.5, (0, 2): 0.5})
    assert model.linear.tolist() == [1.0, 2.0, 0.0]
    assert model.quadratic_terms() == {(0, 2): -1.0}
    assert list(model.iter_terms()) == [(0, 0, 1.0), (0, 2, -1.0), (1, 1, 2.0)]

def test_model_drops_negligible_coefficients():
    model = QuboModel.from_terms(2, {0: 1e-15, 1: 1.0}, {(0, 1): 1e-14})
    assert model.linear.tolist() == [0.0, 1.0]
    assert model.quadratic.nnz == 0

def test_model_validation():
    with pytest.raises(DimensionError):
        QuboModel(num_vars=2, linear=np.zeros(3), quadratic=np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        QuboModel(num_vars=2, linear=np.zeros(2), quadratic=np.zeros((2, 2)),
                  encoding=EncodingSpec.reconstruction(2, 2, 2))
    with pytest.raises(InvalidArgument):
        Assignment(np.array([0, 2]))
    with pytest.raises(InvalidArgument, match="offset"):
        QuboModel.from_terms(1, {0: -4.0}, {}, offset=-4.0)
    with pytest.raises(InvalidArgument, match="offset"):
        QuboModel(num_vars=1, linear=np.zeros(1), quadratic=np.zeros((1, 1)), offset=float("nan"))

def test_max_abs_delta_bounds_every_flip(rng):
    model = QuboModel.from_terms(
        4,
        {0: -2.0, 1: 1.0, 3: 0.5},
        {(0, 1): 3.0, (1, 2): -4.0, (2, 3): 1.0},
    )
    bound = model.max_abs_delta()
    assert bound == 8.0

    for _ in range(20):
        bits = rng.integers(0, 2, size=4)
        base = energy(model, Assignment(bits))
        for i in range(4):
            flipped = bits.copy()
            flipped[i] ^= 1
            assert abs(energy(model, Assignment(flipped)) - base) <= bound

def test_fingerprint_tracks_coefficients(single_pixel):
    sm, sino = single_pixel(2.0)
    enc = EncodingSpec.segmentation((2.0,), 1, 1)
    first = build_segmentation_qubo(sm, sino, enc)
    again = build_segmentation_qubo(sm, sino, enc)
    other = build_segmentation_qubo(sm, sino.with_values(np.array([[3.0]])), enc)

    assert first.fingerprint() == again.fingerprint()
    assert first.fingerprint() != other.fingerprint()

def test_bqm_roundtrip_preserves_energies(rng):
    dimod = pytest.importorskip("dimod")

    model = QuboModel.from_terms(3, {0: -1.0, 2: 2.0}, {(0, 1): 0.5, (1, 2): -3.0}, offset=4.0)
    bqm = model.to_bqm()
    assert isinstance(bqm, dimod.BinaryQuadraticModel)

    restored = QuboModel.from_bqm(bqm)
    assert restored.offset == 4.0
    for _ in range(8):
        x = Assignment(rng.integers(0, 2, size=3))
        sample = dict(enumerate(x.bits.tolist()))
        assert bqm.energy(sample) == pytest.approx(energy(model, x) + model.offset)
        assert energy(restored, x) == pytest.approx(energy(model, x))

def test_forward_model_agrees_with_scaled_mask(disk16):
    # the segmentation model's assignment space decodes to alpha-scaled masks
    x = Assignment(disk16.mask.flat())
    assert np.array_equal(decode(x, disk16.encoding).values, scale_binary(disk16.mask, 3.0).values)
    projected = forward_project(disk16.sm, decode(x, disk16.encoding))
    np.testing.assert_allclose(projected.values, disk16.sino.values)
