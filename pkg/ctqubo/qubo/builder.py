import time
from typing import Optional

import numpy as np
import scipy.sparse as sp
import structlog

from ctqubo.core.images import GridImage
from ctqubo.models.ct_models import EncodingMode, EncodingSpec
from ctqubo.models.errors import DimensionError, InvalidArgument
from ctqubo.projection.system_matrix import Sinogram, SystemMatrix, forward_project
from ctqubo.qubo.model import QuboModel

logger = structlog.get_logger()

def _check_inputs(sm: SystemMatrix, sino: Sinogram, enc: EncodingSpec):
    if sino.values.shape != sm.geometry.shape:
        raise DimensionError(
            f"sinogram shape {sino.values.shape} does not match system matrix geometry {sm.geometry.shape}"
        )
    if (enc.width, enc.height) != tuple(sm.image_dims):
        raise DimensionError(
            f"encoding dims {(enc.width, enc.height)} do not match system matrix dims {tuple(sm.image_dims)}"
        )

def _variable_map(enc: EncodingSpec) -> sp.csr_matrix:
    """Pixels x variables: D[p, p * m + k] = value of level k."""
    return sp.kron(
        sp.identity(enc.num_pixels, format="csr"),
        sp.csr_matrix(enc.level_values()[None, :]),
        format="csr",
    )

def default_one_hot_penalty(sm: SystemMatrix, enc: EncodingSpec) -> float:
    """2 * max(alpha)^2 * largest per-ray weight sum."""
    ray_sums = np.asarray(sm.matrix.sum(axis=1)).ravel()
    max_ray_sum = float(ray_sums.max()) if ray_sums.size else 0.0
    return 2.0 * float(np.max(enc.level_values())) ** 2 * max_ray_sum

def _one_hot_pairs(enc: EncodingSpec, penalty: float) -> sp.csr_matrix:
    m = enc.vars_per_pixel
    rows, cols = [], []
    for pixel in range(enc.num_pixels):
        base = pixel * m
        for k in range(m):
            for k2 in range(k + 1, m):
                rows.append(base + k)
                cols.append(base + k2)
    data = np.full(len(rows), penalty)
    return sp.csr_matrix((data, (rows, cols)), shape=(enc.num_vars, enc.num_vars))

def _assemble(sm: SystemMatrix, sino: Sinogram, enc: EncodingSpec, one_hot_penalty: float) -> QuboModel:
    start = time.time()

    rays = sm.matrix @ _variable_map(enc)
    s = sino.flat()

    # (B x - s)^2 = x^T B^T B x - 2 s^T B x + s^T s, with x_i^2 = x_i on the diagonal
    gram = (rays.T @ rays).tocsr()
    linear = gram.diagonal() - 2.0 * (rays.T @ s)
    quadratic = 2.0 * sp.triu(gram, k=1, format="csr")
    if one_hot_penalty > 0.0 and enc.vars_per_pixel > 1:
        quadratic = quadratic + _one_hot_pairs(enc, one_hot_penalty)

    model = QuboModel(
        num_vars=enc.num_vars,
        linear=linear,
        quadratic=quadratic,
        offset=float(s @ s),
        encoding=enc,
    )

    logger.info(
        "qubo_built",
        mode=enc.mode.value,
        num_vars=model.num_vars,
        linear_terms=int(np.count_nonzero(model.linear)),
        quadratic_terms=int(model.quadratic.nnz),
        offset=model.offset,
        one_hot_penalty=one_hot_penalty,
        duration_ms=int((time.time() - start) * 1000),
    )
    return model

def build_segmentation_qubo(sm: SystemMatrix, sino: Sinogram, enc: EncodingSpec) -> QuboModel:
    if enc.mode != EncodingMode.SEGMENTATION:
        raise InvalidArgument("build_segmentation_qubo needs a segmentation encoding")
    _check_inputs(sm, sino, enc)

    penalty: Optional[float] = enc.levels.one_hot_penalty
    if penalty is None:
        penalty = default_one_hot_penalty(sm, enc) if enc.vars_per_pixel > 1 else 0.0
    return _assemble(sm, sino, enc, penalty)

def build_reconstruction_qubo(sm: SystemMatrix, sino: Sinogram, enc: EncodingSpec) -> QuboModel:
    if enc.mode != EncodingMode.RECONSTRUCTION:
        raise InvalidArgument("build_reconstruction_qubo needs a reconstruction encoding")
    _check_inputs(sm, sino, enc)
    return _assemble(sm, sino, enc, 0.0)

def build_qubo(sm: SystemMatrix, sino: Sinogram, enc: EncodingSpec) -> QuboModel:
    if enc.mode == EncodingMode.SEGMENTATION:
        return build_segmentation_qubo(sm, sino, enc)
    return build_reconstruction_qubo(sm, sino, enc)

def residual(sm: SystemMatrix, sino: Sinogram, img: GridImage) -> float:
    """Sum of squared differences between the image's projection and the sinogram."""
    if sino.values.shape != sm.geometry.shape:
        raise DimensionError(
            f"sinogram shape {sino.values.shape} does not match system matrix geometry {sm.geometry.shape}"
        )
    diff = forward_project(sm, img).flat() - sino.flat()
    return float(diff @ diff)
