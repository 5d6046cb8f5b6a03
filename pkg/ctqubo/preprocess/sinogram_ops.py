from enum import Enum
from typing import Optional, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from ctqubo.core.images import BinaryImage, scale_binary
from ctqubo.core.phantoms import make_rng
from ctqubo.models.errors import DegenerateReference, DegenerateRow, DimensionError, DomainError, InvalidArgument
from ctqubo.projection.system_matrix import Sinogram, SystemMatrix, forward_project

logger = structlog.get_logger()

DEFAULT_BORDER_COLUMNS = 2

class NormalizationMode(str, Enum):
    PER_ANGLE_SUM_TO_MEAN = "per_angle_sum_to_mean"

class BorderColumns(BaseModel):
    """Background region made of the n outermost bins on each detector edge."""
    model_config = ConfigDict(frozen=True)

    n: int = Field(default=DEFAULT_BORDER_COLUMNS, ge=1)

    def mask_for(self, shape) -> np.ndarray:
        mask = np.zeros(shape, dtype=bool)
        mask[:, :self.n] = True
        mask[:, -self.n:] = True
        return mask

BackgroundRegion = Union[BorderColumns, np.ndarray]

def intensity_to_attenuation(proj: Sinogram, i0: float) -> Sinogram:
    """Beer-Lambert: line integral = -ln(I / I0)."""
    if not i0 > 0.0:
        raise DomainError(f"i0 must be positive, got {i0}")
    if np.any(proj.values <= 0.0):
        raise DomainError("intensities must be strictly positive")
    return proj.with_values(-np.log(proj.values / i0))

def attenuation_to_intensity(sino: Sinogram, i0: float) -> Sinogram:
    if not i0 > 0.0:
        raise DomainError(f"i0 must be positive, got {i0}")
    return sino.with_values(i0 * np.exp(-sino.values))

def background_subtract(sino: Sinogram, background_region: Optional[BackgroundRegion] = None) -> Sinogram:
    """Subtract the mean over the background region and clamp negatives to zero."""
    if background_region is None:
        background_region = BorderColumns()

    if isinstance(background_region, BorderColumns):
        if 2 * background_region.n > sino.geometry.bin_count:
            raise InvalidArgument(
                f"{background_region.n} border columns per edge exceed {sino.geometry.bin_count} bins"
            )
        mask = background_region.mask_for(sino.values.shape)
    else:
        mask = np.asarray(background_region, dtype=bool)
        if mask.shape != sino.values.shape:
            raise DimensionError(f"background mask shape {mask.shape} does not match sinogram {sino.values.shape}")

    if not mask.any():
        raise InvalidArgument("background region is empty")

    background = float(sino.values[mask].mean())
    logger.debug("background_estimated", mean=background, samples=int(mask.sum()))
    return sino.with_values(np.maximum(sino.values - background, 0.0))

def normalize_columns(
    sino: Sinogram,
    mode: Union[NormalizationMode, str] = NormalizationMode.PER_ANGLE_SUM_TO_MEAN,
) -> Sinogram:
    """Scale each angle row so its sum equals the mean of all per-angle sums."""
    mode = NormalizationMode(mode)
    sums = sino.values.sum(axis=1)
    zero_rows = np.flatnonzero(~(sums > 0.0))
    if zero_rows.size:
        raise DegenerateRow(f"angle rows {zero_rows.tolist()} have non-positive sums")

    factors = sums.mean() / sums
    return sino.with_values(sino.values * factors[:, None])

def estimate_alpha(sino: Sinogram, sm: SystemMatrix, reference: BinaryImage) -> float:
    """Least-squares attenuation coefficient that best maps the reference projection onto sino."""
    projected = forward_project(sm, scale_binary(reference, 1.0)).flat()
    if sino.values.shape != sm.geometry.shape:
        raise DimensionError(f"sinogram shape {sino.values.shape} does not match geometry {sm.geometry.shape}")

    norm = float(projected @ projected)
    if norm == 0.0:
        raise DegenerateReference("reference segmentation projects to an all-zero sinogram")

    alpha = float(projected @ sino.flat()) / norm
    logger.info("alpha_estimated", alpha=alpha, reference_pixels=reference.count())
    return alpha

def add_gaussian_noise(sino: Sinogram, sigma: float, seed: int) -> Sinogram:
    if sigma < 0.0:
        raise InvalidArgument(f"noise sigma must be non-negative, got {sigma}")
    if sigma == 0.0:
        return sino
    noise = make_rng(seed).normal(0.0, sigma, size=sino.values.shape)
    return sino.with_values(sino.values + noise)

def add_constant_offset(sino: Sinogram, offset: float) -> Sinogram:
    return sino.with_values(sino.values + offset)

def bin_detector(sino: Sinogram, factor: int) -> Sinogram:
    """Sum groups of `factor` adjacent bins; a trailing partial group is dropped."""
    if factor < 1:
        raise InvalidArgument(f"binning factor must be >= 1, got {factor}")
    if factor == 1:
        return sino

    geom = sino.geometry
    groups = geom.bin_count // factor
    if groups < 1:
        raise InvalidArgument(f"binning factor {factor} exceeds {geom.bin_count} bins")

    kept = groups * factor
    # keep the detector center fixed when a partial group is dropped
    dropped_width = (geom.bin_count - kept) * geom.bin_width
    binned_geometry = geom.model_copy(update={
        "bin_count": groups,
        "bin_width": geom.bin_width * factor,
        "detector_offset": geom.detector_offset - dropped_width / 2.0,
    })
    values = sino.values[:, :kept].reshape(geom.num_angles, groups, factor).sum(axis=2)
    return sino.with_geometry(binned_geometry, values)

def quantize_sinogram(sino: Sinogram, step: float = 1.0) -> Sinogram:
    if not step > 0.0:
        raise InvalidArgument(f"quantization step must be positive, got {step}")
    return sino.with_values(np.round(sino.values / step) * step)
