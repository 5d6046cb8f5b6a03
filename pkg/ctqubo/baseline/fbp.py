from enum import Enum
from typing import Union

import numpy as np
import structlog

from ctqubo.core.images import GridImage
from ctqubo.models.errors import DimensionError, InvalidArgument
from ctqubo.projection.system_matrix import Sinogram, SystemMatrix, back_project

logger = structlog.get_logger()

class FilterKind(str, Enum):
    RAMP = "ramp"
    NONE = "none"

def _padded_length(bins: int) -> int:
    """Next power of two >= 2 * bins."""
    return 1 << int(np.ceil(np.log2(max(2 * bins, 2))))

def ramp_response(bins: int, bin_width: float = 1.0) -> np.ndarray:
    """
    Frequency response of the band-limited ramp on the padded detector grid.

    Built from the spatial Ram-Lak kernel (1/4 at the origin, -1/(pi n)^2 at
    odd offsets) so the discrete filter has no DC bias; the DC term is forced
    to zero.
    """
    size = _padded_length(bins)
    offsets = np.arange(size)
    offsets = np.where(offsets < size // 2, offsets, offsets - size)

    kernel = np.zeros(size)
    kernel[0] = 0.25
    odd = offsets % 2 == 1
    kernel[odd] = -1.0 / (np.pi * offsets[odd]) ** 2

    response = np.real(np.fft.fft(kernel)) / bin_width
    response[0] = 0.0
    return response

def ramp_filter(values: np.ndarray, bin_width: float = 1.0) -> np.ndarray:
    """Filter each detector row (axis 1) with the zero-padded ramp."""
    bins = values.shape[1]
    response = ramp_response(bins, bin_width)
    padded = np.zeros((values.shape[0], response.size))
    padded[:, :bins] = values
    filtered = np.real(np.fft.ifft(np.fft.fft(padded, axis=1) * response, axis=1))
    return filtered[:, :bins]

def fbp_reconstruct(
    sino: Sinogram,
    sm: SystemMatrix,
    filter: Union[FilterKind, str] = FilterKind.RAMP,
) -> GridImage:
    """Filtered back projection scaled by pi / num_angles."""
    try:
        kind = FilterKind(filter)
    except ValueError:
        raise InvalidArgument(f"unknown filter {filter!r}; expected one of {[f.value for f in FilterKind]}")

    if sino.values.shape != sm.geometry.shape:
        raise DimensionError(
            f"sinogram shape {sino.values.shape} does not match system matrix geometry {sm.geometry.shape}"
        )

    if kind == FilterKind.RAMP:
        filtered = sino.with_values(ramp_filter(sino.values, sm.geometry.bin_width))
    else:
        filtered = sino

    scale = np.pi / sm.geometry.num_angles
    image = GridImage(back_project(sm, filtered).values * scale)

    logger.debug(
        "fbp_reconstructed",
        filter=kind.value,
        angles=sm.geometry.num_angles,
        bins=sm.geometry.bin_count,
    )
    return image
