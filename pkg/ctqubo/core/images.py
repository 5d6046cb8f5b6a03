from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ctqubo.models.errors import DimensionError, InvalidArgument

def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array

@dataclass(frozen=True, eq=False)
class GridImage:
    """Dense real-valued pixel grid, shape (height, width), row-major."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise DimensionError(f"image must be a non-empty 2-D grid, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgument("image values must be finite")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def zeros(cls, width: int, height: int) -> "GridImage":
        return cls(np.zeros((height, width)))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> Tuple[int, int]:
        return (self.width, self.height)

    def flat(self) -> np.ndarray:
        return self.values.ravel()

@dataclass(frozen=True, eq=False)
class BinaryImage:
    """{0, 1} mask, shape (height, width), row-major."""
    mask: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.mask)
        if raw.ndim != 2 or raw.size == 0:
            raise DimensionError(f"mask must be a non-empty 2-D grid, got shape {raw.shape}")
        if not np.all((raw == 0) | (raw == 1)):
            raise InvalidArgument("mask values must be exactly 0 or 1")
        object.__setattr__(self, "mask", _frozen(raw.astype(np.uint8)))

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def dims(self) -> Tuple[int, int]:
        return (self.width, self.height)

    def count(self) -> int:
        return int(self.mask.sum())

    def flat(self) -> np.ndarray:
        return self.mask.ravel()

def scale_binary(mask: BinaryImage, alpha: float) -> GridImage:
    if not alpha >= 0.0:
        raise InvalidArgument(f"alpha must be non-negative, got {alpha}")
    return GridImage(mask.mask * float(alpha))

def pixel_centers(width: int, height: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Centers of all pixels in detector units, flattened row-major.

    Pixel (i, j) sits at x = j - (W - 1) / 2, y = (H - 1) / 2 - i, with the
    rotation axis at the grid center.
    """
    rows, cols = np.indices((height, width), dtype=np.float64)
    x = cols - (width - 1) / 2.0
    y = (height - 1) / 2.0 - rows
    return x.ravel(), y.ravel()
