from dataclasses import dataclass
from typing import Any, Dict, Union

import numpy as np
import structlog

from ctqubo.core.images import BinaryImage, GridImage
from ctqubo.models.errors import DegenerateHistogram, DimensionError, InvalidArgument

logger = structlog.get_logger()

OTSU_BINS = 256

def _histogram_bins(values: np.ndarray, bins: int):
    lo, hi = float(values.min()), float(values.max())
    if not hi > lo:
        raise DegenerateHistogram(f"image is constant ({lo}); Otsu needs at least two intensities")
    index = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    # the maximum lands on the upper edge; fold it into the last bin
    return np.clip(index, 0, bins - 1)

def otsu_threshold(img: GridImage, bins: int = OTSU_BINS) -> float:
    """
    Otsu's threshold over `bins` uniform bins between min and max.

    The split k maximizing w0 * w1 * (u1 - u0)^2 separates bins [0, k) from
    [k, bins); the returned threshold is the largest value of the lower class,
    so `img > threshold` reproduces the split exactly. The first maximizing
    split wins ties.
    """
    values = img.flat()
    index = _histogram_bins(values, bins)
    counts = np.bincount(index, minlength=bins).astype(np.float64)
    centers = np.arange(bins, dtype=np.float64)

    total = counts.sum()
    c0 = np.cumsum(counts)[:-1]
    c1 = total - c0
    m0 = np.cumsum(counts * centers)[:-1]
    m1 = (counts * centers).sum() - m0

    valid = (c0 > 0) & (c1 > 0)
    score = np.zeros(bins - 1)
    u0 = np.divide(m0, c0, out=np.zeros_like(m0), where=valid)
    u1 = np.divide(m1, c1, out=np.zeros_like(m1), where=valid)
    score[valid] = (c0[valid] / total) * (c1[valid] / total) * (u1[valid] - u0[valid]) ** 2

    split = int(np.argmax(score)) + 1
    threshold = float(values[index < split].max())
    logger.debug("otsu_threshold_selected", split=split, threshold=threshold)
    return threshold

def threshold_segment(img: GridImage, method: Union[str, float] = "otsu") -> BinaryImage:
    """Binarize with mask = img > threshold; `method` is "otsu" or a fixed threshold."""
    if isinstance(method, str):
        if method != "otsu":
            raise InvalidArgument(f"unknown threshold method {method!r}; expected 'otsu' or a number")
        threshold = otsu_threshold(img)
    else:
        threshold = float(method)
    return BinaryImage((img.values > threshold).astype(np.uint8))

@dataclass(frozen=True, eq=False)
class SegmentationComparison:
    dice: float
    pixel_agreement: float
    diff_mask: BinaryImage

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dice": self.dice,
            "pixel_agreement": self.pixel_agreement,
            "differing_pixels": self.diff_mask.count(),
        }

def dice_coefficient(a: BinaryImage, b: BinaryImage) -> float:
    total = a.count() + b.count()
    if total == 0:
        return 1.0
    overlap = int(np.count_nonzero(a.mask & b.mask))
    return 2.0 * overlap / total

def compare_segmentations(a: BinaryImage, b: BinaryImage) -> SegmentationComparison:
    if a.dims != b.dims:
        raise DimensionError(f"mask dims {a.dims} and {b.dims} differ")

    diff = (a.mask != b.mask).astype(np.uint8)
    return SegmentationComparison(
        dice=dice_coefficient(a, b),
        pixel_agreement=1.0 - float(diff.sum()) / diff.size,
        diff_mask=BinaryImage(diff),
    )
