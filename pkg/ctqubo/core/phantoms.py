from typing import Union

import numpy as np
import structlog

from ctqubo.core.images import BinaryImage, pixel_centers
from ctqubo.models.ct_models import PhantomKind
from ctqubo.models.errors import InvalidArgument

logger = structlog.get_logger()

def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream; the one PRNG used for phantoms, noise and annealing."""
    return np.random.Generator(np.random.PCG64(seed))

def _clear_border(mask: np.ndarray) -> np.ndarray:
    mask[0, :] = 0
    mask[-1, :] = 0
    mask[:, 0] = 0
    mask[:, -1] = 0
    return mask

def _disk(width: int, height: int) -> np.ndarray:
    radius = min(width, height) // 3
    x, y = pixel_centers(width, height)
    inside = np.hypot(x, y) < radius
    return inside.reshape(height, width)

def _two_disks(width: int, height: int) -> np.ndarray:
    radius = min(width, height) // 6
    x, y = pixel_centers(width, height)
    shift = width / 4.0
    left = np.hypot(x + shift, y) < radius
    right = np.hypot(x - shift, y) < radius
    return (left | right).reshape(height, width)

def _random_blobs(width: int, height: int, seed: int) -> np.ndarray:
    rng = make_rng(seed)
    x, y = pixel_centers(width, height)
    mask = np.zeros(width * height, dtype=bool)

    count = int(rng.integers(2, 5))
    max_axis = max(1.0, min(width, height) / 4.0)
    for _ in range(count):
        cx = rng.uniform(-width / 4.0, width / 4.0)
        cy = rng.uniform(-height / 4.0, height / 4.0)
        a = rng.uniform(1.0, max_axis)
        b = rng.uniform(1.0, max_axis)
        phi = rng.uniform(0.0, np.pi)

        u = (x - cx) * np.cos(phi) + (y - cy) * np.sin(phi)
        v = -(x - cx) * np.sin(phi) + (y - cy) * np.cos(phi)
        mask |= (u / a) ** 2 + (v / b) ** 2 <= 1.0

    return mask.reshape(height, width)

def _checker(width: int, height: int) -> np.ndarray:
    rows, cols = np.indices((height, width))
    if width == 1 and height == 1:
        # a lone pixel is all border and must stay background
        return np.zeros((1, 1), dtype=bool)
    return (rows + cols) % 2 == 0

def generate_phantom(
    kind: Union[PhantomKind, str],
    width: int,
    height: int,
    seed: int = 0,
) -> BinaryImage:
    try:
        kind = PhantomKind(kind)
    except ValueError:
        raise InvalidArgument(f"Unknown phantom kind: {kind}")

    if width < 1 or height < 1:
        raise InvalidArgument(f"phantom dimensions must be >= 1, got {width}x{height}")

    if kind == PhantomKind.DISK:
        mask = _clear_border(_disk(width, height))
    elif kind == PhantomKind.TWO_DISKS:
        mask = _clear_border(_two_disks(width, height))
    elif kind == PhantomKind.RANDOM_BLOBS:
        mask = _clear_border(_random_blobs(width, height, seed))
    else:
        mask = _checker(width, height)

    phantom = BinaryImage(mask.astype(np.uint8))
    logger.debug("phantom_generated", kind=kind.value, width=width, height=height, seed=seed, pixels=phantom.count())
    return phantom
