import math
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
import structlog

from ctqubo.core.images import BinaryImage, GridImage, pixel_centers
from ctqubo.models.ct_models import ProjectionGeometry, WeightModel, WeightModelKind
from ctqubo.models.errors import DimensionError, InvalidArgument
from ctqubo.projection.clipping import rotated_square, strip_overlap_area

logger = structlog.get_logger()

WEIGHT_EPSILON = 1e-12

# subsample classification works on chunks of pixels * k**2 points
_SUBSAMPLE_CHUNK_POINTS = 1 << 22

@dataclass(frozen=True, eq=False)
class Sinogram:
    """Projection values, one row per angle, one column per detector bin."""
    geometry: ProjectionGeometry
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != self.geometry.shape:
            raise DimensionError(
                f"sinogram shape {values.shape} does not match geometry {self.geometry.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidArgument("sinogram values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, geometry: ProjectionGeometry) -> "Sinogram":
        return cls(geometry, np.zeros(geometry.shape))

    def with_values(self, values: np.ndarray) -> "Sinogram":
        return Sinogram(self.geometry, values)

    def with_geometry(self, geometry: ProjectionGeometry, values: np.ndarray) -> "Sinogram":
        return Sinogram(geometry, values)

    def flat(self) -> np.ndarray:
        return self.values.ravel()

@dataclass(frozen=True, eq=False)
class SystemMatrix:
    """
    Sparse pixel-to-ray weights.

    Row angle_index * bin_count + bin_index holds the weights c of every pixel
    (row-major index) that the ray touches. Weights are overlap areas of the
    unit pixel with the bin strip, so they lie in (0, 1].
    """
    geometry: ProjectionGeometry
    image_dims: Tuple[int, int]
    matrix: sp.csr_matrix
    weight_model: WeightModel = WeightModel()

    @property
    def num_rays(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_pixels(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def ray_index(self, angle_index: int, bin_index: int) -> int:
        return angle_index * self.geometry.bin_count + bin_index

    def ray(self, angle_index: int, bin_index: int) -> List[Tuple[int, float]]:
        row = self.ray_index(angle_index, bin_index)
        start, stop = self.matrix.indptr[row], self.matrix.indptr[row + 1]
        return [
            (int(pixel), float(weight))
            for pixel, weight in zip(self.matrix.indices[start:stop], self.matrix.data[start:stop])
        ]

    def weight(self, pixel: int, angle_index: int, bin_index: int) -> float:
        return float(self.matrix[self.ray_index(angle_index, bin_index), pixel])

def default_geometry(
    width: int,
    height: int,
    angle_step: float = 10.0,
    bin_count: Optional[int] = None,
    bin_width: float = 1.0,
    detector_offset: float = 0.0,
) -> ProjectionGeometry:
    """Angles 0 .. 180 - step; enough unit bins to cover the rotated image footprint."""
    if not angle_step > 0.0:
        raise InvalidArgument(f"angle step must be positive, got {angle_step}")

    count = int(math.ceil(180.0 / angle_step - 1e-9))
    angles = tuple(float(i * angle_step) for i in range(count) if i * angle_step < 180.0)
    if bin_count is None:
        bin_count = int(math.ceil(math.hypot(width, height) / bin_width - 1e-9))

    return ProjectionGeometry(
        angles=angles,
        bin_count=bin_count,
        bin_width=bin_width,
        detector_offset=detector_offset,
    )

def _area_overlap_entries(geom: ProjectionGeometry, width: int, height: int):
    x, y = pixel_centers(width, height)
    edges = geom.bin_edges()
    first_edge = edges[0]
    rows: List[int] = []
    cols: List[int] = []
    data: List[float] = []

    for angle_index, theta in enumerate(geom.angles_rad()):
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        half_extent = 0.5 * (abs(cos_t) + abs(sin_t))
        centers = x * cos_t + y * sin_t

        for pixel, center in enumerate(centers):
            lo_bin = int(math.floor((center - half_extent - first_edge) / geom.bin_width))
            hi_bin = int(math.floor((center + half_extent - first_edge) / geom.bin_width))
            lo_bin = max(lo_bin, 0)
            hi_bin = min(hi_bin, geom.bin_count - 1)
            if lo_bin > hi_bin:
                continue

            square = rotated_square(float(center), float(theta))
            for bin_index in range(lo_bin, hi_bin + 1):
                area = strip_overlap_area(square, edges[bin_index], edges[bin_index + 1])
                if area < WEIGHT_EPSILON:
                    continue
                rows.append(angle_index * geom.bin_count + bin_index)
                cols.append(pixel)
                data.append(min(area, 1.0))

    return rows, cols, data

def _subsample_offsets(k: int) -> Tuple[np.ndarray, np.ndarray]:
    ticks = (np.arange(k, dtype=np.float64) + 0.5) / k - 0.5
    du, dv = np.meshgrid(ticks, ticks, indexing="xy")
    return du.ravel(), dv.ravel()

def _subsample_fractions(
    x: np.ndarray,
    y: np.ndarray,
    theta: float,
    geom: ProjectionGeometry,
    k: int,
) -> np.ndarray:
    """Fraction of each pixel's k*k subpixel centers per bin, shape (pixels, bins)."""
    du, dv = _subsample_offsets(k)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    first_edge = geom.bin_edges()[0]
    fractions = np.zeros((x.size, geom.bin_count))

    chunk = max(1, _SUBSAMPLE_CHUNK_POINTS // (k * k))
    for start in range(0, x.size, chunk):
        stop = min(start + chunk, x.size)
        s = (x[start:stop, None] + du[None, :]) * cos_t + (y[start:stop, None] + dv[None, :]) * sin_t
        bins = np.floor((s - first_edge) / geom.bin_width).astype(np.int64)
        valid = (bins >= 0) & (bins < geom.bin_count)
        owner = np.broadcast_to(np.arange(stop - start)[:, None], bins.shape)
        keys = owner[valid] * geom.bin_count + bins[valid]
        counts = np.bincount(keys, minlength=(stop - start) * geom.bin_count)
        fractions[start:stop] = counts.reshape(stop - start, geom.bin_count) / float(k * k)

    return fractions

def _subsample_entries(geom: ProjectionGeometry, width: int, height: int, k: int):
    x, y = pixel_centers(width, height)
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    data: List[np.ndarray] = []

    for angle_index, theta in enumerate(geom.angles_rad()):
        fractions = _subsample_fractions(x, y, float(theta), geom, k)
        pixel_idx, bin_idx = np.nonzero(fractions >= WEIGHT_EPSILON)
        rows.append(angle_index * geom.bin_count + bin_idx)
        cols.append(pixel_idx)
        data.append(fractions[pixel_idx, bin_idx])

    return np.concatenate(rows), np.concatenate(cols), np.concatenate(data)

def build_system_matrix(
    geom: ProjectionGeometry,
    dims: Tuple[int, int],
    model: Union[WeightModel, str] = WeightModel(),
) -> SystemMatrix:
    width, height = dims
    if width < 1 or height < 1:
        raise InvalidArgument(f"image dimensions must be >= 1x1, got {width}x{height}")
    if isinstance(model, str):
        model = WeightModel(kind=model)

    start = time.time()
    if model.kind == WeightModelKind.AREA_OVERLAP:
        rows, cols, data = _area_overlap_entries(geom, width, height)
    else:
        rows, cols, data = _subsample_entries(geom, width, height, model.k)

    shape = (geom.num_angles * geom.bin_count, width * height)
    matrix = sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=shape,
    )
    matrix.sort_indices()

    logger.info(
        "system_matrix_built",
        model=model.kind.value,
        width=width,
        height=height,
        angles=geom.num_angles,
        bins=geom.bin_count,
        nnz=int(matrix.nnz),
        duration_ms=int((time.time() - start) * 1000),
    )
    return SystemMatrix(geometry=geom, image_dims=(width, height), matrix=matrix, weight_model=model)

def reference_weight(
    pixel: int,
    angle: float,
    bin_index: int,
    geom: ProjectionGeometry,
    dims: Tuple[int, int],
    k: int,
) -> float:
    """Fraction of the pixel's k*k subpixel centers that fall into the bin strip."""
    if k < 1:
        raise InvalidArgument(f"subsample count must be >= 1, got {k}")
    width, height = dims
    x, y = pixel_centers(width, height)
    fractions = _subsample_fractions(
        x[pixel:pixel + 1], y[pixel:pixel + 1], math.radians(angle), geom, k
    )
    return float(fractions[0, bin_index])

def _check_image(sm: SystemMatrix, img: Union[GridImage, BinaryImage]):
    if img.dims != tuple(sm.image_dims):
        raise DimensionError(f"image dims {img.dims} do not match system matrix dims {tuple(sm.image_dims)}")

def forward_project(sm: SystemMatrix, img: Union[GridImage, BinaryImage]) -> Sinogram:
    _check_image(sm, img)
    values = sm.matrix @ img.flat().astype(np.float64)
    return Sinogram(sm.geometry, values.reshape(sm.geometry.shape))

def back_project(sm: SystemMatrix, sino: Sinogram) -> GridImage:
    if sino.values.shape != sm.geometry.shape:
        raise DimensionError(
            f"sinogram shape {sino.values.shape} does not match system matrix geometry {sm.geometry.shape}"
        )
    width, height = sm.image_dims
    values = sm.matrix.T @ sino.flat()
    return GridImage(values.reshape(height, width))
