from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

class PhantomKind(str, Enum):
    DISK = "disk"
    TWO_DISKS = "two_disks"
    RANDOM_BLOBS = "random_blobs"
    CHECKER = "checker"

class WeightModelKind(str, Enum):
    AREA_OVERLAP = "area_overlap"
    SUBSAMPLE = "subsample"

class EncodingMode(str, Enum):
    SEGMENTATION = "segmentation"
    RECONSTRUCTION = "reconstruction"

class ProjectionGeometry(BaseModel):
    """
    Parallel-beam acquisition geometry.

    Bin b covers detector coordinates
    [offset + (b - n/2) * width, offset + (b + 1 - n/2) * width).
    A point (x, y) lands at s = x cos(theta) + y sin(theta).
    """
    model_config = ConfigDict(frozen=True)

    angles: Tuple[float, ...] = Field(..., min_length=1, description="Projection angles in degrees, [0, 180)")
    bin_count: int = Field(..., ge=1, description="Detector bins per angle")
    bin_width: float = Field(default=1.0, gt=0.0, description="Bin width in pixel units")
    detector_offset: float = Field(default=0.0, description="Detector center relative to the rotation axis")

    @field_validator("angles")
    @classmethod
    def _check_angles(cls, angles: Tuple[float, ...]) -> Tuple[float, ...]:
        for angle in angles:
            if not (0.0 <= angle < 180.0):
                raise ValueError(f"angle {angle} outside [0, 180)")
        for previous, current in zip(angles, angles[1:]):
            if current <= previous:
                raise ValueError("angles must be strictly increasing")
        return angles

    @property
    def num_angles(self) -> int:
        return len(self.angles)

    @property
    def shape(self) -> Tuple[int, int]:
        return (len(self.angles), self.bin_count)

    def angles_rad(self) -> np.ndarray:
        return np.deg2rad(np.asarray(self.angles, dtype=np.float64))

    def bin_edges(self) -> np.ndarray:
        steps = np.arange(self.bin_count + 1, dtype=np.float64) - self.bin_count / 2.0
        return self.detector_offset + steps * self.bin_width

class WeightModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: WeightModelKind = WeightModelKind.AREA_OVERLAP
    k: int = Field(default=16, ge=1, description="Subpixel samples per axis (subsample model only)")

    @classmethod
    def area_overlap(cls) -> "WeightModel":
        return cls(kind=WeightModelKind.AREA_OVERLAP)

    @classmethod
    def subsample(cls, k: int) -> "WeightModel":
        return cls(kind=WeightModelKind.SUBSAMPLE, k=k)

class AttenuationSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    levels: Tuple[float, ...] = Field(..., min_length=1, description="Mass attenuation coefficients, ascending")
    one_hot_penalty: Optional[float] = Field(
        default=None,
        ge=0.0,
        description="Same-pixel level pair penalty; 0 disables, None picks the default",
    )

    @field_validator("levels")
    @classmethod
    def _check_levels(cls, levels: Tuple[float, ...]) -> Tuple[float, ...]:
        for level in levels:
            if not level > 0.0 or not np.isfinite(level):
                raise ValueError(f"attenuation level {level} must be positive and finite")
        for previous, current in zip(levels, levels[1:]):
            if current <= previous:
                raise ValueError("attenuation levels must be strictly increasing")
        return levels

class EncodingSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: EncodingMode
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    levels: Optional[AttenuationSpec] = None
    bits: Optional[int] = Field(default=None, ge=1, le=52)

    @model_validator(mode="after")
    def _check_mode(self) -> "EncodingSpec":
        if self.mode == EncodingMode.SEGMENTATION and self.levels is None:
            raise ValueError("segmentation encoding requires attenuation levels")
        if self.mode == EncodingMode.RECONSTRUCTION and self.bits is None:
            raise ValueError("reconstruction encoding requires a bit count")
        return self

    @classmethod
    def segmentation(
        cls,
        levels: Tuple[float, ...],
        width: int,
        height: int,
        one_hot_penalty: Optional[float] = None,
    ) -> "EncodingSpec":
        return cls(
            mode=EncodingMode.SEGMENTATION,
            width=width,
            height=height,
            levels=AttenuationSpec(levels=tuple(levels), one_hot_penalty=one_hot_penalty),
        )

    @classmethod
    def reconstruction(cls, bits: int, width: int, height: int) -> "EncodingSpec":
        return cls(mode=EncodingMode.RECONSTRUCTION, width=width, height=height, bits=bits)

    @property
    def num_pixels(self) -> int:
        return self.width * self.height

    @property
    def vars_per_pixel(self) -> int:
        if self.mode == EncodingMode.SEGMENTATION:
            return len(self.levels.levels)
        return self.bits

    @property
    def num_vars(self) -> int:
        return self.num_pixels * self.vars_per_pixel

    def level_values(self) -> np.ndarray:
        """Pixel contribution of each per-pixel variable: alpha_k, or 2**k."""
        if self.mode == EncodingMode.SEGMENTATION:
            return np.asarray(self.levels.levels, dtype=np.float64)
        return np.ldexp(1.0, np.arange(self.bits))

    def var_index(self, pixel: int, level: int) -> int:
        return pixel * self.vars_per_pixel + level

class AnnealSchedule(BaseModel):
    model_config = ConfigDict(frozen=True)

    sweeps: int = Field(default=1000, ge=1, description="Metropolis sweeps per restart")
    t_initial: Optional[float] = Field(default=None, gt=0.0, description="Start temperature; None derives it from the model")
    t_final: Optional[float] = Field(default=None, gt=0.0, description="End temperature; None is t_initial * 1e-4")
    restarts: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check_temperatures(self) -> "AnnealSchedule":
        if self.t_initial is not None and self.t_final is not None and self.t_initial < self.t_final:
            raise ValueError("t_initial must be >= t_final")
        return self
