import os
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

import orjson
from pydantic import BaseModel, ConfigDict, Field

from ctqubo.models.ct_models import AnnealSchedule, EncodingMode, PhantomKind, WeightModel, WeightModelKind
from ctqubo.models.errors import IoError, ParseError

DEFAULT_OUTPUT_DIR = "./ctqubo-output"

class SolverMethod(str, Enum):
    ANNEAL = "anneal"
    EXACT = "exact"

class PhantomConfig(BaseModel):
    kind: PhantomKind = Field(default=PhantomKind.DISK, description="Synthetic phantom shape")
    width: int = Field(default=16, ge=1)
    height: int = Field(default=16, ge=1)
    seed: Optional[int] = Field(default=None, ge=0, description="Phantom seed; falls back to the run seed")
    alpha: float = Field(default=3.0, gt=0.0, description="Attenuation of the phantom material")
    input_image: Optional[str] = Field(default=None, description="Ground-truth image (PGM or CSV) instead of a synthetic phantom")

class GeometryConfig(BaseModel):
    angle_step: float = Field(default=10.0, gt=0.0, le=180.0, description="Spacing of the default angle set in degrees")
    angles: Optional[List[float]] = Field(default=None, description="Explicit angle list; overrides angle_step")
    bin_count: Optional[int] = Field(default=None, ge=1, description="None covers the rotated image footprint")
    bin_width: float = Field(default=1.0, gt=0.0)
    detector_offset: float = 0.0
    weight_model: WeightModelKind = WeightModelKind.AREA_OVERLAP
    subsample_k: int = Field(default=16, ge=1)

    def weight(self) -> WeightModel:
        return WeightModel(kind=self.weight_model, k=self.subsample_k)

class AcquisitionConfig(BaseModel):
    input_sinogram: Optional[str] = Field(default=None, description="Measured sinogram CSV instead of projecting the phantom")
    noise_sigma: float = Field(default=0.0, ge=0.0, description="Gaussian noise added to the sinogram")
    noise_seed: Optional[int] = Field(default=None, ge=0)
    constant_offset: float = Field(default=0.0, description="Constant background added to every bin")
    intensity_mode: bool = Field(default=False, description="Simulate raw intensities and convert back with -ln(I/I0)")
    i0: float = Field(default=1.0e4, gt=0.0, description="Unattenuated beam intensity")
    quantize_step: Optional[float] = Field(default=None, gt=0.0, description="Round sinogram values to multiples of this step")
    detector_binning: int = Field(default=1, ge=1, description="Adjacent detector bins summed into one")

class PreprocessConfig(BaseModel):
    background_columns: Optional[int] = Field(default=2, ge=1, description="Border columns per edge used as background; None skips subtraction")
    normalize: bool = Field(default=False, description="Equalize per-angle sums")
    estimate_alpha: bool = Field(default=False, description="Fit the attenuation level against the baseline segmentation")

class EncodingConfig(BaseModel):
    mode: EncodingMode = EncodingMode.SEGMENTATION
    levels: Optional[List[float]] = Field(default=None, description="Attenuation levels; None uses the phantom alpha")
    bits: int = Field(default=2, ge=1, le=52, description="Bits per pixel in reconstruction mode")
    one_hot_penalty: Optional[float] = Field(default=None, ge=0.0)

class SolverConfig(BaseModel):
    method: SolverMethod = SolverMethod.ANNEAL
    sweeps: int = Field(default=20000, ge=1)
    restarts: int = Field(default=8, ge=1)
    t_initial: Optional[float] = Field(default=None, gt=0.0)
    t_final: Optional[float] = Field(default=None, gt=0.0)
    workers: int = Field(default=1, ge=1, description="Threads running restarts concurrently")
    brute_force_cap: int = Field(default=24, ge=0, le=62)
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)

    def schedule(self, fallback_seed: int) -> AnnealSchedule:
        return AnnealSchedule(
            sweeps=self.sweeps,
            t_initial=self.t_initial,
            t_final=self.t_final,
            restarts=self.restarts,
            seed=self.seed if self.seed is not None else fallback_seed,
        )

class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    phantom: PhantomConfig = Field(default_factory=PhantomConfig)
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    acquisition: AcquisitionConfig = Field(default_factory=AcquisitionConfig)
    preprocess: PreprocessConfig = Field(default_factory=PreprocessConfig)
    encoding: EncodingConfig = Field(default_factory=EncodingConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    output_dir: Optional[str] = Field(default=None, description="None reads CTQUBO_OUTPUT_DIR")
    seed: int = Field(default=0, ge=0, lt=2**63)
    png: bool = Field(default=False, description="Write PNG previews next to every PGM")

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or os.getenv("CTQUBO_OUTPUT_DIR", DEFAULT_OUTPUT_DIR))

    def input_paths(self) -> List[Tuple[str, str]]:
        paths = []
        if self.phantom.input_image:
            paths.append(("phantom.input_image", self.phantom.input_image))
        if self.acquisition.input_sinogram:
            paths.append(("acquisition.input_sinogram", self.acquisition.input_sinogram))
        return paths

    def check_paths(self):
        for field, path in self.input_paths():
            if not Path(path).exists():
                raise IoError(f"{field} does not exist: {path}")

def load_pipeline_config(path: str) -> PipelineConfig:
    """Read a JSON config; pydantic validation errors propagate unchanged."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read config {path}: {e}") from e

    try:
        data = orjson.loads(raw) if raw.strip() else {}
    except orjson.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e}", line=getattr(e, "lineno", None), path=str(path)) from e

    config = PipelineConfig.model_validate(data)
    config.check_paths()
    return config
