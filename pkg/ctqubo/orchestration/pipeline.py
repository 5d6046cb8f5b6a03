import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import structlog

from ctqubo.baseline.fbp import fbp_reconstruct
from ctqubo.baseline.segmentation import compare_segmentations, threshold_segment
from ctqubo.cache.matrix_cache import default_cache
from ctqubo.core.images import BinaryImage, GridImage, scale_binary
from ctqubo.core.phantoms import generate_phantom
from ctqubo.export import formats
from ctqubo.export.report_generator import report_generator
from ctqubo.models.config_models import PipelineConfig, SolverMethod
from ctqubo.models.ct_models import (
    AnnealSchedule,
    EncodingMode,
    EncodingSpec,
    ProjectionGeometry,
    WeightModel,
)
from ctqubo.models.errors import BoundViolation, DegenerateHistogram, DomainError, InvalidArgument
from ctqubo.preprocess.sinogram_ops import (
    BorderColumns,
    add_constant_offset,
    add_gaussian_noise,
    attenuation_to_intensity,
    background_subtract,
    bin_detector,
    estimate_alpha,
    intensity_to_attenuation,
    normalize_columns,
    quantize_sinogram,
)
from ctqubo.projection.system_matrix import (
    Sinogram,
    SystemMatrix,
    build_system_matrix,
    default_geometry,
    forward_project,
)
from ctqubo.qubo.builder import build_qubo, residual
from ctqubo.qubo.model import QuboModel, decode
from ctqubo.solver.annealing import simulated_anneal
from ctqubo.solver.exact import brute_force
from ctqubo.solver.result import SolveResult

logger = structlog.get_logger()

REPORT_FORMAT_VERSION = formats.FORMAT_VERSION

# relative slack for the -offset lower bound
BOUND_TOLERANCE = 1e-9

def system_matrix_for(geom: ProjectionGeometry, dims: Tuple[int, int], model: WeightModel = WeightModel()) -> SystemMatrix:
    """Build through the on-disk cache unless CTQUBO_CACHE_DISABLED=1."""
    cache = default_cache()
    if cache is None:
        return build_system_matrix(geom, dims, model)
    return cache.get_or_build(geom, dims, model)

def solve_model(
    model: QuboModel,
    method: SolverMethod = SolverMethod.ANNEAL,
    schedule: Optional[AnnealSchedule] = None,
    workers: int = 1,
    cap: int = 24,
) -> SolveResult:
    if SolverMethod(method) == SolverMethod.EXACT:
        return brute_force(model, cap=cap)
    return simulated_anneal(model, schedule or AnnealSchedule(), workers=workers)

def check_bound(model: QuboModel, result: SolveResult):
    """The residual is a sum of squares, so no energy may fall below -offset."""
    floor = -model.offset - BOUND_TOLERANCE * max(1.0, model.offset)
    if result.best_energy < floor:
        raise BoundViolation(
            f"achieved energy {result.best_energy} is below the theoretical minimum {-model.offset}"
        )

def solve_report(model: QuboModel, result: SolveResult) -> Dict[str, Any]:
    """Deterministic summary of a solve; timings stay in the logs."""
    solver = {k: v for k, v in result.metadata.items() if k != "duration_ms"}
    gap = result.gap(model)
    return {
        "format_version": REPORT_FORMAT_VERSION,
        "kind": "solve",
        "num_vars": model.num_vars,
        "fingerprint": model.fingerprint(),
        "energy": {
            "theoretical_minimum": -model.offset,
            "achieved": result.best_energy,
            "gap_percent": max(0.0, 100.0 * gap) if np.isfinite(gap) else None,
            "samples": [e for _, e in result.samples],
            "bound_check": "passed",
        },
        "one_hot_valid": result.one_hot_valid,
        "minimizers": len(result.minimizers),
        "solver": solver,
    }

def write_reports(report: Dict[str, Any], output_dir: Path, stem: str = "report") -> Dict[str, Path]:
    paths = {}
    for fmt, suffix in (("json", ".json"), ("markdown", ".md")):
        path = output_dir / f"{stem}{suffix}"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(report_generator.generate_report(report, fmt))
        paths[fmt] = path
    return paths

def to_mask(image: GridImage) -> BinaryImage:
    return BinaryImage((image.values > 0.0).astype(np.uint8))

@dataclass
class PipelineResult:
    report: Dict[str, Any]
    paths: Dict[str, Path]
    model: QuboModel
    result: SolveResult
    qubo_mask: BinaryImage
    baseline_mask: BinaryImage
    truth_mask: Optional[BinaryImage] = None
    timings_ms: Dict[str, int] = field(default_factory=dict)

class PipelineOrchestrator:
    """
    End-to-end run: phantom, projection, acquisition effects, preprocessing,
    QUBO build, solve, and comparison against the FBP + Otsu baseline and the
    ground truth.
    """

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.output_dir = config.resolved_output_dir()
        self.timings_ms: Dict[str, int] = {}
        self.paths: Dict[str, Path] = {}

    @contextmanager
    def _stage(self, name: str):
        start = time.time()
        try:
            yield
        except Exception as e:
            logger.error("pipeline_stage_failed", stage=name, error=str(e))
            raise
        duration = int((time.time() - start) * 1000)
        self.timings_ms[name] = duration
        logger.info("pipeline_stage_complete", stage=name, duration_ms=duration)

    def _write_image(self, name: str, image, csv: bool = True):
        self.paths[f"{name}_pgm"] = formats.write_pgm(image, self.output_dir / f"{name}.pgm", png=self.config.png)
        if csv:
            self.paths[f"{name}_csv"] = formats.write_image_csv(image, self.output_dir / f"{name}.csv")

    def _ground_truth(self) -> Tuple[Optional[GridImage], Tuple[int, int]]:
        phantom = self.config.phantom
        if phantom.input_image:
            truth = formats.read_image(phantom.input_image)
            return truth, truth.dims
        if self.config.acquisition.input_sinogram:
            return None, (phantom.width, phantom.height)

        seed = phantom.seed if phantom.seed is not None else self.config.seed
        mask = generate_phantom(phantom.kind, phantom.width, phantom.height, seed)
        return scale_binary(mask, phantom.alpha), mask.dims

    def _geometry(self, dims: Tuple[int, int]) -> ProjectionGeometry:
        geometry = self.config.geometry
        if geometry.angles is None:
            return default_geometry(
                dims[0],
                dims[1],
                angle_step=geometry.angle_step,
                bin_count=geometry.bin_count,
                bin_width=geometry.bin_width,
                detector_offset=geometry.detector_offset,
            )
        base = default_geometry(dims[0], dims[1], bin_width=geometry.bin_width)
        return ProjectionGeometry(
            angles=tuple(geometry.angles),
            bin_count=geometry.bin_count or base.bin_count,
            bin_width=geometry.bin_width,
            detector_offset=geometry.detector_offset,
        )

    def _acquire(self, truth: Optional[GridImage], dims: Tuple[int, int]) -> Sinogram:
        acquisition = self.config.acquisition
        if acquisition.input_sinogram:
            sino = formats.read_sinogram_csv(acquisition.input_sinogram)
        else:
            sm = system_matrix_for(self._geometry(dims), dims, self.config.geometry.weight())
            sino = forward_project(sm, truth)

        sino = add_constant_offset(sino, acquisition.constant_offset)
        noise_seed = acquisition.noise_seed if acquisition.noise_seed is not None else self.config.seed
        sino = add_gaussian_noise(sino, acquisition.noise_sigma, noise_seed)
        if acquisition.intensity_mode:
            sino = intensity_to_attenuation(attenuation_to_intensity(sino, acquisition.i0), acquisition.i0)
        if acquisition.quantize_step is not None:
            sino = quantize_sinogram(sino, acquisition.quantize_step)
        return bin_detector(sino, acquisition.detector_binning)

    def _preprocess(self, sino: Sinogram) -> Sinogram:
        preprocess = self.config.preprocess
        if preprocess.background_columns is not None:
            if 2 * preprocess.background_columns <= sino.geometry.bin_count:
                sino = background_subtract(sino, BorderColumns(n=preprocess.background_columns))
            else:
                logger.warning(
                    "background_subtraction_skipped",
                    columns=preprocess.background_columns,
                    bins=sino.geometry.bin_count,
                )
        if preprocess.normalize:
            sino = normalize_columns(sino)
        return sino

    def _baseline(self, sino: Sinogram, sm: SystemMatrix) -> Tuple[GridImage, BinaryImage]:
        fbp = fbp_reconstruct(sino, sm)
        try:
            mask = threshold_segment(fbp, "otsu")
        except DegenerateHistogram as e:
            logger.warning("baseline_threshold_degenerate", error=str(e))
            mask = BinaryImage(np.zeros(fbp.values.shape, dtype=np.uint8))
        return fbp, mask

    def _encoding(self, dims: Tuple[int, int], sino: Sinogram, sm: SystemMatrix, reference: BinaryImage) -> EncodingSpec:
        encoding = self.config.encoding
        width, height = dims
        if encoding.mode == EncodingMode.RECONSTRUCTION:
            return EncodingSpec.reconstruction(encoding.bits, width, height)

        levels = tuple(encoding.levels) if encoding.levels else (self.config.phantom.alpha,)
        if self.config.preprocess.estimate_alpha:
            if len(levels) != 1:
                raise InvalidArgument("alpha estimation needs a single attenuation level")
            alpha = estimate_alpha(sino, sm, reference)
            if not alpha > 0.0:
                raise DomainError(f"estimated alpha {alpha} is not positive")
            levels = (alpha,)
        return EncodingSpec.segmentation(levels, width, height, one_hot_penalty=encoding.one_hot_penalty)

    def run(self) -> PipelineResult:
        config = self.config
        config.check_paths()
        logger.info("pipeline_start", output_dir=str(self.output_dir), mode=config.encoding.mode.value)

        with self._stage("phantom"):
            truth, dims = self._ground_truth()
            truth_mask = to_mask(truth) if truth is not None else None
            if truth is not None:
                self._write_image("truth", truth)

        with self._stage("acquire"):
            raw = self._acquire(truth, dims)
            self.paths["sinogram_raw"] = formats.write_sinogram_csv(raw, self.output_dir / "sinogram_raw.csv")

        with self._stage("preprocess"):
            sino = self._preprocess(raw)
            self.paths["sinogram"] = formats.write_sinogram_csv(sino, self.output_dir / "sinogram.csv")
            sm = system_matrix_for(sino.geometry, dims, config.geometry.weight())

        with self._stage("baseline"):
            fbp, baseline_mask = self._baseline(sino, sm)
            self._write_image("fbp", fbp)
            self._write_image("baseline_mask", baseline_mask, csv=False)

        with self._stage("build"):
            enc = self._encoding(dims, sino, sm, baseline_mask)
            model = build_qubo(sm, sino, enc)
            self.paths["qubo"] = formats.write_qubo(model, self.output_dir / "model.qubo")

        with self._stage("solve"):
            result = solve_model(
                model,
                method=config.solver.method,
                schedule=config.solver.schedule(config.seed),
                workers=config.solver.workers,
                cap=config.solver.brute_force_cap,
            )
            check_bound(model, result)
            qubo_image = decode(result.best_assignment, enc)
            qubo_mask = to_mask(qubo_image)
            self._write_image("qubo_image", qubo_image)
            self._write_image("qubo_mask", qubo_mask, csv=False)

        with self._stage("compare"):
            comparisons = {}
            pairs = [("qubo_vs_baseline", qubo_mask, baseline_mask)]
            if truth_mask is not None:
                pairs += [("qubo_vs_truth", qubo_mask, truth_mask), ("baseline_vs_truth", baseline_mask, truth_mask)]
            for name, a, b in pairs:
                comparison = compare_segmentations(a, b)
                comparisons[name] = comparison.to_dict()
                self._write_image(f"diff_{name}", comparison.diff_mask, csv=False)

        report = solve_report(model, result)
        report.update({
            "kind": "run",
            "mode": enc.mode.value,
            "levels": enc.level_values().tolist() if enc.mode == EncodingMode.SEGMENTATION else None,
            "variable_counts": {
                "segmentation": enc.num_pixels * (len(config.encoding.levels) if config.encoding.levels else 1),
                "reconstruction": enc.num_pixels * config.encoding.bits,
            },
            "comparisons": comparisons,
            "config": config.model_dump(mode="json"),
        })
        report["energy"]["residual_of_truth"] = residual(sm, sino, truth) if truth is not None else None

        self.paths.update({f"report_{k}": v for k, v in write_reports(report, self.output_dir).items()})
        self.paths["assignment"] = formats.write_json(
            {"format_version": REPORT_FORMAT_VERSION, "bits": result.best_assignment.bits.tolist()},
            self.output_dir / "assignment.json",
        )

        logger.info(
            "pipeline_complete",
            achieved=result.best_energy,
            theoretical_minimum=-model.offset,
            comparisons={k: round(v["dice"], 4) for k, v in comparisons.items()},
            duration_ms=sum(self.timings_ms.values()),
        )
        return PipelineResult(
            report=report,
            paths=dict(self.paths),
            model=model,
            result=result,
            qubo_mask=qubo_mask,
            baseline_mask=baseline_mask,
            truth_mask=truth_mask,
            timings_ms=dict(self.timings_ms),
        )

def run_pipeline(config: PipelineConfig) -> PipelineResult:
    return PipelineOrchestrator(config).run()
