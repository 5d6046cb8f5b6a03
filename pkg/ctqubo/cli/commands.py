#!/usr/bin/env python3
import os
from contextlib import contextmanager
from pathlib import Path
from typing import List, Optional, Tuple

import structlog
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from ctqubo.baseline.fbp import FilterKind, fbp_reconstruct
from ctqubo.baseline.segmentation import compare_segmentations, threshold_segment
from ctqubo.cache.matrix_cache import SystemMatrixCache
from ctqubo.core.images import scale_binary
from ctqubo.core.phantoms import generate_phantom
from ctqubo.export import formats
from ctqubo.logging import configure_logging
from ctqubo.models.config_models import DEFAULT_OUTPUT_DIR, PipelineConfig, SolverMethod, load_pipeline_config
from ctqubo.models.ct_models import (
    AnnealSchedule,
    EncodingSpec,
    PhantomKind,
    ProjectionGeometry,
    WeightModel,
    WeightModelKind,
)
from ctqubo.models.errors import EXIT_DATA, EXIT_USAGE, CtQuboError, InvalidArgument
from ctqubo.orchestration.pipeline import (
    REPORT_FORMAT_VERSION,
    check_bound,
    run_pipeline,
    solve_model,
    solve_report,
    system_matrix_for,
    to_mask,
    write_reports,
)
from ctqubo.preprocess.sinogram_ops import BorderColumns, add_constant_offset, add_gaussian_noise, background_subtract
from ctqubo.projection.system_matrix import default_geometry, forward_project
from ctqubo.qubo.builder import build_qubo
from ctqubo.qubo.model import decode

app = typer.Typer(help="ctqubo - one-step CT segmentation with QUBO models")
console = Console()
logger = structlog.get_logger()

@app.callback()
def main():
    configure_logging()

@contextmanager
def _exit_codes(command: str):
    """Map library errors onto the documented exit codes."""
    try:
        yield
    except CtQuboError as e:
        logger.error("command_failed", command=command, error=str(e), exit_code=e.exit_code)
        console.print(f"[red]Error: {e}[/red]")
        raise typer.Exit(code=e.exit_code)
    except ValidationError as e:
        logger.error("command_failed", command=command, error=str(e), exit_code=EXIT_USAGE)
        console.print(f"[red]Invalid parameters: {e}[/red]")
        raise typer.Exit(code=EXIT_USAGE)
    except ImportError as e:
        logger.error("command_failed", command=command, error=str(e), exit_code=EXIT_DATA)
        console.print(f"[red]Error: {e}[/red]")
        raise typer.Exit(code=EXIT_DATA)

def _output_dir(output_dir: Optional[Path]) -> Path:
    return output_dir or Path(os.getenv("CTQUBO_OUTPUT_DIR", DEFAULT_OUTPUT_DIR))

def _floats(text: str, what: str) -> Tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise InvalidArgument(f"{what} must be a comma-separated list of numbers, got {text!r}")

def _geometry(
    width: int,
    height: int,
    angle_step: float,
    angles: Optional[str],
    bins: Optional[int],
    bin_width: float,
    detector_offset: float,
) -> ProjectionGeometry:
    if angles is None:
        return default_geometry(width, height, angle_step, bins, bin_width, detector_offset)
    base = default_geometry(width, height, bin_width=bin_width)
    return ProjectionGeometry(
        angles=_floats(angles, "angles"),
        bin_count=bins or base.bin_count,
        bin_width=bin_width,
        detector_offset=detector_offset,
    )

def _summary_table(title: str, rows: List[Tuple[str, str]]) -> Table:
    table = Table(title=title)
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="green")
    for key, value in rows:
        table.add_row(key, value)
    return table

@app.command()
def phantom(
    kind: PhantomKind = typer.Option(PhantomKind.DISK, help="Phantom shape"),
    width: int = typer.Option(16, help="Width in pixels"),
    height: int = typer.Option(16, help="Height in pixels"),
    seed: int = typer.Option(0, help="Seed for random phantoms"),
    alpha: Optional[float] = typer.Option(None, help="Scale the mask to this attenuation; omitted writes the mask"),
    output: Path = typer.Option(Path("phantom.pgm"), help="Output path (.pgm or .csv)"),
    png: bool = typer.Option(False, help="Write a PNG preview next to a PGM"),
):
    """Generate a synthetic phantom image"""
    with _exit_codes("phantom"):
        mask = generate_phantom(kind, width, height, seed)
        image = mask if alpha is None else scale_binary(mask, alpha)
        written = formats.write_image(image, output, png=png)
        console.print(f"[green]✓[/green] {kind.value} phantom ({mask.count()} pixels set) -> {written}")

@app.command()
def project(
    image: Optional[Path] = typer.Option(None, help="Input image (.pgm or .csv); omitted projects a generated phantom"),
    kind: PhantomKind = typer.Option(PhantomKind.DISK, help="Phantom shape when no image is given"),
    width: int = typer.Option(16, help="Phantom width"),
    height: int = typer.Option(16, help="Phantom height"),
    seed: int = typer.Option(0, help="Phantom seed"),
    alpha: float = typer.Option(1.0, help="Phantom attenuation"),
    angle_step: float = typer.Option(10.0, help="Angle spacing in degrees"),
    angles: Optional[str] = typer.Option(None, help="Explicit comma-separated angles in degrees"),
    bins: Optional[int] = typer.Option(None, help="Detector bins; omitted covers the rotated footprint"),
    bin_width: float = typer.Option(1.0, help="Bin width in pixel units"),
    detector_offset: float = typer.Option(0.0, help="Detector center offset"),
    weight_model: WeightModelKind = typer.Option(WeightModelKind.AREA_OVERLAP, help="Pixel weight model"),
    subsample_k: int = typer.Option(16, help="Subpixel samples per axis for the subsample model"),
    noise_sigma: float = typer.Option(0.0, help="Gaussian noise sigma"),
    noise_seed: int = typer.Option(0, help="Noise seed"),
    offset: float = typer.Option(0.0, help="Constant background added to every bin"),
    output: Path = typer.Option(Path("sinogram.csv"), help="Output sinogram CSV"),
):
    """Forward-project an image into a sinogram CSV"""
    with _exit_codes("project"):
        if image is not None:
            source = formats.read_image(image)
        else:
            source = scale_binary(generate_phantom(kind, width, height, seed), alpha)

        geom = _geometry(source.width, source.height, angle_step, angles, bins, bin_width, detector_offset)
        sm = system_matrix_for(geom, source.dims, WeightModel(kind=weight_model, k=subsample_k))
        sino = forward_project(sm, source)
        sino = add_gaussian_noise(add_constant_offset(sino, offset), noise_sigma, noise_seed)
        written = formats.write_sinogram_csv(sino, output)
        console.print(
            f"[green]✓[/green] {geom.num_angles} angles x {geom.bin_count} bins -> {written}"
        )

@app.command()
def build(
    sinogram: Path = typer.Option(..., help="Sinogram CSV"),
    width: int = typer.Option(..., help="Image width"),
    height: int = typer.Option(..., help="Image height"),
    levels: Optional[str] = typer.Option(None, help="Comma-separated attenuation levels (segmentation)"),
    bits: Optional[int] = typer.Option(None, help="Bits per pixel (reconstruction)"),
    one_hot_penalty: Optional[float] = typer.Option(None, help="Same-pixel level penalty; omitted picks the default"),
    background_columns: Optional[int] = typer.Option(None, help="Subtract the mean of this many border columns first"),
    weight_model: WeightModelKind = typer.Option(WeightModelKind.AREA_OVERLAP, help="Pixel weight model"),
    subsample_k: int = typer.Option(16, help="Subpixel samples per axis for the subsample model"),
    output: Path = typer.Option(Path("model.qubo"), help="Output QUBO file"),
):
    """Build a segmentation or reconstruction QUBO from a sinogram"""
    with _exit_codes("build"):
        if (levels is None) == (bits is None):
            raise InvalidArgument("give exactly one of --levels (segmentation) or --bits (reconstruction)")

        sino = formats.read_sinogram_csv(sinogram)
        if background_columns is not None:
            sino = background_subtract(sino, BorderColumns(n=background_columns))

        if levels is not None:
            enc = EncodingSpec.segmentation(_floats(levels, "levels"), width, height, one_hot_penalty)
        else:
            enc = EncodingSpec.reconstruction(bits, width, height)

        sm = system_matrix_for(sino.geometry, (width, height), WeightModel(kind=weight_model, k=subsample_k))
        model = build_qubo(sm, sino, enc)
        written = formats.write_qubo(model, output)
        console.print(
            f"[green]✓[/green] {model.num_vars} variables, {model.quadratic.nnz} couplings, "
            f"offset {model.offset!r} -> {written}"
        )

@app.command()
def solve(
    qubo: Path = typer.Option(..., help="QUBO file"),
    method: SolverMethod = typer.Option(SolverMethod.ANNEAL, help="anneal or exact"),
    sweeps: int = typer.Option(1000, help="Sweeps per restart"),
    restarts: int = typer.Option(1, help="Independent restarts"),
    seed: int = typer.Option(0, help="Seed of restart 0"),
    t_initial: Optional[float] = typer.Option(None, help="Start temperature; omitted derives it from the model"),
    t_final: Optional[float] = typer.Option(None, help="End temperature"),
    workers: int = typer.Option(1, help="Threads running restarts"),
    cap: int = typer.Option(24, help="Largest variable count for exact enumeration"),
    output_dir: Optional[Path] = typer.Option(None, help="Output directory (default CTQUBO_OUTPUT_DIR)"),
    png: bool = typer.Option(False, help="Write PNG previews"),
):
    """Minimize a QUBO file and report the gap to the theoretical minimum"""
    with _exit_codes("solve"):
        out = _output_dir(output_dir)
        model = formats.read_qubo(qubo)
        schedule = AnnealSchedule(sweeps=sweeps, restarts=restarts, seed=seed, t_initial=t_initial, t_final=t_final)
        result = solve_model(model, method=method, schedule=schedule, workers=workers, cap=cap)
        check_bound(model, result)

        report = solve_report(model, result)
        write_reports(report, out, stem="solve_report")
        formats.write_json(
            {"format_version": report["format_version"], "bits": result.best_assignment.bits.tolist()},
            out / "assignment.json",
        )
        if model.encoding is not None:
            image = decode(result.best_assignment, model.encoding)
            formats.write_image_csv(image, out / "solution.csv")
            formats.write_pgm(image, out / "solution.pgm", png=png)
            formats.write_pgm(to_mask(image), out / "solution_mask.pgm", png=png)

        energy = report["energy"]
        gap = energy["gap_percent"]
        console.print(_summary_table("Solve Result", [
            ("Variables", str(model.num_vars)),
            ("Theoretical minimum", repr(energy["theoretical_minimum"])),
            ("Achieved energy", repr(energy["achieved"])),
            ("Gap", f"{gap:.4f}%" if gap is not None else "N/A"),
            ("One-hot valid", str(result.one_hot_valid)),
            ("Output", str(out)),
        ]))

@app.command()
def baseline(
    sinogram: Path = typer.Option(..., help="Sinogram CSV"),
    width: int = typer.Option(..., help="Image width"),
    height: int = typer.Option(..., help="Image height"),
    filter: FilterKind = typer.Option(FilterKind.RAMP, help="ramp or none"),
    threshold: Optional[float] = typer.Option(None, help="Fixed threshold; omitted uses Otsu"),
    output_dir: Optional[Path] = typer.Option(None, help="Output directory (default CTQUBO_OUTPUT_DIR)"),
    png: bool = typer.Option(False, help="Write PNG previews"),
):
    """Filtered back projection followed by thresholding"""
    with _exit_codes("baseline"):
        out = _output_dir(output_dir)
        sino = formats.read_sinogram_csv(sinogram)
        sm = system_matrix_for(sino.geometry, (width, height))
        image = fbp_reconstruct(sino, sm, filter)
        mask = threshold_segment(image, "otsu" if threshold is None else threshold)

        formats.write_image_csv(image, out / "fbp.csv")
        formats.write_pgm(image, out / "fbp.pgm", png=png)
        formats.write_pgm(mask, out / "baseline_mask.pgm", png=png)
        console.print(f"[green]✓[/green] FBP ({filter.value}) and mask ({mask.count()} pixels set) -> {out}")

@app.command()
def compare(
    a: Path = typer.Option(..., help="First mask (.pgm or .csv)"),
    b: Path = typer.Option(..., help="Second mask (.pgm or .csv)"),
    output_dir: Optional[Path] = typer.Option(None, help="Output directory (default CTQUBO_OUTPUT_DIR)"),
    png: bool = typer.Option(False, help="Write a PNG preview of the diff"),
):
    """Dice, pixel agreement and a diff image for two masks"""
    with _exit_codes("compare"):
        out = _output_dir(output_dir)
        comparison = compare_segmentations(formats.read_mask(a), formats.read_mask(b))
        formats.write_json({"format_version": REPORT_FORMAT_VERSION, **comparison.to_dict()}, out / "metrics.json")
        formats.write_pgm(comparison.diff_mask, out / "diff.pgm", png=png)
        console.print(_summary_table("Segmentation Comparison", [
            ("Dice", f"{comparison.dice:.4f}"),
            ("Pixel agreement", f"{comparison.pixel_agreement:.4f}"),
            ("Differing pixels", str(comparison.diff_mask.count())),
        ]))

@app.command()
def run(
    config: Optional[Path] = typer.Option(None, help="Pipeline config JSON; omitted runs the defaults"),
    output_dir: Optional[Path] = typer.Option(None, help="Override the configured output directory"),
    png: bool = typer.Option(False, help="Write PNG previews"),
):
    """Full pipeline: phantom, projection, QUBO solve, baseline and comparison"""
    with _exit_codes("run"):
        pipeline_config = load_pipeline_config(str(config)) if config else PipelineConfig()
        updates = {}
        if output_dir is not None:
            updates["output_dir"] = str(output_dir)
        if png:
            updates["png"] = True
        if updates:
            pipeline_config = pipeline_config.model_copy(update=updates)

        outcome = run_pipeline(pipeline_config)
        energy = outcome.report["energy"]
        rows = [
            ("Mode", outcome.report["mode"]),
            ("Variables", str(outcome.report["num_vars"])),
            ("Theoretical minimum", repr(energy["theoretical_minimum"])),
            ("Achieved energy", repr(energy["achieved"])),
            ("Gap", f"{energy['gap_percent']:.4f}%" if energy["gap_percent"] is not None else "N/A"),
        ]
        rows += [(f"Dice {name}", f"{m['dice']:.4f}") for name, m in sorted(outcome.report["comparisons"].items())]
        console.print(_summary_table("Pipeline Run", rows))

@app.command()
def cache_stats(
    cache_dir: Optional[Path] = typer.Option(None, help="Cache directory (default CTQUBO_CACHE_DIR)"),
    clear: bool = typer.Option(False, help="Remove every cached system matrix"),
):
    """Display system-matrix cache statistics"""
    with _exit_codes("cache-stats"):
        cache = SystemMatrixCache(str(cache_dir or os.getenv("CTQUBO_CACHE_DIR", "~/.cache/ctqubo")))
        if clear:
            console.print(f"[yellow]Removed {cache.clear_all()} entries[/yellow]")

        table = Table(title="Cache Statistics")
        table.add_column("Metric", style="cyan")
        table.add_column("Value", style="green")
        for key, value in cache.get_stats().items():
            table.add_row(key, f"{value:.3f}" if isinstance(value, float) else str(value))
        table.add_row("healthy", str(cache.health_check()))
        console.print(table)

if __name__ == "__main__":
    app()
