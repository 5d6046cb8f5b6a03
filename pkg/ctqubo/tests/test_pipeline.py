import numpy as np
import pytest
from pydantic import ValidationError

from ctqubo.export import formats
from ctqubo.export.report_generator import report_generator
from ctqubo.models.config_models import PipelineConfig, load_pipeline_config
from ctqubo.models.errors import BoundViolation, InvalidArgument, IoError, ParseError
from ctqubo.orchestration.pipeline import check_bound, run_pipeline, solve_report
from ctqubo.projection.system_matrix import Sinogram, default_geometry
from ctqubo.qubo.model import Assignment, QuboModel
from ctqubo.solver.exact import brute_force
from ctqubo.solver.result import SolveResult

def _config(tmp_path, **overrides):
    data = {
        "phantom": {"kind": "disk", "width": 8, "height": 8, "alpha": 2.0},
        "geometry": {"angle_step": 15.0},
        "solver": {"sweeps": 2000, "restarts": 2},
        "output_dir": str(tmp_path / "run"),
        "seed": 5,
    }
    for section, values in overrides.items():
        if isinstance(values, dict):
            data.setdefault(section, {}).update(values)
        else:
            data[section] = values
    return PipelineConfig.model_validate(data)

def test_disk_run_writes_artifacts_and_report(tmp_path):
    result = run_pipeline(_config(tmp_path))
    out = tmp_path / "run"

    for name in ("truth.pgm", "sinogram_raw.csv", "sinogram.csv", "fbp.pgm", "baseline_mask.pgm",
                 "model.qubo", "qubo_image.csv", "qubo_mask.pgm", "diff_qubo_vs_truth.pgm",
                 "report.json", "report.md", "assignment.json"):
        assert (out / name).exists(), name

    report = formats.read_json(out / "report.json")
    assert report["kind"] == "run"
    assert report["num_vars"] == 64
    assert report["levels"] == [2.0]
    assert report["energy"]["bound_check"] == "passed"
    assert report["energy"]["theoretical_minimum"] == -result.model.offset
    assert report["energy"]["residual_of_truth"] == pytest.approx(0.0, abs=1e-9)
    assert report["comparisons"]["qubo_vs_truth"]["dice"] >= 0.9
    assert "duration_ms" not in report["solver"]

    assert (out / "report.md").read_text().startswith("# Pipeline Run Report")
    assert formats.read_json(out / "assignment.json")["bits"] == result.result.best_assignment.bits.tolist()
    assert set(result.timings_ms) == {"phantom", "acquire", "preprocess", "baseline", "build", "solve", "compare"}

def test_default_config_segments_disk(tmp_path):
    result = run_pipeline(PipelineConfig(output_dir=str(tmp_path / "default")))
    report = result.report

    assert report["num_vars"] == 256
    assert report["energy"]["bound_check"] == "passed"
    assert report["energy"]["gap_percent"] <= 1.0
    assert report["energy"]["residual_of_truth"] == pytest.approx(0.0, abs=1e-9)
    assert report["comparisons"]["qubo_vs_truth"]["dice"] >= 0.95
    assert report["comparisons"]["baseline_vs_truth"]["dice"] >= 0.9

def test_run_is_reproducible(tmp_path):
    first = run_pipeline(_config(tmp_path / "a"))
    second = run_pipeline(_config(tmp_path / "b"))
    assert first.result.best_assignment.as_tuple() == second.result.best_assignment.as_tuple()
    assert first.report["fingerprint"] == second.report["fingerprint"]

def test_alpha_estimation_replaces_level(tmp_path):
    config = _config(tmp_path, preprocess={"estimate_alpha": True, "background_columns": None})
    result = run_pipeline(config)
    assert len(result.report["levels"]) == 1
    assert result.report["levels"][0] > 0.0

def test_alpha_estimation_needs_single_level(tmp_path):
    config = _config(tmp_path, preprocess={"estimate_alpha": True}, encoding={"levels": [1.0, 2.0]})
    with pytest.raises(InvalidArgument):
        run_pipeline(config)

def test_zero_sinogram_falls_back_to_empty_baseline(tmp_path):
    geometry = default_geometry(4, 4)
    sino_path = formats.write_sinogram_csv(Sinogram.zeros(geometry), tmp_path / "zero.csv")
    config = _config(
        tmp_path,
        phantom={"width": 4, "height": 4},
        acquisition={"input_sinogram": str(sino_path)},
    )
    result = run_pipeline(config)

    assert result.baseline_mask.count() == 0
    assert result.qubo_mask.count() == 0
    assert result.truth_mask is None
    assert result.report["energy"]["residual_of_truth"] is None
    assert set(result.report["comparisons"]) == {"qubo_vs_baseline"}

def test_acquisition_effects_change_detector(tmp_path):
    config = _config(
        tmp_path,
        acquisition={"intensity_mode": True, "detector_binning": 2, "noise_sigma": 0.01},
        preprocess={"background_columns": 1},
    )
    result = run_pipeline(config)

    sino = formats.read_sinogram_csv(tmp_path / "run" / "sinogram_raw.csv")
    assert sino.geometry.bin_width == 2.0
    assert sino.geometry.bin_count == default_geometry(8, 8).bin_count // 2
    assert result.report["energy"]["bound_check"] == "passed"

def test_reconstruction_mode_counts_bits(tmp_path):
    config = _config(
        tmp_path,
        phantom={"kind": "checker", "width": 3, "height": 3, "alpha": 1.0},
        geometry={"angles": [0.0, 45.0, 90.0, 135.0]},
        preprocess={"background_columns": None},
        encoding={"mode": "reconstruction", "bits": 2},
        solver={"method": "exact"},
    )
    result = run_pipeline(config)

    assert result.report["mode"] == "reconstruction"
    assert result.report["levels"] is None
    assert result.report["variable_counts"] == {"segmentation": 9, "reconstruction": 18}
    assert result.result.best_energy == pytest.approx(-result.model.offset, abs=1e-9 * result.model.offset)

def test_load_config_errors(tmp_path):
    with pytest.raises(IoError):
        load_pipeline_config(str(tmp_path / "missing.json"))

    path = tmp_path / "config.json"
    path.write_text('{"phantom": ')
    with pytest.raises(ParseError):
        load_pipeline_config(str(path))

    path.write_text('{"solver": {"sweeps": 0}}')
    with pytest.raises(ValidationError):
        load_pipeline_config(str(path))

    path.write_text('{"acquisition": {"input_sinogram": "nowhere.csv"}}')
    with pytest.raises(IoError, match="acquisition.input_sinogram"):
        load_pipeline_config(str(path))

    path.write_text("")
    assert load_pipeline_config(str(path)) == PipelineConfig()

def test_output_dir_comes_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CTQUBO_OUTPUT_DIR", str(tmp_path / "env"))
    assert PipelineConfig().resolved_output_dir() == tmp_path / "env"
    assert PipelineConfig(output_dir="explicit").resolved_output_dir().name == "explicit"

def test_bound_check_rejects_impossible_energy():
    model = QuboModel.from_terms(1, {0: -4.0}, {}, offset=4.0)
    check_bound(model, brute_force(model))

    below = SolveResult(Assignment.zeros(1), -5.0, [], np.array([-5.0]))
    with pytest.raises(BoundViolation):
        check_bound(model, below)

def test_solve_report_and_formats():
    model = QuboModel.from_terms(2, {0: -1.0, 1: -1.0}, {(0, 1): 2.0}, offset=1.0)
    report = solve_report(model, brute_force(model))

    assert report["kind"] == "solve"
    assert report["minimizers"] == 2
    assert report["energy"]["gap_percent"] == 0.0
    assert report_generator.generate_report(report, "JSON").startswith(b"{")
    assert report_generator.generate_report(report, "markdown").startswith(b"# QUBO Solve Report")

    with pytest.raises(InvalidArgument):
        report_generator.generate_report(report, "pdf")

def test_gap_never_reported_negative():
    model = QuboModel.from_terms(1, {0: -4.0}, {}, offset=4.0)
    rounded = SolveResult(Assignment(np.array([1])), -4.0 - 1e-13, [], np.array([-4.0 - 1e-13]))
    check_bound(model, rounded)

    assert rounded.gap(model) < 0.0
    assert solve_report(model, rounded)["energy"]["gap_percent"] == 0.0
