import json

import pytest

from app import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, main
from config.settings import ATLAS_VERSION, RunConfig, parse_complex
from models.errors import ConfigError


@pytest.mark.parametrize("text, value", [
    ("2/3", 2.0 / 3.0),
    ("0.5,-0.25", 0.5 - 0.25j),
    ("1+2j", 1 + 2j),
    (" -0.1 ", -0.1),
])
def test_parse_complex(text, value):
    assert parse_complex(text) == pytest.approx(value)


@pytest.mark.parametrize("text", ["", "1/0", "abc", "1,x"])
def test_parse_complex_rejects(text):
    with pytest.raises(ConfigError):
        parse_complex(text)


def test_recipe_with_overrides(tmp_path):
    recipe = tmp_path / "plane.env"
    recipe.write_text("RHO=0.5\nrender_width=64\nMAX_ITER=300\n")
    run = RunConfig.from_file(str(recipe), {"RENDER_WIDTH": "32"})
    assert run.rho == 0.5
    assert run.get_int("RENDER_WIDTH", 0) == 32
    assert run.budget().max_iter == 300
    with pytest.raises(ConfigError):
        RunConfig(rho=0.5, values={"TOL": "-1"}).budget()


def test_missing_recipe_is_a_config_error(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "missing.env"), "model-info"]) == EXIT_CONFIG
    assert "Configuration error" in capsys.readouterr().out


def test_bad_multiplier_is_a_config_error():
    assert main(["--rho", "1.5", "model-info"]) == EXIT_CONFIG


def test_malformed_trace_word(output_dir):
    assert main(["--output-dir", str(output_dir), "trace", "--word", "0,|"]) == EXIT_CONFIG


def test_classify(output_dir, capsys):
    assert main(["--output-dir", str(output_dir), "classify", "--lambda=-0.1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "Shift" in out
    assert "S0_lambda" in out


def test_render_writes_artifacts(output_dir):
    code = main(["--output-dir", str(output_dir), "--max-iter", "100", "render",
                 "--width", "8", "--height", "6", "--name", "tiny"])
    assert code == EXIT_OK
    assert (output_dir / "tiny.ppm").read_bytes().startswith(b"P6\n8 6\n255\n")
    sidecar = json.loads((output_dir / "tiny.json").read_text())
    assert sum(sidecar["counts"].values()) == 48


def test_solve_with_a_seed(output_dir):
    code = main(["--output-dir", str(output_dir), "solve", "--word=-1", "--seed=0.97,-2.2"])
    assert code == EXIT_OK
    lines = (output_dir / "solutions.jsonl").read_text().splitlines()
    record = json.loads(lines[0])
    assert record["kind"] == "virtual_center"
    assert record["lambda_re"] == pytest.approx(0.967, abs=1e-3)
    assert record["tol"] == 1e-10
    assert record["version"] == ATLAS_VERSION


def test_solve_reports_bad_words_and_keeps_going(output_dir):
    code = main(["--output-dir", str(output_dir), "solve", "--word", "a", "--word=-1",
                 "--seed=0.97,-2.2", "--name", "mixed"])
    assert code == EXIT_PARTIAL
    records = [json.loads(line) for line in (output_dir / "mixed.jsonl").read_text().splitlines()]
    assert records[0]["error"] == "InadmissibleWord"
    assert records[0]["version"] == ATLAS_VERSION
    assert records[1]["kind"] == "virtual_center"


def test_solve_rejects_a_mismatched_kind(output_dir):
    code = main(["--output-dir", str(output_dir), "solve", "--word=-1", "--kind", "parabolic",
                 "--seed=0.97,-2.2"])
    assert code == EXIT_PARTIAL


def test_model_info(capsys):
    assert main(["model-info"]) == EXIT_OK
    assert "lambda_0" in capsys.readouterr().out


def test_duplicate_solve_requests_give_identical_records(output_dir):
    code = main(["--output-dir", str(output_dir), "solve", "--word=-1", "--word=-1",
                 "--seed=0.97,-2.2", "--name", "twice"])
    assert code == EXIT_OK
    first, second = (output_dir / "twice.jsonl").read_text().splitlines()
    assert first == second
