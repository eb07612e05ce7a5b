import csv
import json

import numpy as np
import pytest

from config.settings import ATLAS_VERSION
from models.dynamics import RasterJob, TargetKind, TracedPath
from models.itinerary import Itinerary
from repositories.artifact_repository import ArtifactRepository

RHO = 2.0 / 3.0


@pytest.fixture
def repository(output_dir):
    return ArtifactRepository(str(output_dir))


def test_ppm_layout():
    rgb = np.zeros((2, 3, 3), dtype=np.uint8)
    rgb[0, 0] = (255, 0, 0)
    rgb[1, 2] = (0, 0, 255)
    data = ArtifactRepository.encode_ppm(rgb)
    header = b"P6\n3 2\n255\n"
    assert data.startswith(header)
    body = data[len(header):]
    assert len(body) == 2 * 3 * 3
    assert body[:3] == bytes([255, 0, 0])
    assert body[-3:] == bytes([0, 0, 255])


def test_ppm_rejects_grayscale():
    with pytest.raises(ValueError):
        ArtifactRepository.encode_ppm(np.zeros((2, 3), dtype=np.uint8))


def test_saved_ppm_is_reproducible(repository, output_dir):
    rgb = np.random.default_rng(3).integers(0, 256, (4, 5, 3), dtype=np.uint8)
    path = repository.save_ppm("plane.ppm", rgb)
    first = (output_dir / "plane.ppm").read_bytes()
    repository.save_ppm("plane.ppm", rgb)
    assert path.endswith("plane.ppm")
    assert (output_dir / "plane.ppm").read_bytes() == first


def test_render_sidecar(repository, output_dir):
    job = RasterJob(rho=RHO, window=(-1.0, 1.0, -2.0, 2.0), resolution=(8, 4))
    repository.save_render_sidecar("plane.json", job, {"Shift": (0, 160, 0)}, {"Shift": 5})
    sidecar = json.loads((output_dir / "plane.json").read_text())
    assert sidecar["rho"] == [RHO, 0.0]
    assert sidecar["resolution"] == [8, 4]
    assert sidecar["legend"] == {"Shift": [0, 160, 0]}
    assert sidecar["counts"] == {"Shift": 5}


def test_records_are_sorted_json_lines(repository, output_dir):
    repository.save_records("centers.jsonl", [{"word": "0", "kind": "virtual_center"}, {"b": 1, "a": 2}])
    lines = (output_dir / "centers.jsonl").read_text().splitlines()
    assert lines == ['{"kind": "virtual_center", "word": "0"}', '{"a": 2, "b": 1}']


def test_trace_csv_and_summary(repository, output_dir):
    traced = TracedPath(target=Itinerary.finite(0), target_kind=TargetKind.VIRTUAL_CENTER,
                        t_samples=[0.0, 0.5], lambda_samples=[-0.1 + 0j, -0.2 + 0.1j],
                        levels=[1.5, 2.5], words=[(0,), (0, 1)], residuals=[0.0, 1e-9],
                        terminal_estimate=-0.2 + 0.1j, solver_distance=1e-4, depth=1,
                        tolerances={"trace_accept": 1e-7, "solver": 1e-10})
    repository.save_trace("trace.csv", traced, RHO)
    with open(output_dir / "trace.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ArtifactRepository.TRACE_HEADER
    assert rows[2][4] == "0 1"
    assert rows[-1][0] == "terminal"
    assert float(rows[-1][3]) == 1e-4
    summary = json.loads((output_dir / "trace.json").read_text())
    assert summary["samples"] == 2
    assert summary["max_residual"] == 1e-9
    assert summary["target_kind"] == "virtual_center"
    assert summary["solver_error"] is None
    assert summary["depth"] == 1
    assert summary["tol"] == {"solver": 1e-10, "trace_accept": 1e-7}
    assert summary["version"] == ATLAS_VERSION
