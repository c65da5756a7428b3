import hashlib
import json
import os

import numpy as np
import pytest
from typer.testing import CliRunner

from morse_action.cli import app
from morse_action.engine.families import pendulum, quartic_velocity
from morse_action.engine.manifold import BoundaryCondition, ChartedManifold
from morse_action.engine.pathspace import DiscretePath, constant_path, hessian, load_matrix

PIPELINE = ["verify", "find", "index", "flow", "complex", "homology"]

runner = CliRunner()


def _run(*args):
    return runner.invoke(app, [str(a) for a in args])


def _pipeline(problem, *options):
    for stage in PIPELINE:
        result = _run(stage, problem, *options)
        assert result.exit_code == 0, f"{stage}: {result.output}"
    return json.loads(result.stdout)


def _read(directory, name):
    with open(os.path.join(directory, name)) as f:
        return json.load(f)


def _digests(directory):
    """ sha256 of every artifact under directory, the log excluded """
    digests = {}
    for root, _, files in os.walk(directory):
        for name in files:
            if name.endswith(".log"):
                continue
            path = os.path.join(root, name)
            with open(path, "rb") as f:
                digests[os.path.relpath(path, directory)] = hashlib.sha256(f.read()).hexdigest()
    return digests


def test_verify_pendulum(problem_file):
    problem = problem_file("pendulum")
    result = _run("verify", problem, "--mesh", 32)
    assert result.exit_code == 0, result.output
    report = json.loads(result.stdout)
    assert report["passed"] and report["mesh"] == 32


def test_verify_inverted_oscillator_fails(problem_file):
    result = _run("verify", problem_file("inverted_oscillator"))
    assert result.exit_code == 1
    assert json.loads(result.stdout)["growth"]["kinetic_lower_bound"]["passed"] is False


def test_stages_need_their_inputs(problem_file):
    problem = problem_file("pendulum")
    assert _run("find", problem, "--mesh", 32).exit_code == 3
    assert _run("index", problem, "--mesh", 32).exit_code == 3
    assert _run("homology", problem).exit_code == 3


def test_invalid_problems(problem_file, tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{\"name\": \"broken\",")
    assert _run("verify", broken).exit_code == 2
    assert _run("verify", tmp_path / "missing.json").exit_code == 2
    assert _run("verify", problem_file("pendulum", lagrangian={"family": "nope"})).exit_code == 2
    result = _run("verify", problem_file("pendulum"), "--mesh", 4)
    assert result.exit_code == 2
    assert "Error" in result.output


@pytest.mark.parametrize("mesh", [32, 64])
def test_pendulum_pipeline(problem_file, mesh):
    report = _pipeline(problem_file("pendulum"), "--mesh", mesh)
    assert report["betti"] == [1, 1]
    assert report["comparison"]["passed"]


def test_duffing_pipeline(problem_file):
    problem = problem_file("duffing")
    report = _pipeline(problem, "--mesh", 64)
    assert report["betti"] == [1, 0]
    assert report["torsion"] == {"0": [], "1": []}
    out = os.path.join(os.path.dirname(problem), "out", "duffing")
    with open(os.path.join(out, "complex.json")) as f:
        complex_ = json.load(f)
    assert complex_["generators"] == {"0": ["cp-000", "cp-001"], "1": ["cp-002"]}
    assert sorted(complex_["boundary"]["1"]) == [[-1], [1]]
    assert os.path.exists(os.path.join(out, "paths", "cp-002.csv"))
    assert os.path.exists(os.path.join(out, "trajectories", "cp-002_plus.csv"))


def test_winding_pipeline(problem_file):
    report = _pipeline(problem_file("winding"), "--mesh", 64)
    assert report["betti"] == [3]
    assert report["comparison"]["passed"]


def test_free_loops_are_rejected(problem_file):
    problem = problem_file("free_loops", discretization={"N": 32})
    assert _run("verify", problem).exit_code == 0
    assert _run("find", problem).exit_code == 0
    index = _run("index", problem)
    assert index.exit_code == 1
    assert json.loads(index.stdout)["degenerate_below_sublevel"]
    result = _run("flow", problem)
    assert result.exit_code == 1
    assert "DegeneracyError" in result.output


def test_find_is_deterministic(problem_file, tmp_path):
    problem = problem_file("pendulum")
    _run("verify", problem, "--mesh", 32)
    outputs = []
    for _ in range(2):
        assert _run("find", problem, "--mesh", 32).exit_code == 0
        with open(tmp_path / "out" / "pendulum" / "critical_points.json", "rb") as f:
            outputs.append(f.read())
    assert outputs[0] == outputs[1]


def test_probe_quartic(problem_file):
    result = _run("probe-c2", problem_file("quartic"), "--mesh", 64)
    assert result.exit_code == 0, result.output
    report = json.loads(result.stdout)
    assert [row["mesh"] for row in report["meshes"]] == [64]
    assert report["min_gap"] >= 0.5


def test_duffing_homology_is_stable_under_refinement(problem_file, tmp_path):
    problem = problem_file("duffing")
    reports, indices = [], []
    for mesh in (64, 128):
        out = tmp_path / f"duffing_{mesh}"
        reports.append(_pipeline(problem, "--mesh", mesh, "--out", out))
        index = _read(out, "index.json")
        assert index["mesh_stable"] is True
        indices.append(sorted(p["index"] for p in index["critical_points"] if p["action"] < index["sublevel"]))
    assert reports[0]["betti"] == reports[1]["betti"] == [1, 0]
    assert indices[0] == indices[1] == [0, 0, 1]


def test_pendulum_indices_are_mesh_stable(problem_file, tmp_path):
    problem = problem_file("pendulum")
    for stage in ("verify", "find", "index"):
        assert _run(stage, problem, "--mesh", 32).exit_code == 0
    index = _read(tmp_path / "out" / "pendulum", "index.json")
    assert index["mesh_stable"] is True
    assert all(p["refined"]["index"] == p["index"] for p in index["critical_points"])


def test_index_dumps_the_pencil_of_every_point(problem_file, tmp_path):
    problem = problem_file("pendulum")
    assert _run("verify", problem, "--mesh", 32).exit_code == 0
    assert _run("find", problem, "--mesh", 32).exit_code == 0
    result = _run("index", problem, "--mesh", 32, "--dump-matrices")
    assert result.exit_code == 0, result.output
    out = tmp_path / "out" / "pendulum"
    circle = ChartedManifold.torus(1)
    points = json.loads(result.stdout)["critical_points"]
    assert points
    for point in points:
        path = DiscretePath.from_csv(str(out / point["path_csv_ref"]), circle)
        pencil = hessian(pendulum(0.5), path, BoundaryCondition.periodic_loops())
        assert np.array_equal(load_matrix(str(out / point["matrices"]["hessian"])), pencil.H)
        assert np.array_equal(load_matrix(str(out / point["matrices"]["gram"])), pencil.G)
    assert _read(out, "index.json")["critical_points"][0]["matrices"] == points[0]["matrices"]


def test_hessian_continuity_dumps_the_unperturbed_pencil(problem_file, tmp_path):
    result = _run("probe-c2", problem_file("quartic"), "--mesh", 16, "--dump-matrices")
    assert result.exit_code == 0, result.output
    (row,) = json.loads(result.stdout)["meshes"]
    assert row["matrices"] == {"hessian": "matrices/probe_N16_H.txt", "gram": "matrices/probe_N16_G.txt"}
    out = tmp_path / "out" / "quartic"
    pencil = hessian(quartic_velocity(0.25), constant_path(ChartedManifold.euclidean(1), [0.0], 16),
                     BoundaryCondition.free(), product="h1")
    assert np.array_equal(load_matrix(str(out / row["matrices"]["hessian"])), pencil.H)
    assert np.array_equal(load_matrix(str(out / row["matrices"]["gram"])), pencil.G)
    assert pencil.H.shape == (17, 17)


def test_pipeline_artifacts_are_reproducible(problem_file, tmp_path):
    problem = problem_file("pendulum")
    out = tmp_path / "out" / "pendulum"
    _pipeline(problem, "--mesh", 32)
    first = _digests(out)
    _pipeline(problem, "--mesh", 32)
    second = _digests(out)
    for name in ("verify.json", "critical_points.json", "index.json", "flow.json",
                 "complex.json", "homology.json"):
        assert name in first
    assert first == second


@pytest.mark.slow
@pytest.mark.parametrize("name, betti", [("pendulum", [1, 1]), ("duffing", [1, 0])])
def test_pipeline_on_the_fine_mesh(problem_file, name, betti):
    report = _pipeline(problem_file(name), "--mesh", 256)
    assert report["betti"] == betti
    assert report["comparison"]["passed"]
