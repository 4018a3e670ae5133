import json

import pandas as pd
import pytest

from radiallab import db
from radiallab.errors import ConfigError
from radiallab.models import LabRun
from radiallab.radial_ode import IntegratorConfig
from radiallab.scan_cli import Axis, ScanSpec, run_scan


def test_constants_text(runner):
    result = runner.invoke(args=["constants", "-N", "3", "-p", "3"])
    assert result.exit_code == 0
    assert "m_dagger" in result.output
    assert "q_crit" in result.output
    assert "# 2p/(p+1)" in result.output


def test_constants_json(runner):
    result = runner.invoke(args=["constants", "-N", "3", "-p", "4", "-q", "1.6", "--json"])
    assert result.exit_code == 0
    payload = json.loads(result.output)
    assert payload["mu_star"] == "n/a"
    assert payload["regime"] == "Balanced"
    assert payload["q_bar"] > 1.6


def test_constants_rejects_bad_params(runner):
    result = runner.invoke(args=["constants", "-N", "3", "-p", "0.5"])
    assert result.exit_code == 2


def test_separable_prints_cases(runner):
    result = runner.invoke(args=["separable", "-N", "3", "-p", "2", "-M", "-2", "-M", "-1"])
    assert result.exit_code == 0
    assert "TwoRoots" in result.output
    assert "NoRoot" in result.output


def test_separable_bifurcation_files(runner, tmp_path):
    out = tmp_path / "sep"
    result = runner.invoke(args=["separable", "-N", "3", "-p", "2", "--bifurcate", "-k", "1", "--out", str(out)])
    assert result.exit_code == 0
    assert "M_k = -1.5" in result.output
    frame = pd.read_csv(out / "bifurcation.csv")
    assert frame["M_k"][0] == pytest.approx(-1.5)
    assert (out / "constant_solutions.csv").exists()
    assert (out / "manifest.json").exists()


def test_separable_requires_critical_q(runner):
    result = runner.invoke(args=["separable", "-N", "3", "-p", "2", "-q", "1.5"])
    assert result.exit_code == 2


def test_shoot_needs_exactly_one_mode(runner):
    assert runner.invoke(args=["shoot", "-N", "3", "-p", "2"]).exit_code == 2
    both = runner.invoke(args=["shoot", "-N", "3", "-p", "2", "-a", "1", "--bracket", "0.5", "2"])
    assert both.exit_code == 2


def test_shoot_writes_trajectory_and_registry(app, runner, tmp_path):
    out = tmp_path / "shoot"
    result = runner.invoke(args=["shoot", "-N", "3", "-p", "2", "-M", "0", "-a", "1", "--out", str(out)])
    assert result.exit_code == 0
    assert "classification: Crossing" in result.output
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["classification"] == "Crossing"
    assert verdict["predicted"]["expect"] == "none"
    manifest = json.loads((out / "manifest.json").read_text())
    assert {entry["path"] for entry in manifest["files"]} == {"trajectory.csv", "verdict.json"}
    assert manifest["totals"]["Crossing"] == 1
    assert (out / "timing.json").exists()
    run = db.session.query(LabRun).filter_by(command="shoot").one()
    assert run.status == "succeeded"
    assert len(run.artifacts) == 2


def test_shoot_bracket_without_change(runner, tmp_path):
    result = runner.invoke(
        args=["shoot", "-N", "3", "-p", "2", "--bracket", "0.5", "2", "--out", str(tmp_path / "b")]
    )
    assert result.exit_code == 0
    assert "NoSignChangeInBracket" in result.output


def test_scan_grid(runner, tmp_path):
    out = tmp_path / "scan"
    result = runner.invoke(
        args=[
            "scan", "-N", "3", "-p", "2", "-q", "1.5",
            "--axis", "M", "0", "1", "2", "linear",
            "--axis", "a", "0.5", "2", "2", "log",
            "--svg", "--out", str(out),
        ]
    )
    assert result.exit_code == 0
    assert "points: 4" in result.output
    frame = pd.read_csv(out / "scan.csv")
    assert list(frame["M"]) == [0.0, 0.0, 1.0, 1.0]
    assert list(frame["a"]) == pytest.approx([0.5, 2.0, 0.5, 2.0])
    assert set(frame["classification"]) == {"Crossing"}
    assert (out / "region_map.svg").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["totals"]["Crossing"] == 4
    assert "wall_seconds" not in frame.columns


def test_scan_missing_parameter(runner, tmp_path):
    result = runner.invoke(args=["scan", "-N", "3", "-p", "2", "--axis", "a", "1", "2", "2", "linear"])
    assert result.exit_code == 2


def test_scan_spec_validation():
    with pytest.raises(ConfigError):
        Axis("N", 1, 2, 2)
    with pytest.raises(ConfigError):
        Axis("a", 0.0, 1.0, 3, "log")
    with pytest.raises(ConfigError):
        ScanSpec(axes=(Axis("a", 1, 2, 2),), fixed={"N": 3, "p": 2.0, "q": 1.5, "M": 0.0, "a": 1.0})
    with pytest.raises(ConfigError):
        ScanSpec(axes=(), fixed={"N": 3, "p": 2.0, "q": 1.5, "M": 0.0, "a": 1.0}, q_critical=True)


def test_scan_points_follow_axis_order():
    spec = ScanSpec(
        axes=(Axis("p", 2.0, 3.0, 2), Axis("a", 1.0, 2.0, 2)),
        fixed={"N": 3, "M": 0.0},
        q_critical=True,
    )
    points = spec.points()
    assert [(point["p"], point["a"]) for point in points] == [(2.0, 1.0), (2.0, 2.0), (3.0, 1.0), (3.0, 2.0)]
    assert points[0]["q"] == pytest.approx(4.0 / 3.0)


def test_scan_is_independent_of_worker_count():
    spec = ScanSpec(axes=(Axis("a", 0.5, 2.0, 3),), fixed={"N": 3, "p": 2.0, "q": 1.5, "M": 0.0})
    cfg = IntegratorConfig()
    serial = [record.row() for record in run_scan(spec, cfg, jobs=1)]
    parallel = [record.row() for record in run_scan(spec, cfg, jobs=2)]
    assert serial == parallel


def test_verify_separable(runner, tmp_path):
    out = tmp_path / "verify"
    pdf = tmp_path / "report.pdf"
    result = runner.invoke(args=["verify", "separable", "--out", str(out), "--pdf", str(pdf)])
    assert result.exit_code == 0, result.output
    report = json.loads((out / "verification.json").read_text())
    assert report["passed"] is True
    assert report["total"] == 6
    assert pdf.exists()


def test_verify_unknown_suite(runner):
    assert runner.invoke(args=["verify", "everything"]).exit_code == 2
