import hashlib
import json

import pandas as pd
import pytest

from radiallab import __version__, apply_config_file, db, reports
from radiallab.errors import ConfigError
from radiallab.models import LabRun, RunArtifact
from radiallab.params import ProblemParams
from radiallab.radial_ode import IntegratorConfig, integrate


def test_write_csv_hashes_and_counts(tmp_path):
    rows = [{"M": 0.1, "case": "NoRoot"}, {"M": 1.0 / 3.0, "case": "TwoRoots"}]
    artifact = reports.write_csv(rows, str(tmp_path / "table.csv"), ["M", "case"], str(tmp_path))
    content = (tmp_path / "table.csv").read_bytes()
    assert artifact.path == "table.csv"
    assert artifact.rows == 2
    assert artifact.sha256 == hashlib.sha256(content).hexdigest()
    assert b"\r\n" not in content
    assert float(pd.read_csv(tmp_path / "table.csv")["M"][1]) == 1.0 / 3.0


def test_manifest_is_reproducible(tmp_path):
    artifact = reports.write_json({"b": 1, "a": 2}, str(tmp_path / "verdict.json"), str(tmp_path))
    first = reports.write_manifest(str(tmp_path), "shoot", {"N": 3}, {"rel_tol": 1e-9}, [artifact], {"Crossing": 1})
    before = open(first, "rb").read()
    reports.write_manifest(str(tmp_path), "shoot", {"N": 3}, {"rel_tol": 1e-9}, [artifact], {"Crossing": 1})
    assert open(first, "rb").read() == before
    manifest = json.loads(before)
    assert manifest["files"][0]["path"] == "verdict.json"
    assert "started_at" not in manifest
    assert manifest["code_version"] == __version__
    assert reports.dumps({"b": 1, "a": 2}).startswith('{\n  "a": 2')


def test_trajectory_csv_columns(tmp_path):
    traj = integrate(ProblemParams(N=3, p=2.0, q=1.5, M=0.0), 1.0, IntegratorConfig(n_samples=100))
    artifact = reports.write_trajectory(traj, str(tmp_path / "trajectory.csv"), str(tmp_path))
    frame = pd.read_csv(tmp_path / "trajectory.csv")
    assert list(frame.columns) == reports.TRAJECTORY_COLUMNS
    assert artifact.rows == len(traj.r)


def test_region_map_svg(tmp_path):
    records = [
        {"M": M, "a": a, "classification": tag}
        for M, a, tag in [(0.0, 1.0, "Crossing"), (1.0, 1.0, "BlowUp"), (0.0, 2.0, "GroundStateCandidate"), (1.0, 2.0, "Undetermined")]
    ]
    reports.region_map_svg(records, "M", "a", str(tmp_path / "map.svg"), str(tmp_path), title="N=3")
    assert "<svg" in (tmp_path / "map.svg").read_text()


def test_verification_pdf(tmp_path):
    checks = [
        {"name": "exact.aubin_talenti", "passed": True, "value": 1e-8, "expected": 1e-6, "detail": ""},
        {"name": "pps.identity_order", "passed": False, "value": 1.5, "expected": 1.9, "detail": "h = 0.05"},
    ]
    path = reports.build_verification_pdf("Verification: all", checks, str(tmp_path / "report.pdf"))
    assert open(path, "rb").read(4) == b"%PDF"


def test_lab_run_registry(app):
    run = LabRun(command="scan", parameters={"N": 3})
    db.session.add(run)
    db.session.commit()
    assert run.status == "running"
    db.session.add(RunArtifact(run_id=run.id, path="scan.csv", sha256="0" * 64, rows=4))
    run.finish(0, {"points": 4})
    db.session.commit()
    stored = db.session.get(LabRun, run.id)
    assert stored.status == "succeeded"
    assert stored.summary == {"points": 4}
    assert stored.artifacts[0].rows == 4
    stored.finish(3)
    assert stored.status == "failed"


def test_config_file_overrides(app, tmp_path):
    settings = tmp_path / "lab.cfg"
    settings.write_text("# integrator\nrmax = 25\nRADIALLAB_JOBS = 2\n")
    apply_config_file(app, str(settings))
    assert app.config["RADIALLAB_RMAX"] == 25.0
    assert app.config["RADIALLAB_JOBS"] == 2


def test_config_file_rejects_bad_lines(app, tmp_path):
    settings = tmp_path / "lab.cfg"
    settings.write_text("rmax 25\n")
    with pytest.raises(ConfigError):
        apply_config_file(app, str(settings))
