import numpy as np
import pytest

from radiallab import verification
from radiallab.verification import SUITE_NAMES, check, run_suites, suite_logsys


def test_check_converts_numpy_scalars():
    item = check("demo", np.bool_(True), np.float64(0.5), np.inf)
    assert item == {"name": "demo", "passed": True, "value": 0.5, "expected": "inf", "detail": ""}
    assert type(item["value"]) is float


def test_unknown_suite():
    with pytest.raises(KeyError):
        run_suites("everything")
    assert "all" in SUITE_NAMES


def test_separable_suite_passes(cfg):
    report = run_suites("separable", cfg)
    assert report.suites == ["separable"]
    assert report.passed, report.failures
    assert report.as_dict()["failed"] == 0


def test_logsys_suite_passes(cfg):
    checks = suite_logsys(cfg)
    assert len(checks) == 8
    assert all(item["passed"] for item in checks), [item for item in checks if not item["passed"]]


def test_failing_check_is_reported(monkeypatch, cfg):
    def broken(*args, **kwargs):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(verification.separable, "root_merge_M", broken)
    report = run_suites("separable", cfg)
    assert not report.passed
    [failure] = report.failures
    assert failure["name"] == "separable.mu_star_merge"
    assert "RuntimeError: solver exploded" in failure["detail"]


@pytest.mark.parametrize("name", ["exact", "energy", "pps", "bounds", "shooting"])
def test_numerical_suites_pass(name, cfg):
    report = run_suites(name, cfg)
    assert report.suites == [name]
    assert report.checks
    assert report.passed, report.failures
