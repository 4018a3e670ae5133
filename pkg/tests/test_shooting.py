from types import SimpleNamespace

import numpy as np
import pytest

from radiallab import shooting
from radiallab.errors import DomainError, NotApplicableError
from radiallab.params import ProblemParams, q_critical
from radiallab.radial_ode import (
    Classification,
    ClassificationTag,
    Event,
    IntegratorConfig,
    Termination,
    Trajectory,
)
from radiallab.shooting import (
    Verdict,
    amplitude_threshold,
    decay_exponent,
    find_ground_state,
    gradient_cap,
    nonexistence_scan,
    predicted_ground_state,
    run_ordered,
)


def _power_tail(gamma=1.5):
    r = np.geomspace(1e-2, 1e2, 400)
    u = 1.0 / (1.0 + r) ** gamma
    return Trajectory(
        params=ProblemParams(N=3, p=5.0, q=1.5, M=0.0),
        a=1.0,
        config=IntegratorConfig(r_max=100.0),
        r=r,
        u=u,
        du=-gamma / (1.0 + r) ** (gamma + 1.0),
        events=(Event(Termination.HORIZON.value, 100.0),),
        termination=Termination.HORIZON,
    )


def test_decay_exponent_on_explicit_window():
    estimate = decay_exponent(_power_tail(), window=(50.0, 100.0))
    assert estimate.gamma == pytest.approx(1.5, abs=0.03)
    assert estimate.n_samples >= 10
    assert 50.0 <= estimate.window[0] < estimate.window[1] <= 100.0


def test_decay_exponent_default_window_uses_tail():
    estimate = decay_exponent(_power_tail(2.0))
    assert 1.8 < estimate.gamma < 2.0


def test_decay_exponent_needs_samples():
    with pytest.raises(DomainError):
        decay_exponent(_power_tail(), window=(99.0, 100.0))
    with pytest.raises(DomainError):
        decay_exponent(_power_tail(), window_fraction=1.5)


def _fake_integrate(boundary, special=None, special_tag=None):
    def fake(params, a, cfg=None):
        if special is not None and special[0] < a < special[1]:
            tag = special_tag
        else:
            tag = ClassificationTag.CROSSING if a < boundary else ClassificationTag.POSITIVE_MINIMUM
        return SimpleNamespace(a=a, r_end=20.0, classification=Classification(tag))

    return fake


def test_find_ground_state_bisects_to_boundary(monkeypatch):
    monkeypatch.setattr(shooting, "integrate", _fake_integrate(0.3))
    params = ProblemParams(N=3, p=3.0, q=1.5, M=-1.0)
    result = find_ground_state(params, 0.1, 1.0, a_tol=1e-9)
    assert result.verdict is Verdict.CONVERGED_WITHOUT_CANDIDATE
    assert not result.final_trajectory.classification.is_candidate
    assert result.a_star == pytest.approx(0.3, rel=1e-8)
    first = result.bracket_history[0]
    assert (first.tag_lo, first.tag_hi) == (ClassificationTag.CROSSING, ClassificationTag.POSITIVE_MINIMUM)
    assert all(b.a_lo <= 0.3 <= b.a_hi for b in result.bracket_history)
    assert result.as_dict()["verdict"] == "ConvergedWithoutCandidate"


def test_find_ground_state_converges_onto_candidate(monkeypatch):
    fake = _fake_integrate(0.3, (0.3 - 1e-6, 0.3 + 1e-6), ClassificationTag.GROUND_STATE_CANDIDATE)
    monkeypatch.setattr(shooting, "integrate", fake)
    params = ProblemParams(N=3, p=3.0, q=1.5, M=-1.0)
    result = find_ground_state(params, 0.1, 1.0, a_tol=1e-9)
    assert result.verdict is Verdict.FOUND_CANDIDATE
    assert result.final_trajectory.classification.is_candidate
    assert result.a_star == pytest.approx(0.3, abs=1e-6)
    assert result.as_dict()["verdict"] == "FoundCandidate"


def test_find_ground_state_stops_on_undetermined_midpoint(monkeypatch):
    # Midpoints from [0.1, 1]: 0.55, 0.325, 0.2125, 0.26875, 0.296875.
    fake = _fake_integrate(0.3, (0.29, 0.31), ClassificationTag.UNDETERMINED)
    monkeypatch.setattr(shooting, "integrate", fake)
    params = ProblemParams(N=3, p=3.0, q=1.5, M=-1.0)
    result = find_ground_state(params, 0.1, 1.0, a_tol=1e-9)
    assert result.verdict is Verdict.UNDETERMINED_MIDPOINT
    assert result.verdict is not Verdict.FOUND_CANDIDATE
    assert result.a_star == pytest.approx(0.296875)
    assert result.final_trajectory.classification.tag is ClassificationTag.UNDETERMINED
    assert len(result.bracket_history) == 5
    assert result.as_dict()["verdict"] == "UndeterminedMidpoint"


def test_find_ground_state_budget(monkeypatch):
    monkeypatch.setattr(shooting, "integrate", _fake_integrate(0.3))
    params = ProblemParams(N=3, p=3.0, q=1.5, M=-1.0)
    result = find_ground_state(params, 0.1, 1.0, a_tol=1e-15, max_bisections=5)
    assert result.verdict is Verdict.BUDGET_EXHAUSTED
    assert len(result.bracket_history) == 6


def test_find_ground_state_rejects_bad_bracket():
    params = ProblemParams(N=3, p=3.0, q=1.5, M=0.0)
    with pytest.raises(DomainError):
        find_ground_state(params, 1.0, 0.5)
    with pytest.raises(DomainError):
        find_ground_state(params, 0.0, 1.0)


def test_find_ground_state_same_outcome_at_both_ends():
    params = ProblemParams(N=3, p=2.0, q=q_critical(2.0), M=0.0)
    result = find_ground_state(params, 0.5, 2.0)
    assert result.verdict is Verdict.NO_SIGN_CHANGE
    assert result.a_star is None
    assert len(result.endpoint_trajectories) == 2


def test_find_ground_state_candidate_at_endpoint(aubin_talenti_params):
    result = find_ground_state(aubin_talenti_params, 1.0, 2.0, IntegratorConfig(r_max=50.0))
    assert result.verdict is Verdict.FOUND_CANDIDATE
    assert result.a_star == 1.0
    assert result.bracket_history == ()


def test_amplitude_threshold():
    params = ProblemParams(N=3, p=3.0, q=1.2, M=1.0)
    low = amplitude_threshold(params)
    high = amplitude_threshold(params.with_M(2.0))
    assert low > 0
    assert high / low == pytest.approx(2.0 ** (2.0 / (6.0 - 4.0 * 1.2)))
    with pytest.raises(NotApplicableError):
        amplitude_threshold(params.with_M(0.0))
    with pytest.raises(NotApplicableError):
        amplitude_threshold(ProblemParams(N=3, p=3.0, q=1.8, M=1.0))


def test_gradient_cap():
    cap = gradient_cap(ProblemParams(N=3, p=3.0, q=1.8, M=1.0), 2.0)
    assert cap.h_cap == pytest.approx(np.sqrt(0.5) * 4.0)
    assert cap.thmA_cap == pytest.approx(1.0)
    assert gradient_cap(ProblemParams(N=3, p=3.0, q=1.8, M=-1.0), 2.0).thmA_cap is None
    with pytest.raises(DomainError):
        gradient_cap(ProblemParams(N=3, p=3.0, q=1.8, M=1.0), -1.0)


def test_run_ordered_keeps_job_order():
    assert run_ordered(abs, [-3, 2, -1]) == [3, 2, 1]
    assert run_ordered(abs, [-3, 2, -1], workers=2) == [3, 2, 1]


def test_nonexistence_scan_subcritical():
    params = ProblemParams(N=3, p=2.0, q=q_critical(2.0), M=0.0)
    report = nonexistence_scan(params, [0.5, 1.0, 2.0])
    assert report.candidates == []
    assert report.counts()["Crossing"] == 3
    assert report.verdict == "no ground-state candidate found"
    assert [entry.a for entry in report.entries] == [0.5, 1.0, 2.0]
    with pytest.raises(DomainError):
        nonexistence_scan(params, [])


@pytest.mark.parametrize(
    "params,expect",
    [
        (ProblemParams(N=3, p=5.0, q=1.5, M=0.0), "exists"),
        (ProblemParams(N=3, p=2.0, q=1.5, M=0.0), "none"),
        (ProblemParams(N=3, p=5.0, q=1.5, M=-1.0), "exists"),
        (ProblemParams(N=3, p=5.0, q=6.0, M=-1.0), "none"),
        (ProblemParams(N=3, p=5.0, q=1.7, M=-1.0), "unknown"),
        (ProblemParams(N=3, p=3.0, q=1.5, M=3.0), "none"),
        (ProblemParams(N=3, p=7.0, q=1.75, M=0.01), "exists"),
        (ProblemParams(N=3, p=2.0, q=1.2, M=1.0), "none"),
    ],
)
def test_predicted_ground_state(params, expect):
    assert predicted_ground_state(params).expect == expect
