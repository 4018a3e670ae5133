import numpy as np
import pytest

from radiallab.errors import ConfigError, DomainError
from radiallab.params import ProblemParams, q_critical
from radiallab.radial_ode import (
    ClassificationTag,
    Event,
    IntegratorConfig,
    RadialState,
    Termination,
    Trajectory,
    aubin_talenti_lambda,
    classify,
    exact_aubin_talenti,
    exact_singular,
    integrate,
    rhs,
    series_residual,
    series_start,
    singular_profile_residual,
)
from radiallab.separable import solve_constant_solutions


def _trajectory(params, r, u, du, termination=Termination.HORIZON, cfg=None, a=1.0):
    cfg = cfg or IntegratorConfig(r_max=float(r[-1]))
    return Trajectory(
        params=params,
        a=a,
        config=cfg,
        r=r,
        u=u,
        du=du,
        events=(Event(termination.value, float(r[-1])),),
        termination=termination,
    )


@pytest.mark.parametrize(
    "overrides",
    [
        {"r0": 0.0},
        {"r0": 10.0, "r_max": 5.0},
        {"rel_tol": 0.0},
        {"n_samples": 1},
        {"zero_fraction": 1.5},
        {"blowup_factor": 0.5},
        {"decay_slack": -0.1},
        {"method": "Euler"},
    ],
)
def test_integrator_config_validation(overrides):
    with pytest.raises(ConfigError):
        IntegratorConfig(**overrides)


def test_integrator_config_from_mapping():
    cfg = IntegratorConfig.from_mapping({"RADIALLAB_RMAX": "25", "RADIALLAB_RTOL": 1e-10}, abs_tol=1e-13, r0=None)
    assert cfg.r_max == 25.0
    assert cfg.rel_tol == 1e-10
    assert cfg.abs_tol == 1e-13
    assert cfg.r0 == IntegratorConfig().r0
    with pytest.raises(ConfigError):
        IntegratorConfig.from_mapping({"RADIALLAB_MAX_STEPS": "many"})


def test_thresholds_scale_with_amplitude():
    cfg = IntegratorConfig()
    params = ProblemParams(N=3, p=3.0, q=1.5, M=0.0)
    assert cfg.zero_threshold_for(2.0) == pytest.approx(0.5)
    assert cfg.blowup_threshold_for(4.0, params) == pytest.approx(1e8 * 16.0)
    fixed = cfg.with_overrides(zero_threshold=1e-3)
    assert fixed.zero_threshold_for(2.0) == 1e-3


def test_radial_state_rejects_negative_radius():
    with pytest.raises(DomainError):
        RadialState(-1.0, 1.0, 0.0)


def test_rhs_singular_at_origin():
    params = ProblemParams(N=3, p=3.0, q=1.5, M=1.0)
    with pytest.raises(DomainError):
        rhs(RadialState(0.0, 1.0, 0.0), params)
    du, ddu = rhs(RadialState(1.0, 1.0, -1.0), params)
    assert du == -1.0
    assert ddu == pytest.approx(2.0 - 1.0 - 1.0)


def test_series_start_and_residual():
    params = ProblemParams(N=3, p=3.0, q=1.5, M=0.0)
    start = series_start(1.0, 1e-4, params)
    assert start.u == pytest.approx(1.0 - 1e-8 / 6.0)
    assert start.du == pytest.approx(-1e-4 / 3.0)
    assert abs(series_residual(1.0, 1e-4, params)) <= 1e-6
    with pytest.raises(DomainError):
        series_start(0.0, 1e-4, params)
    with pytest.raises(DomainError):
        series_start(1.0, 0.0, params)


def test_exact_aubin_talenti_has_unit_height():
    lam = aubin_talenti_lambda(1.0, 3)
    assert lam == pytest.approx(3.0)
    assert exact_aubin_talenti(0.0, lam, 3) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        aubin_talenti_lambda(1.0, 2)


def test_integrate_matches_aubin_talenti(aubin_talenti_params):
    cfg = IntegratorConfig(r_max=50.0, rel_tol=1e-9)
    traj = integrate(aubin_talenti_params, 1.0, cfg)
    exact = exact_aubin_talenti(traj.r, aubin_talenti_lambda(1.0, 3), 3)
    assert np.max(np.abs(traj.u - exact) / exact) <= 1e-6
    assert traj.termination is Termination.HORIZON
    assert traj.classification.tag is ClassificationTag.GROUND_STATE_CANDIDATE
    assert traj.classification.decay_estimate.gamma == pytest.approx(1.0, abs=0.05)


def test_trajectory_arrays_are_read_only(aubin_talenti_params):
    traj = integrate(aubin_talenti_params, 1.0, IntegratorConfig(r_max=5.0, n_samples=50))
    with pytest.raises(ValueError):
        traj.u[0] = 2.0
    assert traj.samples[0].r == pytest.approx(1e-4)
    u, du = traj.evaluate([1.0, 2.0])
    assert u[0] == pytest.approx(np.sqrt(3.0 / 4.0), rel=1e-6)


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_subcritical_lane_emden_crosses(a):
    params = ProblemParams(N=3, p=2.0, q=q_critical(2.0), M=0.0)
    traj = integrate(params, a, IntegratorConfig())
    assert traj.classification.tag is ClassificationTag.CROSSING
    assert traj.termination is Termination.U_ZERO
    r_lo, r_hi, u_lo, u_hi = traj.crossing_bracket
    assert r_lo < traj.classification.r_event < r_hi
    assert u_lo > 0 > u_hi


def test_crossing_radius_scales_with_amplitude():
    params = ProblemParams(N=3, p=3.0, q=1.5, M=0.0)
    r1 = integrate(params, 1.0).classification.r_event
    r2 = integrate(params, 2.0).classification.r_event
    # M = 0: u_a(r) = a u_1(a r) for p = 3.
    assert r2 == pytest.approx(r1 / 2.0, rel=1e-6)


def test_classify_positive_minimum():
    params = ProblemParams(N=3, p=3.0, q=1.5, M=-1.0)
    r = np.linspace(0.1, 5.0, 50)
    du = np.where(r < 3.0, -0.1, 0.05)
    u = np.full_like(r, 0.5)
    result = classify(_trajectory(params, r, u, du, Termination.DU_ZERO))
    assert result.tag is ClassificationTag.POSITIVE_MINIMUM
    assert result.u_event == pytest.approx(0.5)


def test_classify_blow_up():
    params = ProblemParams(N=3, p=2.0, q=3.0, M=10.0)
    r = np.linspace(0.1, 1.0, 20)
    u = np.linspace(1.0, 0.5, 20)
    du = -np.geomspace(1e-3, 1e12, 20)
    result = classify(_trajectory(params, r, u, du, Termination.BLOWUP))
    assert result.tag is ClassificationTag.BLOW_UP


def test_classify_undetermined_when_horizon_stays_high():
    params = ProblemParams(N=3, p=3.0, q=1.5, M=0.0)
    r = np.linspace(0.1, 10.0, 50)
    u = np.linspace(1.0, 0.9, 50)
    du = np.full_like(r, -0.01)
    assert classify(_trajectory(params, r, u, du)).tag is ClassificationTag.UNDETERMINED


def test_trajectory_radii_must_increase():
    params = ProblemParams(N=3, p=3.0, q=1.5, M=0.0)
    with pytest.raises(DomainError):
        _trajectory(params, np.array([1.0, 0.5]), np.array([1.0, 1.0]), np.array([0.0, 0.0]))


def test_singular_profile_is_exact():
    p = 5.0
    params = ProblemParams(N=4, p=p, q=q_critical(p), M=-1.0)
    radii = np.geomspace(1e-2, 1e2, 50)
    for X in solve_constant_solutions(params).roots:
        assert np.max(singular_profile_residual(radii, X, params)) <= 1e-9
    with pytest.raises(DomainError):
        exact_singular(0.0, 1.0, p)


def _algebraic_tail(params, power):
    r = np.geomspace(0.1, 100.0, 300)
    u = (1.0 + r * r) ** (-power / 2.0)
    du = -power * r * (1.0 + r * r) ** (-power / 2.0 - 1.0)
    return _trajectory(params, r, u, du)


def test_classify_rejects_tail_faster_than_harmonic():
    params = ProblemParams(N=3, p=3.0, q=1.5, M=0.0)
    assert classify(_algebraic_tail(params, 2.0)).tag is ClassificationTag.UNDETERMINED
    slow = classify(_algebraic_tail(params, 0.5))
    assert slow.tag is ClassificationTag.GROUND_STATE_CANDIDATE
    assert slow.decay_estimate.gamma == pytest.approx(0.5, abs=0.02)


def test_classify_keeps_fast_tail_when_M_negative():
    params = ProblemParams(N=3, p=3.0, q=1.5, M=-1.0)
    assert classify(_algebraic_tail(params, 2.0)).tag is ClassificationTag.GROUND_STATE_CANDIDATE


def test_subcritical_small_amplitudes_are_not_ground_states():
    params = ProblemParams(N=3, p=2.0, q=q_critical(2.0), M=0.0)
    tags = [integrate(params, float(a)).classification.tag for a in np.geomspace(1e-3, 10.0, 40)]
    assert ClassificationTag.GROUND_STATE_CANDIDATE not in tags
    wide = IntegratorConfig(r_max=1000.0)
    assert integrate(params, 1e-3, wide).classification.tag is ClassificationTag.CROSSING
