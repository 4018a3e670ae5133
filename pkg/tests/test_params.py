import math

import pytest

from radiallab.errors import DomainError, NotApplicableError, NotReducibleError
from radiallab.params import (
    ProblemParams,
    Regime,
    ScalingKind,
    apply_scaling,
    critical_constants,
    exponent_K,
    lemma42_constraints,
    lemma42_params,
    mu_star,
    normalized_amplitude,
    q_bar_residual,
    q_critical,
    regime,
    small_M_existence_bound,
)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"N": 0, "p": 3.0, "q": 1.5, "M": 0.0},
        {"N": 2.5, "p": 3.0, "q": 1.5, "M": 0.0},
        {"N": True, "p": 3.0, "q": 1.5, "M": 0.0},
        {"N": 3, "p": 1.0, "q": 1.5, "M": 0.0},
        {"N": 3, "p": 3.0, "q": 0.5, "M": 0.0},
        {"N": 3, "p": 3.0, "q": 1.5, "M": math.nan},
    ],
)
def test_problem_params_rejects_invalid(kwargs):
    with pytest.raises(DomainError):
        ProblemParams(**kwargs)


def test_problem_params_helpers():
    params = ProblemParams(N=3, p=3, q=1.2, M=2)
    assert isinstance(params.p, float)
    assert params.with_M(-1.0).M == -1.0
    assert params.at_critical_q().q == 1.5
    assert params.as_dict() == {"N": 3, "p": 3.0, "q": 1.2, "M": 2.0}


def test_critical_constants_three_dimensions():
    c = critical_constants(ProblemParams(N=3, p=3.0, q=1.5, M=0.0))
    assert c.p_serrin == pytest.approx(3.0)
    assert c.p_sobolev == pytest.approx(5.0)
    assert c.p_sphere_sobolev == math.inf
    assert c.q_crit == pytest.approx(1.5)
    assert c.K == pytest.approx(0.0)
    assert c.L == pytest.approx(-1.0)
    assert c.omega == pytest.approx(0.0)
    assert c.m_dagger == pytest.approx(2.0, abs=1e-14)
    assert c.mu_star == pytest.approx(0.0, abs=1e-12)
    assert c.c0_decay == pytest.approx(math.sqrt(3.0))
    assert c.c_thmAprime is None
    assert c.smallness_ratio is None


def test_low_dimension_uses_infinity_and_na():
    c = critical_constants(ProblemParams(N=2, p=3.0, q=1.2, M=0.0))
    assert c.p_serrin == math.inf
    assert c.p_sobolev == math.inf
    rendered = c.as_dict()
    assert rendered["p_serrin"] == "inf"
    assert rendered["q_bar"] == "n/a"
    assert c.c_thmAprime is not None


def test_mu_star_values():
    assert mu_star(3, 2.0) == pytest.approx(3.0 * 4.0 ** (-2.0 / 3.0), abs=1e-12)
    assert mu_star(3, 4.0) is None


def test_q_bar_is_a_root_in_range():
    c = critical_constants(ProblemParams(N=3, p=4.0, q=1.6, M=0.0))
    assert c.q_bar is not None
    assert q_critical(4.0) < c.q_bar < 4.0
    assert abs(q_bar_residual(3, 4.0, c.q_bar)) <= 1e-10


def test_small_M_existence_bound():
    assert small_M_existence_bound(3, 7.0) == pytest.approx(1.0 / 7.0)
    assert small_M_existence_bound(3, 4.0) is None
    assert small_M_existence_bound(2, 7.0) is None


def test_regime_classification():
    assert regime(ProblemParams(N=3, p=3.0, q=1.5, M=1.0)) is Regime.BALANCED
    assert regime(ProblemParams(N=3, p=3.0, q=1.8, M=1.0)) is Regime.GRADIENT_DOMINANT
    assert regime(ProblemParams(N=3, p=3.0, q=1.2, M=1.0)) is Regime.SOURCE_DOMINANT
    with pytest.raises(DomainError):
        regime(ProblemParams(N=3, p=3.0, q=1.2, M=1.0), eq_tol=-1.0)


def test_tk_scaling_at_critical_q_keeps_M():
    params = ProblemParams(N=3, p=3.0, q=1.5, M=1.0)
    smap = apply_scaling(params, ScalingKind.TK, k=4.0)
    assert smap.new_params.M == pytest.approx(1.0)
    assert smap.amplitude_for(0.5) == pytest.approx(2.0)
    assert smap.length_factor == pytest.approx(0.25)


def test_tk_scaling_moves_M_off_critical():
    params = ProblemParams(N=3, p=3.0, q=1.8, M=1.0)
    smap = apply_scaling(params, "Tk", k=2.0)
    exponent = (2.0 * 3.0 - 1.8 * 4.0) / 2.0
    assert smap.new_params.M == pytest.approx(2.0**exponent)
    inverse = smap.inverse()
    assert inverse.amplitude_factor * smap.amplitude_factor == pytest.approx(1.0)
    assert inverse.new_params == params


def test_pull_back_maps_radii_and_derivatives():
    smap = apply_scaling(ProblemParams(N=3, p=3.0, q=1.5, M=1.0), ScalingKind.TK, k=2.0)
    r, u, du = smap.pull_back([1.0, 2.0], [1.0, 0.5], [-1.0, -0.25])
    assert list(r) == pytest.approx([2.0, 4.0])
    assert list(u) == pytest.approx([0.5, 0.25])
    assert list(du) == pytest.approx([-0.25, -0.0625])


def test_normalize_m():
    params = ProblemParams(N=3, p=3.0, q=1.8, M=5.0)
    smap = apply_scaling(params, ScalingKind.NORMALIZE_M)
    assert smap.new_params.M == 1.0
    assert normalized_amplitude(params.with_M(1.0)) == pytest.approx(1.0)
    with pytest.raises(NotReducibleError):
        apply_scaling(params.with_M(0.0), ScalingKind.NORMALIZE_M)
    with pytest.raises(NotReducibleError):
        apply_scaling(params.at_critical_q(), ScalingKind.NORMALIZE_M)


def test_sk_scaling_domain():
    with pytest.raises(NotApplicableError):
        apply_scaling(ProblemParams(N=3, p=3.0, q=2.0, M=1.0), ScalingKind.SK, k=2.0)
    with pytest.raises(DomainError):
        apply_scaling(ProblemParams(N=3, p=3.0, q=1.5, M=1.0), ScalingKind.SK, k=0.0)
    smap = apply_scaling(ProblemParams(N=3, p=3.0, q=1.5, M=1.0), ScalingKind.SK, k=2.0)
    assert smap.new_params.M == 1.0
    assert smap.source_coefficient == pytest.approx(2.0 ** ((1.5 - 3.0 * 0.5) / 0.5))


def test_exponent_K_sign_tracks_serrin():
    assert exponent_K(3, 2.0) < 0
    assert exponent_K(3, 3.0) == pytest.approx(0.0)
    assert exponent_K(3, 4.0) > 0


@pytest.mark.parametrize("N,p", [(3, 2.0), (3, 4.5), (4, 2.5), (5, 1.5)])
def test_lemma42_witness_satisfies_every_constraint(N, p):
    m, d = lemma42_params(N, p)
    assert all(lemma42_constraints(N, p, m, d).values())


def test_lemma42_rejects_out_of_range():
    with pytest.raises(NotApplicableError):
        lemma42_params(2, 2.0)
    with pytest.raises(NotApplicableError):
        lemma42_params(3, 5.0)


def test_lemma42_is_deterministic():
    assert lemma42_params(3, 3.0) == lemma42_params(3, 3.0)
