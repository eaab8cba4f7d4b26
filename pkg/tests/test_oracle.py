import numpy as np
import pytest

from src.applications import (
    CrraParams,
    PowerTerm,
    SeparableParams,
    crra_model,
    linear_case_model,
    linear_receiver_model,
    quadratic_cs_model,
    separable_model,
)
from src.errors import DegenerateSimplex, NoOpposingStates
from src.model_core import Posterior, StateActionModel, best_response
from src.oracle import (
    EnvelopeVerdict,
    binary_pair_scan,
    binary_split_gain,
    change_of_variables_check,
    concavify_2state,
    concavify_3state,
    gain_via_integrals,
    simplex_grid,
    three_message_decomposition,
)


@pytest.fixture
def state_blind_model():
    """Receiver optimum is 0.5 whatever the state."""
    return StateActionModel(
        state_domain=(0.0, 1.0), action_domain=(0.0, 1.0),
        eval_U=lambda w, a: -(a - 0.5) ** 2 + 0 * w,
        eval_V=lambda w, a: w * a,
        eval_Ua=lambda w, a: 2 * (0.5 - a) + 0 * w,
        eval_Uaa=lambda w, a: -2.0 + 0 * (w + a),
        eval_Va=lambda w, a: w + 0 * a,
    )


def test_binary_split_quadratic(cs_model):
    """Test binary split quadratic."""
    split = binary_split_gain(cs_model, 0.0, 1.0, 0.5)
    assert split.a_pool == pytest.approx(0.5, abs=1e-12)
    assert split.gain == pytest.approx(0.25, abs=1e-12)
    assert split.k == pytest.approx(-0.5, abs=1e-12)
    assert split.effort_delta == pytest.approx(0.0, abs=1e-12)
    assert abs(split.foc_residual) < 1e-10


def test_binary_split_reorders_by_action(crra_suboptimal):
    """Test binary split reorders by action."""
    # a* decreases in the state when gamma > 1
    split = binary_split_gain(crra_suboptimal, 1.0, 2.0, 0.3)
    assert split.omega_low == 2.0
    assert split.pi_low == pytest.approx(0.7)
    assert split.a_low < split.a_pool < split.a_high


def test_binary_split_degenerate(state_blind_model):
    """Test binary split degenerate."""
    split = binary_split_gain(state_blind_model, 0.2, 0.9, 0.4)
    assert split.degenerate
    assert split.gain == 0.0 and split.effort_delta == 0.0
    assert gain_via_integrals(state_blind_model, 0.2, 0.9, 0.4) == 0.0


def test_binary_split_validation(cs_model):
    """Test binary split validation."""
    with pytest.raises(ValueError):
        binary_split_gain(cs_model, 0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        binary_split_gain(cs_model, 0.0, 1.0, 1.0)


def test_binary_split_crra_optimal_region(crra_optimal):
    """Test binary split CRRA optimal region."""
    split = binary_split_gain(crra_optimal, 1.0, 2.0, 0.5)
    assert split.gain > 0
    assert split.effort_delta > 0


def test_gain_via_integrals_quadratic(cs_model):
    """Test gain via integrals quadratic."""
    assert gain_via_integrals(cs_model, 0.0, 1.0, 0.5) == pytest.approx(0.25, abs=1e-8)


def test_gain_via_integrals_crra_suboptimal(crra_suboptimal):
    """Test gain via integrals CRRA suboptimal."""
    direct = binary_split_gain(crra_suboptimal, 1.0, 2.0, 0.5).gain
    assert direct < 0
    assert gain_via_integrals(crra_suboptimal, 1.0, 2.0, 0.5) == pytest.approx(direct, abs=1e-8)


def test_change_of_variables_quadratic(cs_model):
    """Test change of variables quadratic."""
    result = change_of_variables_check(cs_model, 0.0, 1.0, 0.5)
    assert result.k == pytest.approx(-0.5, abs=1e-12)
    assert result.residual < 1e-10


def test_change_of_variables_crra():
    """Test change of variables CRRA."""
    model = crra_model(CrraParams(gamma=0.5, rho=0.5))
    result = change_of_variables_check(model, 1.0, 2.0, 0.3)
    assert result.k < 0
    assert result.residual < 1e-9


def test_three_message_symmetric(cs_model):
    """Test three message symmetric."""
    post = Posterior((0.0, 0.5, 1.0), (1 / 3, 1 / 3, 1 / 3))
    split = three_message_decomposition(cs_model, post)
    assert split.pooled_action == pytest.approx(0.5, abs=1e-12)
    assert split.low.weight == pytest.approx(split.high.weight)
    assert best_response(cs_model, split.rest.posterior) == pytest.approx(0.5, abs=1e-12)
    for state, p in split.mixture().items():
        assert p == pytest.approx(post.as_mapping()[state], abs=1e-15)


def test_three_message_binary_support(cs_model):
    """Test three message binary support."""
    split = three_message_decomposition(cs_model, Posterior((0.0, 1.0), (0.4, 0.6)))
    assert split.rest.weight == 0.0 and split.rest.posterior is None
    assert split.low.posterior.support == (0.0,)
    assert split.high.posterior.support == (1.0,)


def test_three_message_crra(crra_optimal):
    """Test three message CRRA."""
    post = Posterior((1.0, 1.5, 2.0), (0.25, 0.5, 0.25))
    split = three_message_decomposition(crra_optimal, post, low_index=0, high_index=2)
    assert abs(split.comp_residual) < 1e-9
    mixture = split.mixture()
    for state, p in post.as_mapping().items():
        assert mixture[state] == pytest.approx(p, abs=1e-14)
    assert best_response(crra_optimal, split.rest.posterior) == pytest.approx(split.pooled_action, rel=1e-8)


def test_three_message_needs_opposing_states(cs_model):
    """Test three message needs opposing states."""
    with pytest.raises(NoOpposingStates):
        three_message_decomposition(cs_model, Posterior.point_mass(0.3))


def test_concavify_2state_quadratic(cs_model):
    """Test concavify two-state quadratic."""
    result = concavify_2state(cs_model, (0.0, 1.0), 0.5, resolution=21)
    assert result.verdict == EnvelopeVerdict.FULL_DISCLOSURE_OPTIMAL
    assert result.margin == pytest.approx(0.25, abs=1e-10)
    p = result.sample_coords[:, 1]
    np.testing.assert_allclose(result.sample_values, -p * (1 - p), atol=1e-10)
    np.testing.assert_allclose(result.split_mean(), result.prior)


def test_concavify_2state_crra_suboptimal(crra_suboptimal):
    """Test concavify two-state CRRA suboptimal."""
    result = concavify_2state(crra_suboptimal, (1.0, 2.0), 0.5, resolution=21)
    assert result.verdict == EnvelopeVerdict.FULL_DISCLOSURE_SUBOPTIMAL
    assert result.margin > 0
    assert result.max_gap > 0
    assert result.envelope_value_at_prior >= result.prior_value - 1e-12


@pytest.mark.parametrize('prior_p', [0.0, 1.0])
def test_concavify_2state_rejects_boundary_prior(cs_model, prior_p):
    """Test concavify two-state rejects boundary prior."""
    with pytest.raises(ValueError):
        concavify_2state(cs_model, (0.0, 1.0), prior_p)


def test_concavify_2state_same_state(cs_model):
    """Test concavify two-state same state."""
    with pytest.raises(DegenerateSimplex):
        concavify_2state(cs_model, (0.5, 0.5), 0.5)


@pytest.mark.parametrize('coefficients, verdict', [
    ([0.0, 0.0, 1.0], EnvelopeVerdict.FULL_DISCLOSURE_OPTIMAL),
    ([0.0, 0.0, -1.0], EnvelopeVerdict.FULL_DISCLOSURE_SUBOPTIMAL),
])
def test_concavify_linear_case(coefficients, verdict):
    """Test concavify linear case."""
    model = linear_case_model(coefficients)
    assert concavify_2state(model, (0.0, 1.0), 0.5, resolution=21).verdict == verdict


def test_linear_sender_gains_vanish():
    """Test linear sender gains vanish."""
    model = linear_case_model([0.0, 1.0])
    report = binary_pair_scan(model, [0.0, 0.5, 1.0], pi_grid=5)
    assert np.allclose(report.table['gain'], 0.0, atol=1e-12)


def test_simplex_grid_points():
    """Test simplex grid points."""
    pts = simplex_grid(4)
    assert len(pts) == 15
    np.testing.assert_allclose(pts.sum(axis=1), 1.0)


@pytest.mark.parametrize('b', [0.0, 0.1, 0.3])
def test_concavify_3state_crawford_sobel(b):
    """Test concavify three-state Crawford-Sobel."""
    model = quadratic_cs_model(b)
    prior = Posterior((0.0, 0.5, 1.0), (1 / 3, 1 / 3, 1 / 3))
    result = concavify_3state(model, (0.0, 0.5, 1.0), prior, resolution=12)
    assert result.verdict == EnvelopeVerdict.FULL_DISCLOSURE_OPTIMAL
    assert result.full_disclosure_value == pytest.approx(-b ** 2, abs=1e-8)
    assert result.envelope_value_at_prior == pytest.approx(-b ** 2, abs=1e-8)
    np.testing.assert_allclose(result.split_mean(), prior.weights, atol=1e-9)


def test_concavify_3state_flat_sender():
    """Test concavify three-state flat sender."""
    model = linear_receiver_model(lambda w, a: w + 0 * a, lambda w, a: 0 * (w + a))
    prior = Posterior((0.0, 0.5, 1.0), (0.2, 0.3, 0.5))
    result = concavify_3state(model, (0.0, 0.5, 1.0), prior, resolution=8)
    assert result.verdict == EnvelopeVerdict.FULL_DISCLOSURE_OPTIMAL
    assert result.margin == pytest.approx(0.0, abs=1e-12)


def test_concavify_3state_crra_suboptimal():
    """Test concavify three-state CRRA suboptimal."""
    model = crra_model(CrraParams(gamma=0.5, rho=2.0))
    prior = Posterior((1.0, 1.5, 2.0), (1 / 3, 1 / 3, 1 / 3))
    result = concavify_3state(model, (1.0, 1.5, 2.0), prior, resolution=12)
    assert result.verdict == EnvelopeVerdict.FULL_DISCLOSURE_SUBOPTIMAL
    assert result.margin > 0


def test_concavify_3state_needs_distinct_states(cs_model):
    """Test concavify three-state needs distinct states."""
    with pytest.raises(DegenerateSimplex):
        concavify_3state(cs_model, (0.0, 0.0, 1.0), Posterior((0.0, 1.0), (0.5, 0.5)))


def test_pair_scan_crawford_sobel(cs_biased):
    """Test pair scan Crawford-Sobel."""
    report = binary_pair_scan(cs_biased, [0.2, 0.8], pi_grid=21)
    assert len(report.table) == 19
    assert report.min_gain >= 0
    assert not report.certificate


def test_pair_scan_crra_certificate(crra_suboptimal):
    """Test pair scan CRRA certificate."""
    report = binary_pair_scan(crra_suboptimal, [1.0, 2.0])
    assert report.min_gain < 0
    assert report.certificate
    assert {'omega_1', 'omega_2', 'pi_1', 'gain', 'a_pool'} <= set(report.table.columns)


def _random_separable(rng):
    kappa, tau = (float(x) for x in rng.uniform(0.2, 0.8, 2))
    return separable_model(SeparableParams(phi=PowerTerm(1.0, kappa), xi=PowerTerm(1.0, tau)))


@pytest.mark.parametrize('family', ['crra', 'separable', 'quadratic_cs'])
def test_split_identities_random(family, rng, random_crra):
    """Test gain forms, FOC constant and change of variables on random two-state splits."""
    for _ in range(20):
        if family == 'crra':
            model, (lo, hi) = random_crra(), (1.0, 2.0)
        elif family == 'separable':
            model, (lo, hi) = _random_separable(rng), (1.0, 2.0)
        else:
            model, (lo, hi) = quadratic_cs_model(float(rng.uniform(0.0, 0.4))), (0.0, 1.0)
        mid = 0.5 * (lo + hi)
        w1 = float(rng.uniform(lo, mid - 0.1 * (hi - lo)))
        w2 = float(rng.uniform(mid + 0.1 * (hi - lo), hi))
        pi_1 = float(rng.uniform(0.1, 0.9))

        split = binary_split_gain(model, w1, w2, pi_1)
        assert split.a_low < split.a_high
        assert abs(split.gain - gain_via_integrals(model, w1, w2, pi_1)) <= 1e-8
        assert abs(split.foc_residual) <= 1e-9
        assert split.k < 0
        assert change_of_variables_check(model, w1, w2, pi_1).residual <= 1e-9


@pytest.mark.parametrize('family', ['crra', 'quadratic_cs'])
def test_three_message_random_posteriors(family, rng, random_crra, random_posterior):
    """Test three-message splits of random 3-to-5-state posteriors."""
    for _ in range(25):
        if family == 'crra':
            model, post = random_crra(), random_posterior(1.0, 2.0, int(rng.integers(3, 6)))
        else:
            model = quadratic_cs_model(float(rng.uniform(0.0, 0.4)))
            post = random_posterior(0.0, 1.0, int(rng.integers(3, 6)))
        split = three_message_decomposition(model, post)
        assert abs(split.comp_residual) <= 1e-9
        assert split.rest.weight > 0
        assert best_response(model, split.rest.posterior) == pytest.approx(split.pooled_action, abs=1e-8)
        mixture = split.mixture()
        assert sorted(mixture) == list(post.support)
        for state, p in post.as_mapping().items():
            assert mixture[state] == pytest.approx(p, abs=1e-12)
