import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpcagp.bayes import PosteriorScores, extrapolate, predict, sequential_update, update_scores
from fpcagp.oracles import gaussian_condition_oracle
from fpcagp.score_gp import ScorePrior
from fpcagp.signal import Signal

from conftest import make_model, signal_from


def joint_oracle(model, prior, obs):
    """Condition the joint Gaussian of (scores, observations) directly."""
    K, p = model.K, len(obs)
    Phi = model.basis_at(obs.times)
    S0 = np.diag(prior.variance)
    cov = np.block([[S0, S0 @ Phi.T], [Phi @ S0, Phi @ S0 @ Phi.T + model.noise_variance * np.eye(p)]])
    mean = np.r_[prior.mean, model.mean_at(obs.times) + Phi @ prior.mean]
    return gaussian_condition_oracle(mean, cov, np.arange(K, K + p), obs.values)


def random_case(rng, K=None, p=None, noise=None):
    K = K or int(rng.integers(1, 4))
    p = p or int(rng.integers(1, 6))
    m = make_model(K=K, noise=noise or float(rng.uniform(0.01, 1.0)))
    prior = ScorePrior(rng.normal(size=K), rng.uniform(0.1, 2.0, K))
    t = np.sort(rng.choice(np.linspace(0, 1, 201), p, replace=False))
    obs = Signal(t, rng.normal(size=p), 0, "y")
    return m, prior, obs


def test_empty_observation_returns_prior():
    m = make_model(K=2)
    prior = ScorePrior([0.5, -0.5], [1.0, 2.0])
    post = update_scores(m, prior, Signal([], []))
    np.testing.assert_array_equal(post.mean, prior.mean)
    np.testing.assert_array_equal(post.covariance, np.diag(prior.variance))


def test_huge_noise_leaves_prior_unchanged(rng):
    m = make_model(K=2, noise=1e12)
    prior = ScorePrior([0.5, -0.5], [1.0, 2.0])
    post = update_scores(m, prior, Signal([0.2, 0.6], [40.0, -30.0]))
    np.testing.assert_allclose(post.mean, prior.mean, atol=1e-9)
    np.testing.assert_allclose(post.covariance, np.diag(prior.variance), atol=1e-9)


def test_matches_joint_gaussian_oracle(rng):
    for _ in range(50):
        m, prior, obs = random_case(rng)
        post = update_scores(m, prior, obs)
        mo, So = joint_oracle(m, prior, obs)
        np.testing.assert_allclose(post.mean, mo, atol=1e-10)
        np.testing.assert_allclose(post.covariance, So, atol=1e-10)


def test_degenerate_prior_rejected():
    m = make_model(K=2)
    with pytest.raises(ValueError, match="degenerate prior"):
        update_scores(m, ScorePrior([0, 0], [1.0, 0.0]), Signal([0.5], [1.0]))


def test_sequential_equals_batch(rng):
    for _ in range(20):
        m, prior, obs = random_case(rng, p=5)
        batch = update_scores(m, prior, obs)
        pieces = [Signal(obs.times[i:i + 1], obs.values[i:i + 1]) for i in range(5)]
        order = rng.permutation(5)
        seq = sequential_update(m, prior, [pieces[i] for i in order] + [Signal([], [])])
        np.testing.assert_allclose(seq.mean, batch.mean, atol=1e-10)
        np.testing.assert_allclose(seq.covariance, batch.covariance, atol=1e-10)
    m, prior, _ = random_case(rng)
    assert isinstance(sequential_update(m, prior, []), PosteriorScores)


def test_predict_examples():
    m = make_model(K=2, noise=0.01)
    t = np.array([0.0, 0.3, 1.0])
    post = PosteriorScores(np.zeros(2), np.zeros((2, 2)))
    mean, var = predict(m, post, t)
    np.testing.assert_allclose(mean, m.mean_at(t))
    np.testing.assert_allclose(var, 0.01)
    post = PosteriorScores([1.0, 0.0], np.diag([0.5, 0.0]))
    mean, var = predict(m, post, t)
    phi = m.basis_at(t)[:, 0]
    np.testing.assert_allclose(mean, m.mean_at(t) + phi)
    np.testing.assert_allclose(var, 0.01 + 0.5 * phi**2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_posterior_contracts(seed):
    rng = np.random.default_rng(seed)
    m, prior, obs = random_case(rng)
    post = update_scores(m, prior, obs)
    diff = np.diag(prior.variance) - post.covariance
    assert np.linalg.eigvalsh(0.5 * (diff + diff.T)).min() >= -1e-10
    # a further batch never raises the predictive variance
    more = Signal(np.sort(rng.uniform(0, 1, 3)), rng.normal(size=3))
    post2 = update_scores(m, post, more)
    t = m.grid.points
    assert np.all(predict(m, post2, t)[1] <= predict(m, post, t)[1] + 1e-10)


def test_noiseless_dense_update_interpolates():
    m = make_model(K=3, noise=1e-10, lam=[1.0, 0.5, 0.25])
    xi = np.array([0.9, -0.6, 0.3])
    obs = signal_from(m, xi, np.linspace(0, 1, 40))
    mean, _ = extrapolate(m, ScorePrior(np.zeros(3), m.eigenvalues), obs, obs.times)
    assert np.max(np.abs(mean - obs.values)) < 1e-3
