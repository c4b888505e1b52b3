import numpy as np
import pytest

from fpcagp.baselines import fpca_b_prior, me_fit, me_posterior, me_predict
from fpcagp.bayes import extrapolate
from fpcagp.oracles import gaussian_condition_oracle
from fpcagp.signal import Signal

from conftest import make_model


def test_fpca_b_prior_is_population_law():
    m = make_model(K=3, lam=[3.0, 2.0, 1.0])
    prior = fpca_b_prior(m)
    np.testing.assert_array_equal(prior.mean, 0.0)
    np.testing.assert_array_equal(prior.variance, [3.0, 2.0, 1.0])
    t = np.array([0.1, 0.9])
    mean, _ = extrapolate(m, prior, Signal([], []), t)
    np.testing.assert_allclose(mean, m.mean_at(t))


def _units(f, n, rng, t=None, noise=0.0):
    t = np.linspace(0, 10, 30) if t is None else t
    return [Signal(t, f(t, rng) + (rng.normal(0, noise, t.size) if noise else 0), i) for i in range(n)]


def test_exact_lines_pick_degree_one(rng):
    sigs = _units(lambda t, r: r.normal(1, 0.5) + r.normal(0.3, 0.1) * t, 20, rng)
    model = me_fit(sigs)
    assert model.degree == 1
    t = np.linspace(0, 10, 7)
    mean_line = np.mean([s.values for s in sigs], axis=0)
    np.testing.assert_allclose(model.mean_curve(np.linspace(0, 10, 30)), mean_line, atol=1e-9)
    assert model.noise_variance < 1e-8


def test_constant_signals_pick_degree_zero(rng):
    sigs = _units(lambda t, r: np.full_like(t, 2.5), 10, rng)
    model = me_fit(sigs)
    assert model.degree == 0
    assert model.fixed_effects[0] == pytest.approx(2.5)
    assert model.noise_variance == pytest.approx(1e-10)


def test_cubic_population_picks_degree_three():
    rng = np.random.default_rng(2024)
    hits = 0
    for _ in range(50):
        sigs = _units(lambda t, r: (1 + r.normal(0, 0.5)) + (0.5 + r.normal(0, 0.05)) * t
                      - 0.3 * t**2 + 0.03 * t**3, 50, rng, noise=0.1)
        hits += me_fit(sigs).degree == 3
    assert hits >= 45


def test_me_fit_rejects_tiny_input(rng):
    with pytest.raises(ValueError):
        me_fit(_units(lambda t, r: t, 2, rng))


def test_me_predict_without_observations(rng):
    sigs = _units(lambda t, r: r.normal(1, 0.5) + r.normal(0.3, 0.1) * t, 20, rng, noise=0.05)
    model = me_fit(sigs)
    t = np.linspace(0, 10, 5)
    mean, var = me_predict(model, Signal([], []), t)
    np.testing.assert_allclose(mean, model.mean_curve(t))
    assert np.all(var >= model.noise_variance)


def test_noiseless_line_is_reproduced(rng):
    sigs = _units(lambda t, r: r.normal(1, 0.5) + r.normal(0.3, 0.1) * t, 20, rng)
    model = me_fit(sigs)
    t = np.linspace(0, 4, 15)
    obs = Signal(t, 2.0 - 0.1 * t)
    tt = np.linspace(4, 10, 9)
    mean, _ = me_predict(model, obs, tt)
    np.testing.assert_allclose(mean, 2.0 - 0.1 * tt, atol=1e-6)


def test_me_posterior_matches_oracle_and_contracts(rng):
    sigs = _units(lambda t, r: r.normal(1, 0.5) + r.normal(0.3, 0.1) * t - 0.02 * t**2, 30, rng, noise=0.2)
    model = me_fit(sigs)
    p = model.degree + 1
    for _ in range(20):
        t = np.sort(rng.uniform(0, 10, int(rng.integers(1, 6))))
        obs = Signal(t, rng.normal(2, 1, t.size))
        mean, cov = me_posterior(model, obs)
        X = model.design(t)
        Om = model.random_effect_cov
        joint = np.block([[Om, Om @ X.T], [X @ Om, X @ Om @ X.T + model.noise_variance * np.eye(t.size)]])
        mu = np.r_[model.fixed_effects, X @ model.fixed_effects]
        mo, So = gaussian_condition_oracle(mu, joint, np.arange(p, p + t.size), obs.values)
        np.testing.assert_allclose(mean, mo, atol=1e-8)
        np.testing.assert_allclose(cov, So, atol=1e-8)
        assert np.linalg.eigvalsh(Om - cov).min() >= -1e-10
