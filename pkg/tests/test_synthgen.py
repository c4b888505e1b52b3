import numpy as np
import pytest

from fpcagp import synthgen
from fpcagp.synthgen import COVARIATE, TARGET, SynthConfig, generate, truth


def test_truth_examples():
    assert truth("I", TARGET, 0.4, 1.0, 0.0) == pytest.approx(1.0)
    assert truth("I", COVARIATE, 0.4, 1.0, np.pi / 2) == pytest.approx(0.8)
    assert truth("II", TARGET, 0.4, 0.0, 5.0) == pytest.approx(7.5 - 2 * np.sin(0.4 * np.pi * 5**0.85) + 1.5 * np.pi)
    assert truth("II", COVARIATE, 0.5, 0.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        truth("III", TARGET, 0.4, 1.0, 0.0)


def test_environment_two_ends_higher():
    for w1 in 0.4 + 0.09 * np.array([-1, 0, 1]):
        assert truth("II", TARGET, w1, 3.0, 10.0) > truth("I", TARGET, w1, 3.0, 10.0)


@pytest.mark.parametrize("het,n2", [(0, 50), (50, 25), (90, 5)])
def test_heterogeneity_counts(het, n2):
    hist, test = generate(SynthConfig(heterogeneity=het, seed=1))
    assert len(hist) == 50
    assert sum(u.environment == "II" for u in hist) == n2
    assert test.environment == "II" and test.unit_id == 50


def test_samples_are_truth_plus_recorded_noise():
    hist, _ = generate(SynthConfig(n_units=3, seed=9))
    for u in hist:
        for s in (TARGET, COVARIATE):
            sig = u.streams[s]
            np.testing.assert_allclose(sig.values - u.noise[s], u.truth_at(s, sig.times), atol=1e-12)
            assert synthgen.truth_at(u, s, 1.0) == u.truth_at(s, 1.0)


def test_determinism_and_seed_dependence():
    a, ta = generate(SynthConfig(n_units=5, seed=3))
    b, tb = generate(SynthConfig(n_units=5, seed=3))
    c, _ = generate(SynthConfig(n_units=5, seed=4))
    for u, v in zip(a + [ta], b + [tb]):
        np.testing.assert_array_equal(u.streams[TARGET].values, v.streams[TARGET].values)
    assert not np.array_equal(a[0].noise[TARGET], c[0].noise[TARGET])


def test_noise_level():
    hist, _ = generate(SynthConfig(n_units=100, seed=0))
    eps = np.concatenate([u.noise[s] for u in hist for s in (TARGET, COVARIATE)])
    assert eps.size >= 10_000
    assert np.std(eps) == pytest.approx(0.05, rel=0.05)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(heterogeneity=30)
    with pytest.raises(ValueError):
        SynthConfig(noise_sd=-1)


def test_export_csv(tmp_path):
    hist, test = generate(SynthConfig(n_units=3, seed=0, points_per_signal=4))
    path = tmp_path / "d.csv"
    synthgen.export_csv(hist + [test], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "unit,stream,time,value"
    assert len(lines) == 1 + 4 * 2 * 4
