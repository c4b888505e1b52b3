import numpy as np
import pytest

from fpcagp.oracles import finite_difference_gradient, gaussian_condition_oracle


def test_bivariate_conditioning():
    m, S = gaussian_condition_oracle([0.0, 1.0], [[2.0, 1.0], [1.0, 2.0]], [1], [3.0])
    np.testing.assert_allclose(m, [1.0])
    np.testing.assert_allclose(S, [[1.5]])


def test_solve_and_inverse_paths_agree(rng):
    A = rng.normal(size=(6, 6))
    cov = A @ A.T + np.eye(6)
    mean = rng.normal(size=6)
    vals = rng.normal(size=3)
    a = gaussian_condition_oracle(mean, cov, [0, 2, 5], vals)
    b = gaussian_condition_oracle(mean, cov, [0, 2, 5], vals, use_inverse=True)
    np.testing.assert_allclose(a[0], b[0], atol=1e-10)
    np.testing.assert_allclose(a[1], b[1], atol=1e-10)


def test_nothing_observed_and_singular_block():
    m, S = gaussian_condition_oracle([1.0, 2.0], np.eye(2), [], [])
    np.testing.assert_array_equal(m, [1.0, 2.0])
    with pytest.raises(np.linalg.LinAlgError):
        gaussian_condition_oracle([0, 0, 0], np.ones((3, 3)), [0, 1], [1.0, 1.0])


def test_finite_differences():
    g = finite_difference_gradient(lambda x: x[0] ** 2 + 3 * x[1], np.array([2.0, 5.0]))
    np.testing.assert_allclose(g, [4.0, 3.0], atol=1e-8)
    with pytest.raises(ValueError):
        finite_difference_gradient(lambda x: 0.0, np.zeros(1), step=0)
