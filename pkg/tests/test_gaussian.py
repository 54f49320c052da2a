import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_spd
from dynbl.errors import NotPositiveDefinite, ShapeMismatch, SingularInnerBlock, SingularObservationCov
from dynbl.gaussian import (
    GaussianVector,
    cholesky,
    condition,
    is_psd,
    linear_conditioner,
    psd_sqrt,
    spd_inverse,
    spd_solve,
    woodbury_inverse,
)


def test_cholesky_roundtrip(rng):
    a = random_spd(rng, 6)
    fac = cholesky(a)
    assert np.allclose(fac.matrix(), a, atol=1e-14)
    assert np.allclose(fac.inverse() @ a, np.eye(6), atol=1e-12)
    assert np.isclose(fac.logdet(), np.linalg.slogdet(a)[1])
    b = rng.standard_normal((6, 2))
    assert np.allclose(fac.solve(b), np.linalg.solve(a, b))


def test_cholesky_rejects_indefinite_with_pivot():
    a = np.diag([1.0, 2.0, -1.0])
    with pytest.raises(NotPositiveDefinite) as info:
        cholesky(a)
    assert info.value.pivot == 2


def test_cholesky_rejects_nonsymmetric():
    with pytest.raises((ShapeMismatch, NotPositiveDefinite)):
        cholesky([[1.0, 0.5], [0.0, 1.0]])


def test_spd_helpers(rng):
    a = random_spd(rng, 4)
    b = rng.standard_normal(4)
    assert np.allclose(spd_solve(a, b), np.linalg.solve(a, b))
    assert np.allclose(spd_inverse(a), np.linalg.inv(a))


def test_psd_sqrt_handles_singular():
    v = np.array([1.0, 2.0, 0.5])
    a = np.outer(v, v)
    r = psd_sqrt(a)
    assert np.allclose(r @ r.T, a, atol=1e-12)


def test_gaussian_vector_validation():
    with pytest.raises(ShapeMismatch):
        GaussianVector([0.0, 0.0], np.eye(3))
    with pytest.raises(NotPositiveDefinite):
        GaussianVector([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


def test_condition_independent_blocks_unchanged():
    joint = GaussianVector([1.0, 2.0, 3.0], np.diag([1.0, 2.0, 3.0]))
    post = condition(joint, [2], [10.0])
    assert np.allclose(post.mean, [1.0, 2.0])
    assert np.allclose(post.cov, np.diag([1.0, 2.0]))


def test_condition_scalar_conjugate_update():
    # x ~ N(m, s2), y = x + e, e ~ N(0, w2)
    m, s2, w2, y = 0.3, 2.0, 0.5, 1.7
    joint = GaussianVector([m, m], [[s2, s2], [s2, s2 + w2]])
    post = condition(joint, [1], [y])
    k = s2 / (s2 + w2)
    assert np.isclose(post.mean[0], m + k * (y - m), atol=1e-14)
    assert np.isclose(post.cov[0, 0], s2 * w2 / (s2 + w2), atol=1e-14)


def test_condition_at_prior_mean_moves_nothing(rng):
    cov = random_spd(rng, 5)
    mean = rng.standard_normal(5)
    post = condition(GaussianVector(mean, cov), [3, 4], mean[[3, 4]])
    assert np.allclose(post.mean, mean[:3], atol=1e-14)


def test_sequential_conditioning_matches_joint(rng):
    cov = random_spd(rng, 6)
    mean = rng.standard_normal(6)
    joint = GaussianVector(mean, cov)
    obs = rng.standard_normal(2)
    both = condition(joint, [4, 5], obs)
    first = condition(joint, [5], obs[1:])  # components 0..4 remain
    second = condition(first, [4], obs[:1])
    assert np.allclose(both.mean, second.mean, atol=1e-12)
    assert np.allclose(both.cov, second.cov, atol=1e-12)


def test_linear_conditioner_rejects_singular_block():
    cov = np.eye(3)
    cov[1:, 1:] = 1.0
    with pytest.raises(SingularObservationCov):
        linear_conditioner(GaussianVector(np.zeros(3), cov), [1, 2])


def test_condition_bad_indices():
    joint = GaussianVector(np.zeros(2), np.eye(2))
    with pytest.raises(ShapeMismatch):
        condition(joint, [0, 0], [1.0, 1.0])
    with pytest.raises(ShapeMismatch):
        condition(joint, [0], [1.0, 2.0])


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 20), k=st.integers(1, 6), seed=st.integers(0, 2**31))
def test_woodbury_matches_dense_inverse(n, k, seed):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, n, 1.0)
    C = random_spd(rng, k, 1.0)
    U = rng.standard_normal((n, k))
    got = woodbury_inverse(np.linalg.inv(A), U, np.linalg.inv(C), U)
    want = np.linalg.inv(A + U @ C @ U.T)
    assert np.allclose(got, want, rtol=1e-8, atol=1e-8 * np.abs(want).max())


def test_woodbury_singular_inner():
    # A + U C V^T with C^{-1} + V^T A^{-1} U = 0
    A_inv = np.eye(1)
    with pytest.raises(SingularInnerBlock):
        woodbury_inverse(A_inv, [[1.0]], [[-1.0]], [[1.0]])


def test_woodbury_shape_check():
    with pytest.raises(ShapeMismatch):
        woodbury_inverse(np.eye(3), np.ones((2, 1)), np.eye(1), np.ones((3, 1)))


def test_is_psd():
    assert is_psd(np.zeros((2, 2)))
    assert not is_psd(np.diag([1.0, -0.1]))
