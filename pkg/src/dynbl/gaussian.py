"""Finite-dimensional Gaussian algebra.

Conditioning of joint Gaussian vectors, the Woodbury identity and Cholesky
factorisation.  These routines are used both by the closed-form formulas in
the rest of the package and as brute-force oracles in the tests, so they are
written in the most direct way rather than the most clever one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .errors import (
    NotPositiveDefinite,
    ShapeMismatch,
    SingularInnerBlock,
    SingularObservationCov,
)

PSD_TOL = 1e-10
SYM_TOL = 1e-12


def symmetrize(a: NDArray) -> NDArray:
    """Average a square matrix (or a stack of them) with its transpose."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def is_psd(a: NDArray, tol: float = PSD_TOL) -> bool:
    """True if every eigenvalue of the symmetric part is >= -tol * ||a||."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return True
    scale = max(np.linalg.norm(a, 2), 1.0e-300)
    return bool(np.linalg.eigvalsh(symmetrize(a))[0] >= -tol * scale)


def as_square(a: ArrayLike, name: str = "matrix") -> NDArray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular ``L`` with ``L @ L.T`` equal to the factored matrix."""

    lower: NDArray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def matrix(self) -> NDArray:
        return self.lower @ self.lower.T

    def solve(self, b: ArrayLike) -> NDArray:
        """Solve ``(L L^T) z = b`` for a vector or a matrix right-hand side."""
        return linalg.cho_solve((self.lower, True), np.asarray(b, dtype=float),
                                check_finite=False)

    def solve_lower(self, b: ArrayLike) -> NDArray:
        """Solve ``L z = b``."""
        return linalg.solve_triangular(self.lower, np.asarray(b, dtype=float),
                                       lower=True, check_finite=False)

    def inverse(self) -> NDArray:
        return symmetrize(self.solve(np.eye(self.dim)))

    def lower_inverse(self) -> NDArray:
        return self.solve_lower(np.eye(self.dim))

    def logdet(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.lower))))


def cholesky(cov: ArrayLike) -> CholeskyFactor:
    """Cholesky factor of a symmetric positive definite matrix.

    Parameters
    ----------
    cov : array_like, shape (d, d)

    Returns
    -------
    CholeskyFactor

    Raises
    ------
    NotPositiveDefinite
        With ``pivot`` set to the zero-based index of the failing pivot.
    """
    a = as_square(cov, "cov")
    if not np.allclose(a, a.T, rtol=SYM_TOL, atol=SYM_TOL * max(np.abs(a).max(), 1.0)):
        raise NotPositiveDefinite("matrix is not symmetric", pivot=None)
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite("matrix has non-finite entries", pivot=None)
    c, info = linalg.lapack.dpotrf(symmetrize(a), lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefinite(
            f"matrix is not positive definite (pivot {info - 1} failed)", pivot=info - 1)
    if info < 0:  # pragma: no cover - LAPACK argument error
        raise NotPositiveDefinite(f"dpotrf argument error {info}")
    return CholeskyFactor(np.tril(c))


def spd_solve(a: ArrayLike, b: ArrayLike) -> NDArray:
    """Solve ``a z = b`` for symmetric positive definite ``a``."""
    return cholesky(a).solve(b)


def spd_inverse(a: ArrayLike) -> NDArray:
    """Explicit inverse of an SPD matrix, computed through its Cholesky factor."""
    return cholesky(a).inverse()


@dataclass(frozen=True)
class GaussianVector:
    """Mean vector and covariance matrix of a multivariate normal."""

    mean: NDArray
    cov: NDArray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ShapeMismatch(f"mean {mean.shape} and cov {cov.shape} are incompatible")
        scale = max(np.abs(cov).max(initial=0.0), 1.0)
        if not np.allclose(cov, cov.T, rtol=SYM_TOL, atol=SYM_TOL * scale):
            raise ShapeMismatch("cov is not symmetric")
        if not is_psd(cov):
            raise NotPositiveDefinite("cov is not positive semi-definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", symmetrize(cov))

    @property
    def dim(self) -> int:
        return self.mean.size

    def marginal(self, indices) -> "GaussianVector":
        idx = np.asarray(indices, dtype=int)
        return GaussianVector(self.mean[idx], self.cov[np.ix_(idx, idx)])


def psd_sqrt(a: ArrayLike) -> NDArray:
    """Matrix ``R`` with ``R R^T = a`` for a symmetric PSD ``a``.

    Uses Cholesky when possible and falls back to an eigendecomposition with
    tiny negative eigenvalues clipped, so singular covariances are fine.
    """
    a = symmetrize(a)
    c, info = linalg.lapack.dpotrf(a, lower=1, clean=1)
    if info == 0:
        return np.tril(c)
    w, v = np.linalg.eigh(a)
    return v * np.sqrt(np.clip(w, 0.0, None))


def _split(joint: GaussianVector, observed_indices):
    obs = np.asarray(observed_indices, dtype=int).ravel()
    if len(set(obs.tolist())) != obs.size or np.any(obs < 0) or np.any(obs >= joint.dim):
        raise ShapeMismatch("observed indices must be distinct and in range")
    free = np.setdiff1d(np.arange(joint.dim), obs)
    return free, obs


def linear_conditioner(joint: GaussianVector, observed_indices):
    """Gain and residual covariance for conditioning on some components.

    Returns ``(gain, cov, free, obs)`` such that, given the observed block
    equals ``v``, the free block is normal with mean
    ``joint.mean[free] + gain @ (v - joint.mean[obs])`` and covariance ``cov``.
    The gain does not depend on ``v``, which lets callers condition many
    observations at once.

    Raises
    ------
    SingularObservationCov
        If the observed block is numerically singular (smallest eigenvalue
        at most ``1e-12`` times its trace).
    """
    free, obs = _split(joint, observed_indices)
    s_yy = joint.cov[np.ix_(obs, obs)]
    s_xy = joint.cov[np.ix_(free, obs)]
    s_xx = joint.cov[np.ix_(free, free)]
    eig = np.linalg.eigvalsh(s_yy)
    if eig.size and eig[0] <= 1e-12 * max(np.trace(s_yy), 1e-300):
        raise SingularObservationCov("observed covariance block is singular")
    gain = cholesky(s_yy).solve(s_xy.T).T
    cov = symmetrize(s_xx - gain @ s_xy.T)
    return gain, cov, free, obs


def condition(joint: GaussianVector, observed_indices, observation: ArrayLike) -> GaussianVector:
    """Law of the unobserved components of ``joint`` given the observed ones.

    The returned vector lists the unobserved components in increasing index
    order.

    Raises
    ------
    SingularObservationCov
        If the covariance block of the observed components is numerically
        singular.
    """
    y = np.atleast_1d(np.asarray(observation, dtype=float))
    if np.asarray(observed_indices).size != y.size:
        raise ShapeMismatch(f"{np.asarray(observed_indices).size} observed indices "
                            f"but observation of length {y.size}")
    gain, cov, free, obs = linear_conditioner(joint, observed_indices)
    mean = joint.mean[free] + gain @ (y - joint.mean[obs])
    return GaussianVector(mean, cov)


def woodbury_inverse(A_inv: ArrayLike, U: ArrayLike, C_inv: ArrayLike, V: ArrayLike) -> NDArray:
    """Inverse of ``A + U C V^T`` given ``A^{-1}`` and ``C^{-1}``.

    Uses ``A^{-1} - A^{-1} U (C^{-1} + V^T A^{-1} U)^{-1} V^T A^{-1}``.

    Raises
    ------
    ShapeMismatch
        If the blocks have incompatible shapes.
    SingularInnerBlock
        If ``C^{-1} + V^T A^{-1} U`` is numerically singular.
    """
    A_inv = as_square(A_inv, "A_inv")
    C_inv = as_square(C_inv, "C_inv")
    U = np.atleast_2d(np.asarray(U, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n, k = A_inv.shape[0], C_inv.shape[0]
    if U.shape != (n, k) or V.shape != (n, k):
        raise ShapeMismatch(f"U {U.shape} and V {V.shape} must both be {(n, k)}")
    inner = C_inv + V.T @ A_inv @ U
    if k == 0:
        return A_inv.copy()
    if np.linalg.cond(inner) > 1e14:
        raise SingularInnerBlock("inner block of the Woodbury identity is singular")
    lu = linalg.lu_factor(inner, check_finite=False)
    out = A_inv - A_inv @ U @ linalg.lu_solve(lu, V.T @ A_inv, check_finite=False)
    if np.allclose(U, V) and np.allclose(A_inv, A_inv.T) and np.allclose(C_inv, C_inv.T):
        out = symmetrize(out)
    return out
