"""Correlated Brownian motion conditioned on noisy linear terminal views.

Let ``W`` be a Brownian motion with covariance ``Sigma = L L^T`` started at
``a`` and let ``Y = P W(T) + sqrt(T) eps`` with ``eps ~ N(0, Omega)``.  Given
``Y = y`` the process ``B = W | Y`` is Gaussian with

    E[B(t)]          = a + t beta1 (y - P a)
    Cov(B(s), B(t))  = L (min(s, t) I - s t H) L^T

where ``beta1 = Sigma P^T (P Sigma P^T + Omega)^{-1} / T`` and
``H = (P L)^T (P Sigma P^T + Omega)^{-1} (P L) / T``.  The whitened process
``Bbar = L^{-1}(B - E[B])`` has components that are one-dimensional bridges
pinned to zero at ``1 / H_ii``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import GridOutOfRange, NotComparable, ShapeMismatch, SingularViewGram, ValidationError
from .gaussian import GaussianVector, cholesky, is_psd, linear_conditioner, psd_sqrt, symmetrize
from .market import rng_from

ZERO_LOADING_TOL = 1e-12


@dataclass(frozen=True)
class BridgeSpec:
    """Inputs of a conditioned Brownian motion.

    ``omega`` is the view noise covariance per unit time, so the total noise
    covariance of the view is ``T * omega``.
    """

    a: NDArray
    sigma: NDArray
    P: NDArray
    omega: NDArray
    T: float
    y: NDArray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        sigma = symmetrize(np.atleast_2d(np.asarray(self.sigma, dtype=float)))
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        omega = symmetrize(np.atleast_2d(np.asarray(self.omega, dtype=float)))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        N, K = a.size, P.shape[0]
        if sigma.shape != (N, N) or P.shape != (K, N) or omega.shape != (K, K) or y.shape != (K,):
            raise ShapeMismatch("inconsistent bridge dimensions")
        cholesky(sigma)
        cholesky(omega)
        if not self.T > 0:
            raise ValidationError("T must be positive")
        for name, val in (("a", a), ("sigma", sigma), ("P", P), ("omega", omega), ("y", y)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "T", float(self.T))

    @property
    def n(self) -> int:
        return self.a.size

    def with_omega(self, omega: ArrayLike) -> "BridgeSpec":
        return BridgeSpec(self.a, self.sigma, self.P, omega, self.T, self.y)


@dataclass(frozen=True)
class BridgeLaw:
    """Distribution of the conditioned process on ``[0, T]``."""

    spec: BridgeSpec
    L: NDArray
    beta1: NDArray
    H: NDArray
    sigma_post: NDArray
    hitting_times: NDArray
    asset_hitting_times: NDArray
    informed: NDArray

    @property
    def T(self) -> float:
        return self.spec.T

    def mean(self, t) -> NDArray:
        """``E[B(t)]``; vectorised over an array of times (trailing axis is N)."""
        t = np.asarray(t, dtype=float)
        drift = self.beta1 @ (self.spec.y - self.spec.P @ self.spec.a)
        return self.spec.a + t[..., None] * drift

    def cov(self, s: float, t: float) -> NDArray:
        """``Cov(B(s), B(t))`` for ``s, t`` in ``[0, T]``.

        Evaluated as ``lo (1 - hi/T) Sigma + (lo hi / T) Sigma_post`` with
        ``lo = min(s, t)``, ``hi = max(s, t)``; both terms are positive
        semi-definite on ``[0, T]`` which keeps the result accurate when the
        views are nearly exact.
        """
        T = self.T
        if not (0 <= s <= T * (1 + 1e-12) and 0 <= t <= T * (1 + 1e-12)):
            raise GridOutOfRange("covariance is only defined on [0, T]")
        lo, hi = min(s, t), max(s, t)
        out = lo * (1.0 - hi / T) * self.spec.sigma + (lo * hi / T) * self.sigma_post
        return symmetrize(out)

    def cov_whitened(self, s: float, t: float) -> NDArray:
        """``Cov(Bbar(s), Bbar(t)) = min(s, t) I - s t H``."""
        return min(s, t) * np.eye(self.spec.n) - s * t * self.H

    def beta2(self, t: float) -> NDArray:
        """Mean-reversion matrix ``Sigma P^T ((T - t) P Sigma P^T + T Omega)^{-1} P``."""
        s = self.spec
        g = (s.T - t) * (s.P @ s.sigma @ s.P.T) + s.T * s.omega
        return s.sigma @ s.P.T @ cholesky(symmetrize(g)).solve(s.P)

    def beta2_whitened(self, t: float) -> NDArray:
        """``(P L)^T ((1 - t/T) P Sigma P^T + Omega)^{-1} (P L) / T``."""
        s = self.spec
        PL = s.P @ self.L
        g = (1.0 - t / s.T) * (s.P @ s.sigma @ s.P.T) + s.omega
        return PL.T @ cholesky(symmetrize(g)).solve(PL) / s.T

    def joint(self, times: ArrayLike) -> GaussianVector:
        """Joint law of ``(B(t_1), ..., B(t_m))`` stacked time-major."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        n = self.spec.n
        m = times.size
        cov = np.empty((m * n, m * n))
        for i in range(m):
            for j in range(i, m):
                c = self.cov(times[i], times[j])
                cov[i * n:(i + 1) * n, j * n:(j + 1) * n] = c
                cov[j * n:(j + 1) * n, i * n:(i + 1) * n] = c.T
        return GaussianVector(self.mean(times).ravel(), cov)


def bridge_law(spec: BridgeSpec) -> BridgeLaw:
    """Closed-form law of the conditioned Brownian motion.

    Raises
    ------
    SingularViewGram
        If ``P Sigma P^T + Omega`` is not invertible.
    """
    P, sigma, omega, T = spec.P, spec.sigma, spec.omega, spec.T
    L = cholesky(sigma).lower
    gram = symmetrize(P @ sigma @ P.T + omega)
    try:
        fac = cholesky(gram)
    except Exception:
        raise SingularViewGram("P Sigma P^T + Omega is singular") from None
    beta1 = fac.solve(P @ sigma).T / T
    PL = P @ L
    H = symmetrize(PL.T @ fac.solve(PL) / T)
    # posterior covariance of W(T) / T through the precision form
    prec = symmetrize(cholesky(sigma).inverse() + P.T @ cholesky(omega).solve(P))
    sigma_post = cholesky(prec).inverse()

    scale = max(np.linalg.norm(P, 2) * np.linalg.norm(L, 2), 1e-300)
    informed = np.linalg.norm(PL, axis=0) >= ZERO_LOADING_TOL * scale
    hdiag = np.diag(H)
    hitting = np.full(spec.n, np.inf)
    hitting[informed] = 1.0 / hdiag[informed]

    # per-asset hitting times: Var(B_i(t)) = Sigma_ii (t - t^2 / T_i)
    G = symmetrize(L @ H @ L.T)
    gdiag = np.diag(G)
    col_loading = np.linalg.norm(sigma @ P.T, axis=1)
    asset_informed = col_loading >= ZERO_LOADING_TOL * max(np.linalg.norm(sigma @ P.T), 1e-300)
    asset_hitting = np.full(spec.n, np.inf)
    asset_hitting[asset_informed] = np.diag(sigma)[asset_informed] / gdiag[asset_informed]
    return BridgeLaw(spec, L, beta1, H, sigma_post, hitting, asset_hitting, informed)


def hitting_time_monotonicity_check(spec: BridgeSpec, omega_larger: ArrayLike) -> bool:
    """True iff hitting times do not decrease when the view noise grows.

    Both the whitened-component and the per-asset hitting times are compared.

    Raises
    ------
    NotComparable
        If ``omega_larger - spec.omega`` is not positive semi-definite.
    """
    omega_larger = symmetrize(np.atleast_2d(np.asarray(omega_larger, dtype=float)))
    if not is_psd(omega_larger - spec.omega):
        raise NotComparable("omega_larger - omega is indefinite")
    small = bridge_law(spec)
    large = bridge_law(spec.with_omega(omega_larger))
    ok = True
    for a, b in ((small.hitting_times, large.hitting_times),
                 (small.asset_hitting_times, large.asset_hitting_times)):
        both_inf = np.isinf(a) & np.isinf(b)
        ok &= bool(np.all(both_inf | (b >= a * (1 - 1e-12))))
    return ok


def _check_grid(grid, T) -> NDArray:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.ndim != 1 or grid.size == 0:
        raise GridOutOfRange("grid must be a non-empty 1-d array")
    if grid[0] < 0 or grid[-1] > T * (1 + 1e-12) or np.any(np.diff(grid) <= 0):
        raise GridOutOfRange("grid must be strictly increasing inside [0, T]")
    return grid


def sample_bridge_paths(law: BridgeLaw, grid: ArrayLike, n_paths: int, rng_seed=None,
                        method: str = "exact") -> NDArray:
    """Sample paths of the conditioned process on ``grid``.

    ``method="exact"`` draws every step from the exact conditional law of
    ``B(t_{k+1})`` given ``B(t_k)``.  ``method="euler"`` integrates the bridge
    SDE with an Euler scheme on the grid and exists for cross-checks only.

    Returns
    -------
    ndarray, shape (n_paths, len(grid), N)
    """
    grid = _check_grid(grid, law.T)
    rng = rng_from(rng_seed)
    n = law.spec.n
    out = np.empty((n_paths, grid.size, n))
    if method == "exact":
        for k, t in enumerate(grid):
            if k == 0 or grid[k - 1] == 0.0:
                # nothing random to condition on yet: draw from the marginal
                out[:, k] = law.mean(t) + rng.standard_normal((n_paths, n)) @ psd_sqrt(law.cov(t, t)).T
                continue
            joint = law.joint([grid[k - 1], t])
            gain, cond_cov, free, obs = linear_conditioner(joint, np.arange(n))
            shift = (out[:, k - 1] - joint.mean[obs]) @ gain.T
            out[:, k] = (joint.mean[free] + shift
                         + rng.standard_normal((n_paths, n)) @ psd_sqrt(cond_cov).T)
        return out
    if method == "euler":
        if grid[0] != 0.0:
            raise GridOutOfRange("the Euler sampler starts at t = 0")
        s = law.spec
        drift0 = law.beta1 @ (s.y - s.P @ s.a)
        out[:, 0] = s.a
        for k in range(grid.size - 1):
            t, dt = grid[k], grid[k + 1] - grid[k]
            dev = out[:, k] - law.mean(t)
            step = drift0 - dev @ law.beta2(t).T
            out[:, k + 1] = out[:, k] + step * dt + np.sqrt(dt) * rng.standard_normal((n_paths, n)) @ law.L.T
        return out
    raise ValidationError(f"unknown sampling method {method!r}")


def sample_bridge_path(law: BridgeLaw, grid: ArrayLike, rng_seed=None, method: str = "exact") -> NDArray:
    """Single path, shape ``(len(grid), N)``."""
    return sample_bridge_paths(law, grid, 1, rng_seed, method)[0]
