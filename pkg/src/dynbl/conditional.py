"""Log-return dynamics conditional on a view.

Under the prior, ``X(t) = t mu_x + L V(t)`` with ``V`` a standard Brownian
motion.  Given a view ``Y = P X(T) + sqrt(T) eps = y`` the process is a
mean-reverting Gaussian process:

    dX = (mu_tilde(t, X) - diag(Sigma) / 2) dt + dW^y
    mu_tilde(t, x) = mu + beta1 (y - T P mu_x) + beta2(t) (E[X(t)] - x)

Times here are measured from the moment the view is given, and ``x`` is the
log-return accumulated since then.  View vectors may be batched: ``y`` of
shape ``(n, K)`` with ``x`` of shape ``(n, N)`` evaluates ``n`` scenarios at
once.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import GridOutOfRange, NotPositiveDefinite, ShapeMismatch, SingularViewGram, ValidationError
from .gaussian import GaussianVector, cholesky, linear_conditioner, psd_sqrt, symmetrize
from .market import MarketModel, ViewSet, rng_from


@dataclass(frozen=True)
class ConditionalCoefficients:
    """Coefficients of the view-conditioned log-return process."""

    market: MarketModel
    views: ViewSet
    y: NDArray

    @property
    def T(self) -> float:
        return self.views.length

    @cached_property
    def gram(self) -> NDArray:
        """``P Sigma P^T``."""
        P = self.views.P
        return symmetrize(P @ self.market.sigma @ P.T)

    @cached_property
    def _gram_fac(self):
        try:
            return cholesky(self.gram + self.views.omega)
        except NotPositiveDefinite:
            raise SingularViewGram("P Sigma P^T + Omega is singular") from None

    @cached_property
    def beta1(self) -> NDArray:
        """``Sigma P^T (P Sigma P^T + Omega)^{-1} / T``, shape (N, K)."""
        return self._gram_fac.solve(self.views.P @ self.market.sigma).T / self.T

    @cached_property
    def sigma_post(self) -> NDArray:
        """``(Sigma^{-1} + P^T Omega^{-1} P)^{-1}``."""
        P = self.views.P
        prec = self.market.sigma_inv + P.T @ cholesky(self.views.omega).solve(P)
        return cholesky(symmetrize(prec)).inverse()

    def _inner(self, t: float):
        """Cholesky factor of ``(T - t) P Sigma P^T + T Omega``."""
        return cholesky(symmetrize((self.T - t) * self.gram + self.T * self.views.omega))

    def beta2(self, t: float) -> NDArray:
        """``Sigma P^T ((T - t) P Sigma P^T + T Omega)^{-1} P``."""
        P = self.views.P
        return self.market.sigma @ P.T @ self._inner(t).solve(P)

    def eta(self, t: float) -> NDArray:
        """``-P^T ((T - t) P Sigma P^T + T Omega)^{-1} P``, so ``beta2 = -Sigma eta``."""
        P = self.views.P
        return -symmetrize(P.T @ self._inner(t).solve(P))

    @property
    def view_gap(self) -> NDArray:
        """``y - T P mu_x``; the view's surprise relative to the prior."""
        return self.y - self.T * (self.views.P @ self.market.mu_x)

    @cached_property
    def drift_shift(self) -> NDArray:
        """``beta1 (y - T P mu_x)``."""
        return self.view_gap @ self.beta1.T

    def cond_mean(self, t) -> NDArray:
        """``E[X(t) | Y = y] = t (mu_x + beta1 (y - T P mu_x))``."""
        t = np.asarray(t, dtype=float)
        base = self.market.mu_x + self.drift_shift
        return t[..., None] * base if t.ndim else t * base

    def cond_cov(self, s: float, t: float) -> NDArray:
        """``Cov(X(s), X(t) | Y) = min(s,t) Sigma - (s t / T) Sigma P^T (P Sigma P^T + Omega)^{-1} P Sigma``."""
        T = self.T
        lo, hi = min(s, t), max(s, t)
        return symmetrize(lo * (1.0 - hi / T) * self.market.sigma + (lo * hi / T) * self.sigma_post)

    def drift(self, t: float, x: ArrayLike) -> NDArray:
        """``mu_tilde(t, x)``: expected arithmetic return rate given the state."""
        x = np.asarray(x, dtype=float)
        return (self.market.mu + self.drift_shift
                + (self.cond_mean(t) - x) @ self.beta2(t).T)

    def log_drift(self, t: float, x: ArrayLike) -> NDArray:
        """Drift of the log-returns, ``mu_tilde(t, x) - diag(Sigma) / 2``."""
        return self.drift(t, x) - 0.5 * np.diag(self.market.sigma)

    def joint_with_view(self, times: ArrayLike) -> GaussianVector:
        """Prior joint law of ``(X(t_1), ..., X(t_m), Y)`` stacked time-major."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        sig, P, T = self.market.sigma, self.views.P, self.T
        N, K, m = self.market.n_assets, self.views.n_views, times.size
        d = m * N + K
        cov = np.empty((d, d))
        mean = np.empty(d)
        for i, ti in enumerate(times):
            mean[i * N:(i + 1) * N] = ti * self.market.mu_x
            for j, tj in enumerate(times):
                cov[i * N:(i + 1) * N, j * N:(j + 1) * N] = min(ti, tj) * sig
            cov[i * N:(i + 1) * N, m * N:] = ti * sig @ P.T
            cov[m * N:, i * N:(i + 1) * N] = ti * P @ sig
        cov[m * N:, m * N:] = T * (P @ sig @ P.T) + T * self.views.omega
        mean[m * N:] = T * P @ self.market.mu_x
        return GaussianVector(mean, symmetrize(cov))


def conditional_coefficients(market: MarketModel, views: ViewSet, y: ArrayLike | None = None
                             ) -> ConditionalCoefficients:
    """Build the conditional coefficients for a realised view.

    ``y`` may have shape ``(K,)`` or ``(n, K)``; if omitted ``views.y`` is used.

    Raises
    ------
    SingularViewGram
        If ``P Sigma P^T + Omega`` is singular.
    """
    if y is None:
        y = views.y
    if y is None:
        raise ValidationError("no view value given")
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != views.n_views or views.P.shape[1] != market.n_assets:
        raise ShapeMismatch("view, pick matrix and market dimensions disagree")
    coeffs = ConditionalCoefficients(market, views, y)
    coeffs.beta1  # factorise eagerly so singular grams fail here
    return coeffs


def kalman_smoother_oracle(market: MarketModel, views: ViewSet, y: ArrayLike, n_steps: int):
    """Smoothing distribution of the discretised log-return chain.

    The chain is ``X_{k+1} = X_k + mu_x dt + w_k`` with ``w_k ~ N(0, dt Sigma)``,
    ``X_0 = 0``, observed once at the end through ``y = P X_n + sqrt(T) eps``.
    A forward Kalman filter followed by a Rauch-Tung-Striebel pass gives the
    exact posterior marginals.

    Returns
    -------
    times : ndarray, shape (n_steps + 1,)
    means : ndarray, shape (n_steps + 1, N)
    covs : ndarray, shape (n_steps + 1, N, N)
    """
    if n_steps < 2:
        raise ValidationError("n_steps must be at least 2")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    T = views.length
    N = market.n_assets
    dt = T / n_steps
    Q = dt * market.sigma
    P, R = views.P, T * views.omega
    times = np.linspace(0.0, T, n_steps + 1)

    xf = np.zeros((n_steps + 1, N))
    Pf = np.zeros((n_steps + 1, N, N))
    xp = np.zeros((n_steps + 1, N))
    Pp = np.zeros((n_steps + 1, N, N))
    for k in range(1, n_steps + 1):
        xp[k] = xf[k - 1] + market.mu_x * dt
        Pp[k] = Pf[k - 1] + Q
        xf[k], Pf[k] = xp[k], Pp[k]
    # single measurement at the final step
    S = symmetrize(P @ Pp[-1] @ P.T + R)
    gain = cholesky(S).solve(P @ Pp[-1]).T
    xf[-1] = xp[-1] + gain @ (y - P @ xp[-1])
    Pf[-1] = symmetrize(Pp[-1] - gain @ S @ gain.T)

    xs, Ps = xf.copy(), Pf.copy()
    for k in range(n_steps - 1, -1, -1):
        # transition matrix is the identity
        if k == 0:
            C = np.zeros((N, N))
        else:
            C = cholesky(Pp[k + 1]).solve(Pf[k]).T
        xs[k] = xf[k] + C @ (xs[k + 1] - xp[k + 1])
        Ps[k] = symmetrize(Pf[k] + C @ (Ps[k + 1] - Pp[k + 1]) @ C.T)
    return times, xs, Ps


@dataclass(frozen=True)
class ConditionalPaths:
    times: NDArray
    log_returns: NDArray
    prices: NDArray


def _check_grid(grid, T) -> NDArray:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.ndim != 1 or grid.size == 0 or grid[0] < 0 or grid[-1] > T * (1 + 1e-12):
        raise GridOutOfRange("grid must lie inside [0, T]")
    if np.any(np.diff(grid) <= 0):
        raise GridOutOfRange("grid must be strictly increasing")
    return grid


def transition_law(coeffs: ConditionalCoefficients, s: float, t: float):
    """Gain and covariance of ``X(t)`` given ``(X(s), Y)`` for ``0 < s < t``.

    Returns ``(joint, gain, cov, free, obs)`` from conditioning the prior joint
    of ``(X(s), X(t), Y)`` on ``(X(s), Y)``.
    """
    joint = coeffs.joint_with_view([s, t])
    N, K = coeffs.market.n_assets, coeffs.views.n_views
    obs = np.r_[np.arange(N), 2 * N + np.arange(K)]
    gain, cov, free, obs = linear_conditioner(joint, obs)
    return joint, gain, cov, free, obs


def simulate_conditional_paths(coeffs: ConditionalCoefficients, grid: ArrayLike, n_paths: int,
                               rng_seed=None, s0: ArrayLike | None = None,
                               method: str = "exact") -> ConditionalPaths:
    """Sample log-return and price paths under the view-conditioned law.

    The default draws every step from the exact Gaussian transition;
    ``method="euler"`` discretises the SDE instead and is meant for
    cross-validation.  ``coeffs.y`` may be a single view or one per path.
    """
    grid = _check_grid(grid, coeffs.T)
    rng = rng_from(rng_seed)
    N = coeffs.market.n_assets
    y = np.broadcast_to(coeffs.y, (n_paths, coeffs.views.n_views))
    x = np.empty((n_paths, grid.size, N))
    L = coeffs.market.chol.lower
    if method == "exact":
        for k, t in enumerate(grid):
            if k == 0 or grid[k - 1] == 0.0:
                if t == 0.0:
                    x[:, k] = 0.0
                    continue
                joint = coeffs.joint_with_view([t])
                gain, cov, free, obs = linear_conditioner(joint, N + np.arange(coeffs.views.n_views))
                mean = joint.mean[free] + (y - joint.mean[obs]) @ gain.T
            else:
                joint, gain, cov, free, obs = transition_law(coeffs, grid[k - 1], t)
                state = np.concatenate([x[:, k - 1], y], axis=1)
                mean = joint.mean[free] + (state - joint.mean[obs]) @ gain.T
            x[:, k] = mean + rng.standard_normal((n_paths, N)) @ psd_sqrt(cov).T
    elif method == "euler":
        if grid[0] != 0.0:
            raise GridOutOfRange("the Euler sampler starts at t = 0")
        batched = ConditionalCoefficients(coeffs.market, coeffs.views, y)
        x[:, 0] = 0.0
        for k in range(grid.size - 1):
            t, dt = grid[k], grid[k + 1] - grid[k]
            x[:, k + 1] = (x[:, k] + batched.log_drift(t, x[:, k]) * dt
                           + np.sqrt(dt) * rng.standard_normal((n_paths, N)) @ L.T)
    else:
        raise ValidationError(f"unknown sampling method {method!r}")
    s0 = np.ones(N) if s0 is None else np.asarray(s0, dtype=float)
    return ConditionalPaths(grid, x, s0 * np.exp(x))


def write_path_csv(paths: ConditionalPaths, path, max_paths: int | None = None) -> None:
    """Dump paths as ``path_id,t,asset_index,log_return,price`` rows."""
    n = paths.log_returns.shape[0] if max_paths is None else min(max_paths, paths.log_returns.shape[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "t", "asset_index", "log_return", "price"])
        for p in range(n):
            for k, t in enumerate(paths.times):
                for i in range(paths.log_returns.shape[2]):
                    w.writerow([p, repr(float(t)), i, repr(float(paths.log_returns[p, k, i])),
                                repr(float(paths.prices[p, k, i]))])
