"""Prior market model and view structures.

Four view structures are supported:

* ``ViewSet``: one noisy view ``Y = P X(T) + sqrt(T) eps`` of the terminal
  log-return.
* ``RevisionSchedule``: a view over the remaining horizon that is replaced
  by a less noisy one at fixed revision dates.
* ``ShortTermSchedule``: views over consecutive intervals whose noise
  follows a vector autoregression.
* ``MultiHorizonViews``: views on log-returns over different horizons.

The last three can be reduced to the first one interval by interval; the
reductions live here (``refine_short_term_view``, ``collapse_multi_horizon``)
and in :mod:`dynbl.policy`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    DegeneratePick,
    MissingHistory,
    NotPD,
    NotPositiveDefinite,
    ShapeMismatch,
    UnsortedHorizons,
    ValidationError,
)
from .gaussian import CholeskyFactor, cholesky, is_psd, symmetrize


def rng_from(seed) -> np.random.Generator:
    """Accept an int, a SeedSequence, a Generator or None."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _matrix(a, name) -> NDArray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2:
        raise ShapeMismatch(f"{name} must be a matrix")
    return a


def _spd(a, name) -> NDArray:
    a = _matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got {a.shape}")
    try:
        cholesky(a)
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(f"{name}: {exc}", pivot=exc.pivot) from None
    return symmetrize(a)


def log_view_target(arithmetic_return: ArrayLike) -> NDArray:
    """Convert an arithmetic return target over the view horizon to a log target."""
    r = np.asarray(arithmetic_return, dtype=float)
    if np.any(r <= -1.0):
        raise ValidationError("arithmetic return targets must exceed -100%")
    return np.log1p(r)


@dataclass(frozen=True)
class MarketModel:
    """Geometric Brownian motion prior.

    ``mu`` are expected arithmetic returns per year, ``sigma`` the covariance
    of returns per year, ``r_f`` the risk-free rate and ``horizon`` the
    investment horizon in years.
    """

    mu: NDArray
    sigma: NDArray
    r_f: float = 0.0
    horizon: float = 1.0

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = _spd(self.sigma, "sigma")
        if sigma.shape != (mu.size, mu.size):
            raise ShapeMismatch(f"mu has {mu.size} entries but sigma is {sigma.shape}")
        if not self.horizon > 0:
            raise ValidationError("horizon must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "r_f", float(self.r_f))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def n_assets(self) -> int:
        return self.mu.size

    @cached_property
    def chol(self) -> CholeskyFactor:
        return cholesky(self.sigma)

    @cached_property
    def mu_x(self) -> NDArray:
        """Drift of the log-returns, ``mu - diag(sigma) / 2``."""
        return self.mu - 0.5 * np.diag(self.sigma)

    @cached_property
    def sigma_inv(self) -> NDArray:
        return self.chol.inverse()

    def excess_mu(self) -> NDArray:
        return self.mu - self.r_f

    def merton_weights(self, gamma: float) -> NDArray:
        """Constant-weight optimum for an investor with no views."""
        return self.chol.solve(self.mu - self.r_f) / gamma

    def with_horizon(self, horizon: float) -> "MarketModel":
        return MarketModel(self.mu, self.sigma, self.r_f, horizon)


@dataclass(frozen=True)
class ViewSet:
    """Noisy linear view on log-returns over ``[given_at, horizon]``.

    The view is ``Y = P (X(horizon) - X(given_at)) + sqrt(horizon - given_at) eps``
    with ``eps ~ N(0, omega)``; ``omega`` is a covariance per unit time.
    """

    P: NDArray
    omega: NDArray
    horizon: float
    given_at: float = 0.0
    y: NDArray | None = None

    def __post_init__(self):
        P = _matrix(self.P, "P")
        omega = _spd(self.omega, "omega")
        if omega.shape != (P.shape[0], P.shape[0]):
            raise ShapeMismatch(f"P has {P.shape[0]} rows but omega is {omega.shape}")
        if np.any(np.linalg.norm(P, axis=1) == 0.0):
            raise DegeneratePick("every row of P must be nonzero")
        if not self.given_at < self.horizon:
            raise ValidationError("view must be given strictly before its horizon")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "given_at", float(self.given_at))
        if self.y is not None:
            y = np.asarray(self.y, dtype=float)
            if y.shape[-1] != P.shape[0]:
                raise ShapeMismatch(f"y has trailing size {y.shape[-1]}, expected {P.shape[0]}")
            object.__setattr__(self, "y", y)

    @property
    def n_views(self) -> int:
        return self.P.shape[0]

    @property
    def length(self) -> float:
        return self.horizon - self.given_at

    def with_y(self, y: ArrayLike) -> "ViewSet":
        return ViewSet(self.P, self.omega, self.horizon, self.given_at, y)

    def scaled(self, factor: float) -> "ViewSet":
        return ViewSet(self.P, factor * self.omega, self.horizon, self.given_at, self.y)


def make_omega_alpha(market: MarketModel, P: ArrayLike, alpha: float) -> NDArray:
    """View noise proportional to the prior variance of the picked portfolios."""
    if not alpha > 0:
        raise ValidationError("alpha must be positive")
    P = _matrix(P, "P")
    if P.shape[1] != market.n_assets:
        raise ShapeMismatch("P has the wrong number of columns")
    gram = symmetrize(P @ market.sigma @ P.T)
    try:
        cholesky(gram)
    except NotPositiveDefinite:
        raise DegeneratePick("P sigma P^T is singular; the views are redundant") from None
    return alpha * gram


def sample_view(market: MarketModel, views: ViewSet, x_T: ArrayLike, rng_seed=None) -> NDArray:
    """Draw ``P x_T + sqrt(length) z`` with ``z ~ N(0, omega)``.

    ``x_T`` is the log-return over the view window, shape ``(N,)`` or
    ``(n, N)``; the result has shape ``(K,)`` or ``(n, K)``.
    """
    x_T = np.asarray(x_T, dtype=float)
    if x_T.shape[-1] != market.n_assets:
        raise ShapeMismatch(f"x_T has trailing size {x_T.shape[-1]}, expected {market.n_assets}")
    rng = rng_from(rng_seed)
    L = cholesky(views.omega).lower
    z = rng.standard_normal(x_T.shape[:-1] + (views.n_views,)) @ L.T
    return x_T @ views.P.T + np.sqrt(views.length) * z


@dataclass(frozen=True)
class RevisionSchedule:
    """Views over ``[t_j, T]`` revised at ``times = (t_0=0, t_1, ..., t_M)``.

    ``omegas[j]`` is the total covariance of the noise of the view received at
    ``t_j``.  Each revision must remove some noise: ``omegas[j] - omegas[j+1]``
    is positive semi-definite and nonzero.
    """

    times: NDArray
    omegas: tuple
    P: NDArray
    horizon: float
    innovation_covs: tuple = field(init=False)

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        P = _matrix(self.P, "P")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0) or times[-1] >= self.horizon:
            raise ValidationError("revision times must satisfy 0 = t_0 < t_1 < ... < t_M < T")
        if len(self.omegas) != times.size:
            raise ShapeMismatch("need one noise covariance per revision time")
        omegas = tuple(_spd(o, f"omegas[{j}]") for j, o in enumerate(self.omegas))
        for o in omegas:
            if o.shape != (P.shape[0], P.shape[0]):
                raise ShapeMismatch("noise covariance does not match P")
        innov = []
        for j in range(len(omegas) - 1):
            d = symmetrize(omegas[j] - omegas[j + 1])
            if not is_psd(d) or np.linalg.norm(d) <= 1e-12 * np.linalg.norm(omegas[j]):
                raise NotPD(f"omegas[{j}] - omegas[{j + 1}] must be positive semi-definite and nonzero")
            innov.append(d)
        innov.append(omegas[-1])
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "innovation_covs", tuple(innov))

    @property
    def n_revisions(self) -> int:
        return self.times.size - 1

    def interval_of(self, t: float) -> int:
        """Index ``j`` with ``t_j <= t < t_{j+1}`` (the last interval is closed at ``T``)."""
        if t < 0 or t > self.horizon:
            raise ValidationError(f"time {t} outside [0, {self.horizon}]")
        return int(np.searchsorted(self.times, t, side="right") - 1)

    def end_of(self, j: int) -> float:
        return float(self.times[j + 1]) if j + 1 < self.times.size else self.horizon

    def sample_views(self, x_at_times: ArrayLike, x_T: ArrayLike, rng_seed=None) -> NDArray:
        """Draw the whole chain of views.

        ``x_at_times`` holds ``X(t_j)`` with shape ``(..., M+1, N)`` and ``x_T``
        holds ``X(T)`` with shape ``(..., N)``.  Returns ``(..., M+1, K)``.
        The noise is built backwards: the last noise is drawn from its
        covariance and each earlier one adds an independent innovation.
        """
        x_at = np.asarray(x_at_times, dtype=float)
        x_T = np.asarray(x_T, dtype=float)
        rng = rng_from(rng_seed)
        batch = x_T.shape[:-1]
        K = self.P.shape[0]
        eps = np.empty(batch + (self.times.size, K))
        eps[..., -1, :] = rng.standard_normal(batch + (K,)) @ _psd_root(self.omegas[-1]).T
        for j in range(self.times.size - 2, -1, -1):
            innov = rng.standard_normal(batch + (K,)) @ _psd_root(self.innovation_covs[j]).T
            eps[..., j, :] = eps[..., j + 1, :] + innov
        return (x_T[..., None, :] - x_at) @ self.P.T + eps


def _psd_root(a: NDArray) -> NDArray:
    """A square root ``R`` with ``R R^T = a`` that tolerates singular ``a``."""
    w, v = np.linalg.eigh(symmetrize(a))
    return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class ShortTermSchedule:
    """Views over consecutive intervals ``[T_j, T_{j+1}]``.

    The view for interval ``j`` is ``Y^j = P (X(T_{j+1}) - X(T_j)) + eps^j``
    with ``eps^j = sum_i phi[i-1] eps^{j-i} + eps^{j,0}`` (the sum stops at the
    first interval) and ``eps^{j,0} ~ N(0, idio_covs[j])``.
    """

    times: NDArray
    P: NDArray
    phi: tuple
    idio_covs: tuple

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        P = _matrix(self.P, "P")
        K = P.shape[0]
        if times.size < 2 or times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValidationError("interval boundaries must satisfy 0 = T_0 < T_1 < ... < T_{M+1}")
        phi = tuple(_matrix(f, "phi") for f in self.phi)
        for f in phi:
            if f.shape != (K, K):
                raise ShapeMismatch("autoregression matrices must be K x K")
        if len(self.idio_covs) != times.size - 1:
            raise ShapeMismatch("need one idiosyncratic covariance per interval")
        covs = tuple(_spd(c, f"idio_covs[{j}]") for j, c in enumerate(self.idio_covs))
        for c in covs:
            if c.shape != (K, K):
                raise ShapeMismatch("idiosyncratic covariance does not match P")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "idio_covs", covs)

    @property
    def order(self) -> int:
        return len(self.phi)

    @property
    def n_intervals(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def interval_of(self, t: float) -> int:
        if t < 0 or t > self.horizon:
            raise ValidationError(f"time {t} outside [0, {self.horizon}]")
        return min(int(np.searchsorted(self.times, t, side="right") - 1), self.n_intervals - 1)

    def sample_views(self, increments: ArrayLike, rng_seed=None) -> NDArray:
        """Draw raw views for all intervals.

        ``increments`` holds ``X(T_{j+1}) - X(T_j)`` with shape ``(..., M+1, N)``;
        the result has shape ``(..., M+1, K)``.
        """
        inc = np.asarray(increments, dtype=float)
        rng = rng_from(rng_seed)
        batch = inc.shape[:-2]
        K = self.P.shape[0]
        eps = np.zeros(batch + (self.n_intervals, K))
        for j in range(self.n_intervals):
            e = rng.standard_normal(batch + (K,)) @ cholesky(self.idio_covs[j]).lower.T
            for i in range(1, min(self.order, j) + 1):
                e = e + eps[..., j - i, :] @ self.phi[i - 1].T
            eps[..., j, :] = e
        return inc @ self.P.T + eps


def refine_short_term_view(schedule: ShortTermSchedule, raw_views: ArrayLike,
                           realized_returns: ArrayLike | None = None) -> NDArray:
    """Remove the predictable part of the noise from the latest short-term view.

    Parameters
    ----------
    raw_views : array_like, shape (..., j+1, K)
        Views ``y^0 ... y^j``; the last one is refined.
    realized_returns : array_like, shape (..., j, N)
        ``X(T_{i+1}) - X(T_i)`` for the intervals ``0 ... j-1`` that have
        already elapsed.

    Returns
    -------
    ndarray, shape (..., K)
        ``y^j - sum_{i=1}^{min(p, j)} phi_i eps^{j-i}`` where
        ``eps^i = y^i - P (X(T_{i+1}) - X(T_i))``.
    """
    y = np.asarray(raw_views, dtype=float)
    if y.ndim < 2:
        raise ShapeMismatch("raw_views must have shape (..., j+1, K)")
    j = y.shape[-2] - 1
    p_bar = min(schedule.order, j)
    out = y[..., j, :].copy()
    if p_bar == 0:
        return out
    if realized_returns is None:
        raise MissingHistory(f"view {j} needs realized returns for intervals {j - p_bar}..{j - 1}")
    r = np.asarray(realized_returns, dtype=float)
    if r.ndim < 2 or r.shape[-2] < j:
        have = 0 if r.ndim < 2 else r.shape[-2]
        raise MissingHistory(f"view {j} needs {j} elapsed intervals of returns, got {have}")
    for i in range(1, p_bar + 1):
        eps = y[..., j - i, :] - r[..., j - i, :] @ schedule.P.T
        out = out - eps @ schedule.phi[i - 1].T
    return out


@dataclass(frozen=True)
class MultiHorizonViews:
    """Views ``Y_k = p_k^T X(T_k) + sqrt(T_k) eps_k`` with ``eps ~ N(0, omega)``."""

    horizons: NDArray
    picks: NDArray
    omega: NDArray

    def __post_init__(self):
        horizons = np.atleast_1d(np.asarray(self.horizons, dtype=float))
        picks = _matrix(self.picks, "picks")
        if np.any(np.diff(horizons) < 0):
            raise UnsortedHorizons("view horizons must be sorted in ascending order")
        if horizons[0] <= 0:
            raise ValidationError("view horizons must be positive")
        omega = _spd(self.omega, "omega")
        if picks.shape[0] != horizons.size or omega.shape != (horizons.size, horizons.size):
            raise ShapeMismatch("need one pick vector and one noise row per horizon")
        if np.any(np.linalg.norm(picks, axis=1) == 0.0):
            raise DegeneratePick("every pick vector must be nonzero")
        object.__setattr__(self, "horizons", horizons)
        object.__setattr__(self, "picks", picks)
        object.__setattr__(self, "omega", omega)

    @property
    def n_views(self) -> int:
        return self.horizons.size

    @property
    def horizon(self) -> float:
        return float(self.horizons[-1])

    def interval_of(self, t: float) -> int:
        """One-based ``j`` with ``T_{j-1} <= t < T_j`` (with ``T_0 = 0``)."""
        if t < 0 or t > self.horizon:
            raise ValidationError(f"time {t} outside [0, {self.horizon}]")
        j = int(np.searchsorted(self.horizons, t, side="right")) + 1
        return min(j, self.n_views)

    def sample_views(self, x_at_horizons: ArrayLike, rng_seed=None) -> NDArray:
        """``x_at_horizons`` has shape ``(..., K, N)`` holding ``X(T_k)``."""
        x = np.asarray(x_at_horizons, dtype=float)
        rng = rng_from(rng_seed)
        batch = x.shape[:-2]
        noise = rng.standard_normal(batch + (self.n_views,)) @ cholesky(self.omega).lower.T
        return np.einsum("...kn,kn->...k", x, self.picks) + np.sqrt(self.horizons) * noise


@dataclass(frozen=True)
class CollapsedViews:
    """Canonical single-horizon form of the views still alive on an interval.

    ``y_bar = y[indices] - mu_bar`` satisfies
    ``y_bar = P X(horizon) + sqrt(horizon) eps`` with ``eps ~ N(0, omega)``,
    independent of the log-returns up to ``horizon``.
    """

    indices: NDArray
    P: NDArray
    omega: NDArray
    mu_bar: NDArray
    horizon: float

    def view_set(self) -> ViewSet:
        return ViewSet(self.P, self.omega, self.horizon)

    def transform(self, y: ArrayLike) -> NDArray:
        """Map the full view vector (shape ``(..., K)``) to the collapsed view."""
        y = np.asarray(y, dtype=float)
        return y[..., self.indices] - self.mu_bar


def collapse_multi_horizon(views: MultiHorizonViews, market: MarketModel, j: int) -> CollapsedViews:
    """Rewrite the views ``j..K`` (one-based) as views at horizon ``T_j``.

    For ``i >= j``, ``Y_i = p_i^T X(T_j) + (T_i - T_j) p_i^T mu_x + noise`` where
    the noise collects ``p_i^T (W(T_i) - W(T_j))`` and ``sqrt(T_i) eps_i``.  The
    noise covariance is ``T_j`` times

        omega_bar[i, k] = (min(T_i, T_k) - T_j) / T_j * p_i^T Sigma p_k
                          + sqrt(T_i T_k) / T_j * omega[i, k].
    """
    if not 1 <= j <= views.n_views:
        raise ValidationError(f"interval index must be in 1..{views.n_views}, got {j}")
    if np.any(np.diff(views.horizons) < 0):  # pragma: no cover - guarded at construction
        raise UnsortedHorizons("view horizons must be sorted in ascending order")
    if views.picks.shape[1] != market.n_assets:
        raise ShapeMismatch("pick vectors do not match the market")
    idx = np.arange(j - 1, views.n_views)
    T = views.horizons[idx]
    Tj = float(views.horizons[j - 1])
    P = views.picks[idx]
    lag = np.minimum.outer(T, T) - Tj
    w_part = lag / Tj * (P @ market.sigma @ P.T)
    v_part = np.sqrt(np.outer(T, T)) / Tj * views.omega[np.ix_(idx, idx)]
    omega_bar = symmetrize(w_part + v_part)
    mu_bar = (T - Tj) * (P @ market.mu_x)
    return CollapsedViews(idx, P, omega_bar, mu_bar, Tj)


def reference_market() -> MarketModel:
    """Five-asset market used throughout the tests and demos."""
    mu = np.array([0.0320, 0.0447, 0.0269, 0.0679, 0.0672])
    sigma = np.array([
        [0.0641, 0.0175, 0.0086, 0.0266, 0.0363],
        [0.0175, 0.1191, 0.0234, 0.0303, 0.0353],
        [0.0086, 0.0234, 0.1154, 0.0322, 0.0278],
        [0.0266, 0.0303, 0.0322, 0.1230, 0.0431],
        [0.0363, 0.0353, 0.0278, 0.0431, 0.1679],
    ])
    return MarketModel(mu, sigma, r_f=0.03, horizon=1.0)


def reference_picks() -> NDArray:
    """Two relative views and one absolute view on the five-asset market."""
    return np.array([
        [1.0, -1.0, 0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 1.0, 0.0, 0.0],
    ])


def reference_views(alpha: float = 0.4, market: MarketModel | None = None) -> ViewSet:
    market = market or reference_market()
    P = reference_picks()
    return ViewSet(P, make_omega_alpha(market, P, alpha), market.horizon)


def proportional_revisions(market: MarketModel, P: ArrayLike, alpha: float,
                           times: Sequence[float]) -> RevisionSchedule:
    """Revisions whose noise shrinks in proportion to the remaining horizon.

    ``omegas[j] = (1 - t_j / T) * alpha * P Sigma P^T``.
    """
    base = make_omega_alpha(market, P, alpha)
    T = market.horizon
    omegas = [(1.0 - t / T) * base for t in times]
    return RevisionSchedule(np.asarray(times, dtype=float), tuple(omegas), np.asarray(P, float), T)
