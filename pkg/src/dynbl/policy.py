"""Portfolio policies for investors holding views.

Single-period rules:

* ``classical_bl`` / ``classical_bl_portfolio``: posterior and mean-variance
  weights of the one-shot Black-Litterman model.
* ``aged_view_portfolio``: a myopic investor at time ``t`` who still uses a
  view received at time 0 together with the price history.

Dynamic rules for a power-utility investor (relative risk aversion
``gamma >= 1``) who rebalances continuously:

* ``solve_dynamic_policy`` / ``dynamic_policy_weights``: one view held until
  the horizon; everything is in closed form except the value-function
  constant ``c(t)``.
* ``revisions_policy`` and ``short_term_policy``: views that are revised or
  renewed at known dates; each interval reduces to the single-view problem.
* ``solve_multi_horizon`` / ``multi_horizon_policy``: views on different
  horizons; the interval Riccati systems are integrated numerically and
  stitched together.

Vectors may be batched along a leading axis: ``x`` of shape ``(n, N)`` and
``y`` of shape ``(n, K)`` give weights of shape ``(n, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._ode import RK4Dense, hermite, rk4_backward
from .conditional import ConditionalCoefficients
from .errors import (
    GammaOutOfRange,
    IntervalMismatch,
    NotPositiveDefinite,
    ShapeMismatch,
    SingularOmega,
    ValidationError,
)
from .gaussian import cholesky, symmetrize
from .market import (
    MarketModel,
    MultiHorizonViews,
    RevisionSchedule,
    ShortTermSchedule,
    ViewSet,
    collapse_multi_horizon,
)

STEPS_PER_UNIT = 2000


def check_gamma(gamma: float) -> float:
    if not np.isfinite(gamma) or gamma < 1.0:
        raise GammaOutOfRange(
            f"relative risk aversion must satisfy gamma > 1 (gamma = 1 is log utility); got {gamma}")
    return float(gamma)


def _steps(length: float, per_unit: int) -> int:
    return max(int(np.ceil(per_unit * length - 1e-9)), 1)


# ---------------------------------------------------------------------------
# single-period rules


@dataclass(frozen=True)
class ClassicalBLPosterior:
    mu_bl: NDArray
    sigma_bl: NDArray


def classical_bl(market: MarketModel, P: ArrayLike, omega: ArrayLike, y: ArrayLike) -> ClassicalBLPosterior:
    """Posterior of arithmetic returns given the view ``y = P r + e``, ``e ~ N(0, omega)``.

    Raises
    ------
    SingularOmega
        If ``omega`` is not positive definite.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    y = np.asarray(y, dtype=float)
    try:
        om = cholesky(omega)
    except NotPositiveDefinite:
        raise SingularOmega("view covariance must be positive definite") from None
    if P.shape != (om.dim, market.n_assets) or y.shape[-1] != om.dim:
        raise ShapeMismatch("P, omega and y do not match")
    prec = symmetrize(market.sigma_inv + P.T @ om.solve(P))
    fac = cholesky(prec)
    rhs = market.sigma_inv @ market.mu + om.solve(y.T).T @ P
    return ClassicalBLPosterior(fac.solve(rhs.T).T, fac.inverse())


def classical_bl_portfolio(post: ClassicalBLPosterior, r_f: float, gamma: float) -> NDArray:
    """Mean-variance weights ``Sigma_BL^{-1} (mu_BL - r_f) / gamma``; the rest is cash."""
    if not gamma > 0:
        raise GammaOutOfRange("gamma must be positive")
    return cholesky(post.sigma_bl).solve((post.mu_bl - r_f).T).T / gamma


def aged_view_precision(market: MarketModel, views: ViewSet, t: float) -> NDArray:
    """``Sigma^{-1} + (1 - t/T) P^T Omega^{-1} P``."""
    T = views.length
    P = views.P
    return symmetrize(market.sigma_inv + (1.0 - t / T) * P.T @ cholesky(views.omega).solve(P))


def aged_view_portfolio(market: MarketModel, views: ViewSet, y: ArrayLike, t: float,
                        x: ArrayLike, gamma: float) -> NDArray:
    """Myopic weights at ``t`` of an investor holding the view from time 0.

    The investor maximises a mean-variance objective of the log-return over
    ``[t, T]`` given ``X(t) = x`` and ``Y = y``:

        pi = Prec_t (mu_tilde(t, x) - diag(Sigma)/2 - r_f) / gamma

    with ``Prec_t = Sigma^{-1} + (1 - t/T) P^T Omega^{-1} P``.
    """
    if not 0 <= t < views.length:
        raise IntervalMismatch(f"t must lie in [0, {views.length}), got {t}")
    coeffs = ConditionalCoefficients(market, views, np.asarray(y, dtype=float))
    excess = coeffs.log_drift(t, x) - market.r_f
    return excess @ aged_view_precision(market, views, t) / gamma


# ---------------------------------------------------------------------------
# single view held to the horizon


class PolicyWeights(NamedTuple):
    """Optimal weights and their split into a myopic part and a hedge.

    ``total`` is ``mean_variance + hedging``; ``total_dbl_form`` is the same
    quantity computed through the effective covariance ``Sigma_DBL``.
    """

    total: NDArray
    mean_variance: NDArray
    hedging: NDArray
    total_dbl_form: NDArray


def _m_matrix(gamma, sigma_inv, Q) -> NDArray:
    """``(gamma - 1) Q (gamma Sigma^{-1} + Q)^{-1}``."""
    if gamma == 1.0:
        return np.zeros_like(Q)
    fac = cholesky(symmetrize(gamma * sigma_inv + Q))
    return (gamma - 1.0) * fac.solve(Q).T


def _sigma_dbl(gamma, sigma, sigma_inv, Q) -> NDArray:
    """``S + (Sigma - S) / gamma`` with ``S = (Sigma^{-1} + Q)^{-1}``."""
    S = cholesky(symmetrize(sigma_inv + Q)).inverse()
    return symmetrize(S + (sigma - S) / gamma)


def riccati_a_residual(dA, A, eta, sigma, gamma) -> NDArray:
    """Left-hand side of the matrix Riccati equation for ``A``."""
    return (dA + (1.0 - gamma) / gamma * eta @ sigma @ eta
            + (A @ sigma @ eta + eta @ sigma @ A) / gamma + A @ sigma @ A / gamma)


def riccati_b_residual(db, b, A, eta, alpha, market: MarketModel, gamma) -> NDArray:
    """Left-hand side of the linear equation for ``b`` (batched over rows)."""
    sig = market.sigma
    half = 0.5 * np.diag(sig)
    return (db + (b @ sig @ (eta + A).T) / gamma
            + (1.0 - gamma) / gamma * (alpha - market.r_f) @ (eta + A).T
            + (alpha - half) @ A.T)


def _a_rhs(A, eta, sigma, gamma):
    return -riccati_a_residual(0.0, A, eta, sigma, gamma)


@dataclass(frozen=True)
class PolicySolution:
    """Closed-form optimal policy for one view held until its horizon.

    The value function is ``z^(1-gamma)/(1-gamma) exp(g(t, x))`` with
    ``g = x^T A x / 2 + x^T b + c``.
    """

    coeffs: ConditionalCoefficients
    gamma: float
    steps_per_unit: int = STEPS_PER_UNIT

    @property
    def market(self) -> MarketModel:
        return self.coeffs.market

    @property
    def T(self) -> float:
        return self.coeffs.T

    @cached_property
    def _pop(self) -> NDArray:
        """``P^T Omega^{-1} P``."""
        P = self.coeffs.views.P
        return symmetrize(P.T @ cholesky(self.coeffs.views.omega).solve(P))

    def _Q(self, t: float) -> NDArray:
        return (1.0 - t / self.T) * self._pop

    def M(self, t: float) -> NDArray:
        """``(gamma-1)(1-t/T) P^T Omega^{-1} P (gamma Sigma^{-1} + (1-t/T) P^T Omega^{-1} P)^{-1}``."""
        return _m_matrix(self.gamma, self.market.sigma_inv, self._Q(t))

    def eta(self, t: float) -> NDArray:
        return self.coeffs.eta(t)

    def A(self, t: float, symmetric_form: bool = True) -> NDArray:
        """``M(t) eta_t``; the symmetrised form is returned by default."""
        a = self.M(t) @ self.eta(t)
        return symmetrize(a) if symmetric_form else a

    def alpha(self, t: float) -> NDArray:
        """Intercept of the drift: ``mu_tilde(t, x) = alpha_t + Sigma eta_t x``."""
        return self.coeffs.drift(t, np.zeros(self.market.n_assets))

    def b(self, t: float) -> NDArray:
        """``M(t) Sigma^{-1} (alpha_t - r_f)``."""
        mk = self.M(t) @ self.market.sigma_inv
        return (self.alpha(t) - self.market.r_f) @ mk.T

    def sigma_dbl(self, t: float) -> NDArray:
        """Effective covariance that turns the optimal policy into a mean-variance rule."""
        return _sigma_dbl(self.gamma, self.market.sigma, self.market.sigma_inv, self._Q(t))

    def _c_rhs(self, t, _c):
        g, m = self.gamma, self.market
        A, b, a = self.A(t), self.b(t), self.alpha(t)
        ex = a - m.r_f
        half = 0.5 * np.diag(m.sigma)
        val = ((1 - g) * m.r_f + 0.5 * np.trace(A @ m.sigma)
               + (1 - g) / (2 * g) * np.sum(ex * (ex @ m.sigma_inv), axis=-1)
               + np.sum((a - half) * b, axis=-1) + (1 - g) / g * np.sum(ex * b, axis=-1)
               + np.sum(b * (b @ m.sigma), axis=-1) / (2 * g))
        return -val

    @cached_property
    def _c_spline(self):
        shape = np.shape(self.coeffs.y)[:-1]
        times, states, derivs = rk4_backward(self._c_rhs, 0.0, self.T, np.zeros(shape),
                                             _steps(self.T, self.steps_per_unit))
        return hermite(times, states, derivs)

    def c(self, t: float):
        """Value-function constant, integrated numerically backwards from ``c(T) = 0``."""
        return self._c_spline(t)[()]

    def g(self, t: float, x: ArrayLike):
        x = np.asarray(x, dtype=float)
        return (0.5 * np.sum(x * (x @ self.A(t)), axis=-1)
                + np.sum(x * self.b(t), axis=-1) + self.c(t))

    def value(self, t: float, z, x: ArrayLike):
        """Expected utility of terminal wealth from state ``(t, z, x)``."""
        g = self.gamma
        if g == 1.0:
            raise ValidationError("the value function is only tabulated for gamma > 1")
        return np.asarray(z, dtype=float) ** (1 - g) / (1 - g) * np.exp(self.g(t, x))

    def weights(self, t: float, x: ArrayLike) -> PolicyWeights:
        if not 0 <= t <= self.T * (1 + 1e-12):
            raise IntervalMismatch(f"t must lie in [0, {self.T}], got {t}")
        m = self.market
        excess = self.coeffs.drift(t, x) - m.r_f
        mv = excess @ m.sigma_inv / self.gamma
        hedge = mv @ self.M(t).T
        dbl = cholesky(self.sigma_dbl(t)).solve(excess.T).T / self.gamma
        return PolicyWeights(mv + hedge, mv, hedge, dbl)


def solve_dynamic_policy(coeffs: ConditionalCoefficients, gamma: float,
                         steps_per_unit: int = STEPS_PER_UNIT) -> PolicySolution:
    """Optimal dynamic policy for a single view.

    ``gamma = 1`` gives the log-utility investor with no hedging demand.

    Raises
    ------
    GammaOutOfRange
        For ``gamma < 1``.
    """
    return PolicySolution(coeffs, check_gamma(gamma), int(steps_per_unit))


def dynamic_policy_weights(sol: PolicySolution, t: float, x: ArrayLike) -> PolicyWeights:
    return sol.weights(t, x)


# ---------------------------------------------------------------------------
# revised and short-term views


@dataclass(frozen=True)
class IntervalPolicy:
    """Policy on ``[start, end)`` for a view on ``P (X(view_end) - X(start))``.

    ``omega_total`` is the total noise covariance of that view.  The state is
    ``xbar = X(t) - X(start)``.  With revisions ``view_end`` is the investment
    horizon; with short-term views it equals ``end``.
    """

    market: MarketModel
    gamma: float
    P: NDArray
    omega_total: NDArray
    start: float
    end: float
    view_end: float

    @cached_property
    def _om(self):
        return cholesky(self.omega_total)

    @cached_property
    def _pop(self) -> NDArray:
        return symmetrize(self.P.T @ self._om.solve(self.P))

    @cached_property
    def _gram(self) -> NDArray:
        return symmetrize(self.P @ self.market.sigma @ self.P.T)

    def _check(self, t):
        last = self.end == self.view_end
        if not (self.start <= t < self.end or (last and np.isclose(t, self.end, rtol=0, atol=1e-12))):
            raise IntervalMismatch(f"t = {t} is outside [{self.start}, {self.end})")

    def _Q(self, t):
        return (self.view_end - t) * self._pop

    @cached_property
    def beta1(self) -> NDArray:
        """``Sigma P^T ((view_end - start) P Sigma P^T + Omega)^{-1}``."""
        g = (self.view_end - self.start) * self._gram + self.omega_total
        return cholesky(symmetrize(g)).solve(self.P @ self.market.sigma).T

    def beta2(self, t: float) -> NDArray:
        g = (self.view_end - t) * self._gram + self.omega_total
        return self.market.sigma @ self.P.T @ cholesky(symmetrize(g)).solve(self.P)

    def view_gap(self, y) -> NDArray:
        return np.asarray(y, dtype=float) - (self.view_end - self.start) * (self.P @ self.market.mu_x)

    def cond_mean(self, t: float, y) -> NDArray:
        """``E[Xbar(t)] = (t - start)(mu_x + beta1 (y - (view_end - start) P mu_x))``."""
        return (t - self.start) * (self.market.mu_x + self.view_gap(y) @ self.beta1.T)

    def drift(self, t: float, xbar, y) -> NDArray:
        xbar = np.asarray(xbar, dtype=float)
        return (self.market.mu + self.view_gap(y) @ self.beta1.T
                + (self.cond_mean(t, y) - xbar) @ self.beta2(t).T)

    def M(self, t: float) -> NDArray:
        """``(gamma-1)(view_end-t) P^T Omega^{-1} P (gamma Sigma^{-1} + (view_end-t) P^T Omega^{-1} P)^{-1}``."""
        return _m_matrix(self.gamma, self.market.sigma_inv, self._Q(t))

    def M_bar(self, t: float) -> NDArray:
        """``-(gamma-1)(view_end-t) Omega^{-1} P (gamma Sigma^{-1} + (view_end-t) P^T Omega^{-1} P)^{-1}``, K x N."""
        fac = cholesky(symmetrize(self.gamma * self.market.sigma_inv + self._Q(t)))
        return -(self.gamma - 1.0) * (self.view_end - t) * fac.solve(self._om.solve(self.P).T).T

    def eta_bar(self, t: float) -> NDArray:
        """``-((view_end - t) P Sigma P^T + Omega)^{-1}``."""
        return -cholesky(symmetrize((self.view_end - t) * self._gram + self.omega_total)).inverse()

    def C(self, t: float) -> NDArray:
        mp = self.M_bar(t) @ self.P.T @ self.eta_bar(t)
        return symmetrize(mp)

    def c_hat(self, t: float) -> NDArray:
        m = self.market
        inner = (m.sigma_inv @ (m.mu - m.r_f)
                 + (self.view_end - t) * self.P.T @ self.eta_bar(t) @ self.P @ m.mu_x)
        return self.M_bar(t) @ inner

    def sigma_dbl(self, t: float) -> NDArray:
        return _sigma_dbl(self.gamma, self.market.sigma, self.market.sigma_inv, self._Q(t))

    def hedging_from_value(self, t: float, xbar, y) -> NDArray:
        """Hedge computed from the gradient of the quadratic value exponent."""
        xbar = np.asarray(xbar, dtype=float)
        dev = np.asarray(y, dtype=float) - xbar @ self.P.T
        grad = (dev @ self.C(t) - self.c_hat(t)) @ self.P
        return grad / self.gamma

    def weights(self, t: float, xbar, y) -> PolicyWeights:
        self._check(t)
        m = self.market
        excess = self.drift(t, xbar, y) - m.r_f
        mv = excess @ m.sigma_inv / self.gamma
        hedge = mv @ self.M(t).T
        dbl = cholesky(self.sigma_dbl(t)).solve(excess.T).T / self.gamma
        return PolicyWeights(mv + hedge, mv, hedge, dbl)

    def base_problem(self) -> ViewSet:
        """Equivalent single-view problem in local time ``s = t - start``."""
        length = self.view_end - self.start
        return ViewSet(self.P, self.omega_total / length, length)


def revision_interval_policy(schedule: RevisionSchedule, market: MarketModel, gamma: float,
                             j: int) -> IntervalPolicy:
    if not 0 <= j <= schedule.n_revisions:
        raise IntervalMismatch(f"revision index must be in 0..{schedule.n_revisions}")
    if schedule.P.shape[1] != market.n_assets:
        raise ShapeMismatch("pick matrix does not match the market")
    return IntervalPolicy(market, check_gamma(gamma), schedule.P, schedule.omegas[j],
                          float(schedule.times[j]), schedule.end_of(j), schedule.horizon)


def revisions_policy(schedule: RevisionSchedule, market: MarketModel, gamma: float, j: int,
                     t: float, xbar: ArrayLike, y_j: ArrayLike) -> PolicyWeights:
    """Weights at ``t`` in ``[t_j, t_{j+1})`` given the current view ``y_j``.

    ``xbar`` is the log-return accumulated since ``t_j``.
    """
    return revision_interval_policy(schedule, market, gamma, j).weights(t, xbar, y_j)


def revision_continuation(schedule: RevisionSchedule, market: MarketModel, gamma: float, j: int):
    """Terminal values of ``C^j`` and ``c_hat^j`` at ``t_{j+1}`` implied by interval ``j + 1``.

    Integrating the next interval's value function over the distribution of
    the revised view gives ``C^j(t_{j+1})`` and ``c_hat^j(t_{j+1})``.  They can
    be compared with the closed forms of interval ``j`` evaluated at
    ``t_{j+1}``.
    """
    if not 0 <= j < schedule.n_revisions:
        raise IntervalMismatch("continuation values exist only before the last revision")
    nxt = revision_interval_policy(schedule, market, gamma, j + 1)
    t1 = float(schedule.times[j + 1])
    T = schedule.horizon
    P = schedule.P
    om_j, om_n = schedule.omegas[j], schedule.omegas[j + 1]
    gram = P @ market.sigma @ P.T
    inv_j = cholesky(symmetrize((T - t1) * gram + om_j)).inverse()
    diff = om_j - om_n
    alpha0 = (T - t1) * diff @ inv_j @ P @ market.mu_x
    beta0 = np.eye(P.shape[0]) - diff @ inv_j
    om_cond = diff @ inv_j @ ((T - t1) * gram + om_n)
    C_next = nxt.C(t1)
    c_next = nxt.c_hat(t1)
    C_next_inv = np.linalg.inv(C_next)
    core = np.linalg.inv(C_next_inv + om_cond)
    C_term = beta0.T @ core @ beta0
    c_term = beta0.T @ core @ (C_next_inv @ c_next - alpha0)
    return symmetrize(C_term), c_term


def short_term_interval_policy(schedule: ShortTermSchedule, market: MarketModel, gamma: float,
                               j: int) -> IntervalPolicy:
    if not 0 <= j < schedule.n_intervals:
        raise IntervalMismatch(f"interval index must be in 0..{schedule.n_intervals - 1}")
    if schedule.P.shape[1] != market.n_assets:
        raise ShapeMismatch("pick matrix does not match the market")
    start, end = float(schedule.times[j]), float(schedule.times[j + 1])
    return IntervalPolicy(market, check_gamma(gamma), schedule.P, schedule.idio_covs[j],
                          start, end, end)


def short_term_policy(schedule: ShortTermSchedule, market: MarketModel, gamma: float, j: int,
                      t: float, xbar: ArrayLike, ybar_j: ArrayLike) -> PolicyWeights:
    """Weights at ``t`` in ``[T_j, T_{j+1})`` given the refined view ``ybar_j``.

    ``xbar`` is the log-return accumulated since ``T_j``.
    """
    return short_term_interval_policy(schedule, market, gamma, j).weights(t, xbar, ybar_j)


# ---------------------------------------------------------------------------
# views on several horizons


@dataclass(frozen=True)
class _HorizonInterval:
    j: int
    start: float
    end: float
    P: NDArray
    gram: NDArray
    noise: NDArray  # T_j * omega_bar
    D: NDArray  # beta1 restricted to the live views, N x K
    d0: NDArray
    dense: object


class MultiHorizonSolution:
    """Optimal policy when views refer to different horizons.

    On interval ``j`` (``T_{j-1} <= t < T_j``) the live views are collapsed to
    horizon ``T_j``; the drift is ``alpha^j_t + Sigma eta^j_t x`` and the
    exponent of the value function is ``x^T A^j x / 2 + x^T b^j + c^j``.  ``A``
    and ``b`` solve the interval Riccati equations backwards from the final
    horizon and are continuous across interval boundaries.  Because ``b`` is
    affine in the view vector, it is stored as ``b0 + B y``.
    """

    def __init__(self, views: MultiHorizonViews, market: MarketModel, gamma: float,
                 steps_per_unit: int = STEPS_PER_UNIT):
        if views.picks.shape[1] != market.n_assets:
            raise ShapeMismatch("pick vectors do not match the market")
        self.views = views
        self.market = market
        self.gamma = check_gamma(gamma)
        self.steps_per_unit = int(steps_per_unit)
        N, K = market.n_assets, views.n_views
        self._intervals: list[_HorizonInterval] = []
        state = (np.zeros((N, N)), np.zeros((N, K)), np.zeros(N))
        bounds = np.r_[0.0, views.horizons]
        for j in range(K, 0, -1):
            start, end = float(bounds[j - 1]), float(bounds[j])
            col = collapse_multi_horizon(views, market, j)
            P = col.P
            gram = symmetrize(P @ market.sigma @ P.T)
            noise = col.horizon * col.omega
            fac = cholesky(symmetrize(gram + col.omega))
            beta1 = fac.solve(P @ market.sigma).T / col.horizon
            select = np.zeros((P.shape[0], K))
            select[np.arange(P.shape[0]), col.indices] = 1.0
            D = beta1 @ select
            d0 = -beta1 @ (col.mu_bar + col.horizon * P @ market.mu_x)
            if end - start <= 0.0:
                self._intervals.append(_HorizonInterval(j, start, end, P, gram, noise, D, d0, None))
                continue
            rhs = self._rhs_factory(P, gram, noise, end, D, d0)
            flat_end = self._pack(*state)
            times, states, _ = rk4_backward(rhs, start, end, flat_end,
                                            _steps(end - start, self.steps_per_unit))
            dense = RK4Dense(rhs, times, states)
            self._intervals.append(_HorizonInterval(j, start, end, P, gram, noise, D, d0, dense))
            state = self._unpack(states[0])
        self._intervals.reverse()

    # state packing -------------------------------------------------------
    def _pack(self, A, B, b0):
        return np.concatenate([A.ravel(), B.ravel(), b0])

    def _unpack(self, flat):
        N, K = self.market.n_assets, self.views.n_views
        A = flat[:N * N].reshape(N, N)
        B = flat[N * N:N * N + N * K].reshape(N, K)
        b0 = flat[N * N + N * K:]
        return A, B, b0

    @staticmethod
    def _eta(P, gram, noise, Tj, t):
        return -symmetrize(P.T @ cholesky(symmetrize((Tj - t) * gram + noise)).solve(P))

    def _alpha_parts(self, D, d0, t, eta):
        """``alpha^j_t = a0 + a1 y``."""
        m = self.market
        a0 = m.mu + d0 - t * m.sigma @ eta @ (m.mu_x + d0)
        a1 = (np.eye(m.n_assets) - t * m.sigma @ eta) @ D
        return a0, a1

    def _rhs_factory(self, P, gram, noise, Tj, D, d0):
        m, g = self.market, self.gamma
        sig = m.sigma
        half = 0.5 * np.diag(sig)

        def rhs(t, flat):
            A, B, b0 = self._unpack(flat)
            eta = self._eta(P, gram, noise, Tj, t)
            a0, a1 = self._alpha_parts(D, d0, t, eta)
            dA = _a_rhs(A, eta, sig, g)
            EA = eta + A
            dB = -(EA @ sig @ B / g + (1 - g) / g * EA @ a1 + A @ a1)
            db0 = -(EA @ sig @ b0 / g + (1 - g) / g * EA @ (a0 - m.r_f) + A @ (a0 - half))
            return self._pack(dA, dB, db0)

        return rhs

    # evaluation -----------------------------------------------------------
    def interval_index(self, t: float) -> int:
        return self.views.interval_of(t)

    def _interval(self, j: int, t: float) -> _HorizonInterval:
        iv = self._intervals[j - 1]
        last = j == self.views.n_views
        if iv.dense is None or not (iv.start <= t < iv.end or (last and np.isclose(t, iv.end))):
            raise IntervalMismatch(f"t = {t} is outside interval {j}")
        return iv

    def _state(self, j, t):
        iv = self._interval(j, t)
        return iv, self._unpack(iv.dense(t))

    def _state_derivative(self, j, t):
        iv = self._interval(j, t)
        return self._unpack(iv.dense.derivative(t))

    def eta(self, j: int, t: float) -> NDArray:
        iv = self._interval(j, t)
        return self._eta(iv.P, iv.gram, iv.noise, iv.end, t)

    def alpha(self, j: int, t: float, y) -> NDArray:
        iv = self._interval(j, t)
        a0, a1 = self._alpha_parts(iv.D, iv.d0, t, self.eta(j, t))
        return a0 + np.asarray(y, dtype=float) @ a1.T

    def A(self, j: int, t: float) -> NDArray:
        return self._state(j, t)[1][0]

    def b(self, j: int, t: float, y) -> NDArray:
        _, (A, B, b0) = self._state(j, t)
        return b0 + np.asarray(y, dtype=float) @ B.T

    def drift(self, j: int, t: float, x, y) -> NDArray:
        return self.alpha(j, t, y) + np.asarray(x, dtype=float) @ (self.market.sigma @ self.eta(j, t)).T

    def riccati_residuals(self, j: int, t: float, y, h: float = 1e-6):
        """Residuals of the ``A`` and ``b`` equations using central differences."""
        A = self.A(j, t)
        dA = (self.A(j, t + h) - self.A(j, t - h)) / (2 * h)
        b = self.b(j, t, y)
        db = (self.b(j, t + h, y) - self.b(j, t - h, y)) / (2 * h)
        eta = self.eta(j, t)
        ra = riccati_a_residual(dA, A, eta, self.market.sigma, self.gamma)
        rb = riccati_b_residual(db, b, A, eta, self.alpha(j, t, y), self.market, self.gamma)
        return ra, rb

    def weights(self, t: float, x, y, j: int | None = None) -> PolicyWeights:
        j = self.interval_index(t) if j is None else j
        m = self.market
        x = np.asarray(x, dtype=float)
        excess = self.drift(j, t, x, y) - m.r_f
        mv = excess @ m.sigma_inv / self.gamma
        _, (A, B, b0) = self._state(j, t)
        hedge = (x @ A.T + b0 + np.asarray(y, dtype=float) @ B.T) / self.gamma
        total = mv + hedge
        return PolicyWeights(total, mv, hedge, total)


def solve_multi_horizon(views: MultiHorizonViews, market: MarketModel, gamma: float,
                        steps_per_unit: int = STEPS_PER_UNIT) -> MultiHorizonSolution:
    return MultiHorizonSolution(views, market, gamma, steps_per_unit)


def multi_horizon_policy(views: MultiHorizonViews, market: MarketModel, gamma: float, j: int,
                         t: float, x: ArrayLike, y: ArrayLike,
                         solution: MultiHorizonSolution | None = None) -> PolicyWeights:
    """Weights at ``t`` in ``[T_{j-1}, T_j)`` (one-based ``j``).

    ``x`` is the log-return since time 0 and ``y`` the full view vector.
    Pass a precomputed ``solution`` to avoid re-integrating the Riccati system.
    """
    sol = solution or solve_multi_horizon(views, market, gamma)
    if not 1 <= j <= views.n_views:
        raise IntervalMismatch(f"interval index must be in 1..{views.n_views}")
    return sol.weights(t, x, y, j=j)
