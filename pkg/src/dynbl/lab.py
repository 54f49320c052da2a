"""Monte-Carlo experiments: wealth under a policy, frontiers, CER and turnover.

Prices follow the prior geometric Brownian motion and are simulated with
exact log-normal increments on a uniform grid.  Views are drawn from the
simulated paths, so every path carries its own consistent view.  Between
rebalancing epochs the share holdings are frozen and wealth is revalued with
the simulated prices; cash earns the risk-free rate.

Randomness is organised in fixed-size chunks of paths.  Chunk ``i`` draws its
prices and its view noise from two streams spawned from
``SeedSequence(seed).spawn(n_chunks)[i]``.  Results therefore do not depend
on the number of worker threads, every policy sees the same prices, and runs
for different noise scales share the same standard normals.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .conditional import ConditionalCoefficients, simulate_conditional_paths
from .errors import BankruptcyUnderflow, GridOutOfRange, NonPositiveWealth, ValidationError
from .market import (
    MarketModel,
    MultiHorizonViews,
    RevisionSchedule,
    ShortTermSchedule,
    ViewSet,
    collapse_multi_horizon,
    make_omega_alpha,
    refine_short_term_view,
    rng_from,
)
from .policy import (
    aged_view_portfolio,
    check_gamma,
    multi_horizon_policy,
    revisions_policy,
    short_term_policy,
    solve_dynamic_policy,
    solve_multi_horizon,
)

BASE_STEPS_PER_YEAR = 252
FINE_STEPS_PER_YEAR = 252 * 8
CHUNK_SIZE = 2500
NAMED_PERIODS = {"daily": 1 / 252, "weekly": 1 / 52, "monthly": 1 / 12, "quarterly": 1 / 4}
POLICIES = ("DBL", "RCBL")


def library_version() -> str:
    from . import __version__

    return __version__


# ---------------------------------------------------------------------------
# rebalancing plans


@dataclass(frozen=True)
class RebalancePlan:
    """When the portfolio is rebalanced.

    ``mode="periodic"`` rebalances every ``period`` years (rounded to the
    simulation grid).  ``mode="continuous"`` rebalances at every step of a
    grid with ``fine_grid_steps`` steps per year.
    """

    mode: str = "periodic"
    period: float | None = None
    fine_grid_steps: int = FINE_STEPS_PER_YEAR

    def __post_init__(self):
        if self.mode not in ("periodic", "continuous"):
            raise ValidationError(f"unknown rebalancing mode {self.mode!r}")
        if self.mode == "periodic" and not (self.period is not None and self.period > 0):
            raise ValidationError("a periodic plan needs a positive period")
        if self.fine_grid_steps < 252:
            raise ValidationError("fine_grid_steps must be at least 252")

    @classmethod
    def named(cls, name: str, fine_grid_steps: int = FINE_STEPS_PER_YEAR) -> "RebalancePlan":
        if name == "continuous":
            return cls("continuous", None, fine_grid_steps)
        if name in NAMED_PERIODS:
            return cls("periodic", NAMED_PERIODS[name], fine_grid_steps)
        raise ValidationError(f"unknown plan {name!r}; use continuous, {', '.join(NAMED_PERIODS)}")

    @property
    def label(self) -> str:
        if self.mode == "continuous":
            return "continuous"
        for name, p in NAMED_PERIODS.items():
            if np.isclose(self.period, p, rtol=1e-12, atol=0):
                return name
        return f"every_{self.period:g}y"

    def grid_steps(self) -> int:
        """Steps per year this plan needs from the price grid."""
        return self.fine_grid_steps if self.mode == "continuous" else BASE_STEPS_PER_YEAR

    def epoch_indices(self, steps_per_year: int, horizon: float) -> NDArray:
        """Grid indices of the rebalancing dates in ``[0, horizon)``."""
        n_steps = int(round(steps_per_year * horizon))
        if self.mode == "continuous":
            stride = steps_per_year / self.fine_grid_steps
            idx = np.round(np.arange(0, n_steps, stride)).astype(int)
        else:
            idx = np.round(np.arange(0.0, horizon - 1e-12, self.period) * steps_per_year).astype(int)
        return np.unique(idx[idx < n_steps])


def common_grid_steps(plans: Sequence[RebalancePlan]) -> int:
    return max(p.grid_steps() for p in plans)


# ---------------------------------------------------------------------------
# wealth bookkeeping


@dataclass
class WealthRun:
    """Per-path outcome of one policy under one plan.

    ``wealth`` holds wealth at each epoch and at the horizon; ``holdings``
    (optional) holds the share counts chosen at each epoch.
    """

    epoch_times: NDArray
    terminal_wealth: NDArray
    wealth: NDArray
    turnover: NDArray
    bankrupt: NDArray
    holdings: NDArray | None
    grid_steps: int
    seed: object = None

    @property
    def n_paths(self) -> int:
        return self.terminal_wealth.size


def evolve_wealth(times: NDArray, log_prices: NDArray, epochs: NDArray,
                  weights_fn: Callable[[int, float, NDArray], NDArray], r_f: float, z0: float,
                  keep_holdings: bool = False):
    """Run a rebalancing strategy over simulated log-prices.

    ``weights_fn(idx, t, x)`` returns the weights for all paths at grid index
    ``idx``, where ``x`` is the log-price at that index.  Prices start at 1,
    so ``x`` is also the log-return since time 0.

    Returns ``(wealth, turnover, bankrupt, holdings)``.
    """
    n = log_prices.shape[0]
    N = log_prices.shape[2]
    marks = np.r_[epochs, times.size - 1]
    z = np.full(n, float(z0))
    wealth = np.empty((n, marks.size))
    wealth[:, 0] = z
    turnover = np.zeros(n)
    bankrupt = np.zeros(n, dtype=bool)
    prev = np.zeros((n, N))
    holdings = np.empty((n, epochs.size, N)) if keep_holdings else None
    for k, idx in enumerate(epochs):
        x = log_prices[:, idx]
        w = np.asarray(weights_fn(int(idx), float(times[idx]), x), dtype=float)
        w = np.where(bankrupt[:, None], 0.0, np.broadcast_to(w, (n, N)))
        shares = w * z[:, None] * np.exp(-x)
        cash = z * (1.0 - w.sum(axis=1))
        if k > 0:
            turnover += np.abs(shares - prev).sum(axis=1)
        if keep_holdings:
            holdings[:, k] = shares
        prev = shares
        nxt = marks[k + 1]
        z_new = (shares * np.exp(log_prices[:, nxt])).sum(axis=1) + cash * np.exp(r_f * (times[nxt] - times[idx]))
        z = np.where(bankrupt, z, z_new)
        bankrupt |= z <= 0.0
        wealth[:, k + 1] = z
    return wealth, turnover, bankrupt, holdings


def simulate_wealth(coeffs: ConditionalCoefficients, policy: Callable[[float, NDArray], NDArray],
                    plan: RebalancePlan, z0: float, n_paths: int, rng_seed=None,
                    keep_holdings: bool = False) -> WealthRun:
    """Wealth of a rebalancing investor when prices follow the view-conditioned law.

    ``policy(t, x)`` maps the time and the log-returns of all paths
    (shape ``(n_paths, N)``) to weights of the same shape.  ``coeffs.y`` may
    hold one view per path.  Paths with nonpositive wealth are flagged in
    ``bankrupt`` and stop trading.
    """
    if not z0 > 0:
        raise ValidationError("initial wealth must be positive")
    T = coeffs.T
    steps = plan.grid_steps()
    n_steps = int(round(steps * T))
    grid = np.linspace(0.0, T, n_steps + 1)
    paths = simulate_conditional_paths(coeffs, grid, n_paths, rng_seed)
    epochs = plan.epoch_indices(steps, T)
    wealth, turnover, bankrupt, holdings = evolve_wealth(
        grid, paths.log_returns, epochs, lambda idx, t, x: policy(t, x), coeffs.market.r_f, z0,
        keep_holdings)
    return WealthRun(grid[epochs], wealth[:, -1], wealth, turnover, bankrupt, holdings, steps, rng_seed)


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float


def _mean_se(a: NDArray) -> Estimate:
    n = a.size
    se = float(np.std(a, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Estimate(float(np.sum(a) / n), se)


def certainty_equivalent(terminal_wealth: ArrayLike, gamma: float, z0: float, T: float) -> Estimate:
    """Rate ``r_c`` with ``U(z0 exp(T r_c)) = E[U(Z(T))]`` for power utility.

    The standard error comes from the delta method applied to the sample mean
    of ``Z(T)^(1-gamma)``.

    Raises
    ------
    NonPositiveWealth
        If any terminal wealth is nonpositive.
    """
    z = np.asarray(terminal_wealth, dtype=float).ravel()
    if np.any(~(z > 0)):
        raise NonPositiveWealth(f"{int(np.sum(~(z > 0)))} paths end with nonpositive wealth")
    if gamma == 1.0:
        g = _mean_se(np.log(z / z0))
        return Estimate(g.value / T, g.se / T)
    check_gamma(gamma)
    # scale by the median to keep z^(1-gamma) in range
    ref = float(np.median(z))
    u = (z / ref) ** (1.0 - gamma)
    m = _mean_se(u)
    rc = (np.log(m.value) + (1.0 - gamma) * np.log(ref / z0)) / ((1.0 - gamma) * T)
    se = m.se / (m.value * abs(1.0 - gamma) * T)
    return Estimate(float(rc), float(se))


def turnover(holdings: ArrayLike) -> Estimate:
    """Mean total absolute change of share holdings across epochs.

    ``holdings`` has shape ``(n_paths, n_epochs, N)``.
    """
    h = np.asarray(holdings, dtype=float)
    if h.ndim != 3 or h.shape[1] < 2:
        raise ValidationError("turnover needs holdings of shape (n_paths, n_epochs >= 2, N)")
    per_path = np.abs(np.diff(h, axis=1)).sum(axis=(1, 2))
    return _mean_se(per_path)


def frontier_point(terminal_wealth: ArrayLike, z0: float):
    """Mean and standard deviation of the total return ``Z(T)/z0 - 1``.

    Returns ``(mean, std)`` as estimates with standard errors.
    """
    r = np.asarray(terminal_wealth, dtype=float) / z0 - 1.0
    mean = _mean_se(r)
    n = r.size
    sd = float(np.std(r, ddof=1))
    m4 = float(np.mean((r - mean.value) ** 4))
    se_sd = float(np.sqrt(max(m4 - sd ** 4, 0.0) / (4 * n * sd ** 2))) if sd > 0 else 0.0
    return mean, Estimate(sd, se_sd)


# ---------------------------------------------------------------------------
# view regimes


def prior_log_prices(market: MarketModel, n_paths: int, steps_per_year: int, rng) -> tuple:
    """Exact log-price paths of the prior model on a uniform grid (prices start at 1)."""
    T = market.horizon
    n_steps = int(round(steps_per_year * T))
    dt = T / n_steps
    times = np.linspace(0.0, T, n_steps + 1)
    N = market.n_assets
    incr = rng.standard_normal((n_paths, n_steps, N)) @ (np.sqrt(dt) * market.chol.lower.T)
    incr += market.mu_x * dt
    x = np.zeros((n_paths, n_steps + 1, N))
    np.cumsum(incr, axis=1, out=x[:, 1:])
    return times, x


@dataclass
class Scenario:
    """Simulated log-prices on a grid together with the sampled views."""

    times: NDArray
    log_prices: NDArray
    views: dict = field(default_factory=dict)

    def index_of(self, t: float) -> int:
        k = int(round(t / self.times[-1] * (self.times.size - 1)))
        if not 0 <= k < self.times.size or abs(self.times[k] - t) > 1e-9:
            raise GridOutOfRange(f"time {t} is not on the simulation grid")
        return k

    def x_at(self, t: float) -> NDArray:
        return self.log_prices[:, self.index_of(t)]


def _rcbl(market, t_local, xbar, base: ViewSet, y, gamma):
    return aged_view_portfolio(market, base, y, t_local, xbar, gamma)


def _dbl_base(market, t_local, xbar, base: ViewSet, y, gamma):
    sol = solve_dynamic_policy(ConditionalCoefficients(market, base, y), gamma)
    return sol.weights(t_local, xbar).total


class SingleViewRegime:
    """One view on ``P X(T)`` given at time 0 with noise ``omega`` per unit time."""

    kind = "single"

    def __init__(self, market: MarketModel, P: ArrayLike, omega: ArrayLike):
        self.market = market
        self.views = ViewSet(P, omega, market.horizon)

    def anchor_times(self):
        return ()

    def sample(self, scen: Scenario, rng) -> dict:
        z = rng.standard_normal(scen.log_prices.shape[:1] + (self.views.n_views,))
        eps = z @ np.linalg.cholesky(self.views.omega).T
        x_T = scen.log_prices[:, -1]
        return {"y": x_T @ self.views.P.T + np.sqrt(self.views.length) * eps}

    def reduce(self, scen: Scenario, t: float, x: NDArray):
        return t, x, self.views, scen.views["y"]

    def dbl(self, scen: Scenario, t: float, x: NDArray, gamma: float):
        return _dbl_base(self.market, *self.reduce(scen, t, x), gamma)


class RevisionRegime:
    """Views over the remaining horizon revised on a fixed schedule."""

    kind = "revisions"

    def __init__(self, market: MarketModel, schedule: RevisionSchedule):
        self.market = market
        self.schedule = schedule

    def anchor_times(self):
        return tuple(self.schedule.times)

    def sample(self, scen: Scenario, rng) -> dict:
        x_at = np.stack([scen.x_at(t) for t in self.schedule.times], axis=1)
        return {"y": self.schedule.sample_views(x_at, scen.log_prices[:, -1], rng)}

    def _interval(self, scen, t, x):
        j = self.schedule.interval_of(t)
        tj = float(self.schedule.times[j])
        return j, tj, x - scen.x_at(tj), scen.views["y"][:, j]

    def reduce(self, scen: Scenario, t: float, x: NDArray):
        j, tj, xbar, y = self._interval(scen, t, x)
        length = self.schedule.horizon - tj
        base = ViewSet(self.schedule.P, self.schedule.omegas[j] / length, length)
        return t - tj, xbar, base, y

    def dbl(self, scen: Scenario, t: float, x: NDArray, gamma: float):
        j, _, xbar, y = self._interval(scen, t, x)
        return revisions_policy(self.schedule, self.market, gamma, j, t, xbar, y).total


class ShortTermRegime:
    """Views over consecutive intervals with autoregressive noise."""

    kind = "short_term"

    def __init__(self, market: MarketModel, schedule: ShortTermSchedule):
        if not np.isclose(schedule.horizon, market.horizon):
            raise ValidationError("short-term schedule must end at the investment horizon")
        self.market = market
        self.schedule = schedule

    def anchor_times(self):
        return tuple(self.schedule.times)

    def sample(self, scen: Scenario, rng) -> dict:
        x_at = np.stack([scen.x_at(t) for t in self.schedule.times], axis=1)
        inc = np.diff(x_at, axis=1)
        raw = self.schedule.sample_views(inc, rng)
        refined = np.stack([refine_short_term_view(self.schedule, raw[:, :j + 1], inc[:, :j])
                            for j in range(self.schedule.n_intervals)], axis=1)
        return {"y_raw": raw, "y": refined}

    def _interval(self, scen, t, x):
        j = self.schedule.interval_of(t)
        tj = float(self.schedule.times[j])
        return j, tj, x - scen.x_at(tj), scen.views["y"][:, j]

    def reduce(self, scen: Scenario, t: float, x: NDArray):
        j, tj, xbar, y = self._interval(scen, t, x)
        length = float(self.schedule.times[j + 1]) - tj
        base = ViewSet(self.schedule.P, self.schedule.idio_covs[j] / length, length)
        return t - tj, xbar, base, y

    def dbl(self, scen: Scenario, t: float, x: NDArray, gamma: float):
        j, _, xbar, y = self._interval(scen, t, x)
        return short_term_policy(self.schedule, self.market, gamma, j, t, xbar, y).total


class MultiHorizonRegime:
    """Views on log-returns over different horizons, all given at time 0."""

    kind = "multi_horizon"

    def __init__(self, market: MarketModel, views: MultiHorizonViews):
        if views.horizon > market.horizon + 1e-12:
            raise ValidationError("view horizons cannot exceed the investment horizon")
        if not np.isclose(views.horizon, market.horizon):
            raise ValidationError("the longest view horizon must equal the investment horizon")
        self.market = market
        self.views = views
        self._solutions: dict = {}

    def anchor_times(self):
        return tuple(self.views.horizons)

    def sample(self, scen: Scenario, rng) -> dict:
        x_at = np.stack([scen.x_at(t) for t in self.views.horizons], axis=1)
        return {"y": self.views.sample_views(x_at, rng)}

    def reduce(self, scen: Scenario, t: float, x: NDArray):
        j = self.views.interval_of(t)
        col = collapse_multi_horizon(self.views, self.market, j)
        return t, x, col.view_set(), col.transform(scen.views["y"])

    def solution(self, gamma: float):
        if gamma not in self._solutions:
            self._solutions[gamma] = solve_multi_horizon(self.views, self.market, gamma)
        return self._solutions[gamma]

    def dbl(self, scen: Scenario, t: float, x: NDArray, gamma: float):
        j = self.views.interval_of(t)
        return multi_horizon_policy(self.views, self.market, gamma, j, t, x, scen.views["y"],
                                    solution=self.solution(gamma)).total


@dataclass(frozen=True)
class RegimeSpec:
    """Recipe for a view regime whose noise scales with ``alpha``.

    * ``single``: ``Omega = alpha P Sigma P^T`` per unit time.
    * ``revisions``: total noise ``(1 - t_j/T) alpha P Sigma P^T`` at each ``t_j``
      in ``times``.
    * ``short_term``: ``Omega^{j,0} = alpha (T_{j+1} - T_j) P Sigma P^T`` with
      autoregression matrices ``phi``; ``times`` are the interval bounds.
    * ``multi_horizon``: one pick per row with horizon ``horizons[k]`` and
      ``Omega = alpha diag(p_k^T Sigma p_k)`` per unit time.
    """

    kind: str
    picks: NDArray
    times: tuple = ()
    phi: tuple = ()
    horizons: tuple = ()

    def build(self, market: MarketModel, alpha: float):
        P = np.atleast_2d(np.asarray(self.picks, dtype=float))
        gram = make_omega_alpha(market, P, alpha)
        if self.kind == "single":
            return SingleViewRegime(market, P, gram)
        if self.kind == "revisions":
            T = market.horizon
            times = np.asarray(self.times or (0.0,), dtype=float)
            omegas = tuple((1.0 - t / T) * gram for t in times)
            return RevisionRegime(market, RevisionSchedule(times, omegas, P, T))
        if self.kind == "short_term":
            times = np.asarray(self.times, dtype=float)
            covs = tuple((b - a) * gram for a, b in zip(times[:-1], times[1:]))
            return ShortTermRegime(market, ShortTermSchedule(times, P, tuple(self.phi), covs))
        if self.kind == "multi_horizon":
            omega = np.diag(np.diag(gram))
            return MultiHorizonRegime(market, MultiHorizonViews(self.horizons, P, omega))
        raise ValidationError(f"unknown view regime {self.kind!r}")


# ---------------------------------------------------------------------------
# experiments


def _chunks(n_paths: int, chunk_size: int):
    sizes = [chunk_size] * (n_paths // chunk_size)
    if n_paths % chunk_size:
        sizes.append(n_paths % chunk_size)
    return sizes


def _run_chunks(work, n_paths, seed, chunk_size, threads):
    sizes = _chunks(n_paths, chunk_size)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(sizes, seqs))
    if threads and threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda a: work(*a), jobs))
    return [work(*a) for a in jobs]


def _check_anchors(regime, steps):
    for t in regime.anchor_times():
        k = t * steps
        if abs(k - round(k)) > 1e-9:
            raise GridOutOfRange(f"view date {t} is not on the {steps}-steps-per-year grid")


@dataclass
class ComparisonResult:
    """Per-path outcomes and aggregate tables of a policy comparison."""

    rows: list
    n_paths: int
    seed: object
    grid_steps: int
    path_hash: str
    chunk_size: int = CHUNK_SIZE
    runs: dict = field(repr=False, default_factory=dict)

    def table(self, **match):
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]

    def row(self, **match) -> dict:
        found = self.table(**match)
        if len(found) != 1:
            raise KeyError(f"{len(found)} rows match {match}")
        return found[0]


def _aggregate(key, wealth, turn, bankrupt, gamma, z0, T, grid_steps, bankruptcy="raise"):
    mean, sd = frontier_point(wealth, z0)
    row = dict(zip(("policy", "alpha", "gamma", "plan"), key))
    row.update(mean=mean.value, se_mean=mean.se, std=sd.value, se_std=sd.se,
               n_paths=int(wealth.size), bankrupt=int(bankrupt.sum()), grid_steps=grid_steps)
    t = _mean_se(turn)
    row.update(turnover=t.value, se_turnover=t.se)
    if row["bankrupt"] and bankruptcy == "report":
        row.update(cer=float("nan"), se_cer=float("nan"))
        return row
    if row["bankrupt"]:
        raise BankruptcyUnderflow(
            f"{row['bankrupt']} paths went bankrupt for {key}; CER is undefined",
            paths=np.flatnonzero(bankrupt))
    c = certainty_equivalent(wealth, gamma, z0, T)
    row.update(cer=c.value, se_cer=c.se)
    return row


def run_comparison(market: MarketModel, regime: RegimeSpec, alphas: Sequence[float],
                   gammas: Sequence[float], plans: Sequence[RebalancePlan], n_paths: int,
                   seed: int, policies: Sequence[str] = POLICIES, z0: float = 1.0,
                   threads: int = 1, chunk_size: int = CHUNK_SIZE,
                   keep_paths: bool = False, bankruptcy: str = "raise") -> ComparisonResult:
    """Compare policies on common random numbers.

    For every chunk of paths one set of prices is drawn; for every ``alpha``
    the views are drawn from those prices with the same standard normals.
    Every ``(policy, alpha, gamma, plan)`` combination then trades on the same
    scenarios.

    If any path loses all its wealth the CER of that combination is
    undefined: ``bankruptcy="raise"`` raises ``BankruptcyUnderflow`` and
    ``bankruptcy="report"`` stores NaN and keeps the bankrupt count in the row.
    """
    for p in policies:
        if p not in POLICIES:
            raise ValidationError(f"unknown policy {p!r}; choose from {POLICIES}")
    gammas = [check_gamma(g) for g in gammas]
    steps = common_grid_steps(plans)
    regimes = {a: regime.build(market, a) for a in alphas}
    for r in regimes.values():
        _check_anchors(r, steps)
    keys = [(p, a, g, plan) for a in alphas for g in gammas for plan in plans for p in policies]

    def work(size, seq):
        price_seq, view_seq = seq.spawn(2)
        times, x = prior_log_prices(market, size, steps, np.random.default_rng(price_seq))
        digest = hashlib.sha256(x.tobytes()).hexdigest()
        out = {}
        for a, reg in regimes.items():
            scen = Scenario(times, x)
            scen.views = reg.sample(scen, np.random.default_rng(view_seq))
            for g in gammas:
                for plan in plans:
                    epochs = plan.epoch_indices(steps, market.horizon)
                    for p in policies:
                        if p == "DBL":
                            fn = lambda idx, t, xx, reg=reg, g=g: reg.dbl(scen, t, xx, g)
                        else:
                            fn = lambda idx, t, xx, reg=reg, g=g: _rcbl(market, *reg.reduce(scen, t, xx), g)
                        w, turn, bk, _ = evolve_wealth(times, x, epochs, fn, market.r_f, z0)
                        out[(p, a, g, plan)] = (w[:, -1], turn, bk)
        return digest, out

    results = _run_chunks(work, n_paths, seed, chunk_size, threads)
    path_hash = hashlib.sha256("".join(d for d, _ in results).encode()).hexdigest()
    rows, runs = [], {}
    for key in keys:
        wealth = np.concatenate([o[key][0] for _, o in results])
        turn = np.concatenate([o[key][1] for _, o in results])
        bk = np.concatenate([o[key][2] for _, o in results])
        label_key = (key[0], key[1], key[2], key[3].label)
        rows.append(_aggregate(label_key, wealth, turn, bk, key[2], z0, market.horizon, steps,
                               bankruptcy))
        if keep_paths:
            runs[label_key] = wealth
    return ComparisonResult(rows, n_paths, seed, steps, path_hash, chunk_size, runs)


REVISION_INVESTORS = {"none": (0.0,), "one_revision": (0.0, 0.5), "quarterly": (0.0, 0.25, 0.5, 0.75)}


def run_revision_comparison(market: MarketModel, P: ArrayLike, alphas: Sequence[float], gamma: float,
                            plan: RebalancePlan, n_paths: int, seed: int,
                            investors: dict | None = None, z0: float = 1.0, threads: int = 1,
                            chunk_size: int = CHUNK_SIZE, bankruptcy: str = "raise") -> ComparisonResult:
    """CER of dynamic investors who receive view revisions on different schedules.

    Each investor's view at ``t_j`` has total noise ``(1 - t_j/T) alpha P Sigma P^T``.
    The views of all investors come from one noise chain on the union of
    their revision dates, so an investor with fewer revisions sees a subset
    of the views of an investor with more.
    """
    investors = dict(investors or REVISION_INVESTORS)
    gamma = check_gamma(gamma)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    steps = plan.grid_steps()
    T = market.horizon
    union = np.unique(np.concatenate([np.asarray(v, dtype=float) for v in investors.values()]))
    specs = {a: RegimeSpec("revisions", P, tuple(union)).build(market, a) for a in alphas}
    sub = {}
    for a, reg in specs.items():
        _check_anchors(reg, steps)
        for name, times in investors.items():
            times = np.asarray(times, dtype=float)
            pos = np.searchsorted(union, times)
            spec = RegimeSpec("revisions", P, tuple(times)).build(market, a)
            sub[(a, name)] = (spec, pos)
    epochs = plan.epoch_indices(steps, T)

    def work(size, seq):
        price_seq, view_seq = seq.spawn(2)
        times, x = prior_log_prices(market, size, steps, np.random.default_rng(price_seq))
        digest = hashlib.sha256(x.tobytes()).hexdigest()
        out = {}
        for a, full in specs.items():
            chain = full.sample(Scenario(times, x), np.random.default_rng(view_seq))["y"]
            for name in investors:
                reg, pos = sub[(a, name)]
                scen = Scenario(times, x, {"y": chain[:, pos]})
                fn = lambda idx, t, xx, reg=reg, scen=scen: reg.dbl(scen, t, xx, gamma)
                w, turn, bk, _ = evolve_wealth(times, x, epochs, fn, market.r_f, z0)
                out[(name, a)] = (w[:, -1], turn, bk)
        return digest, out

    results = _run_chunks(work, n_paths, seed, chunk_size, threads)
    path_hash = hashlib.sha256("".join(d for d, _ in results).encode()).hexdigest()
    rows = []
    for a in alphas:
        for name in investors:
            wealth = np.concatenate([o[(name, a)][0] for _, o in results])
            turn = np.concatenate([o[(name, a)][1] for _, o in results])
            bk = np.concatenate([o[(name, a)][2] for _, o in results])
            rows.append(_aggregate((name, a, gamma, plan.label), wealth, turn, bk, gamma, z0, T, steps,
                                   bankruptcy))
    for r in rows:
        r["investor"] = r.pop("policy")
    return ComparisonResult(rows, n_paths, seed, steps, path_hash, chunk_size)


# ---------------------------------------------------------------------------
# output


FRONTIER_COLUMNS = ("policy", "alpha", "gamma", "plan", "mean", "std", "se_mean")
CER_COLUMNS = ("policy", "alpha", "gamma", "plan", "cer", "se_cer", "bankrupt", "n_paths")
TURNOVER_COLUMNS = ("policy", "alpha", "gamma", "plan", "turnover", "se_turnover", "grid_steps")
REVISION_COLUMNS = ("investor", "alpha", "gamma", "plan", "cer", "se_cer", "bankrupt", "n_paths")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(rows, columns, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def write_comparison_tables(result: ComparisonResult, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name, cols in (("frontier.csv", FRONTIER_COLUMNS), ("cer.csv", CER_COLUMNS),
                       ("turnover.csv", TURNOVER_COLUMNS)):
        write_table(result.rows, cols, out / name)
        files.append(out / name)
    return files


def write_revision_table(result: ComparisonResult, out_dir):
    path = Path(out_dir) / "revisions_cer.csv"
    write_table(result.rows, REVISION_COLUMNS, path)
    return path


def run_metadata(result: ComparisonResult, **extra) -> dict:
    meta = {
        "seed": result.seed,
        "n_paths": result.n_paths,
        "grid_steps_per_year": result.grid_steps,
        "chunk_size": result.chunk_size,
        "path_hash": result.path_hash,
        "library_version": library_version(),
    }
    meta.update(extra)
    return meta


def write_metadata(meta: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def holdings_turnover_from_run(run: WealthRun) -> Estimate:
    if run.holdings is None:
        raise ValidationError("run was simulated without keep_holdings=True")
    return turnover(run.holdings)


__all__ = [
    "RebalancePlan", "WealthRun", "Estimate", "Scenario", "RegimeSpec", "ComparisonResult",
    "SingleViewRegime", "RevisionRegime", "ShortTermRegime", "MultiHorizonRegime",
    "simulate_wealth", "evolve_wealth", "certainty_equivalent", "turnover", "frontier_point",
    "prior_log_prices", "run_comparison", "run_revision_comparison", "write_comparison_tables",
    "write_revision_table", "run_metadata", "write_metadata",
]
