"""Self-checks of the library: closed-form identities, oracles and Monte-Carlo orderings.

Each check returns a ``Check`` with a pass flag and a one-line detail.  The
quick level runs the deterministic identities in seconds; the full level adds
the Monte-Carlo comparisons on the five-asset market.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .bridge import BridgeSpec, bridge_law, hitting_time_monotonicity_check, sample_bridge_paths
from .conditional import conditional_coefficients, kalman_smoother_oracle, simulate_conditional_paths
from .gaussian import GaussianVector, condition, symmetrize
from .lab import RebalancePlan, RegimeSpec, run_comparison, run_revision_comparison
from .market import (
    MarketModel,
    RevisionSchedule,
    ShortTermSchedule,
    ViewSet,
    make_omega_alpha,
    reference_market,
    reference_picks,
    reference_views,
    refine_short_term_view,
    sample_view,
)
from .policy import (
    revision_interval_policy,
    revisions_policy,
    riccati_a_residual,
    riccati_b_residual,
    short_term_policy,
    solve_dynamic_policy,
)

DEFAULT_PATHS = 20_000


@dataclass(frozen=True)
class Check:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:>2} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _random_spd(rng, n, scale=0.1):
    a = rng.standard_normal((n, n))
    return symmetrize(scale * (a @ a.T / n + 0.2 * np.eye(n)))


def _random_market(rng, n):
    return MarketModel(rng.uniform(0.0, 0.1, n), _random_spd(rng, n), r_f=0.02, horizon=1.0)


def _view_draw(market, views, rng):
    T = views.length
    x_T = T * market.mu_x + np.sqrt(T) * rng.standard_normal(market.n_assets) @ market.chol.lower.T
    return sample_view(market, views, x_T, rng)


# ---------------------------------------------------------------------------
# individual criteria


def check_conditioning_oracle(seed=1):
    """Closed-form conditional moments of X(t) against explicit Gaussian conditioning."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        N = int(rng.integers(1, 9))
        K = int(rng.integers(1, 5))
        T = float(rng.uniform(0.5, 5.0))
        market = _random_market(rng, N)
        views = ViewSet(rng.standard_normal((K, N)), _random_spd(rng, K, 0.05), T)
        y = _view_draw(market, views, rng)
        t = float(rng.uniform(0.0, T))
        coeffs = conditional_coefficients(market, views, y)
        sig, P = market.sigma, views.P
        mean = np.r_[t * market.mu_x, T * P @ market.mu_x]
        cov = np.block([[t * sig, t * sig @ P.T],
                        [t * P @ sig, T * P @ sig @ P.T + T * views.omega]])
        post = condition(GaussianVector(mean, symmetrize(cov)), np.arange(N, N + K), y)
        worst = max(worst, np.max(np.abs(post.mean - coeffs.cond_mean(t))),
                    np.max(np.abs(post.cov - coeffs.cond_cov(t, t))))
    return worst < 1e-10, f"max error {worst:.2e} over 20 instances (tol 1e-10)"


def check_kalman_smoother(seed=2):
    market = reference_market()
    views = reference_views(0.4, market)
    y = _view_draw(market, views, np.random.default_rng(seed))
    coeffs = conditional_coefficients(market, views, y)
    times, means, covs = kalman_smoother_oracle(market, views, y, 64)
    worst = 0.0
    for k, t in enumerate(times):
        worst = max(worst, np.max(np.abs(means[k] - coeffs.cond_mean(t))),
                    np.max(np.abs(covs[k] - coeffs.cond_cov(t, t))))
    return worst < 1e-8, f"max error {worst:.2e} on 65 grid points (tol 1e-8)"


def check_riccati_residuals(seed=3):
    market = reference_market()
    rng = np.random.default_rng(seed)
    h = 1e-6
    grid = np.linspace(0.0, market.horizon, 52)[1:-1]
    worst_a = worst_b = 0.0
    for alpha in (0.4, 0.8):
        views = reference_views(alpha, market)
        y = _view_draw(market, views, rng)
        for gamma in (2.0, 5.0):
            sol = solve_dynamic_policy(conditional_coefficients(market, views, y), gamma)
            for t in grid:
                dA = (sol.A(t + h) - sol.A(t - h)) / (2 * h)
                db = (sol.b(t + h) - sol.b(t - h)) / (2 * h)
                ra = riccati_a_residual(dA, sol.A(t), sol.eta(t), market.sigma, gamma)
                rb = riccati_b_residual(db, sol.b(t), sol.A(t), sol.eta(t), sol.alpha(t), market, gamma)
                worst_a = max(worst_a, np.linalg.norm(ra))
                worst_b = max(worst_b, np.linalg.norm(rb))
    ok = worst_a < 1e-4 and worst_b < 1e-4
    return ok, f"max residual A {worst_a:.2e}, b {worst_b:.2e} on 50 points x 4 cases (tol 1e-4)"


def check_policy_forms(seed=4):
    market = reference_market()
    views = reference_views(0.4, market)
    rng = np.random.default_rng(seed)
    y = _view_draw(market, views, rng)
    coeffs = conditional_coefficients(market, views, y)
    gamma = 5.0
    sol = solve_dynamic_policy(coeffs, gamma)
    grid = np.linspace(0.0, market.horizon, 101)
    paths = simulate_conditional_paths(coeffs, grid, 1, rng)
    worst = 0.0
    for k in range(100):
        t, x = grid[k], paths.log_returns[0, k]
        w = sol.weights(t, x)
        value_form = w.mean_variance + (sol.A(t) @ x + sol.b(t)) / gamma
        worst = max(worst, np.max(np.abs(w.total - w.total_dbl_form)),
                    np.max(np.abs(value_form - w.total_dbl_form)))
    return worst < 1e-10, f"max disagreement {worst:.2e} at 100 (t, x) (tol 1e-10)"


def check_hitting_times():
    msgs = []
    # one asset: T (1 + omega / sigma^2)
    T, s2, w2 = 2.0, 0.09, 0.05
    law = bridge_law(BridgeSpec([0.0], [[s2]], [[1.0]], [[w2]], T, [0.1]))
    err1 = abs(law.hitting_times[0] - T * (1 + w2 / s2)) / (T * (1 + w2 / s2))
    ok1 = err1 < 1e-12
    msgs.append(f"1D rel err {err1:.1e}")
    # two assets, view on the second with total noise variance omega^2
    T, w2, rho = 10.0, 4.0, 0.6
    sig = np.array([[1.0, rho], [rho, 1.0]])
    law2 = bridge_law(BridgeSpec([0.0, 0.0], sig, [[0.0, 1.0]], [[w2 / T]], T, [1.0]))
    th = law2.asset_hitting_times
    err2 = max(abs(th[1] - 14.0) / 14.0, abs(th[0] - (T + w2) / rho ** 2) / ((T + w2) / rho ** 2))
    ok2 = err2 < 1e-12
    msgs.append(f"2-asset T2={th[1]:.12g}, T1={th[0]:.12g} (expected 14, {(T + w2) / rho ** 2:.12g})")
    # doubling the noise pushes every hitting time out strictly
    market = reference_market()
    views = reference_views(0.4, market)
    spec = BridgeSpec(np.zeros(5), market.sigma, views.P, views.omega, 1.0, np.zeros(3))
    small, large = bridge_law(spec), bridge_law(spec.with_omega(2 * views.omega))
    strict = bool(np.all(large.hitting_times > small.hitting_times)
                  and np.all(large.asset_hitting_times > small.asset_hitting_times))
    ok3 = strict and hitting_time_monotonicity_check(spec, 2 * views.omega)
    msgs.append(f"strict growth under 2*Omega: {ok3}")
    return ok1 and ok2 and ok3, "; ".join(msgs)


def _moment_table(paths_a, paths_b):
    """Sample covariances and their standard errors for the blocks of (B(a), B(b))."""
    z = np.concatenate([paths_a, paths_b], axis=1)
    zc = z - z.mean(axis=0)
    n = z.shape[0]
    prods = zc[:, :, None] * zc[:, None, :]
    return prods.mean(axis=0) * n / (n - 1), prods.std(axis=0, ddof=1) / np.sqrt(n)


def check_bridge_moments(seed=6, n_paths=100_000):
    T, rho, w2 = 1.0, 0.6, 0.4
    sig = 0.04 * np.array([[1.0, rho], [rho, 1.0]])
    spec = BridgeSpec([0.0, 0.0], sig, [[0.0, 1.0]], [[w2 / T * 0.04]], T, [0.1])
    law = bridge_law(spec)
    s, u = T / 3, 2 * T / 3
    exact = sample_bridge_paths(law, [s, u], n_paths, seed)
    cov_true = law.joint([s, u]).cov
    est, se = _moment_table(exact[:, 0], exact[:, 1])
    z_exact = np.max(np.abs(est - cov_true) / se)
    dt = 1e-3
    grid = np.linspace(0.0, T, int(round(T / dt)) + 1)
    euler = sample_bridge_paths(law, grid, n_paths, seed + 1, method="euler")
    ks, ku = int(round(s / dt)), int(round(u / dt))
    est_e, se_e = _moment_table(euler[:, ks], euler[:, ku])
    z_euler = np.max(np.abs(est_e - est) / np.sqrt(se ** 2 + se_e ** 2))
    ok = z_exact < 3 and z_euler < 3
    return ok, f"exact vs closed form {z_exact:.2f} SE, Euler vs exact {z_euler:.2f} SE (tol 3)"


def check_semigroup(seed=7):
    """``beta2(u) (I + (u - s) beta2(s)) = beta2(s)`` for ``s <= u``, as stated.

    The detail line also reports the residual with the opposite sign,
    ``beta2(u) (I - (u - s) beta2(s)) = beta2(s)``, which is what the
    Woodbury expansion ``beta2(u) = beta2(s) (I - (u - s) beta2(s))^{-1}`` gives.
    """
    market = reference_market()
    views = reference_views(0.4, market)
    rng = np.random.default_rng(seed)
    coeffs = conditional_coefficients(market, views, _view_draw(market, views, rng))
    stated = flipped = 0.0
    I = np.eye(market.n_assets)
    for _ in range(100):
        s, u = np.sort(rng.uniform(0.0, market.horizon, 2))
        b_s, b_u = coeffs.beta2(s), coeffs.beta2(u)
        stated = max(stated, np.max(np.abs(b_u @ (I + (u - s) * b_s) - b_s)))
        flipped = max(flipped, np.max(np.abs(b_u @ (I - (u - s) * b_s) - b_s)))
    return stated < 1e-9, (f"max error {stated:.2e} on 100 pairs (tol 1e-9); "
                           f"with (I - (u-s) beta2(s)) the error is {flipped:.2e}")


def check_structural_equality(seed=8):
    market = reference_market()
    P = reference_picks()
    rng = np.random.default_rng(seed)
    gamma = 5.0
    gram = make_omega_alpha(market, P, 0.6)
    schedule = RevisionSchedule([0.0, 0.5], (gram, 0.5 * gram), P, market.horizon)
    base = ViewSet(P, gram / market.horizon, market.horizon)
    y0 = _view_draw(market, base, rng)
    sol = solve_dynamic_policy(conditional_coefficients(market, base, y0), gamma)
    worst_rev = 0.0
    for t in np.linspace(0.0, 0.5, 10, endpoint=False):
        x = 0.2 * rng.standard_normal(market.n_assets)
        a = revisions_policy(schedule, market, gamma, 0, t, x, y0).total
        worst_rev = max(worst_rev, np.max(np.abs(a - sol.weights(t, x).total)))
    # later revision intervals against a fresh solve over the remaining horizon
    for j in (1,):
        ip = revision_interval_policy(schedule, market, gamma, j)
        yj = _view_draw(market, ip.base_problem(), rng)
        sj = solve_dynamic_policy(conditional_coefficients(market, ip.base_problem(), yj), gamma)
        for t in np.linspace(0.5, 1.0, 10, endpoint=False):
            xb = 0.2 * rng.standard_normal(market.n_assets)
            a = revisions_policy(schedule, market, gamma, j, t, xb, yj).total
            worst_rev = max(worst_rev, np.max(np.abs(a - sj.weights(t - 0.5, xb).total)))

    # two quarters with first-order autoregressive view noise
    times = np.array([0.0, 0.25, 0.5])
    covs = tuple(0.25 * 0.6 * P @ market.sigma @ P.T for _ in range(2))
    st = ShortTermSchedule(times, P, (0.3 * np.eye(3),), covs)
    z = rng.standard_normal((2, market.n_assets))
    inc = 0.25 * market.mu_x + np.sqrt(0.25) * z @ market.chol.lower.T
    raw = st.sample_views(inc, rng)
    worst_st = 0.0
    for j in range(2):
        ybar = refine_short_term_view(st, raw[:j + 1], inc[:j])
        length = times[j + 1] - times[j]
        bview = ViewSet(P, st.idio_covs[j] / length, length)
        sj = solve_dynamic_policy(conditional_coefficients(market, bview, ybar), gamma)
        for t in np.linspace(times[j], times[j + 1], 10, endpoint=False):
            xb = 0.1 * rng.standard_normal(market.n_assets)
            a = short_term_policy(st, market, gamma, j, t, xb, ybar).total
            worst_st = max(worst_st, np.max(np.abs(a - sj.weights(t - times[j], xb).total)))
    ok = worst_rev < 1e-12 and worst_st < 1e-12
    return ok, f"revisions {worst_rev:.2e}, short-term {worst_st:.2e} (tol 1e-12)"


def check_limits(seed=11):
    market = reference_market()
    rng = np.random.default_rng(seed)
    views = reference_views(0.4, market).scaled(1e9)
    y = _view_draw(market, views, rng)
    gamma = 5.0
    sol = solve_dynamic_policy(conditional_coefficients(market, views, y), gamma)
    merton = market.merton_weights(gamma)
    worst_m = 0.0
    for _ in range(20):
        t = float(rng.uniform(0.0, market.horizon))
        x = t * market.mu_x + np.sqrt(t) * rng.standard_normal(5) @ market.chol.lower.T
        worst_m = max(worst_m, np.linalg.norm(sol.weights(t, x).total - merton))
    views = reference_views(0.4, market)
    y = _view_draw(market, views, rng)
    sol = solve_dynamic_policy(conditional_coefficients(market, views, y), 1 + 1e-8)
    worst_h = 0.0
    for _ in range(20):
        t = float(rng.uniform(0.0, market.horizon))
        x = 0.3 * rng.standard_normal(5)
        worst_h = max(worst_h, np.linalg.norm(sol.weights(t, x).hedging))
    ok = worst_m < 1e-3 and worst_h < 1e-6
    return ok, f"|pi - Merton| {worst_m:.2e} (tol 1e-3), |hedge| at gamma=1+1e-8 {worst_h:.2e} (tol 1e-6)"


def _band(row, k=2.0):
    return row["cer"] - k * row["se_cer"], row["cer"] + k * row["se_cer"]


def check_section_orderings(n_paths=DEFAULT_PATHS, seed=2024, threads=1):
    """DBL against RCBL: CER, turnover and sensitivity to the rebalancing frequency."""
    market = reference_market()
    plans = [RebalancePlan.named(p) for p in ("daily", "weekly", "monthly")]
    res = run_comparison(market, RegimeSpec("single", reference_picks()), [0.4, 0.8], [2.0, 5.0],
                         plans, n_paths, seed, threads=threads, bankruptcy="report")
    fails, parts = [], []
    for a in (0.4, 0.8):
        for g in (2.0, 5.0):
            d = res.row(policy="DBL", alpha=a, gamma=g, plan="weekly")
            r = res.row(policy="RCBL", alpha=a, gamma=g, plan="weekly")
            if np.isnan(d["cer"]) or np.isnan(r["cer"]):
                fails.append(f"CER undefined at a={a},g={g} (bankrupt DBL {d['bankrupt']}, RCBL {r['bankrupt']})")
                continue
            ok = _band(d)[0] > _band(r)[1]
            parts.append(f"a={a},g={g}: {d['cer']:.4f}+-{d['se_cer']:.4f} vs {r['cer']:.4f}+-{r['se_cer']:.4f}")
            if not ok:
                fails.append(f"CER bands overlap at a={a},g={g}")
    d = res.row(policy="DBL", alpha=0.4, gamma=5.0, plan="weekly")
    r = res.row(policy="RCBL", alpha=0.4, gamma=5.0, plan="weekly")
    if not d["turnover"] + 3 * d["se_turnover"] < r["turnover"] - 3 * r["se_turnover"]:
        fails.append("turnover not separated by 3 SE")
    parts.append(f"turnover {d['turnover']:.1f} vs {r['turnover']:.1f}")
    spreads = {}
    for pol in ("DBL", "RCBL"):
        cers = [res.row(policy=pol, alpha=0.4, gamma=5.0, plan=p.label)["cer"] for p in plans]
        spreads[pol] = max(cers) - min(cers) if not np.any(np.isnan(cers)) else np.nan
    if not spreads["DBL"] < spreads["RCBL"]:
        fails.append(f"frequency spread DBL {spreads['DBL']:.4f} vs RCBL {spreads['RCBL']:.4f}")
    parts.append(f"spread {spreads['DBL']:.4f} vs {spreads['RCBL']:.4f}")
    return not fails, "; ".join(fails + parts), res


REVISION_ALPHAS = (0.4, 0.6, 0.8, 1.2, 1.6, 2.0)
TREND_ALPHAS = (0.4, 0.8, 1.2, 1.6, 2.0)


def check_revision_value(n_paths=DEFAULT_PATHS, seed=2025, threads=1, plan="daily"):
    """Anticipated revisions raise the CER, and the advantage fades as views get noisier."""
    market = reference_market()
    res = run_revision_comparison(market, reference_picks(), REVISION_ALPHAS, 5.0,
                                  RebalancePlan.named(plan), n_paths, seed, threads=threads,
                                  bankruptcy="report")
    cer = {(r["investor"], r["alpha"]): r for r in res.rows}
    fails, parts = [], []
    rows = [cer[(n, 0.6)] for n in ("quarterly", "one_revision", "none")]
    if any(np.isnan(r["cer"]) for r in rows):
        fails.append("CER undefined at alpha=0.6 (bankrupt paths)")
    else:
        for better, worse in zip(rows[:-1], rows[1:]):
            if not _band(better)[0] >= _band(worse)[1]:
                fails.append(f"{better['investor']} vs {worse['investor']} bands overlap")
        parts.append("alpha=0.6: " + ", ".join(f"{r['investor']} {r['cer']:.4f}+-{r['se_cer']:.4f}" for r in rows))
    for name in ("quarterly", "one_revision"):
        gaps = [cer[(name, a)]["cer"] - cer[("none", a)]["cer"] for a in TREND_ALPHAS]
        if np.any(np.isnan(gaps)):
            fails.append(f"{name} gap undefined")
            continue
        rho = stats.spearmanr(TREND_ALPHAS, gaps).statistic
        parts.append(f"{name}-none gaps {np.round(gaps, 4).tolist()} rho={rho:.2f}")
        if not rho <= -0.9:
            fails.append(f"{name} gap trend rho={rho:.2f} > -0.9")
    return not fails, "; ".join(fails + parts), res


QUICK = (
    (1, "conditioning oracle", check_conditioning_oracle),
    (2, "Kalman smoother", check_kalman_smoother),
    (3, "Riccati residuals", check_riccati_residuals),
    (4, "policy forms", check_policy_forms),
    (5, "hitting times", check_hitting_times),
    (6, "bridge moments", check_bridge_moments),
    (7, "semigroup identity", check_semigroup),
    (8, "structural equality", check_structural_equality),
    (11, "limits", check_limits),
)


def run_checks(level: str = "quick", n_paths: int = DEFAULT_PATHS, threads: int = 1, out=print):
    """Run the suite and print one line per check; returns the list of ``Check``."""
    if level not in ("quick", "full"):
        raise ValueError("level must be 'quick' or 'full'")
    suite = list(QUICK)
    if level == "full":
        suite += [
            (9, "DBL vs RCBL orderings",
             lambda: check_section_orderings(n_paths, threads=threads)[:2]),
            (10, "revision value ordering",
             lambda: check_revision_value(n_paths, threads=threads)[:2]),
        ]
    suite.sort(key=lambda s: s[0])
    results = []
    for number, name, fn in suite:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, reported with its type
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        chk = Check(number, name, bool(ok), detail, time.perf_counter() - t0)
        out(chk.line())
        results.append(chk)
    return results
