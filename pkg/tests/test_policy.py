import numpy as np
import pytest

from conftest import prior_draw, scalar_market
from dynbl.conditional import conditional_coefficients
from dynbl.errors import GammaOutOfRange, IntervalMismatch, SingularOmega
from dynbl.gaussian import GaussianVector, condition
from dynbl.market import (
    MultiHorizonViews,
    RevisionSchedule,
    ShortTermSchedule,
    ViewSet,
    make_omega_alpha,
    proportional_revisions,
    reference_views,
)
from dynbl.policy import (
    aged_view_portfolio,
    aged_view_precision,
    classical_bl,
    classical_bl_portfolio,
    dynamic_policy_weights,
    multi_horizon_policy,
    revision_continuation,
    revision_interval_policy,
    revisions_policy,
    riccati_a_residual,
    riccati_b_residual,
    short_term_interval_policy,
    short_term_policy,
    solve_dynamic_policy,
    solve_multi_horizon,
)


@pytest.fixture
def y(market, views, rng):
    return prior_draw(market, views, rng)


@pytest.fixture
def sol(market, views, y):
    return solve_dynamic_policy(conditional_coefficients(market, views, y), 5.0)


# classical and aged-view rules -------------------------------------------------


def test_classical_uninformative(market, picks):
    om = make_omega_alpha(market, picks, 1e9)
    post = classical_bl(market, picks, om, np.array([0.5, -0.3, 0.2]))
    assert np.allclose(post.mu_bl, market.mu, atol=1e-8)
    assert np.allclose(post.sigma_bl, market.sigma, atol=1e-8)


def test_classical_trusted_views(market):
    yv = np.array([0.01, 0.02, 0.03, 0.04, 0.05])
    post = classical_bl(market, np.eye(5), 1e-12 * np.eye(5), yv)
    assert np.allclose(post.mu_bl, yv, atol=1e-9)


def test_classical_matches_conditioning(market, picks, rng):
    om = make_omega_alpha(market, picks, 0.4)
    r = market.mu + rng.standard_normal(5) @ market.chol.lower.T
    yv = picks @ r + rng.standard_normal(3) @ np.linalg.cholesky(om).T
    S = market.sigma
    joint = GaussianVector(np.r_[market.mu, picks @ market.mu],
                           np.block([[S, S @ picks.T], [picks @ S, picks @ S @ picks.T + om]]))
    post = condition(joint, 5 + np.arange(3), yv)
    bl = classical_bl(market, picks, om, yv)
    assert np.allclose(bl.mu_bl, post.mean, atol=1e-12)
    assert np.allclose(bl.sigma_bl, post.cov, atol=1e-12)
    prec = np.linalg.inv(S) + picks.T @ np.linalg.inv(om) @ picks
    assert np.allclose(np.linalg.inv(bl.sigma_bl), prec, atol=1e-10 * np.abs(prec).max())
    assert np.linalg.eigvalsh(prec - np.linalg.inv(S)).min() > -1e-10


def test_classical_singular_omega(market, picks):
    with pytest.raises(SingularOmega):
        classical_bl(market, picks, np.zeros((3, 3)), np.zeros(3))


def test_classical_portfolio_basics(market, picks):
    om = make_omega_alpha(market, picks, 0.4)
    post = classical_bl(market, picks, om, np.array([0.02, -0.01, 0.05]))
    w2 = classical_bl_portfolio(post, market.r_f, 2.0)
    w4 = classical_bl_portfolio(post, market.r_f, 4.0)
    assert np.allclose(w4, w2 / 2, atol=1e-15)
    flat = type(post)(np.full(5, market.r_f), post.sigma_bl)
    assert np.allclose(classical_bl_portfolio(flat, market.r_f, 3.0), 0.0)


def test_classical_portfolio_matches_gradient_ascent(market, picks):
    om = make_omega_alpha(market, picks, 0.4)
    post = classical_bl(market, picks, om, np.array([0.02, -0.01, 0.05]))
    gamma = 5.0
    ex = post.mu_bl - market.r_f
    S = post.sigma_bl
    step = 1.0 / (gamma * np.linalg.eigvalsh(S).max())
    w = np.zeros(5)
    for _ in range(200_000):
        g = ex - gamma * S @ w
        w = w + step * g
        if np.abs(g).max() < 1e-12:
            break
    assert np.allclose(classical_bl_portfolio(post, market.r_f, gamma), w, atol=1e-6)


def test_aged_precision_limits(market, views):
    P = views.P
    full = np.linalg.inv(market.sigma) + P.T @ np.linalg.inv(views.omega) @ P
    assert np.allclose(aged_view_precision(market, views, 0.0), full)
    assert np.allclose(aged_view_precision(market, views, 1.0 - 1e-12), np.linalg.inv(market.sigma), atol=1e-8)


def test_aged_portfolio_matches_conditional_oracle(market, views, y):
    gamma, t, T = 5.0, 0.5, 1.0
    coeffs = conditional_coefficients(market, views, y)
    x = coeffs.cond_mean(t)
    joint = coeffs.joint_with_view([t, T])
    post = condition(joint, np.r_[np.arange(5), 10 + np.arange(3)], np.r_[x, y])
    m = post.mean - x
    V = post.cov
    h = T - t
    want = np.linalg.solve(V / h, m / h - market.r_f) / gamma
    assert np.allclose(aged_view_portfolio(market, views, y, t, x, gamma), want, atol=1e-10)


def test_aged_portfolio_rejects_horizon(market, views, y):
    with pytest.raises(IntervalMismatch):
        aged_view_portfolio(market, views, y, 1.0, np.zeros(5), 5.0)


# single-view dynamic policy ------------------------------------------------------


def test_gamma_validation(market, views, y):
    coeffs = conditional_coefficients(market, views, y)
    with pytest.raises(GammaOutOfRange):
        solve_dynamic_policy(coeffs, 0.5)
    log = solve_dynamic_policy(coeffs, 1.0)
    assert np.all(log.M(0.3) == 0.0)
    assert np.all(log.weights(0.3, np.zeros(5)).hedging == 0.0)


def test_terminal_conditions(sol):
    assert np.allclose(sol.A(1.0), 0.0)
    assert np.allclose(sol.M(1.0), 0.0)
    assert np.allclose(sol.b(1.0), 0.0)
    assert abs(sol.c(1.0)) < 1e-15
    w = sol.weights(1.0, 0.1 * np.ones(5))
    assert np.allclose(w.hedging, 0.0)
    assert np.allclose(w.total, w.mean_variance)


def test_log_utility_limit(market, views, y):
    s = solve_dynamic_policy(conditional_coefficients(market, views, y), 1 + 1e-8)
    for t in np.linspace(0.0, 1.0, 11):
        assert np.linalg.norm(s.M(t)) < 1e-6


def test_a_forms_agree(sol):
    for t in np.linspace(0.0, 1.0, 21):
        assert np.allclose(sol.A(t), sol.A(t, symmetric_form=False), atol=1e-10)


def test_a_negative_definite_on_view_space(sol, views):
    # A has rank K, so it is only semi-definite on the full space; on the
    # span of the pick rows it is strictly negative definite
    basis = np.linalg.qr(views.P.T)[0]
    for t in np.linspace(0.0, 0.99, 34):
        A = sol.A(t)
        assert np.linalg.eigvalsh(A).max() < 1e-12
        assert np.linalg.eigvalsh(basis.T @ A @ basis).max() < -1e-12


@pytest.mark.parametrize("alpha", [0.4, 0.8])
@pytest.mark.parametrize("gamma", [2.0, 5.0])
def test_riccati_residuals(market, rng, alpha, gamma):
    views = reference_views(alpha, market)
    s = solve_dynamic_policy(conditional_coefficients(market, views, prior_draw(market, views, rng)), gamma)
    h = 1e-6
    for t in np.linspace(0.0, 1.0, 52)[1:-1]:
        dA = (s.A(t + h) - s.A(t - h)) / (2 * h)
        db = (s.b(t + h) - s.b(t - h)) / (2 * h)
        assert np.linalg.norm(riccati_a_residual(dA, s.A(t), s.eta(t), market.sigma, gamma)) < 1e-4
        rb = riccati_b_residual(db, s.b(t), s.A(t), s.eta(t), s.alpha(t), market, gamma)
        assert np.linalg.norm(rb) < 1e-4


def test_c_solves_its_equation(sol):
    # central difference of the spline against the right-hand side
    h = 1e-5
    for t in (0.2, 0.5, 0.8):
        dc = (sol.c(t + h) - sol.c(t - h)) / (2 * h)
        assert abs(dc - sol._c_rhs(t, sol.c(t))) < 1e-6


def test_policy_forms(sol, rng):
    for t in np.linspace(0.0, 1.0, 25):
        x = 0.2 * rng.standard_normal(5)
        w = dynamic_policy_weights(sol, t, x)
        assert np.allclose(w.total, w.total_dbl_form, atol=1e-10)
        assert np.allclose(w.total, w.mean_variance + (sol.A(t) @ x + sol.b(t)) / sol.gamma, atol=1e-10)


def test_uninformative_views_give_merton(market, views, y):
    s = solve_dynamic_policy(conditional_coefficients(market, views.scaled(1e9), y), 5.0)
    for t in (0.0, 0.5, 0.9):
        assert np.linalg.norm(s.weights(t, 0.1 * np.ones(5)).total - market.merton_weights(5.0)) < 1e-3


def test_sigma_dbl_properties(sol, market):
    S = market.sigma
    for t in np.linspace(0.0, 1.0, 11):
        assert np.linalg.eigvalsh(sol.sigma_dbl(t)).min() > 0
    assert np.linalg.eigvalsh(S - sol.sigma_dbl(0.0)).min() > -1e-12
    assert np.allclose(sol.sigma_dbl(1.0), S, atol=1e-14)


def test_m_monotone_in_precision(market, y):
    base = reference_views(0.4, market)
    for t in (0.0, 0.25, 0.5):
        loose = solve_dynamic_policy(conditional_coefficients(market, base, y), 5.0).M(t)
        tight = solve_dynamic_policy(conditional_coefficients(market, base.scaled(0.5), y), 5.0).M(t)
        # M is similar to a symmetric matrix, so its eigenvalues are real
        ev_l = np.sort(np.linalg.eigvals(loose).real)
        ev_t = np.sort(np.linalg.eigvals(tight).real)
        assert np.all(ev_t >= ev_l - 1e-12)


def test_hedge_grows_with_precision(market, rng):
    for _ in range(20):
        yv = market.horizon * reference_views(0.4, market).P @ market.mu_x + 0.1 * rng.standard_normal(3)
        x = 0.1 * rng.standard_normal(5)
        norms = []
        for alpha in (0.4, 0.8):
            s = solve_dynamic_policy(conditional_coefficients(market, reference_views(alpha, market), yv), 5.0)
            norms.append(np.linalg.norm(s.weights(0.25, x).hedging))
        assert norms[0] >= norms[1]


def test_value_function_terminal(sol):
    z = np.array([0.5, 1.0, 2.0])
    assert np.allclose(sol.value(1.0, z, np.zeros(5)), z ** -4 / -4)


def test_weights_outside_horizon(sol):
    with pytest.raises(IntervalMismatch):
        sol.weights(1.5, np.zeros(5))


def test_scalar_market_hedge_sign():
    m = scalar_market()
    views = ViewSet([[1.0]], [[0.01]], 1.0)
    s = solve_dynamic_policy(conditional_coefficients(m, views, [0.2]), 4.0)
    w = s.weights(0.0, [0.0])
    # a bullish view with gamma > 1 adds a positive hedge on top of the myopic holding
    assert w.mean_variance[0] > 0 and w.hedging[0] > 0


# revisions -----------------------------------------------------------------------


def test_single_interval_schedule_is_base_policy(market, picks, rng):
    gram = make_omega_alpha(market, picks, 0.6)
    sched = RevisionSchedule([0.0], (gram,), picks, 1.0)
    base = ViewSet(picks, gram, 1.0)
    yv = prior_draw(market, base, rng)
    s = solve_dynamic_policy(conditional_coefficients(market, base, yv), 5.0)
    for t in np.linspace(0.0, 0.99, 10):
        x = 0.1 * rng.standard_normal(5)
        a = revisions_policy(sched, market, 5.0, 0, t, x, yv).total
        assert np.allclose(a, s.weights(t, x).total, atol=1e-12, rtol=0)


def test_first_interval_ignores_future_revision(market, picks, rng):
    sched = proportional_revisions(market, picks, 0.6, [0.0, 0.5])
    base = ViewSet(picks, sched.omegas[0], 1.0)
    yv = prior_draw(market, base, rng)
    s = solve_dynamic_policy(conditional_coefficients(market, base, yv), 5.0)
    for t in np.linspace(0.0, 0.5, 10, endpoint=False):
        x = 0.1 * rng.standard_normal(5)
        a = revisions_policy(sched, market, 5.0, 0, t, x, yv).total
        assert np.allclose(a, s.weights(t, x).total, atol=1e-12, rtol=0)


def test_revision_interval_bounds(market, picks):
    sched = proportional_revisions(market, picks, 0.6, [0.0, 0.5])
    with pytest.raises(IntervalMismatch):
        revisions_policy(sched, market, 5.0, 0, 0.6, np.zeros(5), np.zeros(3))
    with pytest.raises(IntervalMismatch):
        revision_interval_policy(sched, market, 5.0, 2)


def test_revision_continuation_values(market, picks):
    sched = proportional_revisions(market, picks, 0.6, [0.0, 0.25, 0.5])
    for j in (0, 1):
        C, c = revision_continuation(sched, market, 5.0, j)
        ip = revision_interval_policy(sched, market, 5.0, j)
        t1 = sched.times[j + 1]
        assert np.allclose(C, ip.C(t1), atol=1e-12 * np.abs(C).max())
        assert np.allclose(c, ip.c_hat(t1), atol=1e-12)


def test_hedge_from_value_gradient(market, picks, rng):
    sched = proportional_revisions(market, picks, 0.6, [0.0, 0.5])
    for j, t in ((0, 0.2), (1, 0.7)):
        ip = revision_interval_policy(sched, market, 5.0, j)
        xb, yv = 0.1 * rng.standard_normal(5), 0.1 * rng.standard_normal(3)
        assert np.allclose(ip.hedging_from_value(t, xb, yv), ip.weights(t, xb, yv).hedging, atol=1e-12)


# short-term views -------------------------------------------------------------------


def test_short_term_single_interval(market, picks, rng):
    om = make_omega_alpha(market, picks, 0.5)
    st = ShortTermSchedule([0.0, 1.0], picks, (), (om,))
    base = ViewSet(picks, om, 1.0)
    yv = prior_draw(market, base, rng)
    s = solve_dynamic_policy(conditional_coefficients(market, base, yv), 3.0)
    for t in np.linspace(0.0, 0.99, 10):
        x = 0.1 * rng.standard_normal(5)
        assert np.allclose(short_term_policy(st, market, 3.0, 0, t, x, yv).total,
                           s.weights(t, x).total, atol=1e-12, rtol=0)


def test_short_term_hedge_vanishes_at_interval_end(market, picks):
    om = 0.25 * make_omega_alpha(market, picks, 0.5)
    st = ShortTermSchedule([0.0, 0.25, 0.5], picks, (0.3 * np.eye(3),), (om, om))
    ip = short_term_interval_policy(st, market, 5.0, 0)
    assert np.linalg.norm(ip.M(0.25 - 1e-12)) < 1e-9
    with pytest.raises(IntervalMismatch):
        short_term_policy(st, market, 5.0, 0, 0.3, np.zeros(5), np.zeros(3))


def test_short_term_matches_interval_solve(market, picks, rng):
    om = 0.25 * make_omega_alpha(market, picks, 0.5)
    st = ShortTermSchedule([0.0, 0.25, 0.5], picks, (0.3 * np.eye(3),), (om, om))
    for j in range(2):
        bview = ViewSet(picks, om / 0.25, 0.25)
        yv = prior_draw(market, bview, rng)
        s = solve_dynamic_policy(conditional_coefficients(market, bview, yv), 5.0)
        for t in np.linspace(st.times[j], st.times[j + 1], 10, endpoint=False):
            x = 0.1 * rng.standard_normal(5)
            assert np.allclose(short_term_policy(st, market, 5.0, j, t, x, yv).total,
                               s.weights(t - st.times[j], x).total, atol=1e-12, rtol=0)


# views on several horizons --------------------------------------------------------------


@pytest.fixture
def multi(market, picks):
    om = np.diag(np.diag(make_omega_alpha(market, picks, 0.4)))
    return MultiHorizonViews([0.25, 0.5, 1.0], picks, om)


def test_multi_horizon_single_view(market, picks, rng):
    om = make_omega_alpha(market, picks[:1], 0.4)
    mv = MultiHorizonViews([1.0], picks[:1], om)
    yv = 0.1 * rng.standard_normal(1)
    base = solve_dynamic_policy(conditional_coefficients(market, ViewSet(picks[:1], om, 1.0), yv), 5.0)
    sol = solve_multi_horizon(mv, market, 5.0)
    for t in np.linspace(0.0, 0.99, 12):
        x = 0.1 * rng.standard_normal(5)
        assert np.allclose(sol.weights(t, x, yv).total, base.weights(t, x).total, atol=1e-8)
    x = np.full(5, 0.05)
    assert np.allclose(multi_horizon_policy(mv, market, 5.0, 1, 0.3, x, yv).total,
                       base.weights(0.3, x).total, atol=1e-8)


def test_multi_horizon_last_interval(market, picks, multi, rng):
    sol = solve_multi_horizon(multi, market, 5.0)
    yv = 0.1 * rng.standard_normal(3)
    last = ViewSet(picks[2:], multi.omega[2:, 2:], 1.0)
    base = solve_dynamic_policy(conditional_coefficients(market, last, yv[2:]), 5.0)
    for t in np.linspace(0.5, 0.99, 8):
        x = 0.1 * rng.standard_normal(5)
        assert np.allclose(sol.weights(t, x, yv).total, base.weights(t, x).total, atol=1e-8)


def test_multi_horizon_residuals_and_continuity(market, multi, rng):
    sol = solve_multi_horizon(multi, market, 5.0)
    yv = 0.1 * rng.standard_normal(3)
    for j, (a, b) in enumerate(((0.0, 0.25), (0.25, 0.5), (0.5, 1.0)), start=1):
        for t in np.linspace(a, b, 7)[1:-1]:
            ra, rb = sol.riccati_residuals(j, t, yv)
            assert np.linalg.norm(ra) < 1e-6 and np.linalg.norm(rb) < 1e-6
    for j, t in ((1, 0.25), (2, 0.5)):
        assert np.allclose(sol.A(j, t - 1e-12), sol.A(j + 1, t), atol=1e-8)
        assert np.allclose(sol.b(j, t - 1e-12, yv), sol.b(j + 1, t, yv), atol=1e-8)


def test_multi_horizon_interval_check(market, multi):
    sol = solve_multi_horizon(multi, market, 5.0)
    with pytest.raises(IntervalMismatch):
        sol.weights(0.6, np.zeros(5), np.zeros(3), j=1)
    with pytest.raises(IntervalMismatch):
        multi_horizon_policy(multi, market, 5.0, 4, 0.6, np.zeros(5), np.zeros(3), solution=sol)
