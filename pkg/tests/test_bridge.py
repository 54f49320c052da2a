import numpy as np
import pytest

from dynbl.bridge import BridgeSpec, bridge_law, hitting_time_monotonicity_check, sample_bridge_path, sample_bridge_paths
from dynbl.errors import GridOutOfRange, NotComparable, NotPositiveDefinite
from dynbl.market import reference_market, reference_views


def two_asset(T=10.0, w2=4.0, rho=0.6):
    sig = np.array([[1.0, rho], [rho, 1.0]])
    return BridgeSpec([0.0, 0.0], sig, [[0.0, 1.0]], [[w2 / T]], T, [1.0])


def test_scalar_hitting_time():
    T, w2 = 3.0, 0.7
    law = bridge_law(BridgeSpec([0.0], [[1.0]], [[1.0]], [[w2]], T, [0.0]))
    assert np.isclose(law.hitting_times[0], T * (1 + w2), rtol=1e-13)


def test_two_asset_hitting_times():
    law = bridge_law(two_asset())
    assert np.isclose(law.asset_hitting_times[1], 14.0, rtol=1e-13)
    assert np.isclose(law.asset_hitting_times[0], 14.0 / 0.36, rtol=1e-13)
    assert np.all(law.hitting_times > 10.0)


def test_pinned_bridge_hits_at_horizon():
    sig = np.array([[0.04, 0.01], [0.01, 0.09]])
    law = bridge_law(BridgeSpec([0.0, 0.0], sig, np.eye(2), 1e-12 * np.eye(2), 2.0, [0.1, -0.2]))
    assert np.allclose(law.hitting_times, 2.0, rtol=1e-9)


def test_uninformed_component_never_hits():
    law = bridge_law(BridgeSpec([0.0, 0.0], np.diag([0.04, 0.09]), [[1.0, 0.0]], [[0.01]], 1.0, [0.1]))
    assert np.isinf(law.hitting_times[1]) and np.isinf(law.asset_hitting_times[1])
    assert law.informed.tolist() == [True, False]
    assert np.isclose(law.cov(0.5, 0.5)[1, 1], 0.5 * 0.09)


def test_hitting_times_exceed_horizon():
    market = reference_market()
    views = reference_views(0.4, market)
    law = bridge_law(BridgeSpec(np.zeros(5), market.sigma, views.P, views.omega, 1.0, np.zeros(3)))
    finite = law.hitting_times[np.isfinite(law.hitting_times)]
    assert np.all(finite > 1.0)


def test_monotonicity_doubling_two_asset():
    spec = two_asset()
    small = bridge_law(spec)
    large = bridge_law(spec.with_omega(2 * spec.omega))
    assert np.all(large.asset_hitting_times > small.asset_hitting_times)
    assert hitting_time_monotonicity_check(spec, 2 * spec.omega)


def test_monotonicity_equal_noise():
    spec = two_asset()
    assert hitting_time_monotonicity_check(spec, spec.omega)


def test_monotonicity_reference_market_strict():
    market = reference_market()
    views = reference_views(0.4, market)
    spec = BridgeSpec(np.zeros(5), market.sigma, views.P, views.omega, 1.0, np.zeros(3))
    bigger = views.omega + 0.01 * np.eye(3)
    small, large = bridge_law(spec), bridge_law(spec.with_omega(bigger))
    assert np.all(large.asset_hitting_times > small.asset_hitting_times)
    assert hitting_time_monotonicity_check(spec, bigger)


def test_monotonicity_not_comparable():
    market = reference_market()
    views = reference_views(0.4, market)
    spec = BridgeSpec(np.zeros(5), market.sigma, views.P, views.omega, 1.0, np.zeros(3))
    other = views.omega.copy()
    other[0, 0] *= 2
    other[1, 1] *= 0.5
    with pytest.raises(NotComparable):
        hitting_time_monotonicity_check(spec, other)


def test_spec_validation():
    with pytest.raises(NotPositiveDefinite):
        BridgeSpec([0.0], [[-1.0]], [[1.0]], [[1.0]], 1.0, [0.0])


def test_law_endpoints_and_covariance_forms():
    spec = two_asset(T=2.0, w2=0.5)
    law = bridge_law(spec)
    assert np.allclose(law.mean(0.0), spec.a)
    assert np.allclose(law.cov(0.0, 0.0), 0.0)
    for s, t in ((0.3, 1.1), (1.5, 0.2), (2.0, 2.0)):
        want = law.L @ law.cov_whitened(s, t) @ law.L.T
        assert np.allclose(law.cov(s, t), want, atol=1e-12)
    for t in np.linspace(0.0, 2.0, 21):
        assert np.linalg.eigvalsh(law.cov(t, t)).min() >= -1e-10


def test_whitened_component_pinned_at_hitting_time():
    law = bridge_law(two_asset(T=1.0, w2=0.3))
    for i, Th in enumerate(law.hitting_times):
        # variance of component i of the whitened bridge: t - t^2 / T_i
        t = 0.7
        assert np.isclose(law.cov_whitened(t, t)[i, i], t - t * t / Th)
        assert np.isclose(Th - Th * Th * law.H[i, i], 0.0, atol=1e-12)


def test_drift_identity():
    market = reference_market()
    views = reference_views(0.4, market)
    law = bridge_law(BridgeSpec(np.zeros(5), market.sigma, views.P, views.omega, 1.0, np.zeros(3)))
    Linv = np.linalg.inv(law.L)
    for t in np.linspace(0.0, 1.0, 11):
        assert np.allclose(law.L @ law.beta2_whitened(t) @ Linv, law.beta2(t), atol=1e-10)


def test_sample_variance_at_midpoint():
    spec = two_asset(T=1.0, w2=0.4)
    law = bridge_law(spec)
    n = 100_000
    paths = sample_bridge_paths(law, [0.25, 0.5], n, 17)
    b = paths[:, 1]
    want = np.diag(law.cov(0.5, 0.5))
    est = b.var(axis=0, ddof=1)
    se = ((b - b.mean(0)) ** 2).std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(est - want) < 3 * se)


def test_whitened_cross_covariance():
    spec = two_asset(T=1.0, w2=0.4)
    law = bridge_law(spec)
    n = 100_000
    s, t = 1 / 3, 2 / 3
    paths = sample_bridge_paths(law, [s, t], n, 23)
    Linv = np.linalg.inv(law.L)
    w_s = (paths[:, 0] - law.mean(s)) @ Linv.T
    w_t = (paths[:, 1] - law.mean(t)) @ Linv.T
    prod = w_s[:, 0] * w_t[:, 1]
    est, se = prod.mean(), prod.std() / np.sqrt(n)
    assert abs(est - (-s * t * law.H[0, 1])) < 3 * se


def test_pinned_terminal_sample():
    y = np.array([0.1, -0.2])
    sig = np.array([[0.04, 0.01], [0.01, 0.09]])
    law = bridge_law(BridgeSpec([0.0, 0.0], sig, np.eye(2), 1e-20 * np.eye(2), 1.0, y))
    path = sample_bridge_path(law, np.linspace(0.0, 1.0, 11), 5)
    assert np.allclose(path[-1], y, atol=1e-8)


def test_sampling_deterministic():
    law = bridge_law(two_asset(T=1.0))
    grid = np.linspace(0.0, 1.0, 9)
    assert np.array_equal(sample_bridge_paths(law, grid, 50, 8), sample_bridge_paths(law, grid, 50, 8))


def test_grid_validation():
    law = bridge_law(two_asset(T=1.0))
    with pytest.raises(GridOutOfRange):
        sample_bridge_path(law, [0.0, 0.5, 1.5])
    with pytest.raises(GridOutOfRange):
        sample_bridge_path(law, [0.5, 0.2])
    with pytest.raises(GridOutOfRange):
        sample_bridge_path(law, [0.1, 0.5], method="euler")
