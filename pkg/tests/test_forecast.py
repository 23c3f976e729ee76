import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from oparch import estimate as est
from oparch import forecast as fc
from oparch.errors import GridMismatch
from oparch.function_space import Grid, GridFunction
from oparch.simulate import simulate


def _fit(K, p=1, alpha=None, delta=None):
    a = np.zeros((p, K)) if alpha is None else np.asarray(alpha, float)
    d = np.ones(K) if delta is None else np.asarray(delta, float)
    return est.FitResult(p, K, "finite", 0.0, p * K, a, d, np.diag(d))


def test_zero_alpha_gives_delta():
    sf = fc.forecast_sigma(_fit(3, delta=[1, 2, 3]), np.ones((1, 3)) * 7)
    assert np.array_equal(sf.z_hat, [1, 2, 3])


def test_true_forecast_equals_simulator(low_dim):
    s = simulate(low_dim, 30, seed=3)
    f = est.FitResult.from_params(low_dim)
    x = low_dim.basis.scores(s.curves, 2)
    for k in range(1, 30):
        assert np.allclose(fc.forecast_sigma(f, x[k - 1 : k]).z_hat, s.z_path[k], rtol=1e-12)


def test_doubling_history_quadruples_arch_part():
    f = _fit(2, alpha=[[0.3, 0.5]], delta=[1.0, 2.0])
    h = np.array([[0.4, -1.1]])
    a = fc.forecast_sigma(f, h).z_hat - f.delta_hat
    b = fc.forecast_sigma(f, 2 * h).z_hat - f.delta_hat
    assert np.allclose(b, 4 * a)


@given(st.floats(0.1, 10.0))
def test_positive_homogeneity(c):
    f = _fit(2, alpha=[[0.3, 0.5]], delta=[1.0, 2.0])
    g = _fit(2, alpha=[[0.3, 0.5]], delta=[c, 2 * c])
    h = np.array([[0.4, -1.1]])
    assert np.allclose(fc.forecast_sigma(g, np.sqrt(c) * h).z_hat, c * fc.forecast_sigma(f, h).z_hat)


def test_cond_cov_identity_and_trace(ou50):
    sf = fc.SigmaForecast(np.ones(3))
    k = fc.conditional_covariance(sf, ou50)
    E = ou50.eigenfunctions[:3]
    assert np.allclose(k.matrix, (E.T * ou50.eigenvalues[:3]) @ E)
    sf2 = fc.SigmaForecast(np.array([2.0, 0.5, 3.0]))
    assert fc.conditional_covariance(sf2, ou50).trace() == pytest.approx(np.sum(sf2.z_hat * ou50.eigenvalues[:3]), abs=1e-8)
    assert np.min(np.linalg.eigvalsh(k.matrix)) > -1e-10


def test_cond_cov_matches_mc_variance(low_dim):
    rng = np.random.default_rng(0)
    z = np.array([1.3, 0.4])
    lam = low_dim.eigenvalues
    x = (rng.standard_normal((20000, 2)) * np.sqrt(z * lam)) @ low_dim.basis.eigenfunctions[:2]
    v = fc.conditional_covariance(fc.SigmaForecast(z), low_dim.basis).matrix[10, 10]
    se = v * np.sqrt(2 / 20000)
    assert abs(x[:, 10].var() - v) < 3 * se


def test_quantile_median_is_zero(ou50):
    q = fc.quantile_curve(fc.SigmaForecast(np.ones(4)), ou50, 0.5)
    assert np.allclose(q.values, 0)


def test_quantile_scales_with_sqrt_z(ou50):
    a = fc.quantile_curve(fc.SigmaForecast(np.ones(4)), ou50, 0.05).values
    b = fc.quantile_curve(fc.SigmaForecast(2 * np.ones(4)), ou50, 0.05).values
    assert np.allclose(b, np.sqrt(2) * a)


def test_gaussian_quantile_calibrated(low_dim):
    rng = np.random.default_rng(1)
    z = np.array([1.0, 2.0])
    q = fc.quantile_curve(fc.SigmaForecast(z), low_dim.basis, 0.05).values
    x = (rng.standard_normal((20000, 2)) * np.sqrt(z * low_dim.eigenvalues)) @ low_dim.basis.eigenfunctions[:2]
    freq = np.mean(x[:, 25] < q[25])
    assert abs(freq - 0.05) < 3 * np.sqrt(0.05 * 0.95 / 20000)


def test_divided_level_mode_clamps(bm50):
    q = fc.quantile_curve(fc.SigmaForecast(np.ones(3)), bm50, 0.05, mode="paper")
    assert np.all(np.isfinite(q.values))
    root = fc.innovation_sqrt_diagonal(bm50)
    sd = np.sqrt(fc.pointwise_variance(fc.SigmaForecast(np.ones(3)), bm50))
    expect = sd * norm.ppf(np.clip(0.05 / root, 1e-6, 1 - 1e-6))
    assert np.allclose(q.values, expect)


def test_violation_rate_trivial():
    g = Grid(4)
    R = [GridFunction(g, np.zeros(4))]
    assert fc.violation_rate([GridFunction(g, -np.ones(4))], R) == 0
    assert fc.violation_rate([GridFunction(g, np.ones(4))], R) == 1
    assert fc.violation_rate([GridFunction(g, np.array([1.0, 1.0, -1.0, -1.0]))], R) == 0.5


def test_violation_rate_grid_mismatch():
    with pytest.raises(GridMismatch):
        fc.violation_rate([GridFunction(Grid(3), np.zeros(3))], [GridFunction(Grid(4), np.zeros(4))])


def test_average_quantile_curve():
    g = Grid(3)
    c = GridFunction(g, np.array([1.0, 2.0, 3.0]))
    assert np.allclose(fc.average_quantile_curve([c, c]).values, c.values)
    assert np.allclose(fc.average_quantile_curve([c, c * -1]).values, 0)
    fs = [c, c * 3]
    assert np.allclose(fc.average_quantile_curve([f * 2 for f in fs]).values, 2 * fc.average_quantile_curve(fs).values)


def test_historical_baseline_iid():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((3000, 5))
    q = fc.historical_quantiles(x, 1000, 0.05)
    vr = fc.violation_rate(q, x[1000:])
    assert abs(vr - 0.05) < 3 * np.sqrt(0.05 * 0.95 / 2000)


def test_backtest_deterministic_and_antitone(mild_ou, tmp_path):
    s = simulate(mild_ou, 300, seed=5)
    a = fc.backtest(s.curves, mild_ou.basis, 1, alpha_levels=(0.01, 0.05), split=0.8, K=2)
    b = fc.backtest(s.curves, mild_ou.basis, 1, alpha_levels=(0.01, 0.05), split=0.8, K=2)
    assert a.levels == b.levels
    assert a.levels[0]["vr"] <= a.levels[1]["vr"]
    a.to_json(tmp_path / "r.json")
    a.write_avg_curves(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "t,model,value"
