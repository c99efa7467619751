import numpy as np
import pytest
import statsmodels.api as sm

from smartnet import MarModel, ModelError, NumericalError, TimeSeries, build_design, simulate
from smartnet.baselines import (
    ScoredEdgeSet,
    entry_statistics,
    lasso_fit,
    lasso_network,
    least_squares_fit,
    least_squares_network,
    mb_fit,
    mb_network,
    path_network,
    ridge_fit,
    ridge_network,
)
from smartnet.solver import lambda_max, lambda_path


@pytest.fixture(scope="module")
def series(winterhalder):
    return simulate(winterhalder, 400, seed=21)


def test_least_squares_t_stats_match_statsmodels(series):
    d = build_design(series, 2, 5)
    coef, es = least_squares_fit(d, "max")
    ref = sm.OLS(d.y, d.X).fit()
    assert np.allclose(coef, ref.params, atol=1e-10)
    t = np.abs(ref.tvalues).reshape(4, 5)
    other = [0, 1, 3]  # the self entry is excluded (nan)
    assert np.isnan(es.stats[2, 2])
    assert np.allclose(es.stats[2, other], t.max(axis=1)[other], rtol=1e-8)
    _, es2 = least_squares_fit(d, "l2")
    assert np.allclose(es2.stats[2, other], np.linalg.norm(t, axis=1)[other], rtol=1e-8)


def test_least_squares_needs_enough_rows():
    s = TimeSeries(np.random.default_rng(0).standard_normal((12, 4)))
    with pytest.raises(ModelError):
        least_squares_fit(build_design(s, 0, 3))


def test_ridge_matches_svd_derivation(series):
    d = build_design(series, 1, 5)
    rho = 0.05
    coef, es = ridge_fit(d, rho, "max")
    n = d.X.shape[0]
    u, sv, vt = np.linalg.svd(d.X, full_matrices=False)
    shrink = sv / (sv**2 + rho * n)
    expected = vt.T @ (shrink * (u.T @ d.y))
    assert np.allclose(coef, expected, atol=1e-10)
    df = np.sum(sv**2 / (sv**2 + rho * n))
    assert es.metadata["df"] == pytest.approx(df, rel=1e-10)
    resid = d.y - d.X @ coef
    sigma2 = resid @ resid / (n - df)
    var = sigma2 * (vt.T**2) @ (shrink**2)
    t = (np.abs(coef) / np.sqrt(var)).reshape(4, 5).max(axis=1)
    assert np.allclose(es.stats[1, [0, 2, 3]], t[[0, 2, 3]], rtol=1e-8)
    with pytest.raises(ModelError):
        ridge_fit(d, 0.0)


def test_ridge_approaches_least_squares(series):
    d = build_design(series, 0, 5)
    c_ls, _ = least_squares_fit(d)
    c_r, _ = ridge_fit(d, 1e-12)
    assert np.allclose(c_ls, c_r, atol=1e-6)


def test_scored_edge_set_contract():
    es = ScoredEdgeSet("x", np.arange(9.0).reshape(3, 3))
    assert np.all(np.isnan(np.diag(es.stats)))
    assert es.detected(5.0) == {(1, 2), (2, 0), (2, 1)}
    with pytest.raises(NumericalError):
        ScoredEdgeSet("x", np.array([[0.0, np.inf], [0.0, 0.0]]))


def test_entry_statistics_reproduce_path_active_sets(series):
    order = 5
    paths = []
    for i in range(4):
        d = build_design(series, i, order)
        paths.append(lambda_path(d, "sg", grid=np.geomspace(20.0, 0.05, 40)))
    stats = entry_statistics(paths, 4)
    for i, path in enumerate(paths):
        for sol in path:
            # blocks that have ever been active by this lambda; paths here are monotone
            entered = set(np.flatnonzero(stats[i] >= sol.lam))
            assert set(sol.active_groups) <= entered


def test_path_network_metadata_and_kkt(series):
    es = path_network(series, 5, "scsg", n_points=30)
    assert es.metadata["kkt_max"] < 1e-6
    assert es.stats.shape == (4, 4)
    assert np.all(es.stats[~np.isnan(es.stats)] <= es.metadata["lambda_max"])


def test_lasso_fit_statistic(series):
    d = build_design(series, 0, 5)
    lam = 0.3 * lambda_max(d, "sg", "singleton")
    sol, es = lasso_fit(d, lam)
    assert np.allclose(es.stats[0, 1:], np.linalg.norm(sol.blocks, axis=1)[1:])
    assert lasso_network(series, 5, n_points=20).estimator == "lasso"


def test_mb_is_symmetric_or_rule(series):
    es = mb_fit(series, 0.05)
    off = ~np.eye(4, dtype=bool)
    assert np.allclose(es.stats[off], es.stats.T[off])
    big = mb_fit(series, 1e6)
    assert np.all(big.stats[off] == 0.0)
    net = mb_network(series, n_points=30)
    assert np.allclose(net.stats[off], net.stats.T[off])


def test_mb_input_validation():
    with pytest.raises(ModelError):
        mb_fit(TimeSeries(np.ones((5, 1))), 0.1)


def test_baselines_relabel_equivariance(series):
    perm = np.array([3, 1, 0, 2])
    sp = TimeSeries(series.values[:, perm])
    idx = np.ix_(perm, perm)
    off = ~np.eye(4, dtype=bool)
    for fn in (lambda s: least_squares_network(s, 5), lambda s: ridge_network(s, 5),
               lambda s: path_network(s, 5, "scsg", n_points=25), lambda s: lasso_network(s, 5, n_points=25),
               lambda s: mb_network(s, n_points=25)):
        a, b = fn(series).stats, fn(sp).stats
        assert np.allclose(b[off], a[idx][off], rtol=1e-6, atol=1e-9)


def test_every_statistic_ranks_the_strong_edge_first():
    # strong two-node coupling is found by every statistic
    c = np.zeros((3, 3, 1))
    c[:, :, 0] = [[0.5, 0.0, 0.0], [0.6, 0.3, 0.0], [0.0, 0.0, 0.2]]
    s = simulate(MarModel(c), 2000, seed=3)
    for es in (least_squares_network(s, 1), ridge_network(s, 1), path_network(s, 1, "scsg", n_points=40)):
        st = np.nan_to_num(es.stats, nan=-np.inf)
        assert np.unravel_index(np.argmax(st), st.shape) == (1, 0)
