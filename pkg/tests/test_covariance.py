import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from smartnet import (
    MarModel,
    ModelError,
    NumericalError,
    UnstableModelError,
    build_design,
    companion,
    draw_random_model,
    normalize_model,
    predictor_matrix,
    random_pattern,
    simulate,
    stationary_covariance,
    sub_cov,
)
from smartnet.covariance import NormalizationTransform, sample_normalization


def _random_stable(seed, n_max=4, p_max=3):
    rng = np.random.default_rng(seed)
    n, p = int(rng.integers(1, n_max + 1)), int(rng.integers(1, p_max + 1))
    pat = random_pattern(n, min(3, n), seed=seed)
    return draw_random_model(pat, p, coeff_std=0.3, seed=seed)


def test_scalar_ar1_closed_form():
    a, s2 = 0.7, 2.0
    g = stationary_covariance(MarModel(np.full((1, 1, 1), a), [[s2]]))
    assert g.lag(0)[0, 0] == pytest.approx(s2 / (1 - a * a), rel=1e-12)


def test_scalar_ar2_yule_walker():
    a1, a2 = 0.5, -0.3
    g = stationary_covariance(MarModel(np.array([[[a1, a2]]])))
    g0 = (1 - a2) / ((1 + a2) * ((1 - a2) ** 2 - a1**2))
    assert g.lag(0)[0, 0] == pytest.approx(g0, rel=1e-12)
    assert g.lag(1)[0, 0] == pytest.approx(a1 * g0 / (1 - a2), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_matches_scipy_lyapunov(seed):
    m = _random_stable(seed)
    a = companion(m)
    q = np.zeros_like(a)
    q[: m.n_nodes, : m.n_nodes] = m.noise_cov
    ref = scipy.linalg.solve_discrete_lyapunov(a, q)
    for method in ("kronecker", "fixed_point"):
        g = stationary_covariance(m, method=method).block_toeplitz
        assert np.allclose(g, ref, rtol=1e-8, atol=1e-10 * np.abs(ref).max())


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_block_toeplitz_structure(seed):
    m = _random_stable(seed)
    g = stationary_covariance(m)
    n, p = m.n_nodes, m.order
    bt = g.block_toeplitz
    assert np.array_equal(bt, bt.T)
    assert np.linalg.eigvalsh(bt)[0] > 0
    for u in range(p):
        for v in range(p):
            blk = bt[u * n:(u + 1) * n, v * n:(v + 1) * n]
            assert np.allclose(blk, g.lag(v - u), atol=1e-10 * np.abs(bt).max())
    assert g.lyapunov_residual(m) < 1e-10


def test_unstable_model_raises():
    with pytest.raises(UnstableModelError) as info:
        stationary_covariance(MarModel(np.full((1, 1, 1), 1.1)))
    assert info.value.radius == pytest.approx(1.1)


def test_unknown_method():
    with pytest.raises(ModelError):
        stationary_covariance(MarModel(np.full((1, 1, 1), 0.1)), method="magic")


def test_sub_cov_matches_empirical_design_gram(winterhalder):
    # the design builder and the covariance indexing must agree on column order
    series = simulate(winterhalder, 200_000, seed=11)
    d = build_design(series, 0, winterhalder.order)
    gamma = stationary_covariance(winterhalder)
    pop = sub_cov(gamma, range(4), range(4))
    assert pop.shape == d.gram.shape
    scale = np.abs(pop).max()
    assert np.max(np.abs(d.gram - pop)) < 0.03 * scale


def test_predictor_matrix_matches_regression(winterhalder):
    gamma = stationary_covariance(winterhalder)
    psi = predictor_matrix(gamma, [0, 1], 3)
    series = simulate(winterhalder, 200_000, seed=5)
    d = build_design(series, 0, 5)
    xs = d.X[:, :10]
    xj = d.X[:, 15:20]
    emp, *_ = np.linalg.lstsq(xs, xj, rcond=None)
    assert np.max(np.abs(emp - psi.stacked)) < 0.03
    assert set(psi.psi_blocks) == {0, 1}


def test_predictor_matrix_rejects_target_in_set(winterhalder):
    gamma = stationary_covariance(winterhalder)
    with pytest.raises(ModelError):
        predictor_matrix(gamma, [0, 1], 1)


def test_predictor_matrix_singular():
    from smartnet.covariance import StationaryCovariance

    # nodes 0 and 1 perfectly collinear
    g = StationaryCovariance(np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]), 3, 1)
    with pytest.raises(NumericalError, match="smallest eigenvalue"):
        predictor_matrix(g, [0, 1], 2)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_normalized_model_has_unit_power(seed):
    m = _random_stable(seed)
    nm, tr = normalize_model(m)
    powers = stationary_covariance(nm).node_powers
    assert np.allclose(powers, 1.0, rtol=1e-9)
    # the normalized covariance is the original one rescaled
    g = stationary_covariance(m).block_toeplitz
    s = np.sqrt(np.diag(tr.matrix(m.order)))
    assert np.allclose(stationary_covariance(nm).block_toeplitz, g / np.outer(s, s), rtol=1e-8, atol=1e-12)


def test_normalization_transform_validation():
    with pytest.raises(ModelError):
        NormalizationTransform(np.array([1.0, 0.0]))


def test_sample_normalization_scales_series(winterhalder):
    s = simulate(winterhalder, 500, seed=0)
    ns = sample_normalization(s).apply_series(s)
    assert np.allclose(np.mean(ns.values**2, axis=0), 1.0)


def test_diagnostics_fields(winterhalder):
    g = stationary_covariance(winterhalder)
    d = g.diagnostics(winterhalder)
    assert d["lyapunov_residual"] < 1e-12
    assert d["symmetry_error"] == 0.0
    assert d["min_eigenvalue"] > 0
    assert len(d["node_powers"]) == 4
