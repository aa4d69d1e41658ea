import numpy as np
import pytest
import scipy.sparse as sp
from scipy import stats

from wpimpact.blasso import (
    GibbsState, ModelSpec, PosteriorDraws, Precomputed, coefficient_moments, draw_lambda2,
    gibbs_fit, read_draws, sample_inverse_gaussian, write_draws,
)
from wpimpact.errors import NumericalError, ValidationError

QUICK = ModelSpec(burn_in=300, thin=2, n_keep=600, seed=11)


def ig_cdf(x, m, s):
    """Closed-form inverse-Gaussian CDF."""
    r = np.sqrt(s / x)
    return stats.norm.cdf(r * (x / m - 1)) + np.exp(2 * s / m) * stats.norm.cdf(-r * (x / m + 1))


def synthetic(n=400, p=6, seed=0, scale=0.3):
    rng = np.random.default_rng(seed)
    X = rng.choice([-1.0, 0.0, 1.0], size=(n, p), p=[0.3, 0.4, 0.3])
    beta = np.linspace(-scale, scale, p)
    y = 0.1 + X @ beta + 0.5 * rng.standard_normal(n)
    return sp.csr_matrix(X), y, beta


def test_ig_large_shape_concentrates():
    rng = np.random.default_rng(0)
    draws = sample_inverse_gaussian(1.0, 1e12, rng, size=1000)
    assert np.max(np.abs(draws - 1)) < 1e-4


def test_ig_moments_and_quartiles():
    rng = np.random.default_rng(1)
    m, s = 2.0, 3.0
    x = sample_inverse_gaussian(m, s, rng, size=1_000_000)
    se = np.sqrt(m ** 3 / s) / 1000
    assert abs(x.mean() - m) < 3 * se
    y = sample_inverse_gaussian(1.0, 1.0, rng, size=100_000)
    for q in (0.25, 0.5, 0.75):
        assert abs(np.mean(y <= np.quantile(y, q)) - ig_cdf(np.quantile(y, q), 1.0, 1.0)) < 0.01


def test_ig_tiny_shape_stays_positive():
    rng = np.random.default_rng(2)
    x = sample_inverse_gaussian(1e6, 1e-6, rng, size=10_000)
    assert np.all(x > 0) and np.all(np.isfinite(x))


@pytest.mark.parametrize("m, s", [(0.0, 1.0), (1.0, -1.0), (np.inf, 1.0)])
def test_ig_rejects_bad_parameters(m, s):
    with pytest.raises(ValueError):
        sample_inverse_gaussian(m, s, np.random.default_rng(0))


def test_zero_response_centres_coefficients():
    rng = np.random.default_rng(3)
    half = rng.choice([-1.0, 1.0], size=(50, 4))
    X = sp.csr_matrix(np.vstack([half, -half]))
    pre = Precomputed.from_arrays(X, np.zeros(100))
    state = GibbsState(mu=0.7, beta=rng.standard_normal(4), sigma2=0.3, lambda2=2.0,
                       s2=rng.uniform(0.1, 3, 4))
    mean, _ = coefficient_moments(state, pre)
    np.testing.assert_array_equal(mean, 0.0)


def test_flat_prior_limit_is_ols():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(80)
    y = 1.0 + 2.5 * x + rng.standard_normal(80)
    slope, icpt = np.polyfit(x, y, 1)
    pre = Precomputed.from_arrays(sp.csr_matrix(x[:, None]), y)
    state = GibbsState(mu=icpt, beta=np.zeros(1), sigma2=1.0, lambda2=1.0, s2=np.array([1e8]))
    mean, _ = coefficient_moments(state, pre)
    assert abs(mean[0] - slope) < 1e-3


def test_lambda2_conditional_moments():
    rng = np.random.default_rng(5)
    state = GibbsState(0.0, np.zeros(2), 1.0, 1.0, np.ones(2))
    spec = ModelSpec(r=1.0, delta=1.0)
    draws = np.array([draw_lambda2(state, spec, rng) for _ in range(100_000)])
    se = np.sqrt(3) / 2 / np.sqrt(draws.size)
    assert abs(draws.mean() - 1.5) < 3 * se


def test_single_slope_recovered():
    rng = np.random.default_rng(6)
    x = rng.standard_normal(500)
    y = x + 0.1 * rng.standard_normal(500)
    d = gibbs_fit((sp.csr_matrix(x[:, None]), y), QUICK)
    assert 0.9 <= d.coef[:, 0].mean() <= 1.1


def test_same_seed_bitwise_identical():
    X, y, _ = synthetic()
    a = gibbs_fit((X, y), QUICK)
    b = gibbs_fit((X, y), QUICK)
    np.testing.assert_array_equal(a.coef, b.coef)
    np.testing.assert_array_equal(a.mu, b.mu)
    np.testing.assert_array_equal(a.sigma2, b.sigma2)
    c = gibbs_fit((X, y), ModelSpec(burn_in=300, thin=2, n_keep=600, seed=12))
    assert not np.array_equal(a.coef, c.coef)


def test_draws_shape_and_names():
    X, y, _ = synthetic(p=3)
    d = gibbs_fit((X, y), QUICK, names=["a", "b", "team:T"])
    assert d.S == 600 and d.coef.shape == (600, 3)
    assert "team:T" in d and d.index("b") == 1
    np.testing.assert_array_equal(d["b"], d.coef[:, 1])
    with pytest.raises(ValidationError, match="'zz'"):
        d["zz"]


def test_shrinkage_grows_with_fixed_lambda():
    X, y, _ = synthetic(n=150, seed=7)
    sizes = []
    for lam2 in (0.1, 100.0, 10_000.0):
        d = gibbs_fit((X, y), ModelSpec(burn_in=200, thin=1, n_keep=1500, seed=3,
                                        fixed_lambda2=lam2))
        sizes.append(np.abs(d.coef.mean(axis=0)).mean())
        assert np.all(d.lambda2 == lam2)
    assert sizes[0] > sizes[1] > sizes[2]


def _mc_close(a, b, k=5.0):
    se = np.sqrt(a.coef.var(axis=0) / a.S * 20 + b.coef.var(axis=0) / b.S * 20)
    return np.all(np.abs(a.coef.mean(axis=0) - b.coef.mean(axis=0)) < k * se)


def test_column_permutation_equivariance():
    X, y, _ = synthetic(seed=8)
    spec = ModelSpec(burn_in=300, thin=2, n_keep=2000, seed=1)
    perm = np.array([3, 0, 5, 1, 4, 2])
    a = gibbs_fit((X, y), spec)
    b = gibbs_fit((X[:, perm], y), spec)
    b_back = PosteriorDraws(a.names, b.mu, b.sigma2, b.coef[:, np.argsort(perm)])
    assert _mc_close(a, b_back)


def test_sign_equivariance():
    X, y, _ = synthetic(seed=9)
    spec = ModelSpec(burn_in=300, thin=2, n_keep=2000, seed=1)
    a = gibbs_fit((X, y), spec)
    neg_y = gibbs_fit((X, -y), spec)
    neg_both = gibbs_fit((-X, -y), spec)
    flipped = PosteriorDraws(a.names, -neg_y.mu, neg_y.sigma2, -neg_y.coef)
    assert _mc_close(a, flipped)
    assert _mc_close(a, neg_both)
    assert abs(a.mu.mean() + neg_y.mu.mean()) < 0.05
    assert abs(a.mu.mean() + neg_both.mu.mean()) < 0.05


@pytest.mark.parametrize("c", [4.0, 0.37])
def test_response_scale_equivariance(c):
    X, y, _ = synthetic(seed=10)
    a = gibbs_fit((X, y), QUICK)
    b = gibbs_fit((X, c * y), QUICK)
    np.testing.assert_allclose(b.coef, c * a.coef, rtol=1e-9, atol=1e-14)
    np.testing.assert_allclose(b.sigma2, c * c * a.sigma2, rtol=1e-9)
    np.testing.assert_allclose(b.mu, c * a.mu, rtol=1e-9, atol=1e-14)


def test_divergence_is_numerical_error():
    X, y, _ = synthetic()
    y[3] = np.nan
    with pytest.raises(NumericalError, match="sampler diverged at iteration 1"):
        gibbs_fit((X, y), QUICK)


@pytest.mark.parametrize("kw", [dict(r=0), dict(delta=-1), dict(n_keep=0), dict(thin=0),
                                dict(fixed_lambda2=0.0)])
def test_bad_spec(kw):
    with pytest.raises(ValidationError):
        ModelSpec(**kw)


def test_draws_file_round_trip(tmp_path):
    X, y, _ = synthetic(p=3)
    d = gibbs_fit((X, y), QUICK, names=["p1", "p2", "team:A"])
    write_draws(d, tmp_path / "d.csv")
    back = read_draws(tmp_path / "d.csv")
    assert back.names == d.names
    np.testing.assert_array_equal(back.coef, d.coef)
    np.testing.assert_array_equal(back.mu, d.mu)
    np.testing.assert_array_equal(back.sigma2, d.sigma2)
