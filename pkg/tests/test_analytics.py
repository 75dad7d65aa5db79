import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hmaxstable.analytics import (compare_scenarios, madogram, posterior_predict, predict_fields, quantile_draws,
                                  return_level, variance_ratio, write_pairs_csv, write_summary_csv)
from hmaxstable.basis import KernelBasis, make_grid
from hmaxstable.data import Dataset
from hmaxstable.errors import InputError, ParameterError
from hmaxstable.gevdist import GevParams, gev_cdf
from hmaxstable.mcmc import FieldSpec, FitConfig, ModelSpec, PosteriorSamples, fit
from hmaxstable.process import ProcessModel, SpatialGevFields, extremal_coeff, simulate


def fake_samples(mu, gamma, xi, coords=None, seed=0):
    mu, gamma, xi = (np.atleast_2d(v) for v in (mu, gamma, xi))
    D, n = mu.shape
    coords = np.column_stack([np.arange(n), np.zeros(n)]) if coords is None else coords
    return PosteriorSamples(np.zeros(D, int), np.arange(D), {"alpha": np.full(D, 0.5), "tau": np.ones(D)},
                            {"mu": mu, "gamma": gamma, "xi": xi}, None, {0: {}}, [f"s{i}" for i in range(n)],
                            coords, np.zeros((1, 2)), [0],
                            meta={"field_kinds": {"mu": "constant", "gamma": "constant", "xi": "constant"}})


def two_site(Y):
    return Dataset(["a", "b"], [[0.0, 0.0], [1.0, 0.0]], list(range(len(Y))), Y)


# -- madogram ---------------------------------------------------------------------

def test_madogram_identical_series():
    y = np.random.default_rng(0).normal(size=50)
    pe = madogram(two_site(np.column_stack([y, y])))
    assert pe.theta[0] == pytest.approx(1.0)
    assert pe.h[0] == pytest.approx(1.0) and pe.count[0] == 50


def test_madogram_independent_series():
    y = np.random.default_rng(1).normal(size=(20_000, 2))
    assert madogram(two_site(y)).theta[0] == pytest.approx(2.0, abs=0.03)


def test_madogram_needs_two_years():
    with pytest.raises(ParameterError):
        madogram(two_site(np.ones((1, 2))))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_madogram_year_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    Y = rng.gumbel(size=(30, 3))
    ds = Dataset(["a", "b", "c"], rng.uniform(0, 5, (3, 2)), list(range(30)), Y)
    perm = rng.permutation(30)
    ds2 = Dataset(ds.site_ids, ds.coords, list(range(30)), Y[perm])
    a, b = madogram(ds), madogram(ds2)
    np.testing.assert_allclose(a.theta, b.theta, atol=1e-12)
    assert np.all((a.theta >= 1) & (a.theta <= 2))


def test_madogram_recovers_model_coefficient():
    rng = np.random.default_rng(2)
    basis = KernelBasis(make_grid(5, 0, 4), 1.0)
    sites = np.array([[1.0, 1.0], [2.0, 1.5], [3.0, 3.0]])
    f = SpatialGevFields(np.zeros(3), np.zeros(3), np.full(3, 0.1))
    model = ProcessModel(f, basis, 0.4)
    pe = madogram(Dataset(["a", "b", "c"], sites, list(range(2000)), simulate(rng, model, sites, 2000)))
    ref = [extremal_coeff(sites[i], sites[j], model) for i, j in pe.pairs]
    np.testing.assert_allclose(pe.theta, ref, atol=0.05)


def test_madogram_binned_and_csv(tmp_path):
    y = np.random.default_rng(3).normal(size=(40, 4))
    ds = Dataset(list("abcd"), [[0, 0], [1, 0], [3, 0], [6, 0]], list(range(40)), y)
    pe = madogram(ds)
    assert len(pe) == 6
    means, counts = pe.binned([0, 2, 10])
    assert counts.tolist() == [1, 5]
    write_pairs_csv(pe, tmp_path / "p.csv", ds.site_ids)
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert len(lines) == 7


# -- return levels and quantiles --------------------------------------------------

def test_return_level_matches_cdf():
    p = GevParams(10.0, 3.0, 0.15)
    for q in (0.5, 0.9, 0.99):
        assert gev_cdf(return_level(p, q), p) == pytest.approx(q, rel=1e-12)
    g = GevParams(0.0, 1.0, 0.0)
    assert return_level(g, 0.99) == pytest.approx(-math.log(-math.log(0.99)))


def test_quantile_draws_shape_and_order():
    s = fake_samples(np.zeros((5, 3)), np.zeros((5, 3)), np.full((5, 3), 0.1))
    lo, hi = quantile_draws(s, 0.5), quantile_draws(s, 0.95)
    assert lo.shape == (5, 3) and np.all(hi > lo)


# -- prediction -------------------------------------------------------------------

@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(4)
    sites = make_grid(4, 0, 3).knots
    n, T = len(sites), 8
    f = SpatialGevFields(0.3 * sites[:, 0], np.zeros(n), np.full(n, 0.1))
    Y = simulate(rng, ProcessModel(f, KernelBasis(make_grid(3, 0, 3), 1.5), 0.5), sites, T)
    ds = Dataset([f"s{i}" for i in range(n)], sites, list(range(T)), Y)
    spec = ModelSpec(knots=make_grid(3, 0, 3), fields={"mu": FieldSpec("gp"), "gamma": FieldSpec("constant"),
                                                       "xi": FieldSpec("constant", prior_sd=0.25)})
    return ds, fit(ds, spec, FitConfig(n_iters=1500, burn_in=500, n_chains=1, thin=10, seed=1))


def test_predict_at_observed_site_keeps_values(fitted):
    ds, post = fitted
    out = predict_fields(post, ds.coords[[3, 7]], np.random.default_rng(0))
    np.testing.assert_array_equal(out["mu"], post.fields["mu"][:, [3, 7]])
    np.testing.assert_array_equal(out["xi"], np.repeat(post.fields["xi"][:, :1], 2, axis=1))


def test_predict_new_site_between_neighbours(fitted):
    ds, post = fitted
    out = predict_fields(post, [[1.5, 1.5]], np.random.default_rng(0))
    assert out["mu"].shape == (post.n_draws, 1)
    near = post.fields["mu"][:, [5, 6, 9, 10]].mean()
    assert abs(out["mu"].mean() - near) < 0.5


def test_posterior_predict_shape_and_determinism(fitted):
    ds, post = fitted
    a = posterior_predict(post, [[0.5, 0.5], [2.5, 1.0]], np.random.default_rng(5))
    b = posterior_predict(post, [[0.5, 0.5], [2.5, 1.0]], np.random.default_rng(5))
    assert a.shape == (post.n_draws, 2, ds.T)
    assert np.array_equal(a, b) and np.all(np.isfinite(a))


def test_posterior_predict_covers_observed_values(fitted):
    ds, post = fitted
    draws = posterior_predict(post, ds.coords, np.random.default_rng(6))
    lo, hi = np.quantile(draws, [0.025, 0.975], axis=0)
    inside = (ds.Y.T >= lo) & (ds.Y.T <= hi)
    assert inside.mean() > 0.85


def test_posterior_predict_requires_effects(fitted):
    with pytest.raises(InputError):
        posterior_predict(fake_samples(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2))), [[0, 0]],
                          np.random.default_rng(0))


# -- comparisons ------------------------------------------------------------------

def test_compare_identical_runs():
    rng = np.random.default_rng(7)
    mu = rng.normal(size=(4000, 3))
    a = fake_samples(mu, np.zeros((4000, 3)), np.full((4000, 3), 0.1))
    b = fake_samples(rng.normal(size=(4000, 3)), np.zeros((4000, 3)), np.full((4000, 3), 0.1))
    s = compare_scenarios(a, b)
    np.testing.assert_allclose(s.prob_increase["mu"], 0.5, atol=0.04)
    assert set(s.quantities) == {"mu", "sigma", "xi", "q0.1", "q0.5", "q0.95"}


def test_compare_planted_shift_and_scale(tmp_path):
    rng = np.random.default_rng(8)
    D, n = 2000, 4
    g0 = rng.normal(0, 0.01, (D, n))
    hist = fake_samples(rng.normal(0, 0.05, (D, n)), g0, np.full((D, n), 0.1))
    mu_f = rng.normal(0, 0.05, (D, n))
    mu_f[:, :2] += 1.0
    g1 = rng.normal(0, 0.01, (D, n)) + np.log(1.1)
    fut = fake_samples(mu_f, g1, np.full((D, n), 0.1))
    s = compare_scenarios(hist, fut)
    assert np.all(s.prob_increase["mu"][:2] > 0.99)
    np.testing.assert_allclose(s.change_mean["mu"][:2], 1.0, atol=0.02)
    assert np.all(np.abs(s.change_mean["mu"][2:]) < 0.02)
    np.testing.assert_allclose(s.change_mean["sigma"], 0.1, atol=0.01)
    write_summary_csv(s, tmp_path / "s.csv")
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 1 + 6 * n


def test_compare_site_mismatch():
    a = fake_samples(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((3, 2)))
    b = fake_samples(np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((3, 3)))
    with pytest.raises(InputError):
        compare_scenarios(a, b)


def test_variance_ratio_identical_and_scaled():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(500, 3))
    a = fake_samples(x, x, x)
    r = variance_ratio(a, a)
    for k in ("mu", "xi"):
        np.testing.assert_allclose(r[k], 1.0)
    b = fake_samples(2 * x, x, x)
    np.testing.assert_allclose(variance_ratio(b, a)["mu"], 4.0)
    c = fake_samples(x, x, np.zeros((500, 3)))
    assert np.all(np.isnan(variance_ratio(a, c)["xi"]))
