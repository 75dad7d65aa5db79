import math

import numpy as np
import pytest
from scipy import integrate, optimize, special

from hmaxstable import _kernels as K
from hmaxstable.basis import KernelBasis, make_grid
from hmaxstable.data import Dataset
from hmaxstable.errors import ContractError, InitializationError, ParameterError
from hmaxstable.gevdist import GevParams, gev_logpdf, sample_arr as gev_draws
from hmaxstable.mcmc import FieldSpec, FitConfig, ModelSpec, Sampler, adapt_step, fit, log_likelihood
from hmaxstable.process import ProcessModel, SpatialGevFields, conditional_logpdf_arr, simulate

CONST = {"gamma": FieldSpec("constant"), "xi": FieldSpec("constant", prior_sd=0.25)}


def small_data(seed=0, m=4, T=6, alpha=0.4, tau=1.5, xi=0.1):
    rng = np.random.default_rng(seed)
    sites = make_grid(m, 0, 3).knots
    n = len(sites)
    f = SpatialGevFields(rng.normal(0, 0.5, n), np.zeros(n), np.full(n, xi))
    Y = simulate(rng, ProcessModel(f, KernelBasis(make_grid(3, 0, 3), tau), alpha), sites, T)
    return Dataset([f"s{i}" for i in range(n)], sites, list(range(T)), Y)


def sampler(ds, knots=None, seed=0, **cfg):
    spec = ModelSpec(knots=knots or make_grid(3, 0, 3), fields={"mu": FieldSpec("gp"), **CONST})
    base = dict(n_iters=200, burn_in=100, n_chains=1, thin=1)
    base.update(cfg)
    return Sampler(ds, spec, FitConfig(**base), np.random.default_rng(seed))


# -- likelihood -------------------------------------------------------------------

def test_likelihood_alpha_one_is_iid_gev():
    ds = small_data()
    s = sampler(ds).state
    s.alpha = 1.0
    s.A[:] = 1.0
    f = s.fields
    ref = sum(gev_logpdf(ds.Y[t, i], GevParams(f.mu[i], f.sigma[i], f.xi[i]))
              for i in range(ds.n) for t in range(ds.T))
    assert log_likelihood(s, ds) == pytest.approx(ref, rel=1e-12)


def test_likelihood_single_cell():
    ds = Dataset(["a"], [[0.0, 0.0]], [2001], [[1.7]])
    smp = Sampler(ds, ModelSpec(fields={"mu": FieldSpec("gp"), **CONST}),
                  FitConfig(n_iters=2, burn_in=1, n_chains=1), np.random.default_rng(0))
    s = smp.state
    s.A[:] = 2.0
    lt = s.alpha * math.log(2.0)
    f = s.fields
    ref = conditional_logpdf_arr(1.7, f.mu[0], f.sigma[0], f.xi[0], lt, s.alpha)
    assert log_likelihood(s, ds) == pytest.approx(float(ref), rel=1e-13)


def test_likelihood_year_permutation_bit_identical():
    ds = small_data(T=8)
    s = sampler(ds).state
    s.A[:] = np.random.default_rng(1).uniform(0.5, 3, s.A.shape)
    perm = np.random.default_rng(2).permutation(ds.T)
    ds2 = Dataset(ds.site_ids, ds.coords, [ds.years[p] for p in perm], ds.Y[perm])
    s2 = sampler(ds2).state
    s2.A[:] = s.A[:, perm]
    for name in ("mu", "gamma", "xi"):
        getattr(s2.fields, name)[:] = getattr(s.fields, name)
    s2.alpha, s2.log_tau = s.alpha, s.log_tau
    assert log_likelihood(s, ds) == log_likelihood(s2, ds2)


def test_out_of_support_is_minus_inf():
    ds = small_data()
    s = sampler(ds).state
    s.fields.xi[:] = 0.5
    s.fields.mu[:] = ds.Y.max() + 50  # lower end point above every observation
    assert log_likelihood(s, ds) == -math.inf


def test_initialization_error_has_report():
    ds = small_data()
    smp = sampler(ds)
    st = smp.state
    st.fields.xi[:] = 0.5
    st.fields.mu[:] = ds.Y.max() + 50
    with pytest.raises(InitializationError) as ei:
        Sampler(ds, smp.spec, smp.config, np.random.default_rng(0), state=st)
    assert ei.value.report["n_bad_cells"] == ds.n * ds.T


# -- individual updates -----------------------------------------------------------

def test_zero_step_always_accepted():
    smp = sampler(small_data())
    smp.state.step_sizes.update(mu=0.0, log_tau=0.0, alpha=0.0)
    before = smp.state.fields.mu.copy()
    smp.update_gev_field("mu")
    assert smp._window["mu"] == (smp.data.n, smp.data.n)
    np.testing.assert_array_equal(before, smp.state.fields.mu)
    assert smp.update_bandwidth() and smp.update_alpha()


def test_out_of_support_proposals_rejected():
    ds = small_data(xi=0.3)
    smp = sampler(ds)
    smp.state.fields.xi[:] = 0.3
    smp._refresh_all()
    smp.state.step_sizes["mu"] = 1e6
    before = smp.state.fields.mu.copy()
    for _ in range(5):
        smp.update_gev_field("mu")
    acc, prop = smp._window["mu"]
    assert acc == 0 and prop == 5 * ds.n
    np.testing.assert_array_equal(before, smp.state.fields.mu)


def test_alpha_stays_in_unit_interval():
    smp = sampler(small_data())
    smp.state.step_sizes["alpha"] = 5.0
    for _ in range(50):
        smp.update_alpha()
        assert 0 < smp.state.alpha < 1


def test_b_proposals_outside_rejected():
    smp = sampler(small_data())
    smp.state.step_sizes["B"] = 3.0
    for _ in range(20):
        smp.update_aux_b()
        assert np.all((smp.state.B > 0) & (smp.state.B < 1))


def test_aux_update_touches_only_its_year():
    smp = sampler(small_data())
    s = smp.state
    L, T = s.A.shape
    ll0 = smp.ll.copy()
    z = np.zeros((L, T))
    z[4, 2] = 1.0
    logu = np.full((L, T), np.inf)
    logu[4, 2] = -np.inf  # force acceptance of the one move
    acc = K.aux_a_sweep(s.A, s.B, smp.S, smp.wt, smp.top, smp.Y, s.fields.mu, s.fields.gamma, s.fields.xi,
                        s.alpha, smp.ll, smp.log_theta, 0.5, z, logu, False)
    assert acc == 1
    others = [t for t in range(T) if t != 2]
    assert np.array_equal(ll0[:, others], smp.ll[:, others])
    assert not np.array_equal(ll0[:, 2], smp.ll[:, 2])
    assert smp.audit() < 1e-10


def test_level_ridge_keeps_likelihood_with_common_shape():
    smp = sampler(small_data(3))
    s = smp.state
    s.fields.xi[:] = 0.2
    smp.ll = smp._ll(s.fields, smp.log_theta, s.alpha)
    before = float(np.sum(smp.ll))
    s.step_sizes["level_ridge"] = 0.5
    moved = 0
    for _ in range(40):
        A0 = s.A.copy()
        if smp.update_level_ridge():
            moved += 1
            assert not np.allclose(s.A, A0)
        assert float(np.sum(smp.ll)) == pytest.approx(before, abs=1e-8)
        assert smp.audit() < 1e-9
    assert moved > 0


def test_bandwidth_alpha_one_prior_only_driven():
    ds = small_data()
    spec = ModelSpec(knots=make_grid(3, 0, 3), fields={"mu": FieldSpec("gp"), **CONST}, alpha_fixed=1.0)
    smp = Sampler(ds, spec, FitConfig(n_iters=10, burn_in=5, n_chains=1), np.random.default_rng(0))
    smp.state.A[:] = 1.0
    smp._refresh_all()
    ll = smp.ll.copy()
    for _ in range(20):
        smp.update_bandwidth()
    # theta is one whatever tau is, so the likelihood never moves
    np.testing.assert_allclose(smp.ll, ll, rtol=0, atol=1e-12)


# -- adaptation -------------------------------------------------------------------

def test_adapt_step_rules():
    steps = {"mu": 1.0, "alpha": 1.0}
    out = adapt_step({"mu": (0, 50), "alpha": (20, 50)}, steps)
    assert out["mu"] == pytest.approx(math.exp(-0.05))
    assert out["alpha"] == 1.0
    assert adapt_step({"mu": (40, 50)}, steps)["mu"] == pytest.approx(math.exp(0.05))
    with pytest.raises(ContractError):
        adapt_step({"mu": (0, 50)}, steps, in_burn_in=False)


def test_steps_frozen_after_burn_in():
    smp = sampler(small_data(), n_iters=300, burn_in=100)
    for _ in range(100):
        smp.step()
    frozen = dict(smp.state.step_sizes)
    for _ in range(200):
        smp.step()
    assert smp.state.step_sizes == frozen


def test_config_validation():
    with pytest.raises(ParameterError):
        FitConfig(n_iters=10, burn_in=10)
    with pytest.raises(ParameterError):
        FitConfig(blocks={"mu", "bogus"})


# -- whole chains -----------------------------------------------------------------

def test_fit_deterministic_and_shapes():
    ds = small_data()
    spec = ModelSpec(knots=make_grid(3, 0, 3), fields={"mu": FieldSpec("gp"), **CONST})
    cfg = FitConfig(n_iters=120, burn_in=60, n_chains=2, thin=3, seed=5)
    a, b = fit(ds, spec, cfg), fit(ds, spec, cfg)
    assert a.n_draws == 2 * 20
    for k in a.scalars:
        assert np.array_equal(a.scalars[k], b.scalars[k])
    for f in a.fields:
        assert np.array_equal(a.fields[f], b.fields[f])
    assert np.array_equal(a.A, b.A)
    assert a.A.shape == (40, 9, ds.T)
    c = fit(ds, spec, FitConfig(n_iters=120, burn_in=60, n_chains=2, thin=3, seed=6))
    assert not np.array_equal(a.fields["mu"], c.fields["mu"])


def test_cache_audit_after_run():
    smp = sampler(small_data(), n_iters=600, burn_in=300, audit_every=100)
    smp.run()
    assert len(smp.audits) == 6
    assert max(g for _, g in smp.audits) < 1e-10


def test_state_invariants_hold():
    smp = sampler(small_data(), n_iters=300, burn_in=100)
    for _ in range(300):
        smp.step()
        s = smp.state
        assert 0 < s.alpha < 1
        assert np.all(s.A > 0) and np.all((s.B > 0) & (s.B < 1))
        assert np.all(np.isfinite(s.fields.sigma)) and np.all(s.fields.sigma > 0)


def one_site_posterior(y, beta0, delta2, sigma, xi, A, alpha):
    lt = alpha * math.log(A)
    logpost = lambda m: float(conditional_logpdf_arr(y, m, sigma, xi, lt, alpha)) - (m - beta0) ** 2 / (2 * delta2)
    mode = optimize.minimize_scalar(lambda m: -logpost(m), bracket=(y - 3, y)).x
    c = logpost(mode)
    dens = lambda m: math.exp(logpost(m) - c)
    lo, hi = mode - 12 * math.sqrt(delta2), mode + 12 * math.sqrt(delta2)
    Z, _ = integrate.quad(dens, lo, hi, points=[mode], limit=400)
    return lambda m: integrate.quad(dens, lo, m, limit=400)[0] / Z


def run_one_site(n_iters, seed=0):
    """Chain over mu alone for one site and year; effect and other parameters fixed."""
    ds = Dataset(["a"], [[0.0, 0.0]], [0], [[1.3]])
    spec = ModelSpec(fields={"mu": FieldSpec("gp"), **CONST}, alpha_fixed=0.5, tau_fixed=1.0)
    cfg = FitConfig(n_iters=n_iters, burn_in=2000, n_chains=1, thin=1, blocks={"mu"}, audit_every=0)
    smp = Sampler(ds, spec, cfg, np.random.default_rng(seed))
    p = smp.state.priors["mu"]
    p.hyper.beta[:] = 0.0
    p.hyper.delta2 = 4.0
    p._refresh()
    smp.state.fields.gamma[:] = 0.0
    smp.state.fields.xi[:] = 0.1
    smp.state.A[:] = 2.5
    smp._refresh_all()
    draws = []
    smp.run(callback=lambda s: draws.append(s.state.fields.mu[0]) if s.iteration > cfg.burn_in else None)
    cdf = one_site_posterior(1.3, 0.0, 4.0, 1.0, 0.1, 2.5, 0.5)
    return np.array(draws), cdf, smp


def test_one_site_posterior_matches_quadrature():
    draws, cdf, smp = run_one_site(30_000)
    for p in (0.05, 0.25, 0.5, 0.75, 0.95):
        assert abs(cdf(np.quantile(draws, p)) - p) < 0.02
    assert 0.25 <= smp.acceptance_rates()["mu"] <= 0.55


def test_prior_only_recovers_priors():
    ds = small_data()
    spec = ModelSpec(knots=make_grid(3, 0, 3), fields={"mu": FieldSpec("constant", prior_mean=1.0, prior_sd=2.0),
                                                       **CONST})
    cfg = FitConfig(n_iters=40_000, burn_in=1000, n_chains=1, thin=5, prior_only=True, audit_every=0, seed=3)
    post = fit(ds, spec, cfg)
    mu = post.fields["mu"][:, 0]
    assert mu.mean() == pytest.approx(1.0, abs=0.25)
    assert mu.std() == pytest.approx(2.0, rel=0.12)
    a = post.scalars["alpha"]
    assert a.mean() == pytest.approx(0.5, abs=0.06)
    assert a.var() == pytest.approx(1 / 12, rel=0.2)


def test_prior_only_bandwidth():
    # inverse-gamma(0.1, 0.1) has no mean, so compare the CDF
    ds = small_data()
    spec = ModelSpec(knots=make_grid(3, 0, 3), fields={"mu": FieldSpec("gp"), **CONST})
    cfg = FitConfig(n_iters=60_000, burn_in=2000, n_chains=1, thin=10, prior_only=True, audit_every=0, warmup=0,
                    blocks={"tau"}, seed=1)
    tau = fit(ds, spec, cfg).scalars["tau"]
    for x in (0.3, 1.0, 100.0):
        assert np.mean(tau <= x) == pytest.approx(special.gammaincc(0.1, 0.1 / x), abs=0.08)


def test_iid_gev_fit_alpha_one_covers_truth():
    hits_g, hits_x, cov_mu = 0, 0, []
    for r in range(10):
        rng = np.random.default_rng(100 + r)
        sites = make_grid(5, 0, 4).knots
        n, T = len(sites), 15
        mu = 0.5 * np.sin(sites[:, 0]) + 0.3 * sites[:, 1] / 4
        Y = gev_draws(rng, np.broadcast_to(mu, (T, n)), 1.0, 0.1)
        ds = Dataset([f"s{i}" for i in range(n)], sites, list(range(T)), Y)
        spec = ModelSpec(knots=make_grid(3, 0, 4), fields={"mu": FieldSpec("gp"), **CONST}, alpha_fixed=1.0)
        post = fit(ds, spec, FitConfig(n_iters=3000, burn_in=1000, n_chains=1, thin=2, seed=r))
        lo, hi = post.interval("gamma")
        hits_g += lo[0] <= 0.0 <= hi[0]
        lo, hi = post.interval("xi")
        hits_x += lo[0] <= 0.1 <= hi[0]
        lo, hi = post.interval("mu")
        cov_mu.append(np.mean((lo <= mu) & (mu <= hi)))
    assert hits_g >= 9 and hits_x >= 9
    assert np.mean(cov_mu) >= 0.9
