import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from hmaxstable.errors import DomainError
from hmaxstable.stable import StablePair, laplace_transform, ps_c, ps_joint_logpdf, ps_sample, sample_arr


def mc_laplace(A, t):
    v = np.exp(-t * A)
    return v.mean(), v.std(ddof=1) / math.sqrt(len(v))


def test_c_half_half():
    assert ps_c(0.5, 0.5) == pytest.approx(0.5, rel=1e-14)


def test_c_positive_random():
    rng = np.random.default_rng(0)
    B = rng.uniform(1e-6, 1 - 1e-6, 1000)
    a = rng.uniform(0.01, 0.99, 1000)
    assert all(ps_c(b, al) > 0 for b, al in zip(B, a))


def test_c_limit_at_zero():
    assert ps_c(1e-6, 0.4) == pytest.approx(ps_c(1e-7, 0.4), rel=1e-3)


def test_c_domain():
    for B, a in [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0)]:
        with pytest.raises(DomainError):
            ps_c(B, a)


def test_joint_density_integrates_to_one():
    alpha = 0.5

    def inner(B):
        f = lambda A: math.exp(ps_joint_logpdf(StablePair(A, B), alpha))
        # density of A given B peaks near c(B)^((1-alpha)/alpha)
        peak = ps_c(B, alpha) ** ((1 - alpha) / alpha)
        a, _ = integrate.quad(f, 0, peak, limit=200)
        b, _ = integrate.quad(f, peak, np.inf, limit=200)
        return a + b

    val, _ = integrate.quad(inner, 0, 1, limit=100)
    assert val == pytest.approx(1.0, abs=1e-3)


def test_density_finite_interior():
    v = ps_joint_logpdf(StablePair(1.0, 0.5), 0.5)
    assert np.isfinite(v)


@pytest.mark.parametrize("alpha", [0.2, 0.3, 0.5, 0.8])
def test_laplace_transform_mc(alpha):
    A, _ = sample_arr(np.random.default_rng(11), alpha, 100_000)
    for t in (0.5, 1.0, 2.0):
        m, se = mc_laplace(A, t)
        assert abs(m - laplace_transform(t, alpha)) < 3 * se


def test_alpha_one_degenerate():
    A, B = sample_arr(np.random.default_rng(0), 1.0, 1000)
    assert np.all(A == 1.0)
    assert ps_sample(np.random.default_rng(0), 1.0).A == 1.0


def test_alpha_out_of_range():
    for a in (0.0, -0.1, 1.2):
        with pytest.raises(DomainError):
            ps_sample(np.random.default_rng(0), a)


def test_sum_stability():
    rng = np.random.default_rng(3)
    alpha, T = 0.5, 4
    A, _ = sample_arr(rng, alpha, (100_000, T))
    agg = A.sum(axis=1) / T ** (1 / alpha)
    single, _ = sample_arr(rng, alpha, 100_000)
    for t in (0.5, 1.0, 2.0):
        m1, se1 = mc_laplace(agg, t)
        m2, se2 = mc_laplace(single, t)
        assert abs(m1 - m2) < 3 * math.hypot(se1, se2)
        assert abs(m1 - laplace_transform(t, alpha)) < 3 * se1


def test_conditional_exponential_given_b():
    # for fixed B, A^(-alpha/(1-alpha)) is exponential with rate c(B)
    alpha, B = 0.4, 0.37
    rng = np.random.default_rng(8)
    W = rng.standard_exponential(10_000) / ps_c(B, alpha)
    A = W ** (-(1 - alpha) / alpha)
    back = A ** (-alpha / (1 - alpha))
    assert stats.kstest(back, stats.expon(scale=1 / ps_c(B, alpha)).cdf).pvalue > 0.01
    # density in A given B is the joint density (B is uniform)
    a = np.linspace(0.2, 5, 7)
    logp = [ps_joint_logpdf(StablePair(x, B), alpha) for x in a]
    c = ps_c(B, alpha)
    r = alpha / (1 - alpha)
    ref = np.log(r * c) + (-r - 1) * np.log(a) - c * a ** (-r)
    np.testing.assert_allclose(logp, ref, rtol=1e-12)


def test_sampler_matches_density_marginally():
    # joint draws of (A, B): B uniform, and A | B exponential after transform
    alpha = 0.4
    A, B = sample_arr(np.random.default_rng(9), alpha, 20_000)
    assert stats.kstest(B, "uniform").pvalue > 0.01
    W = A ** (-alpha / (1 - alpha)) * np.array([ps_c(b, alpha) for b in B])
    assert stats.kstest(W, "expon").pvalue > 0.01


def test_deterministic():
    a = sample_arr(np.random.default_rng(4), 0.3, 100)
    b = sample_arr(np.random.default_rng(4), 0.3, 100)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 0.95), st.integers(0, 2**32 - 1))
def test_samples_valid_and_density_finite(alpha, seed):
    A, B = sample_arr(np.random.default_rng(seed), alpha, 200)
    assert np.all(A > 0) and np.all((B > 0) & (B < 1))
    for a, b in zip(A[:20], B[:20]):
        if np.isfinite(a):
            assert np.isfinite(ps_joint_logpdf(StablePair(a, b), alpha))
