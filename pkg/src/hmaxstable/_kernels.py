"""Compiled inner loops of the sampler.

All random numbers are drawn by the caller and passed in, so results depend
only on the numpy generator stream.  Sums run in a fixed index order.
"""
import math

import numpy as np
from numba import njit

GUMBEL_TOL = 1e-8
NEG_INF = -np.inf


@njit(cache=True)
def gev_lpdf(y, mu, sigma, xi):
    if not (sigma > 0.0) or not math.isfinite(mu) or not math.isfinite(sigma):
        return NEG_INF
    z = (y - mu) / sigma
    if abs(xi) < GUMBEL_TOL:
        return -math.log(sigma) - z - math.exp(-z)
    u = xi * z
    if not (u > -1.0):
        return NEG_INF
    lt = -math.log1p(u) / xi
    if lt > 700.0:
        return NEG_INF
    return -math.log(sigma) + (xi + 1.0) * lt - math.exp(lt)


@njit(cache=True)
def cond_lpdf(y, mu, sigma, xi, log_theta, alpha):
    """GEV log density given the random effect (see ``process.conditional_arr``)."""
    if not math.isfinite(log_theta):
        return NEG_INF
    if abs(xi) < GUMBEL_TOL:
        shift = log_theta
    else:
        shift = math.expm1(xi * log_theta) / xi
    e = xi * log_theta
    if e > 700.0:
        return NEG_INF
    return gev_lpdf(y, mu + sigma * shift, alpha * sigma * math.exp(e), alpha * xi)


@njit(cache=True)
def ll_matrix(Y, mu, gamma, xi, log_theta, alpha):
    T, n = Y.shape
    out = np.empty((n, T))
    for i in range(n):
        sig = math.exp(gamma[i])
        for t in range(T):
            out[i, t] = cond_lpdf(Y[t, i], mu[i], sig, xi[i], log_theta[i, t], alpha)
    return out


@njit(cache=True)
def field_site_sweep(which, mu, gamma, xi, Y, log_theta, alpha, ll, prec, mean, step, z, logu, prior_only):
    """One random-walk Metropolis update per site for the field ``which`` (0 mu, 1 gamma, 2 xi).

    The prior term is the conditional normal of site i given the other sites,
    read off the precision matrix.  ``ll`` rows are refreshed on acceptance.
    """
    n = mu.shape[0]
    T = Y.shape[0]
    if which == 0:
        vals = mu
    elif which == 1:
        vals = gamma
    else:
        vals = xi
    r = vals - mean
    row = np.empty(T)
    acc = 0
    for i in range(n):
        cur = vals[i]
        cand = cur + step * z[i]
        s = 0.0
        for j in range(n):
            s += prec[i, j] * r[j]
        s -= prec[i, i] * r[i]
        cm = mean[i] - s / prec[i, i]
        half_prec = 0.5 * prec[i, i]
        log_r = half_prec * ((cur - cm) ** 2 - (cand - cm) ** 2)
        if not prior_only:
            m_i, g_i, x_i = mu[i], gamma[i], xi[i]
            if which == 0:
                m_i = cand
            elif which == 1:
                g_i = cand
            else:
                x_i = cand
            sig = math.exp(g_i)
            for t in range(T):
                row[t] = cond_lpdf(Y[t, i], m_i, sig, x_i, log_theta[i, t], alpha)
                log_r += row[t] - ll[i, t]
        if logu[i] < log_r:
            vals[i] = cand
            r[i] = cand - mean[i]
            if not prior_only:
                for t in range(T):
                    ll[i, t] = row[t]
            acc += 1
    return acc


@njit(cache=True)
def log_c(B, alpha):
    if B < 1e-12:
        B = 1e-12
    elif B > 1.0 - 1e-12:
        B = 1.0 - 1e-12
    pb = math.pi * B
    sa = math.log(math.sin(alpha * pb))
    return (sa - math.log(math.sin(pb))) / (1.0 - alpha) + math.log(math.sin((1.0 - alpha) * pb)) - sa


@njit(cache=True)
def aux_a_sweep(A, B, S, wt, top, Y, mu, gamma, xi, alpha, ll, log_theta, step, z, logu, prior_only):
    """Log-normal random-walk update of every ``A[l, t]``.

    ``S[i, t] = sum_l wt[i, l] A[l, t]`` is kept up to date incrementally;
    when the update cancels most of a sum it is recomputed exactly.
    """
    L, T = A.shape
    n = wt.shape[0]
    r = 1.0 / (1.0 - alpha)
    ea = alpha * r
    s_new = np.empty(n)
    ll_new = np.empty(n)
    acc = 0
    for l in range(L):
        for t in range(T):
            cur = A[l, t]
            cand = cur * math.exp(step * z[l, t])
            if not (cand > 0.0) or not math.isfinite(cand):
                continue
            lc = log_c(B[l, t], alpha)
            la_c = math.log(cand)
            la_0 = math.log(cur)
            # auxiliary density ratio and log-normal Hastings correction (A'/A)
            log_r = -r * (la_c - la_0) - math.exp(lc - ea * la_c) + math.exp(lc - ea * la_0)
            log_r += la_c - la_0
            diff = cand - cur
            for i in range(n):
                w = wt[i, l]
                if w == 0.0:
                    s_new[i] = S[i, t]
                    continue
                sc = S[i, t] + w * diff
                if sc < 1e-8 * S[i, t]:
                    sc = 0.0
                    for k in range(L):
                        sc += wt[i, k] * (cand if k == l else A[k, t])
                s_new[i] = sc
                if sc == S[i, t]:
                    ll_new[i] = ll[i, t]
                    continue
                if not prior_only:
                    lt = alpha * math.log(sc) + top[i]
                    ll_new[i] = cond_lpdf(Y[t, i], mu[i], math.exp(gamma[i]), xi[i], lt, alpha)
                    log_r += ll_new[i] - ll[i, t]
            if logu[l, t] < log_r:
                A[l, t] = cand
                for i in range(n):
                    if wt[i, l] == 0.0:
                        continue
                    S[i, t] = s_new[i]
                    log_theta[i, t] = alpha * math.log(s_new[i]) + top[i]
                    if not prior_only:
                        ll[i, t] = ll_new[i]
                acc += 1
    return acc
