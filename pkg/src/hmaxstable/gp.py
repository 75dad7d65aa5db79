"""Gaussian-process priors for the spatially varying GEV parameters.

Matern covariance uses distance divided by the range with no ``sqrt(2 nu)``
factor, so ``nu = 0.5`` is exactly ``delta2 * exp(-d / rho)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.spatial.distance import cdist
from scipy.special import gammaln, kv

from .errors import NumericalError, ParameterError

JITTER = 1e-8


@dataclass
class GpHyper:
    """Mean coefficients and Matern hyperparameters of one GP field."""

    beta: np.ndarray
    delta2: float
    rho: float
    nu: float = 0.5

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        for name in ("delta2", "rho", "nu"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be > 0, got {v!r}")


def matern_corr(d, rho, nu):
    """Matern correlation at distance(s) ``d``."""
    x = np.asarray(d, dtype=float) / rho
    if nu == 0.5:
        return np.exp(-x)
    with np.errstate(invalid="ignore", over="ignore"):
        xs = np.where(x > 0, x, 1.0)
        r = np.exp((1.0 - nu) * np.log(2.0) - gammaln(nu) + nu * np.log(xs)) * kv(nu, xs)
    # kv underflows to 0 far out, which is the correct limit
    return np.where(x > 0, np.nan_to_num(r, nan=0.0), 1.0)


def matern_cov(d, h: GpHyper):
    """``delta2 * 2**(1-nu)/Gamma(nu) * (d/rho)**nu * K_nu(d/rho)``; ``delta2`` at 0."""
    if np.any(np.asarray(d) < 0):
        raise ParameterError("distance must be >= 0")
    out = h.delta2 * matern_corr(d, h.rho, h.nu)
    return float(out) if np.ndim(out) == 0 else out


def corr_matrix(sites, rho, nu):
    d = cdist(np.atleast_2d(sites), np.atleast_2d(sites))
    R = matern_corr(d, rho, nu)
    R[np.diag_indices_from(R)] += JITTER
    return R


def cov_matrix(sites, h: GpHyper):
    """Matern covariance matrix with ``1e-8 * delta2`` added to the diagonal."""
    C = h.delta2 * corr_matrix(sites, h.rho, h.nu)
    try:
        cho_factor(C, lower=True)
    except LinAlgError as exc:
        raise NumericalError("covariance matrix is not positive definite after jitter") from exc
    return C


def conditional_normal(i, values, mean, cov):
    """Mean and variance of component ``i`` given all others under ``N(mean, cov)``."""
    values = np.asarray(values, dtype=float)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    n = values.shape[0]
    if n == 1:
        return float(mean[0]), float(cov[0, 0])
    rest = np.delete(np.arange(n), i)
    S22 = cov[np.ix_(rest, rest)]
    s12 = cov[i, rest]
    try:
        fac = cho_factor(S22, lower=True)
    except LinAlgError as exc:
        raise NumericalError("singular conditioning submatrix") from exc
    k = cho_solve(fac, s12)
    m = mean[i] + k @ (values[rest] - mean[rest])
    v = cov[i, i] - k @ s12
    return float(m), float(max(v, 0.0))


def sample_field(rng, sites, h: GpHyper, X=None):
    """One draw of the field at ``sites`` with mean ``X @ beta`` (intercept if X is None)."""
    n = np.atleast_2d(sites).shape[0]
    X = np.ones((n, 1)) if X is None else X
    C = cov_matrix(sites, h)
    Lc = np.linalg.cholesky(C)
    return X @ h.beta + Lc @ rng.standard_normal(n)


def invgamma_logpdf(x, a, b):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a * np.log(b) - gammaln(a) - (a + 1.0) * np.log(x) - b / x
    return np.where(x > 0, out, -np.inf)


def _gauss_loglik(resid, R):
    """``log N(resid; 0, R)`` and the quadratic form ``resid' R^-1 resid``."""
    c, low = cho_factor(R, lower=True)
    q = float(resid @ cho_solve((c, low), resid))
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    n = resid.shape[0]
    return -0.5 * (n * np.log(2 * np.pi) + logdet + q), q, logdet


# -- spike and slab on the field variance ----------------------------------------

@dataclass
class SpikeSlabState:
    """Indicator ``g``, slab variance and the fixed spike variance.

    The effective variance entering the covariance is
    ``g * delta_star2 + (1 - g) * Delta0_2``.
    """

    g: int = 1
    delta_star2: float = 1.0
    Delta0_2: float = 0.01**2

    @property
    def delta2(self) -> float:
        return self.delta_star2 if self.g == 1 else self.Delta0_2


def spike_slab_update(rng, state: SpikeSlabState, field_residuals, corr, a=0.1, b=0.1, p_slab=0.5):
    """Blocked Gibbs update of ``(g, delta_star2)``.

    ``g`` is drawn with ``delta_star2`` integrated out (the slab marginal
    likelihood is available in closed form under the inverse-gamma prior),
    then ``delta_star2`` from its conditional: the inverse-gamma posterior if
    ``g = 1``, its prior otherwise.  ``corr`` is the field correlation matrix.
    """
    r = np.asarray(field_residuals, dtype=float)
    n = r.shape[0]
    c, low = cho_factor(corr, lower=True)
    q = float(r @ cho_solve((c, low), r))
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    base = -0.5 * (n * np.log(2 * np.pi) + logdet)
    a_post = a + 0.5 * n
    b_post = b + 0.5 * q
    log_m_slab = base + a * np.log(b) - gammaln(a) + gammaln(a_post) - a_post * np.log(b_post)
    D = state.Delta0_2
    with np.errstate(divide="ignore"):
        log_m_spike = base - 0.5 * n * np.log(D) - 0.5 * q / D
    lo1 = np.log(p_slab) + log_m_slab
    lo0 = np.log1p(-p_slab) + log_m_spike
    p1 = 1.0 / (1.0 + np.exp(np.clip(lo0 - lo1, -700, 700)))
    g = int(rng.random() < p1)
    if g == 1:
        ds2 = b_post / rng.gamma(a_post)
    else:
        ds2 = b / rng.gamma(a)
    return replace(state, g=g, delta_star2=float(ds2))


# -- GP prior state used inside the sampler --------------------------------------

@dataclass
class GpPrior:
    """GP prior of one field with cached factorisations.

    Hyperparameter priors: ``beta ~ N(0, beta_sd**2 I)``, ``delta2``, ``rho``
    and (unless fixed) ``nu`` inverse gamma ``(a, b)``.
    """

    sites: np.ndarray
    X: np.ndarray
    hyper: GpHyper
    beta_sd: float = 100.0
    ig_a: float = 0.1
    ig_b: float = 0.1
    nu_fixed: bool = True
    spike: SpikeSlabState | None = None
    _D: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self._D = cdist(self.sites, self.sites)
        if self.spike is not None:
            self.hyper.delta2 = self.spike.delta2
        self._refresh()

    def _corr(self, rho, nu):
        R = matern_corr(self._D, rho, nu)
        R[np.diag_indices_from(R)] += JITTER
        return R

    def _refresh(self):
        self.R = self._corr(self.hyper.rho, self.hyper.nu)
        try:
            self._chol = cho_factor(self.R, lower=True)
        except LinAlgError as exc:
            raise NumericalError("GP correlation matrix not positive definite") from exc
        Rinv = cho_solve(self._chol, np.eye(self.R.shape[0]))
        self.prec = Rinv / self.hyper.delta2
        self.logdet_R = 2.0 * np.sum(np.log(np.diag(self._chol[0])))

    @property
    def mean(self) -> np.ndarray:
        return self.X @ self.hyper.beta

    def conditional(self, i, values):
        """Conditional prior mean and variance of site ``i`` given the rest."""
        r = values - self.mean
        qi = self.prec[i]
        return float(self.mean[i] - (qi @ r - qi[i] * r[i]) / qi[i]), float(1.0 / qi[i])

    def log_density(self, values):
        r = values - self.mean
        n = r.shape[0]
        q = float(r @ cho_solve(self._chol, r))
        return -0.5 * (n * np.log(2 * np.pi * self.hyper.delta2) + self.logdet_R + q / self.hyper.delta2)

    def update_beta(self, rng, values):
        """Conjugate normal draw of the mean coefficients."""
        XtP = self.X.T @ self.prec
        prec_post = XtP @ self.X + np.eye(self.X.shape[1]) / self.beta_sd**2
        Lp = np.linalg.cholesky(prec_post)
        m = np.linalg.solve(prec_post, XtP @ values)
        z = rng.standard_normal(self.X.shape[1])
        self.hyper.beta = m + np.linalg.solve(Lp.T, z)

    def update_delta2(self, rng, values):
        """Conjugate inverse-gamma draw of the variance (or the spike-slab pair)."""
        r = values - self.mean
        if self.spike is not None:
            self.spike = spike_slab_update(rng, self.spike, r, self.R, self.ig_a, self.ig_b)
            new = self.spike.delta2
        else:
            q = float(r @ cho_solve(self._chol, r))
            new = (self.ig_b + 0.5 * q) / rng.gamma(self.ig_a + 0.5 * r.shape[0])
        self.prec *= self.hyper.delta2 / new
        self.hyper.delta2 = float(new)

    def _rw_log(self, rng, values, name, step):
        """Random-walk Metropolis on ``log rho`` or ``log nu``; returns acceptance."""
        cur = getattr(self.hyper, name)
        cand = cur * np.exp(step * rng.standard_normal())
        rho, nu = (cand, self.hyper.nu) if name == "rho" else (self.hyper.rho, cand)
        R_c = self._corr(rho, nu)
        r = values - self.mean
        try:
            ll_c, _, _ = _gauss_loglik(r, self.hyper.delta2 * R_c)
        except LinAlgError:
            return False
        ll_0 = self.log_density(values)
        # log-scale random walk: prior on the original scale times the Jacobian
        log_r = (ll_c + invgamma_logpdf(cand, self.ig_a, self.ig_b) + np.log(cand)) - (
            ll_0 + invgamma_logpdf(cur, self.ig_a, self.ig_b) + np.log(cur)
        )
        if np.isfinite(log_r) and np.log(rng.random()) < log_r:
            setattr(self.hyper, name, float(cand))
            self._refresh()
            return True
        return False

    def update_rho(self, rng, values, step):
        return self._rw_log(rng, values, "rho", step)

    def update_nu(self, rng, values, step):
        return self._rw_log(rng, values, "nu", step)
