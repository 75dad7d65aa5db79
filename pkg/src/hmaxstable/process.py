"""The positive-stable random effect max-stable process.

The residual process on the unit Frechet scale is ``X(s) = U(s) theta(s)``
with an iid nugget ``U(s) ~ GEV(1, alpha, alpha)`` and spatial random effect

    theta(s) = [sum_l A_l w_l(s) ** (1/alpha)] ** alpha,   A_l ~ PS(alpha).

Conditionally on ``theta`` the data-scale response is GEV with parameters
returned by :func:`conditional_params`; marginally it is GEV with the
unconditional ``(mu, sigma, xi)``.

Power sums are evaluated in log space because ``w ** (1/alpha)`` underflows
for small ``alpha``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from . import gevdist, stable
from .basis import KernelBasis, knots_at, log_weights_matrix, make_grid
from .errors import ParameterError
from .gevdist import GUMBEL_TOL, GevParams


@dataclass
class SpatialGevFields:
    """Per-site GEV location, log-scale and shape."""

    mu: np.ndarray
    gamma: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        self.mu, self.gamma, self.xi = np.broadcast_arrays(
            *(np.atleast_1d(np.asarray(a, dtype=float)) for a in (self.mu, self.gamma, self.xi))
        )
        self.mu, self.gamma, self.xi = (np.array(a) for a in (self.mu, self.gamma, self.xi))
        if not all(np.all(np.isfinite(a)) for a in (self.mu, self.gamma, self.xi)):
            raise ParameterError("GEV fields must be finite")

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.gamma)

    def at(self, i) -> GevParams:
        return GevParams(float(self.mu[i]), float(self.sigma[i]), float(self.xi[i]))


@dataclass
class ProcessModel:
    fields: SpatialGevFields | None
    basis: KernelBasis
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ParameterError(f"alpha must lie in (0, 1], got {self.alpha!r}")


# -- core array helpers --------------------------------------------------------

def log_theta_arr(logw, A, alpha):
    """``log theta`` for log weights ``(n, L)`` and effects ``A`` of shape ``(L,)`` or ``(L, T)``."""
    logw = np.atleast_2d(logw)
    top = logw.max(axis=1, keepdims=True)
    wt = np.exp((logw - top) / alpha)
    with np.errstate(divide="ignore"):
        return alpha * np.log(wt @ A) + (top if np.ndim(A) == 2 else top[:, 0])


def conditional_arr(mu, sigma, xi, log_theta, alpha):
    """Conditional ``(mu*, sigma*, xi*)`` given ``log theta`` (broadcasting)."""
    xi = np.asarray(xi, dtype=float)
    gumbel = np.abs(xi) < GUMBEL_TOL
    safe_xi = np.where(gumbel, 1.0, xi)
    xl = xi * log_theta
    with np.errstate(over="ignore", invalid="ignore"):
        shift = np.where(gumbel, log_theta, np.expm1(safe_xi * log_theta) / safe_xi)
        mu_c = mu + sigma * shift
        sigma_c = alpha * sigma * np.exp(xl)
    return mu_c, sigma_c, alpha * xi


def conditional_logpdf_arr(y, mu, sigma, xi, log_theta, alpha):
    """Log density of ``y`` under the conditional GEV given ``log theta``."""
    mu_c, sigma_c, xi_c = conditional_arr(mu, sigma, xi, log_theta, alpha)
    with np.errstate(invalid="ignore"):
        out = gevdist.logpdf_arr(y, mu_c, sigma_c, xi_c)
    return np.where(np.isnan(out), -np.inf, out)


# -- public operations -----------------------------------------------------------

def theta(A, s, model: ProcessModel):
    """Spatial random effect ``theta(s)`` for effects ``A`` (length L, or L x T).

    ``s`` is one coordinate or an ``(n, 2)`` array of coordinates.
    """
    A = np.asarray(A, dtype=float)
    s = np.asarray(s, dtype=float)
    logw = log_weights_matrix(s, model.basis.grid.knots, model.basis.tau)
    out = np.exp(log_theta_arr(logw, A, model.alpha))
    return out[0] if s.ndim == 1 else out


def conditional_params(p: GevParams, theta_val, alpha) -> GevParams:
    """GEV parameters of the response given the random effect.

    ``mu + sigma (theta**xi - 1) / xi``, ``alpha sigma theta**xi``,
    ``alpha xi``; the location shift is ``sigma log theta`` when ``xi`` is 0.
    """
    if not theta_val > 0:
        raise ParameterError("theta must be > 0")
    mu_c, sigma_c, xi_c = conditional_arr(p.mu, p.sigma, p.xi, np.log(theta_val), alpha)
    return GevParams(float(mu_c), float(sigma_c), float(xi_c))


def joint_cdf(c, sites, model: ProcessModel):
    """``P(X(s_i) < c_i for all i)`` of the unit-Frechet residual process."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    logw = log_weights_matrix(sites, model.basis.grid.knots, model.basis.tau)
    a = model.alpha
    inner = logsumexp((logw - np.log(c)[:, None]) / a, axis=0)
    return float(np.exp(-np.sum(np.exp(a * inner))))


def extremal_coeff(si, sj, model: ProcessModel):
    """Pairwise extremal coefficient, in ``[1, 2]``."""
    logw = log_weights_matrix(np.vstack([si, sj]), model.basis.grid.knots, model.basis.tau)
    return float(np.sum(np.exp(model.alpha * logsumexp(logw / model.alpha, axis=0))))


def extremal_coeff_matrix(sites, model: ProcessModel):
    """All pairwise extremal coefficients for ``(n, 2)`` sites."""
    logw = log_weights_matrix(sites, model.basis.grid.knots, model.basis.tau) / model.alpha
    n = logw.shape[0]
    out = np.empty((n, n))
    for i in range(n):
        pair = np.logaddexp(logw[i][None, :], logw)
        out[i] = np.exp(model.alpha * pair).sum(axis=1)
    return out


def gevp_extremal_coeff(si, sj, tau):
    """Extremal coefficient ``2 Phi(h / (2 tau))`` of the Gaussian-kernel Smith process."""
    if not tau > 0:
        raise ParameterError("tau must be > 0")
    h = np.linalg.norm(np.asarray(si, dtype=float) - np.asarray(sj, dtype=float), axis=-1)
    return 2.0 * norm.cdf(h / (2.0 * tau))


def truncated_gevp_cdf(c, sites, basis: KernelBasis):
    """Joint CDF of ``max_l h_l w_l(s)`` with iid unit-Frechet ``h_l``."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    logw = log_weights_matrix(sites, basis.grid.knots, basis.tau)
    return float(np.exp(-np.sum(np.exp(np.max(logw - np.log(c)[:, None], axis=0)))))


def simulate_effects(rng, L, T, alpha):
    """``(A, B)`` matrices of shape ``(L, T)``."""
    return stable.sample_arr(rng, alpha, (L, T))


def simulate(rng, model: ProcessModel, sites, T: int, return_effects=False):
    """Draw ``T`` independent years of block maxima at ``sites``.

    Returns a ``(T, n)`` array; with ``return_effects`` also the ``(L, T)``
    positive stable effects and the ``(n, T)`` ``theta`` values.
    """
    if model.fields is None:
        raise ParameterError("simulate needs GEV fields")
    sites = np.atleast_2d(sites)
    f = model.fields
    A, _ = simulate_effects(rng, model.basis.L, T, model.alpha)
    logw = log_weights_matrix(sites, model.basis.grid.knots, model.basis.tau)
    log_th = log_theta_arr(logw, A, model.alpha)  # (n, T)
    mu_c, sigma_c, xi_c = conditional_arr(
        f.mu[:, None], f.sigma[:, None], f.xi[:, None], log_th, model.alpha
    )
    Y = gevdist.sample_arr(rng, mu_c, sigma_c, np.broadcast_to(xi_c, mu_c.shape)).T
    if return_effects:
        return Y, A, np.exp(log_th)
    return Y


def simulate_residual(rng, basis: KernelBasis, alpha, sites, T: int):
    """``(T, n)`` draws of the unit-Frechet residual ``X = U theta``."""
    sites = np.atleast_2d(sites)
    A, _ = simulate_effects(rng, basis.L, T, alpha)
    logw = log_weights_matrix(sites, basis.grid.knots, basis.tau)
    log_th = log_theta_arr(logw, A, alpha).T
    # U ~ GEV(1, alpha, alpha) has P(U < u) = exp(-u ** (-1/alpha))
    U = gevdist.sample_arr(rng, np.ones_like(log_th), alpha, alpha)
    return U * np.exp(log_th)


def to_data_scale(X, fields: SpatialGevFields):
    """Map unit-Frechet residuals to GEV(mu, sigma, xi) margins."""
    xi = fields.xi
    gumbel = np.abs(xi) < GUMBEL_TOL
    safe = np.where(gumbel, 1.0, xi)
    lx = np.log(X)
    return fields.mu + fields.sigma * np.where(gumbel, lx, np.expm1(safe * lx) / safe)


def predict_theta(A, s_new, model: ProcessModel):
    """``theta`` at unobserved location(s) for one posterior draw of ``A``."""
    return theta(A, s_new, model)


def gallery(rng, m=50, alphas=(0.1, 0.4, 0.7, 0.9), tau=2.0, xi=-0.1):
    """Single-year draws on an ``m x m`` unit-spaced grid, knots at every grid point.

    Returns the ``(m*m, 2)`` coordinates and a dict ``alpha -> (m*m,)`` field.
    GEV location and log scale are zero everywhere.
    """
    grid = make_grid(m, 1.0, float(m))
    sites = grid.knots
    basis = KernelBasis(knots_at(sites), tau)
    n = sites.shape[0]
    fields = SpatialGevFields(np.zeros(n), np.zeros(n), np.full(n, xi))
    out = {}
    for a in alphas:
        out[a] = simulate(rng, ProcessModel(fields, basis, a), sites, 1)[0]
    return sites, out


def lattice_knots(spacing, h_max=6.0, tau=1.0, pad_bandwidths=8.0):
    """Regular knot lattice with spacing ``spacing`` and a knot at the origin,
    wide enough around ``(0, 0)`` and ``(0, h_max)`` that edge effects vanish."""
    pad = pad_bandwidths * tau
    kx = np.arange(np.floor(-pad / spacing), np.ceil(pad / spacing) + 1) * spacing
    ky = np.arange(np.floor(-pad / spacing), np.ceil((h_max + pad) / spacing) + 1) * spacing
    xx, yy = np.meshgrid(kx, ky)
    return knots_at(np.column_stack([xx.ravel(), yy.ravel()]))


def extremal_curve(h, spacing, alpha, tau=1.0):
    """``theta((0,0), (0,h))`` for each ``h`` on a lattice of the given spacing."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    basis = KernelBasis(lattice_knots(spacing, h.max(), tau), tau)
    model = ProcessModel(None, basis, alpha)
    logw0 = log_weights_matrix(np.zeros((1, 2)), basis.grid.knots, tau)[0] / alpha
    pts = np.column_stack([np.zeros_like(h), h])
    logwh = log_weights_matrix(pts, basis.grid.knots, tau) / alpha
    return np.exp(model.alpha * np.logaddexp(logw0[None, :], logwh)).sum(axis=1)
