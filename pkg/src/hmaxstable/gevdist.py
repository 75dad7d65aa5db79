"""Generalized extreme value (GEV) distribution.

Parameterisation follows the usual block-maxima convention::

    P(Y < y) = exp(-t(y)),
    t(y) = [1 + xi (y - mu) / sigma] ** (-1 / xi)    (xi != 0)
    t(y) = exp(-(y - mu) / sigma)                     (xi == 0)

The ``*_arr`` functions are vectorised over broadcastable numpy arrays and do
no validation; they are what the sampler calls in its inner loop.  The
:class:`GevParams` wrappers validate and are meant for user-facing code.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError

#: Shapes with ``|xi|`` below this are treated as Gumbel.
GUMBEL_TOL = 1e-8


@dataclass(frozen=True)
class GevParams:
    """Location / scale / shape triple.

    Parameters
    ----------
    mu : float
        Location.
    sigma : float
        Scale, strictly positive.
    xi : float
        Shape.  ``xi < 0`` has a finite upper endpoint ``mu - sigma/xi``,
        ``xi > 0`` a finite lower endpoint at the same value.
    """

    mu: float
    sigma: float
    xi: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError(f"GEV scale must be > 0, got {self.sigma!r}")
        if not (np.isfinite(self.mu) and np.isfinite(self.xi)):
            raise ParameterError("GEV location and shape must be finite")

    @property
    def support(self) -> tuple[float, float]:
        if abs(self.xi) < GUMBEL_TOL:
            return (-np.inf, np.inf)
        bound = self.mu - self.sigma / self.xi
        return (bound, np.inf) if self.xi > 0 else (-np.inf, bound)


def _log_t(y, mu, sigma, xi):
    """log t(y); +inf below / -inf above the support (so cdf is 0 / 1)."""
    y, mu, sigma, xi = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (y, mu, sigma, xi)))
    z = (y - mu) / sigma
    gumbel = np.abs(xi) < GUMBEL_TOL
    safe_xi = np.where(gumbel, 1.0, xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = safe_xi * z
        inside = u > -1.0
        log_t = np.where(inside, -np.log1p(np.where(inside, u, 0.0)) / safe_xi, 0.0)
        # outside the support: xi > 0 means below the lower bound (cdf 0),
        # xi < 0 means above the upper bound (cdf 1)
        log_t = np.where(inside, log_t, np.where(safe_xi > 0, np.inf, -np.inf))
    return np.where(gumbel, -z, log_t), np.where(gumbel, True, inside)


def cdf_arr(y, mu, sigma, xi):
    log_t, _ = _log_t(y, mu, sigma, xi)
    return np.exp(-np.exp(log_t))


def logpdf_arr(y, mu, sigma, xi):
    """Vectorised log density; ``-inf`` outside the support."""
    log_t, inside = _log_t(y, mu, sigma, xi)
    with np.errstate(over="ignore", invalid="ignore"):
        out = -np.log(sigma) + (np.asarray(xi) + 1.0) * log_t - np.exp(log_t)
    return np.where(inside, out, -np.inf)


def quantile_arr(q, mu, sigma, xi):
    q, mu, sigma, xi = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (q, mu, sigma, xi)))
    gumbel = np.abs(xi) < GUMBEL_TOL
    safe_xi = np.where(gumbel, 1.0, xi)
    log_e = np.log(-np.log(q))  # log of a unit-exponential quantile
    # expm1 keeps (e**-xi - 1) / xi accurate for small xi
    general = np.expm1(-safe_xi * log_e) / safe_xi
    return mu + sigma * np.where(gumbel, -log_e, general)


def _check_q(q):
    qa = np.asarray(q, dtype=float)
    if np.any(~((qa > 0) & (qa < 1))):
        raise DomainError("quantile level must lie in the open interval (0, 1)")
    return qa


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def gev_cdf(y, p: GevParams):
    """CDF ``exp(-t(y))``; exactly 0 or 1 outside the support."""
    return _scalar(cdf_arr(y, p.mu, p.sigma, p.xi))


def gev_logpdf(y, p: GevParams):
    """Log density; ``-inf`` for ``y`` outside the support."""
    return _scalar(logpdf_arr(y, p.mu, p.sigma, p.xi))


def gev_quantile(q, p: GevParams):
    """Inverse CDF.

    ``mu + sigma * ((-log q) ** -xi - 1) / xi``, or ``mu - sigma log(-log q)``
    in the Gumbel case.  Raises :class:`DomainError` unless ``0 < q < 1``.
    """
    return _scalar(quantile_arr(_check_q(q), p.mu, p.sigma, p.xi))


def gev_sample(rng: np.random.Generator, p: GevParams, size=None):
    """Inverse-CDF draws from ``GEV(p)``."""
    u = rng.uniform(size=size)
    # uniform() may return exactly 0
    u = np.where(u > 0, u, np.nextafter(0.0, 1.0))
    return _scalar(quantile_arr(u, p.mu, p.sigma, p.xi))


def sample_arr(rng, mu, sigma, xi):
    """Draws with broadcast array parameters (one draw per element)."""
    shape = np.broadcast_shapes(np.shape(mu), np.shape(sigma), np.shape(xi))
    u = rng.uniform(size=shape)
    u = np.where(u > 0, u, np.nextafter(0.0, 1.0))
    return quantile_arr(u, mu, sigma, xi)
