"""Metropolis-within-Gibbs sampler for the auxiliary-variable max-stable model.

Unknowns, updated one block at a time in this order each iteration:

* GEV location ``mu``, log scale ``gamma`` and shape ``xi`` -- either a GP
  field (one random-walk update per site, conditional-normal prior) or a
  single constant shared by all sites (normal prior);
* GP hyperparameters of every field (``beta`` by conjugate normal draw,
  variance by conjugate inverse gamma or spike-and-slab, range and optionally
  smoothness by log-scale random walks);
* kernel bandwidth on the log scale, ``log tau``;
* ``alpha`` (random walk, uniform prior);
* positive stable effects ``A[l, t]`` (log-normal random walk) and their
  auxiliaries ``B[l, t]`` (random walk on (0, 1)).

Proposal scales are tuned during burn-in towards an acceptance rate of 0.4
and frozen afterwards.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist

from . import _kernels as K
from . import stable
from .basis import KnotGrid, knots_at, log_weights_matrix
from .data import Dataset
from .errors import ContractError, InitializationError, ParameterError
from .gp import GpHyper, GpPrior, SpikeSlabState, invgamma_logpdf
from .process import SpatialGevFields, conditional_logpdf_arr, log_theta_arr

log = logging.getLogger(__name__)

FIELDS = ("mu", "gamma", "xi")
EULER_GAMMA = 0.5772156649015329


@dataclass
class FieldSpec:
    """How one GEV parameter varies over space.

    ``kind="gp"``: a GP field with mean ``x(s)' beta`` over the intercept and
    the named covariates (``covariates="all"`` takes every dataset
    covariate).  ``nu`` fixes the Matern smoothness; ``None`` samples it.
    ``kind="constant"``: one value for all sites with a
    ``N(prior_mean, prior_sd**2)`` prior.
    """

    kind: str = "gp"
    covariates: tuple | str = ()
    nu: float | None = 0.5
    spike: bool = False
    prior_mean: float = 0.0
    prior_sd: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gp", "constant"):
            raise ParameterError(f"unknown field kind {self.kind!r}")


@dataclass
class ModelSpec:
    """Model structure: knots, field specifications, optional fixed alpha / tau.

    ``knots=None`` places one knot at every data site.
    """

    knots: KnotGrid | None = None
    fields: dict = field(default_factory=lambda: {f: FieldSpec() for f in FIELDS})
    alpha_fixed: float | None = None
    tau_fixed: float | None = None


def simulation_study_spec(knots: KnotGrid) -> ModelSpec:
    """GP location with exponential covariance; constant log scale and shape."""
    return ModelSpec(
        knots=knots,
        fields={
            "mu": FieldSpec("gp", (), nu=0.5),
            "gamma": FieldSpec("constant", prior_mean=0.0, prior_sd=1.0),
            "xi": FieldSpec("constant", prior_mean=0.0, prior_sd=0.25),
        },
    )


DEFAULT_STEPS = {
    "mu": 0.3, "gamma": 0.1, "xi": 0.05,
    "log_tau": 0.1, "alpha": 0.03, "alpha_nc": 0.03, "A": 0.5, "B": 0.2,
    "year_scale": 0.3, "level_ridge": 0.1, "top_ridge": 0.3,
}

ALL_BLOCKS = frozenset({"mu", "gamma", "xi", "hyper", "tau", "alpha", "A", "B"})


@dataclass
class FitConfig:
    n_iters: int = 25000
    burn_in: int = 10000
    n_chains: int = 2
    thin: int = 5
    target_accept: float = 0.4
    adapt_window: int = 50
    adapt_factor: float = 0.05
    tau_prior: tuple = (0.1, 0.1)
    ig_prior: tuple = (0.1, 0.1)
    beta_sd: float = 100.0
    seed: int = 0
    steps: dict = field(default_factory=dict)
    blocks: frozenset = ALL_BLOCKS
    prior_only: bool = False
    audit_every: int = 500
    store_effects: bool = True
    extra_moves: bool = True
    warmup: int | None = None  # leading burn-in sweeps that move only A and B; None: burn_in // 4, at most 500

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iters:
            raise ParameterError("need 0 <= burn_in < n_iters")
        if self.thin < 1 or self.n_chains < 1:
            raise ParameterError("thin and n_chains must be >= 1")
        if self.warmup is None:
            self.warmup = min(500, self.burn_in // 4)
        if not 0 <= self.warmup <= self.burn_in:
            raise ParameterError("need 0 <= warmup <= burn_in")
        self.blocks = frozenset(self.blocks)
        unknown = self.blocks - ALL_BLOCKS
        if unknown:
            raise ParameterError(f"unknown update blocks {sorted(unknown)}")


@dataclass
class ModelState:
    fields: SpatialGevFields
    priors: dict  # field name -> GpPrior, only for GP fields
    alpha: float
    log_tau: float
    A: np.ndarray  # (L, T)
    B: np.ndarray  # (L, T)
    knots: KnotGrid
    step_sizes: dict

    @property
    def tau(self) -> float:
        return math.exp(self.log_tau)

    @property
    def spike(self) -> dict:
        return {f: p.spike for f, p in self.priors.items() if p.spike is not None}


def log_likelihood(state: ModelState, data: Dataset) -> float:
    """Sum over sites and years of the conditional GEV log densities.

    Evaluated from scratch with the vectorised numpy GEV routines and summed
    with ``math.fsum``, so the value does not depend on year order.
    """
    logw = log_weights_matrix(data.coords, state.knots.knots, state.tau, check=False)
    log_th = log_theta_arr(logw, state.A, state.alpha)  # (n, T)
    f = state.fields
    ll = conditional_logpdf_arr(data.Y.T, f.mu[:, None], f.sigma[:, None], f.xi[:, None], log_th, state.alpha)
    if np.any(np.isneginf(ll)):
        return -math.inf
    return math.fsum(ll.ravel())


def adapt_step(stats: dict, step_sizes: dict, factor=0.05, low=0.3, high=0.5, in_burn_in=True) -> dict:
    """Multiplicative proposal-scale adjustment from one window's acceptance counts.

    ``stats`` maps block -> (accepted, proposed).  Scales shrink by
    ``exp(-factor)`` when the rate is below ``low`` and grow by ``exp(factor)``
    above ``high``.  Calling it once burn-in is over is a contract violation:
    the proposal must stay fixed to leave the posterior invariant.
    """
    if not in_burn_in:
        raise ContractError("proposal scales are frozen after burn-in")
    out = dict(step_sizes)
    for block, (acc, prop) in stats.items():
        if prop == 0 or block not in out:
            continue
        rate = acc / prop
        if rate < low:
            out[block] = out[block] * math.exp(-factor)
        elif rate > high:
            out[block] = out[block] * math.exp(factor)
    return out


class Sampler:
    """One MCMC chain.  Owns its state, caches and random stream."""

    def __init__(self, data: Dataset, spec: ModelSpec, config: FitConfig, rng: np.random.Generator,
                 state: ModelState | None = None):
        self.data = data
        self.spec = spec
        self.config = config
        self.rng = rng
        self.Y = np.ascontiguousarray(data.Y)
        self.knots = spec.knots if spec.knots is not None else knots_at(data.coords)
        self.state = state if state is not None else self._initial_state()
        self._window = {}
        self.totals = {}
        self.audits = []
        self.iteration = 0
        self._refresh_all()
        if not self.config.prior_only and not np.all(np.isfinite(self.ll)):
            bad = np.argwhere(~np.isfinite(self.ll))
            report = {
                "n_bad_cells": int(len(bad)),
                "cells": [(data.site_ids[i], data.years[t]) for i, t in bad[:20]],
                "fields": {f: getattr(self.state.fields, f)[bad[:20, 0]].tolist() for f in FIELDS},
            }
            raise InitializationError("initial log likelihood is not finite", report)

    # -- setup --------------------------------------------------------------------

    def _design(self, fs: FieldSpec):
        names = None if fs.covariates == "all" else list(fs.covariates)
        return self.data.design_matrix(names)

    def _initial_state(self) -> ModelState:
        Y = self.data.Y
        n = self.data.n
        T = self.data.T
        mean = Y.mean(axis=0)
        if T > 1:
            sd = Y.std(axis=0, ddof=1)
        else:
            sd = np.full(n, Y.std() if n > 1 else 1.0)
        sd = np.where(sd > 0, sd, max(float(np.std(Y)), 1e-3))
        sig = sd * math.sqrt(6.0) / math.pi
        init = {"mu": mean - EULER_GAMMA * sig, "gamma": np.log(sig), "xi": np.full(n, 0.1)}

        cfg = self.config
        priors = {}
        values = {}
        nn = cdist(self.data.coords, self.data.coords)
        np.fill_diagonal(nn, np.inf)
        rho0 = float(2.0 * np.median(nn.min(axis=1))) if n > 1 else 1.0
        if not np.isfinite(rho0) or rho0 <= 0:
            rho0 = 1.0
        for f in FIELDS:
            fs = self.spec.fields[f]
            v = init[f]
            if fs.kind == "constant":
                values[f] = np.full(n, float(np.mean(v)))
                continue
            X = self._design(fs)
            beta, *_ = np.linalg.lstsq(X, v, rcond=None)
            resid = v - X @ beta
            d2 = max(float(np.var(resid)), 1e-2)
            hyper = GpHyper(beta, d2, rho0, fs.nu if fs.nu is not None else 0.5)
            spike = SpikeSlabState(1, d2) if fs.spike else None
            priors[f] = GpPrior(self.data.coords, X, hyper, beta_sd=cfg.beta_sd,
                                ig_a=cfg.ig_prior[0], ig_b=cfg.ig_prior[1],
                                nu_fixed=fs.nu is not None, spike=spike)
            values[f] = v.copy()

        alpha = self.spec.alpha_fixed if self.spec.alpha_fixed is not None else 0.5
        tau = self.spec.tau_fixed if self.spec.tau_fixed is not None else self.knots.spacing
        if not np.isfinite(tau):
            tau = 1.0
        L = self.knots.L
        steps = dict(DEFAULT_STEPS)
        for f, p in priors.items():
            steps[f"rho:{f}"] = 0.3
            steps[f"shift:{f}"] = 0.1
            if not p.nu_fixed:
                steps[f"nu:{f}"] = 0.3
        steps.update(cfg.steps)
        state = ModelState(
            SpatialGevFields(values["mu"], values["gamma"], values["xi"]), priors, float(alpha),
            math.log(tau), np.ones((L, T)), np.full((L, T), 0.5), self.knots, steps,
        )
        self._fallback_shape(state)
        return state

    def _fallback_shape(self, state):
        """Retry with a Gumbel shape if the default start puts data out of support."""
        f = state.fields
        lo = f.mu - f.sigma / np.where(f.xi == 0, np.inf, f.xi)
        if np.any(self.data.Y <= lo[None, :]) and not self.config.prior_only:
            f.xi[:] = 0.0
            for p_name, p in state.priors.items():
                if p_name == "xi":
                    p.hyper.beta[:] = 0.0

    # -- caches -------------------------------------------------------------------

    def _theta_parts(self, log_tau, alpha):
        logw = log_weights_matrix(self.data.coords, self.knots.knots, math.exp(log_tau), check=False)
        top = logw.max(axis=1)
        wt = np.exp((logw - top[:, None]) / alpha)
        return logw, top, wt

    def _ll(self, fields, log_theta, alpha):
        if self.config.prior_only:
            return np.zeros_like(log_theta)
        return K.ll_matrix(self.Y, fields.mu, fields.gamma, fields.xi, log_theta, alpha)

    def _refresh_all(self):
        s = self.state
        self.logw, self.top, self.wt = self._theta_parts(s.log_tau, s.alpha)
        self.S = self.wt @ s.A
        with np.errstate(divide="ignore"):
            self.log_theta = s.alpha * np.log(self.S) + self.top[:, None]
        self.ll = self._ll(s.fields, self.log_theta, s.alpha)

    def audit(self):
        """Largest absolute gap between cached and recomputed log densities."""
        if self.config.prior_only:
            return 0.0
        f = self.state.fields
        logw = log_weights_matrix(self.data.coords, self.knots.knots, self.state.tau, check=False)
        lt = log_theta_arr(logw, self.state.A, self.state.alpha)
        fresh = conditional_logpdf_arr(self.Y.T, f.mu[:, None], f.sigma[:, None], f.xi[:, None], lt,
                                       self.state.alpha)
        both = np.isfinite(fresh) & np.isfinite(self.ll)
        if not np.array_equal(np.isfinite(fresh), np.isfinite(self.ll)):
            return math.inf
        return float(np.max(np.abs(fresh[both] - self.ll[both]), initial=0.0))

    @property
    def cached_log_likelihood(self) -> float:
        return math.fsum(self.ll.ravel())

    # -- bookkeeping --------------------------------------------------------------

    def _count(self, block, acc, prop):
        a, p = self._window.get(block, (0, 0))
        self._window[block] = (a + acc, p + prop)
        if self.iteration >= self.config.burn_in:
            a, p = self.totals.get(block, (0, 0))
            self.totals[block] = (a + acc, p + prop)

    def _metropolis(self, log_r) -> bool:
        # NaN compares False, so NaN ratios are rejections
        return bool(math.log(self.rng.random()) < log_r)

    # -- updates ------------------------------------------------------------------

    def update_gev_field(self, which: str, sites=None):
        """Update the GEV parameter ``which`` at every site (or the given indices)."""
        s = self.state
        fs = self.spec.fields[which]
        step = s.step_sizes[which]
        if fs.kind == "constant":
            vals = getattr(s.fields, which)
            cur = float(vals[0])
            cand = cur + step * self.rng.standard_normal()
            new_fields = replace(s.fields, **{which: np.full_like(vals, cand)})
            ll_c = self._ll(new_fields, self.log_theta, s.alpha)
            log_r = float(np.sum(ll_c) - np.sum(self.ll))
            log_r += ((cur - fs.prior_mean) ** 2 - (cand - fs.prior_mean) ** 2) / (2 * fs.prior_sd**2)
            ok = self._metropolis(log_r)
            if ok:
                vals[:] = cand
                self.ll = ll_c
            self._count(which, int(ok), 1)
            return
        prior = s.priors[which]
        n = self.data.n
        z = self.rng.standard_normal(n)
        logu = np.log(self.rng.random(n))
        if sites is not None:
            # only the listed sites move: make the others certain rejections
            mask = np.zeros(n, bool)
            mask[np.asarray(sites)] = True
            logu = np.where(mask, logu, np.inf)
        f = s.fields
        acc = K.field_site_sweep(FIELDS.index(which), f.mu, f.gamma, f.xi, self.Y, self.log_theta, s.alpha,
                                 self.ll, prior.prec, prior.mean, step, z, logu, self.config.prior_only)
        self._count(which, acc, n if sites is None else len(np.atleast_1d(sites)))

    def update_hyper(self, which: str):
        prior = self.state.priors[which]
        vals = getattr(self.state.fields, which)
        prior.update_beta(self.rng, vals)
        prior.update_delta2(self.rng, vals)
        ok = prior.update_rho(self.rng, vals, self.state.step_sizes[f"rho:{which}"])
        self._count(f"rho:{which}", int(ok), 1)
        if not prior.nu_fixed:
            ok = prior.update_nu(self.rng, vals, self.state.step_sizes[f"nu:{which}"])
            self._count(f"nu:{which}", int(ok), 1)

    def update_bandwidth(self):
        """Random walk on ``log tau``; the inverse-gamma prior on tau carries a Jacobian."""
        s = self.state
        cand = s.log_tau + s.step_sizes["log_tau"] * self.rng.standard_normal()
        a, b = self.config.tau_prior
        logw, top, wt = self._theta_parts(cand, s.alpha)
        S = wt @ s.A
        with np.errstate(divide="ignore"):
            lt = s.alpha * np.log(S) + top[:, None]
        ll_c = self._ll(s.fields, lt, s.alpha)
        log_r = float(np.sum(ll_c) - np.sum(self.ll))
        log_r += float(invgamma_logpdf(math.exp(cand), a, b)) + cand
        log_r -= float(invgamma_logpdf(s.tau, a, b)) + s.log_tau
        ok = self._metropolis(log_r)
        if ok:
            s.log_tau = cand
            self.logw, self.top, self.wt, self.S, self.log_theta, self.ll = logw, top, wt, S, lt, ll_c
        self._count("log_tau", int(ok), 1)
        return ok

    def update_alpha(self):
        s = self.state
        cand = s.alpha + s.step_sizes["alpha"] * self.rng.standard_normal()
        u = self.rng.random()
        if not 0.0 < cand < 1.0:
            self._count("alpha", 0, 1)
            return False
        wt = np.exp((self.logw - self.top[:, None]) / cand)
        S = wt @ s.A
        with np.errstate(divide="ignore"):
            lt = cand * np.log(S) + self.top[:, None]
        ll_c = self._ll(s.fields, lt, cand)
        log_r = float(np.sum(ll_c) - np.sum(self.ll))
        with np.errstate(over="ignore", invalid="ignore"):
            log_r += float(np.sum(stable.joint_logpdf_arr(s.A, s.B, cand))
                           - np.sum(stable.joint_logpdf_arr(s.A, s.B, s.alpha)))
        ok = bool(math.log(u) < log_r)
        if ok:
            s.alpha = float(cand)
            self.wt, self.S, self.log_theta, self.ll = wt, S, lt, ll_c
        self._count("alpha", int(ok), 1)
        return ok

    def update_alpha_noncentered(self):
        """Joint move of ``alpha``, the effects, the log scale and the location.

        ``B`` and ``E = c(B) A**(-alpha/(1-alpha))`` are held fixed; given
        ``B``, ``E`` is unit exponential whatever ``alpha`` is, so the
        auxiliary density drops out of the ratio.  The log scale moves by
        ``log(alpha / alpha')`` to keep ``alpha sigma`` in place, and each
        site's location moves so that its conditional location averaged over
        years is unchanged.  Both maps are triangular with unit diagonal and
        the reverse proposal inverts them.
        """
        s = self.state
        cand = s.alpha + s.step_sizes["alpha_nc"] * self.rng.standard_normal()
        u = self.rng.random()
        if not 0.0 < cand < 1.0:
            self._count("alpha_nc", 0, 1)
            return False
        log_c0 = stable.log_c_arr(s.B, s.alpha)
        log_e = log_c0 - s.alpha / (1.0 - s.alpha) * np.log(s.A)
        with np.errstate(over="ignore"):
            A_c = np.exp(-(1.0 - cand) / cand * (log_e - stable.log_c_arr(s.B, cand)))
        if not np.all(np.isfinite(A_c) & (A_c > 0)):
            self._count("alpha_nc", 0, 1)
            return False
        dg = math.log(s.alpha / cand)
        fields_c = replace(s.fields, gamma=s.fields.gamma + dg)
        log_r = self._gamma_prior_shift(dg)
        wt = np.exp((self.logw - self.top[:, None]) / cand)
        S = wt @ A_c
        with np.errstate(divide="ignore"):
            lt = cand * np.log(S) + self.top[:, None]
        if "mu" in self.config.blocks:
            kappa = s.alpha * s.fields.sigma
            dmu = self._mean_location(self.log_theta, s.alpha, kappa) - self._mean_location(lt, cand, kappa)
            if self.spec.fields["mu"].kind == "constant":
                dmu = np.full_like(dmu, dmu.mean())
            if not np.all(np.isfinite(dmu)):
                self._count("alpha_nc", 0, 1)
                return False
            fields_c = replace(fields_c, mu=s.fields.mu + dmu)
            log_r += self._mu_prior_ratio(fields_c.mu)
        ll_c = self._ll(fields_c, lt, cand)
        log_r += float(np.sum(ll_c) - np.sum(self.ll))
        ok = bool(math.log(u) < log_r)
        if ok:
            s.alpha = float(cand)
            s.A = A_c
            s.fields.mu[:] = fields_c.mu
            s.fields.gamma += dg
            if "gamma" in s.priors:
                s.priors["gamma"].hyper.beta[0] += dg
            self.wt, self.S, self.log_theta, self.ll = wt, S, lt, ll_c
        self._count("alpha_nc", int(ok), 1)
        return ok

    def _mean_location(self, log_theta, alpha, kappa):
        """Per-site year average of ``sigma (theta**xi - 1) / xi`` with ``sigma = kappa / alpha``."""
        xi = self.state.fields.xi[:, None]
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            bc = np.where(np.abs(xi) > 1e-12, np.expm1(xi * log_theta) / np.where(xi == 0, 1.0, xi), log_theta)
        return kappa / alpha * bc.mean(axis=1)

    def _mu_prior_ratio(self, mu_new):
        """Log prior ratio for replacing the location field by ``mu_new``."""
        s = self.state
        if "mu" in s.priors:
            p = s.priors["mu"]
            return float(p.log_density(mu_new) - p.log_density(s.fields.mu))
        fs = self.spec.fields["mu"]
        m0, m1 = float(s.fields.mu[0]), float(mu_new[0])
        return ((m0 - fs.prior_mean) ** 2 - (m1 - fs.prior_mean) ** 2) / (2 * fs.prior_sd**2)

    def _gamma_prior_shift(self, d):
        """Log prior ratio for shifting the whole log-scale field by ``d``."""
        s = self.state
        if "gamma" in s.priors:
            p = s.priors["gamma"]
            b0 = p.hyper.beta[0]
            return (b0**2 - (b0 + d) ** 2) / (2 * p.beta_sd**2)
        fs = self.spec.fields["gamma"]
        g = float(s.fields.gamma[0])
        return ((g - fs.prior_mean) ** 2 - (g + d - fs.prior_mean) ** 2) / (2 * fs.prior_sd**2)

    def update_level_shift(self, which: str):
        """Shift a GP field and its intercept together by a common amount.

        Residuals about the GP mean are unchanged, so only the likelihood and
        the intercept's normal prior enter the ratio.
        """
        s = self.state
        prior = s.priors[which]
        d = s.step_sizes[f"shift:{which}"] * self.rng.standard_normal()
        u = self.rng.random()
        vals = getattr(s.fields, which)
        new_fields = replace(s.fields, **{which: vals + d})
        ll_c = self._ll(new_fields, self.log_theta, s.alpha)
        b0 = prior.hyper.beta[0]
        log_r = float(np.sum(ll_c) - np.sum(self.ll)) + (b0**2 - (b0 + d) ** 2) / (2 * prior.beta_sd**2)
        ok = bool(math.log(u) < log_r)
        if ok:
            vals += d
            prior.hyper.beta[0] = b0 + d
            self.ll = ll_c
        self._count(f"shift:{which}", int(ok), 1)
        return ok

    def update_year_scale(self):
        """Rescale all effects of a year at once: ``log A[:, t] += eps_t``.

        Years are conditionally independent, so every year gets its own
        proposal and accept/reject decision.  ``theta_t`` scales by
        ``exp(alpha eps_t)`` exactly.  The ratio works in log-A coordinates,
        hence the ``L * eps_t`` Jacobian term.
        """
        s = self.state
        L, T = s.A.shape
        eps = s.step_sizes["year_scale"] * self.rng.standard_normal(T)
        logu = np.log(self.rng.random(T))
        A_c = s.A * np.exp(eps)[None, :]
        lt = self.log_theta + s.alpha * eps[None, :]
        ll_c = self._ll(s.fields, lt, s.alpha)
        with np.errstate(over="ignore", invalid="ignore"):
            aux = (stable.joint_logpdf_arr(A_c, s.B, s.alpha) - stable.joint_logpdf_arr(s.A, s.B, s.alpha)).sum(0)
        log_r = (ll_c - self.ll).sum(axis=0) + aux + L * eps
        ok = logu < log_r
        s.A[:, ok] = A_c[:, ok]
        self.S[:, ok] *= np.exp(eps[ok])[None, :]
        self.log_theta[:, ok] = lt[:, ok]
        self.ll[:, ok] = ll_c[:, ok]
        self._count("year_scale", int(ok.sum()), T)

    def update_level_ridge(self, top_only: bool = False):
        """Move ``log A`` by ``eps`` and compensate location and scale.

        Raising all effects multiplies ``theta`` by ``exp(alpha eps)``.  With a
        common shape, ``gamma -= alpha xi eps`` and
        ``mu -= sigma (1 - exp(-alpha xi eps)) / xi`` leave every conditional
        GEV unchanged, so only the priors enter the ratio.  With a spatially
        varying shape the scale stays put and the location shift is used
        alone.  The map is triangular with unit diagonal in
        ``(log A, gamma, mu)``; the ``exp(k eps)`` Jacobian comes from the
        ``k`` moved log-A coordinates.

        With ``top_only`` only the largest effect of each year moves.  For
        small ``alpha`` that effect dominates ``theta``, so the compensation is
        nearly exact while the prior cost involves ``T`` effects instead of
        ``L T``.  Moves that change which effect is largest are rejected,
        which keeps the selection reversible.
        """
        s = self.state
        name = "top_ridge" if top_only else "level_ridge"
        eps = s.step_sizes[name] * self.rng.standard_normal()
        u = self.rng.random()
        sigma = s.fields.sigma
        xi = s.fields.xi
        common = self.spec.fields["xi"].kind == "constant" and "gamma" in self.config.blocks
        z = s.alpha * xi * eps
        with np.errstate(divide="ignore", invalid="ignore"):
            drop = np.where(np.abs(xi) > 1e-12, -np.expm1(-z) / np.where(xi == 0, 1.0, xi), s.alpha * eps)
        dmu = -sigma * drop
        dg = -float(z[0]) if common else 0.0
        fields_c = replace(s.fields, mu=s.fields.mu + dmu, gamma=s.fields.gamma + dg)
        if top_only:
            cols = np.arange(s.A.shape[1])
            rows = np.argmax(s.A, axis=0)
            A_c = s.A.copy()
            with np.errstate(over="ignore"):
                A_c[rows, cols] *= math.exp(eps)
            if not np.array_equal(np.argmax(A_c, axis=0), rows) or not np.all(np.isfinite(A_c)):
                self._count(name, 0, 1)
                return False
            S_c = self.wt @ A_c
            with np.errstate(divide="ignore"):
                lt = s.alpha * np.log(S_c) + self.top[:, None]
            A_old, A_new, k = s.A[rows, cols], A_c[rows, cols], len(cols)
        else:
            A_c = s.A * math.exp(eps)
            S_c = self.S * math.exp(eps)
            lt = self.log_theta + s.alpha * eps
            A_old, A_new, k = s.A, A_c, s.A.size
            rows = cols = None
        ll_c = self._ll(fields_c, lt, s.alpha)
        B = s.B if rows is None else s.B[rows, cols]
        with np.errstate(over="ignore", invalid="ignore"):
            log_r = float(np.sum(stable.joint_logpdf_arr(A_new, B, s.alpha))
                          - np.sum(stable.joint_logpdf_arr(A_old, B, s.alpha)))
        log_r += k * eps + float(np.sum(ll_c) - np.sum(self.ll))
        if dg:
            log_r += self._gamma_prior_shift(dg)
        fs = self.spec.fields["mu"]
        if "mu" in s.priors:
            p = s.priors["mu"]
            b0 = p.hyper.beta[0]
            db = float(np.mean(dmu))
            lp0 = p.log_density(s.fields.mu)
            p.hyper.beta[0] = b0 + db
            lp1 = p.log_density(fields_c.mu)
            p.hyper.beta[0] = b0
            log_r += lp1 - lp0 + (b0**2 - (b0 + db) ** 2) / (2 * p.beta_sd**2)
        else:
            m0 = float(s.fields.mu[0])
            m1 = float(fields_c.mu[0])
            log_r += ((m0 - fs.prior_mean) ** 2 - (m1 - fs.prior_mean) ** 2) / (2 * fs.prior_sd**2)
        ok = bool(math.log(u) < log_r)
        if ok:
            s.A = A_c
            s.fields.mu += dmu
            s.fields.gamma += dg
            if "mu" in s.priors:
                s.priors["mu"].hyper.beta[0] += float(np.mean(dmu))
            if dg and "gamma" in s.priors:
                s.priors["gamma"].hyper.beta[0] += dg
            self.S, self.log_theta, self.ll = S_c, lt, ll_c
        self._count(name, int(ok), 1)
        return ok

    def update_aux(self):
        """Sweep all ``A[l, t]`` then all ``B[l, t]``."""
        s = self.state
        L, T = s.A.shape
        z = self.rng.standard_normal((L, T))
        logu = np.log(self.rng.random((L, T)))
        acc = K.aux_a_sweep(s.A, s.B, self.S, self.wt, self.top, self.Y, s.fields.mu, s.fields.gamma,
                            s.fields.xi, s.alpha, self.ll, self.log_theta, s.step_sizes["A"], z, logu,
                            self.config.prior_only)
        self._count("A", acc, L * T)
        # exact refresh of the running sums
        self.S = self.wt @ s.A
        with np.errstate(divide="ignore"):
            self.log_theta = s.alpha * np.log(self.S) + self.top[:, None]
        self.ll = self._ll(s.fields, self.log_theta, s.alpha)
        self.update_aux_b()

    def update_aux_b(self):
        """B enters only the auxiliary density, and all B's are conditionally independent."""
        s = self.state
        cand = s.B + s.step_sizes["B"] * self.rng.standard_normal(s.B.shape)
        logu = np.log(self.rng.random(s.B.shape))
        inside = (cand > 0) & (cand < 1)
        safe = np.where(inside, cand, 0.5)
        with np.errstate(over="ignore", invalid="ignore"):
            log_r = stable.joint_logpdf_arr(s.A, safe, s.alpha) - stable.joint_logpdf_arr(s.A, s.B, s.alpha)
        ok = inside & (logu < log_r)
        s.B = np.where(ok, cand, s.B)
        self._count("B", int(ok.sum()), s.B.size)

    def step(self):
        """One full sweep over all blocks."""
        blocks = self.config.blocks
        if self.iteration < self.config.warmup:
            # effects settle first: starting from A = 1 the fields would otherwise chase a poor fit
            blocks = blocks & {"A", "B"}
        for f in FIELDS:
            if f in blocks:
                self.update_gev_field(f)
        if "hyper" in blocks:
            for f in self.state.priors:
                self.update_hyper(f)
                if self.config.extra_moves and f in blocks:
                    self.update_level_shift(f)
        if "tau" in blocks and self.spec.tau_fixed is None:
            self.update_bandwidth()
        if "alpha" in blocks and self.spec.alpha_fixed is None:
            self.update_alpha()
            if self.config.extra_moves:
                self.update_alpha_noncentered()
        if self.state.alpha < 1.0:
            if "A" in blocks:
                self.update_aux()
                if self.config.extra_moves:
                    self.update_year_scale()
                    if "mu" in blocks:
                        self.update_level_ridge()
                        self.update_level_ridge(top_only=True)
            elif "B" in blocks:
                self.update_aux_b()
        self.iteration += 1
        cfg = self.config
        if self.iteration <= cfg.burn_in and self.iteration % cfg.adapt_window == 0:
            self.state.step_sizes = adapt_step(self._window, self.state.step_sizes, cfg.adapt_factor,
                                               in_burn_in=True)
        if self.iteration % cfg.adapt_window == 0:
            self._window = {}
        if cfg.audit_every and self.iteration % cfg.audit_every == 0:
            gap = self.audit()
            self.audits.append((self.iteration, gap))
            if gap > 1e-8:
                log.warning("likelihood cache drifted by %.3g at iteration %d", gap, self.iteration)

    def snapshot(self) -> dict:
        s = self.state
        rec = {"alpha": s.alpha, "tau": s.tau}
        for f, p in s.priors.items():
            for k, b in enumerate(p.hyper.beta):
                rec[f"beta_{f}_{k}"] = float(b)
            rec[f"delta2_{f}"] = p.hyper.delta2
            rec[f"rho_{f}"] = p.hyper.rho
            rec[f"nu_{f}"] = p.hyper.nu
            if p.spike is not None:
                rec[f"g_{f}"] = p.spike.g
        return rec

    def acceptance_rates(self) -> dict:
        return {b: (a / p if p else float("nan")) for b, (a, p) in sorted(self.totals.items())}

    def run(self, callback=None):
        """Run ``n_iters`` iterations; returns the retained records of this chain."""
        cfg = self.config
        scal, fld, eff, iters = [], [], [], []
        for _ in range(cfg.n_iters):
            self.step()
            it = self.iteration - 1
            if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                iters.append(it)
                scal.append(self.snapshot())
                f = self.state.fields
                fld.append(np.stack([f.mu, f.gamma, f.xi]))
                if cfg.store_effects:
                    eff.append(self.state.A.copy())
            if callback is not None:
                callback(self)
        return iters, scal, fld, eff


@dataclass
class PosteriorSamples:
    """Retained draws of one or more chains, stacked along the first axis."""

    chain: np.ndarray
    iteration: np.ndarray
    scalars: dict  # name -> (D,)
    fields: dict  # "mu"/"gamma"/"xi" -> (D, n)
    A: np.ndarray | None  # (D, L, T)
    acceptance: dict  # chain -> {block: rate}
    site_ids: list
    coords: np.ndarray
    knots: np.ndarray
    years: list
    designs: dict = field(default_factory=dict)  # GP field -> (covariate names, nu fixed or None)
    covariates: np.ndarray | None = None
    covariate_names: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return len(self.chain)

    def field(self, name) -> np.ndarray:
        return self.fields[name]

    def interval(self, name, level=0.95):
        """Equal-tailed posterior interval per site (fields) or scalar."""
        x = self.fields[name] if name in self.fields else self.scalars[name]
        lo = (1.0 - level) / 2.0
        return np.quantile(x, lo, axis=0), np.quantile(x, 1.0 - lo, axis=0)


def _run_chain(data, spec, config, seed_seq):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    sampler = Sampler(data, spec, config, rng)
    out = sampler.run()
    return out, sampler.acceptance_rates(), sampler.audits


def fit(data: Dataset, spec: ModelSpec, config: FitConfig, rng: np.random.Generator | None = None,
        n_jobs: int = 1) -> PosteriorSamples:
    """Run ``config.n_chains`` independent chains and stack their post-burn-in draws.

    Chains get distinct child seeds of ``config.seed`` (or of ``rng`` when given),
    so a fixed seed reproduces the samples exactly.
    """
    if data.n == 0 or data.T == 0:
        raise ParameterError("dataset is empty")
    if rng is not None:
        seeds = [np.random.SeedSequence(int(x)) for x in rng.integers(0, 2**63, config.n_chains)]
    else:
        seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    if n_jobs > 1 and config.n_chains > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(_run_chain, [data] * len(seeds), [spec] * len(seeds),
                                  [config] * len(seeds), seeds))
    else:
        results = [_run_chain(data, spec, config, s) for s in seeds]

    chain, iters, scal, fld, eff = [], [], [], [], []
    acceptance, audits = {}, {}
    for c, ((it, sc, fl, ef), acc, aud) in enumerate(results):
        chain += [c] * len(it)
        iters += it
        scal += sc
        fld += fl
        eff += ef
        acceptance[c] = acc
        audits[c] = aud
    names = list(scal[0].keys()) if scal else []
    scalars = {k: np.array([r[k] for r in scal]) for k in names}
    F = np.array(fld)
    knots = spec.knots if spec.knots is not None else knots_at(data.coords)
    designs = {}
    for f in FIELDS:
        fs = spec.fields[f]
        if fs.kind == "gp":
            names_f = list(data.covariate_names) if fs.covariates == "all" else list(fs.covariates)
            designs[f] = (names_f, fs.nu)
    cfg = asdict(config)
    cfg["blocks"] = sorted(config.blocks)
    return PosteriorSamples(
        chain=np.array(chain, dtype=int), iteration=np.array(iters, dtype=int), scalars=scalars,
        fields={f: F[:, k, :] for k, f in enumerate(FIELDS)},
        A=np.array(eff) if eff else None, acceptance=acceptance, site_ids=list(data.site_ids),
        coords=data.coords.copy(), knots=knots.knots.copy(), years=list(data.years), designs=designs,
        covariates=data.covariates.copy(), covariate_names=list(data.covariate_names),
        meta={"config": cfg, "audits": audits, "alpha_fixed": spec.alpha_fixed, "tau_fixed": spec.tau_fixed,
              "field_kinds": {f: spec.fields[f].kind for f in FIELDS}},
    )
