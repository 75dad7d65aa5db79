"""Exploratory and post-fit summaries.

Empirical extremal coefficients, return levels, posterior predictive draws at
new locations, paired comparisons of two fits, and posterior-variance ratios.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist, pdist
from scipy.stats import rankdata

from . import gevdist
from .basis import log_weights_matrix
from .data import Dataset
from .errors import InputError, ParameterError
from .gevdist import GevParams
from .gp import JITTER, matern_corr
from .process import conditional_arr, log_theta_arr

GEV_NAMES = ("mu", "sigma", "xi")


# -- madogram ---------------------------------------------------------------------

@dataclass
class PairwiseExtremal:
    """Empirical extremal coefficient per site pair."""

    h: np.ndarray
    theta: np.ndarray
    count: np.ndarray
    pairs: np.ndarray = field(default=None, repr=False)  # (P, 2) site indices

    def __len__(self):
        return len(self.h)

    def binned(self, edges):
        """Mean estimate and pair count per distance bin."""
        idx = np.digitize(self.h, edges) - 1
        nb = len(edges) - 1
        means = np.full(nb, np.nan)
        counts = np.zeros(nb, dtype=int)
        for b in range(nb):
            sel = idx == b
            counts[b] = sel.sum()
            if counts[b]:
                means[b] = self.theta[sel].mean()
        return means, counts


def madogram(data: Dataset) -> PairwiseExtremal:
    """F-madogram extremal coefficient for every pair of sites.

    Each site's series is mapped to (0, 1) by its ranks (ties share the
    average rank), ``nu = mean |F_i - F_j| / 2`` and
    ``theta = (1 + 2 nu) / (1 - 2 nu)``, clamped to [1, 2].
    """
    Y = np.asarray(data.Y, dtype=float)
    T, n = Y.shape
    if T < 2:
        raise ParameterError("madogram needs at least two years")
    F = rankdata(Y, method="average", axis=0) / (T + 1.0)
    iu, ju = np.triu_indices(n, k=1)
    nu = 0.5 * np.mean(np.abs(F[:, iu] - F[:, ju]), axis=0)
    with np.errstate(divide="ignore"):
        theta = (1.0 + 2.0 * nu) / (1.0 - 2.0 * nu)
    theta = np.clip(np.nan_to_num(theta, posinf=2.0), 1.0, 2.0)
    h = pdist(data.coords)
    return PairwiseExtremal(h, theta, np.full(h.shape, T, dtype=int), np.column_stack([iu, ju]))


def write_pairs_csv(pe: PairwiseExtremal, path, site_ids=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if site_ids is not None and pe.pairs is not None:
            w.writerow(["site_i", "site_j", "h", "theta_hat", "count"])
            for (i, j), h, t, c in zip(pe.pairs, pe.h, pe.theta, pe.count):
                w.writerow([site_ids[i], site_ids[j], repr(float(h)), repr(float(t)), int(c)])
        else:
            w.writerow(["h", "theta_hat", "count"])
            for h, t, c in zip(pe.h, pe.theta, pe.count):
                w.writerow([repr(float(h)), repr(float(t)), int(c)])


# -- return levels ----------------------------------------------------------------

def return_level(p: GevParams, q: float) -> float:
    """The ``q`` quantile of the annual maximum, i.e. the ``1/(1-q)`` year return level."""
    return gevdist.gev_quantile(q, p)


def quantile_draws(samples, q):
    """Per-draw, per-site marginal ``q`` quantile, shape (D, n)."""
    if not 0.0 < q < 1.0:
        raise gevdist.DomainError(f"q must lie in (0, 1), got {q!r}")
    f = samples.fields
    return gevdist.quantile_arr(q, f["mu"], np.exp(f["gamma"]), f["xi"])


# -- posterior prediction ---------------------------------------------------------

def _krige(rng, s_new, x_new, coords, values, beta, X, delta2, rho, nu):
    """Joint conditional normal draw of a GP field at ``s_new`` given ``values``."""
    R_oo = matern_corr(cdist(coords, coords), rho, nu)
    R_oo[np.diag_indices_from(R_oo)] += JITTER
    R_no = matern_corr(cdist(s_new, coords), rho, nu)
    R_nn = matern_corr(cdist(s_new, s_new), rho, nu)
    fac = cho_factor(R_oo, lower=True)
    K = cho_solve(fac, R_no.T).T
    mean = x_new @ beta + K @ (values - X @ beta)
    cov = delta2 * (R_nn - K @ R_no.T)
    cov = 0.5 * (cov + cov.T)
    # eigen square root tolerates the rank deficiency at observed sites
    w, V = np.linalg.eigh(cov)
    root = V * np.sqrt(np.clip(w, 0.0, None))
    return mean + root @ rng.standard_normal(len(mean))


def _design(samples, f, x_new, m):
    names, _ = samples.designs[f]
    X = np.ones((len(samples.site_ids), 1))
    Xn = np.ones((m, 1))
    if names:
        idx = [samples.covariate_names.index(nm) for nm in names]
        if x_new is None:
            raise InputError(f"field {f!r} needs covariates {names} at the new sites")
        x_new = np.atleast_2d(np.asarray(x_new, dtype=float))
        X = np.column_stack([X, samples.covariates[:, idx]])
        Xn = np.column_stack([Xn, x_new[:, idx] if x_new.shape[1] == len(samples.covariate_names) else x_new])
    return X, Xn


def predict_fields(samples, s_new, rng, x_new=None):
    """GEV parameter draws at new sites, one per retained iteration.

    GP fields are drawn from their conditional normal given that iteration's
    values at the data sites; constant fields are copied.  Returns a dict of
    ``(D, m)`` arrays for ``mu``, ``gamma`` and ``xi``.
    """
    s_new = np.atleast_2d(np.asarray(s_new, dtype=float))
    m = s_new.shape[0]
    D = samples.n_draws
    kinds = samples.meta.get("field_kinds", {})
    d_site = cdist(s_new, samples.coords)
    nearest = d_site.argmin(axis=1)
    exact = d_site[np.arange(m), nearest] == 0.0
    out = {}
    for f in ("mu", "gamma", "xi"):
        vals = samples.fields[f]
        if kinds.get(f, "gp") == "constant":
            out[f] = np.repeat(vals[:, :1], m, axis=1)
            continue
        X, Xn = _design(samples, f, x_new, m)
        res = np.empty((D, m))
        for k in range(D):
            beta = np.array([samples.scalars[f"beta_{f}_{j}"][k] for j in range(X.shape[1])])
            res[k] = _krige(rng, s_new, Xn, samples.coords, vals[k], beta, X,
                            samples.scalars[f"delta2_{f}"][k], samples.scalars[f"rho_{f}"][k],
                            samples.scalars[f"nu_{f}"][k])
        # an observed site keeps its sampled value exactly
        res[:, exact] = vals[:, nearest[exact]]
        out[f] = res
    return out


def posterior_predict(samples, s_new, rng, x_new=None, fields=None):
    """Posterior predictive block maxima at new sites.

    For every retained draw: the random effect at ``s_new`` from the stored
    positive-stable effects, GEV parameters from :func:`predict_fields`,
    then one draw per year from the conditional GEV.  Returns ``(D, m, T)``.
    """
    if samples.A is None:
        raise InputError("samples were stored without random effects")
    s_new = np.atleast_2d(np.asarray(s_new, dtype=float))
    if fields is None:
        fields = predict_fields(samples, s_new, rng, x_new)
    D, L, T = samples.A.shape
    m = s_new.shape[0]
    out = np.empty((D, m, T))
    for k in range(D):
        alpha = samples.scalars["alpha"][k]
        tau = samples.scalars["tau"][k]
        logw = log_weights_matrix(s_new, samples.knots, tau)
        lt = log_theta_arr(logw, samples.A[k], alpha)  # (m, T)
        mu, sig, xi = (fields["mu"][k][:, None], np.exp(fields["gamma"][k])[:, None], fields["xi"][k][:, None])
        cm, cs, cx = conditional_arr(mu, sig, xi, lt, alpha)
        out[k] = gevdist.sample_arr(rng, cm, cs, np.broadcast_to(cx, cm.shape))
    return out


def write_predictive_csv(draws, path, site_ids, years) -> None:
    """Long table ``draw,site_id,year,value``."""
    D, m, T = draws.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["draw", "site_id", "year", "value"])
        for k in range(D):
            for i in range(m):
                for t in range(T):
                    w.writerow([k, site_ids[i], years[t], repr(float(draws[k, i, t]))])


# -- comparisons ------------------------------------------------------------------

@dataclass
class ScenarioSummary:
    """Per-site posterior summaries of two runs and of their paired difference.

    Each dict maps a quantity name (``mu``, ``sigma``, ``xi``, ``q0.95``...)
    to an ``(n,)`` array.
    """

    site_ids: list
    coords: np.ndarray
    hist_mean: dict
    hist_sd: dict
    fut_mean: dict
    fut_sd: dict
    change_mean: dict
    change_sd: dict
    prob_increase: dict
    n_pairs: int

    @property
    def quantities(self) -> list:
        return list(self.change_mean)


def _quantities(samples, q_list):
    f = samples.fields
    out = {"mu": f["mu"], "sigma": np.exp(f["gamma"]), "xi": f["xi"]}
    for q in q_list:
        out[f"q{q:g}"] = quantile_draws(samples, q)
    return out


def _check_same_sites(a, b):
    if list(a.site_ids) != list(b.site_ids) or a.coords.shape != b.coords.shape or not np.allclose(
            a.coords, b.coords):
        raise InputError("the two sample sets cover different sites")


def compare_scenarios(hist, fut, q_list=(0.1, 0.5, 0.95)) -> ScenarioSummary:
    """Change from ``hist`` to ``fut`` in GEV parameters and quantiles.

    Draw ``k`` of one run is paired with draw ``k`` of the other; the runs
    are independent so any fixed pairing is valid.
    """
    _check_same_sites(hist, fut)
    D = min(hist.n_draws, fut.n_draws)
    if D == 0:
        raise InputError("no posterior draws")
    H, F = _quantities(hist, q_list), _quantities(fut, q_list)
    hm, hs, fm, fs, cm, cs, pp = {}, {}, {}, {}, {}, {}, {}
    for k in H:
        a, b = H[k][:D], F[k][:D]
        d = b - a
        hm[k], hs[k] = a.mean(0), a.std(0, ddof=1) if D > 1 else np.zeros(a.shape[1])
        fm[k], fs[k] = b.mean(0), b.std(0, ddof=1) if D > 1 else np.zeros(b.shape[1])
        cm[k], cs[k] = d.mean(0), d.std(0, ddof=1) if D > 1 else np.zeros(d.shape[1])
        pp[k] = np.mean(d > 0, axis=0)
    return ScenarioSummary(list(hist.site_ids), hist.coords.copy(), hm, hs, fm, fs, cm, cs, pp, D)


def write_summary_csv(summary: ScenarioSummary, path) -> None:
    """One row per site and quantity."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site_id", "x", "y", "quantity", "hist_mean", "hist_sd", "fut_mean", "fut_sd",
                    "change_mean", "change_sd", "prob_increase"])
        for k in summary.quantities:
            for i, sid in enumerate(summary.site_ids):
                w.writerow([sid, repr(float(summary.coords[i, 0])), repr(float(summary.coords[i, 1])), k,
                            *(repr(float(d[k][i])) for d in (summary.hist_mean, summary.hist_sd,
                                                             summary.fut_mean, summary.fut_sd,
                                                             summary.change_mean, summary.change_sd,
                                                             summary.prob_increase))])


def variance_ratio(full, indep) -> dict:
    """Per-site ratio of posterior variances, ``full`` over ``indep``, for each GEV parameter.

    ``indep`` is normally a fit with ``alpha`` fixed at 1.  Sites where the
    independent fit has zero posterior variance give ``nan``.
    """
    _check_same_sites(full, indep)
    if full.n_draws < 2 or indep.n_draws < 2:
        raise InputError("need at least two draws in each sample set")
    A, B = _quantities(full, ()), _quantities(indep, ())
    out = {}
    for k in GEV_NAMES:
        va, vb = A[k].var(0, ddof=1), B[k].var(0, ddof=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[k] = np.where(vb > 0, va / vb, np.nan)
    return out


def write_ratio_csv(ratios: dict, path, site_ids, coords) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site_id", "x", "y", *ratios])
        for i, sid in enumerate(site_ids):
            w.writerow([sid, repr(float(coords[i, 0])), repr(float(coords[i, 1])),
                        *(repr(float(r[i])) for r in ratios.values())])
