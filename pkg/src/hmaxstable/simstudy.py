"""Simulation study: generate data from known designs, refit, score.

Every design uses 49 sites on the 7 x 7 grid over [0, 6]^2 and 10 years.
The GEV location is a zero-mean GP with covariance ``exp(-d / 2)``; the
scale is 1 and the shape 0.2 at every site.  Designs differ in the knots
used to generate the data, ``alpha`` and ``tau``:

====  ==================  =====  ===
id    generating knots    alpha  tau
====  ==================  =====  ===
1     7 x 7 on [0, 6]     0.3    3
2     7 x 7 on [0, 6]     0.7    3
3     5 x 5 on [0, 6]     0.3    3
4     5 x 5 on [0, 6]     0.7    3
5     100 x 100 on [-1,7] 0.4    1
====  ==================  =====  ===

Designs 1-4 are refit with 5 x 5 and 7 x 7 knots on [0, 6]; design 5 with
``m x m`` knots on [-1, 7] for m = 5..12 (spacing 2.0 down to 0.73).
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .basis import KernelBasis, make_grid
from .data import Dataset
from .errors import InitializationError
from .gp import GpHyper, sample_field
from .mcmc import FitConfig, fit, simulation_study_spec
from .process import ProcessModel, SpatialGevFields, simulate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DesignSpec:
    design_id: int
    gen_grid: tuple  # (m, l, u)
    alpha: float
    tau: float
    fit_grids: tuple  # ((m, l, u), ...)
    site_grid: tuple = (7, 0.0, 6.0)
    T: int = 10
    mu_var: float = 1.0
    mu_range: float = 2.0
    gamma: float = 0.0
    xi: float = 0.2

    @property
    def L0(self) -> int:
        return self.gen_grid[0] ** 2


_SMALL = ((5, 0.0, 6.0), (7, 0.0, 6.0))

DESIGNS = {
    1: DesignSpec(1, (7, 0.0, 6.0), 0.3, 3.0, _SMALL),
    2: DesignSpec(2, (7, 0.0, 6.0), 0.7, 3.0, _SMALL),
    3: DesignSpec(3, (5, 0.0, 6.0), 0.3, 3.0, _SMALL),
    4: DesignSpec(4, (5, 0.0, 6.0), 0.7, 3.0, _SMALL),
    5: DesignSpec(5, (100, -1.0, 7.0), 0.4, 1.0, tuple((m, -1.0, 7.0) for m in range(5, 13))),
}


def grid_spacing(g) -> float:
    m, l, u = g
    return (u - l) / (m - 1)


def generate(design: DesignSpec, rng):
    """One synthetic dataset and its true GEV fields."""
    sites = make_grid(*design.site_grid).knots
    n = sites.shape[0]
    mu = sample_field(rng, sites, GpHyper([0.0], design.mu_var, design.mu_range, 0.5))
    fields = SpatialGevFields(mu, np.full(n, design.gamma), np.full(n, design.xi))
    basis = KernelBasis(make_grid(*design.gen_grid), design.tau)
    Y = simulate(rng, ProcessModel(fields, basis, design.alpha), sites, design.T)
    ds = Dataset([f"s{i:02d}" for i in range(n)], sites, list(range(design.T)), Y)
    return ds, fields


def score(post, truth: SpatialGevFields, design: DesignSpec, level=0.95):
    """RMSE of posterior means and interval coverage, one row per parameter."""
    rows = []
    targets = {"mu": truth.mu, "gamma": truth.gamma, "xi": truth.xi}
    for name, true in targets.items():
        draws = post.fields[name]
        est = draws.mean(axis=0)
        lo, hi = post.interval(name, level)
        rows.append({"param": name, "rmse": float(np.sqrt(np.mean((est - true) ** 2))),
                     "coverage": float(np.mean((lo <= true) & (true <= hi))), "estimate": float(np.mean(est)),
                     "truth": float(np.mean(true))})
    scalar_truth = {"alpha": design.alpha, "tau": design.tau}
    if design.alpha >= 1.0:
        # tau drops out of the likelihood when alpha = 1
        scalar_truth.pop("tau")
    for name, true in scalar_truth.items():
        est = float(post.scalars[name].mean())
        lo, hi = post.interval(name, level)
        rows.append({"param": name, "rmse": abs(est - true), "coverage": float(lo <= true <= hi),
                     "estimate": est, "truth": true})
    return rows


def _replicate(design, r, seed_seq, grids, config):
    data_seed, *fit_seeds = seed_seq.spawn(1 + len(grids))
    ds, truth = generate(design, np.random.Generator(np.random.PCG64(data_seed)))
    out = []
    for g, fs in zip(grids, fit_seeds):
        base = {"design": design.design_id, "replicate": r, "m": g[0], "L": g[0] ** 2,
                "spacing": grid_spacing(g)}
        try:
            post = fit(ds, simulation_study_spec(make_grid(*g)), config,
                       rng=np.random.Generator(np.random.PCG64(fs)))
        except InitializationError as exc:
            log.warning("replicate %d, grid %s failed: %s", r, g, exc)
            out.append({**base, "param": None, "rmse": np.nan, "coverage": np.nan, "estimate": np.nan,
                        "truth": np.nan, "status": "failed"})
            continue
        acc = post.acceptance[0]
        for row in score(post, truth, design):
            out.append({**base, **row, "status": "ok", "min_accept": min(acc.values()),
                        "max_accept": max(acc.values())})
    return r, out


def run_design(design: DesignSpec, M: int = 10, seed: int = 0, grids=None, n_iters: int = 6000,
               burn_in: int = 2000, n_chains: int = 1, thin: int = 5, n_jobs: int = 1,
               config: FitConfig | None = None):
    """Simulate ``M`` datasets from ``design`` and fit each with every knot grid.

    Returns a list of row dicts keyed by replicate, grid and parameter.  A
    fit that cannot be initialised is recorded with ``status="failed"``.
    """
    grids = tuple(grids) if grids is not None else design.fit_grids
    if config is None:
        config = FitConfig(n_iters=n_iters, burn_in=burn_in, n_chains=n_chains, thin=thin,
                           store_effects=False, audit_every=0)
    seeds = np.random.SeedSequence(seed).spawn(M)
    args = [(design, r, seeds[r], grids, config) for r in range(M)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(_replicate, *zip(*args)))
    else:
        results = [_replicate(*a) for a in args]
    rows = []
    for _, out in sorted(results, key=lambda x: x[0]):
        rows.extend(out)
    return rows


def summarize(rows):
    """Mean RMSE and coverage per (grid, parameter) over successful replicates."""
    groups = {}
    for r in rows:
        if r.get("status") != "ok":
            continue
        groups.setdefault((r["design"], r["m"], r["spacing"], r["param"]), []).append(r)
    out = []
    for (d, m, sp, p), rs in sorted(groups.items()):
        rm = np.array([r["rmse"] for r in rs])
        out.append({"design": d, "m": m, "L": m * m, "spacing": sp, "param": p, "n_ok": len(rs),
                    "mean_rmse": float(rm.mean()), "root_mse": float(np.sqrt(np.mean(rm**2))),
                    "coverage": float(np.mean([r["coverage"] for r in rs]))})
    return out
