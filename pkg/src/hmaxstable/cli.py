"""Command-line interface.

Every command writes ``manifest.json`` next to its output recording the
argument vector, a hash of the resolved configuration, the seed and package
versions.  ``hmaxstable rerun MANIFEST`` repeats a run from its manifest.

Exit codes: 0 success, 1 user error (bad flags, bad input files), 2 runtime
failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (compare_scenarios, madogram, posterior_predict, predict_fields, variance_ratio,
                        write_pairs_csv, write_predictive_csv, write_ratio_csv, write_summary_csv)
from .basis import KernelBasis, load_knots_csv, make_grid
from .data import Dataset, load_dataset, save_dataset
from .errors import (DegenerateLocationError, DomainError, InitializationError, InputError, NumericalError,
                     ParameterError, ParseError)
from .gevdist import quantile_arr
from .mcmc import FIELDS, FieldSpec, FitConfig, ModelSpec, fit
from .process import (ProcessModel, SpatialGevFields, extremal_curve, gallery, gevp_extremal_coeff,
                      simulate)
from .simstudy import DESIGNS, run_design, summarize
from .store import load_samples, save_samples

log = logging.getLogger("hmaxstable")

USER_ERRORS = (ParseError, InputError, ParameterError, DomainError, DegenerateLocationError,
               FileNotFoundError, IsADirectoryError, NotADirectoryError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- small parsers ----------------------------------------------------------------

def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _grid(text):
    """``m,l,u`` for an ``m x m`` grid over ``[l, u]^2``."""
    v = _floats(text)
    if len(v) != 3 or v[0] != int(v[0]) or v[0] < 1:
        raise argparse.ArgumentTypeError(f"grid must be m,l,u with integer m, got {text!r}")
    return int(v[0]), v[1], v[2]


def read_config(path) -> dict:
    """Plain ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def _read_sites(path):
    """``site_id,x,y[,covariates]`` file to (ids, coords, covariates, names)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:3] != ["site_id", "x", "y"]:
        raise ParseError(f"{path}:1: header must start with site_id,x,y")
    head, body = rows[0], [r for r in rows[1:] if r]
    try:
        coords = np.array([[float(r[1]), float(r[2])] for r in body]).reshape(-1, 2)
        cov = np.array([[float(v) for v in r[3:]] for r in body]).reshape(len(body), len(head) - 3)
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{path}: malformed row ({exc})") from None
    return [r[0] for r in body], coords, cov, head[3:]


def _knots(args, coords=None):
    if getattr(args, "knots", None):
        return load_knots_csv(args.knots)
    if getattr(args, "knots_grid", None):
        return make_grid(*args.knots_grid)
    return None


# -- manifest ---------------------------------------------------------------------

def _versions():
    import numba
    import scipy
    return {"hmaxstable": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def file_digest(*paths):
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


def write_manifest(out_dir, argv, config: dict, seed, **extra):
    blob = json.dumps(config, sort_keys=True, default=str)
    manifest = {
        "command": list(argv),
        "config": json.loads(blob),
        "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": seed,
        "versions": _versions(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        **extra,
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def _out_dir(path):
    """Directory a manifest goes into: the path itself or the parent of a file."""
    p = Path(path)
    return p if p.suffix == "" else p.parent


# -- commands ---------------------------------------------------------------------

def cmd_simulate(args, argv):
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    if args.gallery:
        alphas = args.alpha or [0.1, 0.4, 0.7, 0.9]
        sites, fields = gallery(rng, m=args.gallery_size, alphas=alphas, tau=args.tau, xi=args.xi)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "gallery.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "x", "y", "value"])
            for a, vals in fields.items():
                for (x, y), v in zip(sites, vals):
                    w.writerow([a, repr(float(x)), repr(float(y)), repr(float(v))])
        write_manifest(out, argv, vars(args), args.seed)
        return 0
    if args.sites:
        ids, coords, cov, names = _read_sites(args.sites)
    else:
        coords = make_grid(*args.site_grid).knots
        ids, cov, names = [f"s{i:03d}" for i in range(len(coords))], None, []
    knots = _knots(args) or make_grid(*args.site_grid)
    alpha = (args.alpha or [0.5])[0]
    n = len(coords)
    fields = SpatialGevFields(np.full(n, args.mu), np.full(n, np.log(args.sigma)), np.full(n, args.xi))
    Y = simulate(rng, ProcessModel(fields, KernelBasis(knots, args.tau), alpha), coords, args.years)
    ds = Dataset(ids, coords, list(range(args.years)), Y, cov, names)
    save_dataset(ds, out)
    write_manifest(out, argv, vars(args), args.seed)
    return 0


def cmd_madogram(args, argv):
    ds = load_dataset(args.data)
    pe = madogram(ds)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_pairs_csv(pe, args.out, ds.site_ids)
    write_manifest(_out_dir(args.out), argv, vars(args), None)
    return 0


def cmd_extremal(args, argv):
    h = np.arange(0.0, args.h_max + 1e-9, args.h_step)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve", "spacing", "alpha", "h", "theta"])
        for a in args.alpha:
            for d in args.spacings:
                th = extremal_curve(h, d, a, args.tau)
                for hh, t in zip(h, th):
                    w.writerow(["knots", d, a, repr(float(hh)), repr(float(t))])
        for hh in h:
            t = gevp_extremal_coeff([0.0, 0.0], [0.0, hh], args.tau)
            w.writerow(["gevp", "", "", repr(float(hh)), repr(float(t))])
    write_manifest(_out_dir(args.out), argv, vars(args), None)
    return 0


FIT_KEYS = {
    "n_iters": int, "burn_in": int, "n_chains": int, "thin": int, "seed": int, "alpha_fixed": float,
    "tau_fixed": float, "knots_grid": _grid, "knots": str, "covariates": _names, "constant": _names,
    "spike": _names, "nu": str, "jobs": int,
}


def _fit_options(args):
    opts = {"n_iters": 25000, "burn_in": 10000, "n_chains": 2, "thin": 5, "seed": 0, "alpha_fixed": None,
            "tau_fixed": None, "knots_grid": None, "knots": None, "covariates": None, "constant": [],
            "spike": [], "nu": "0.5", "jobs": 1}
    if args.config:
        for k, v in read_config(args.config).items():
            if k not in FIT_KEYS:
                raise ParseError(f"{args.config}: unknown key {k!r}")
            try:
                opts[k] = FIT_KEYS[k](v)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ParseError(f"{args.config}: bad value for {k!r}: {exc}") from None
    for k in FIT_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            opts[k] = v
    return opts


def build_fit(opts, ds: Dataset):
    unknown = set(opts["constant"]) | set(opts["spike"])
    unknown -= set(FIELDS)
    if unknown:
        raise InputError(f"unknown GEV field(s) {sorted(unknown)}; expected {FIELDS}")
    covs = opts["covariates"] if opts["covariates"] is not None else list(ds.covariate_names)
    missing = set(covs) - set(ds.covariate_names)
    if missing:
        raise InputError(f"covariates not in the sites file: {sorted(missing)}")
    nu = None if opts["nu"] == "free" else float(opts["nu"])
    fields = {}
    for f in FIELDS:
        if f in opts["constant"]:
            fields[f] = FieldSpec("constant", prior_sd=0.25 if f == "xi" else 10.0)
        else:
            fields[f] = FieldSpec("gp", tuple(covs), nu=nu, spike=f in opts["spike"])
    knots = load_knots_csv(opts["knots"]) if opts["knots"] else (
        make_grid(*opts["knots_grid"]) if opts["knots_grid"] else None)
    spec = ModelSpec(knots=knots, fields=fields, alpha_fixed=opts["alpha_fixed"], tau_fixed=opts["tau_fixed"])
    config = FitConfig(n_iters=opts["n_iters"], burn_in=opts["burn_in"], n_chains=opts["n_chains"],
                       thin=opts["thin"], seed=opts["seed"])
    return spec, config


def cmd_fit(args, argv):
    ds = load_dataset(args.data)
    opts = _fit_options(args)
    spec, config = build_fit(opts, ds)
    post = fit(ds, spec, config, n_jobs=opts["jobs"])
    out = save_samples(post, args.out)
    data_dir = Path(args.data)
    write_manifest(out, argv, opts, opts["seed"],
                   data_sha256=file_digest(data_dir / "sites.csv", data_dir / "maxima.csv"))
    for c, rates in post.acceptance.items():
        log.info("chain %d acceptance: %s", c, ", ".join(f"{k}={v:.2f}" for k, v in rates.items()))
    return 0


def cmd_predict(args, argv):
    post = load_samples(args.samples)
    ids, coords, cov, names = _read_sites(args.sites)
    if names and post.covariate_names:
        order = [names.index(nm) for nm in post.covariate_names if nm in names]
        cov = cov[:, order]
    rng = np.random.default_rng(args.seed)
    flds = predict_fields(post, coords, rng, cov if names else None)
    draws = posterior_predict(post, coords, rng, fields=flds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_predictive_csv(draws, out / "predictive.csv", ids, post.years)
    with open(out / "return_levels.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site_id", "x", "y", "q", "mean", "sd", "lower", "upper"])
        for q in args.quantiles:
            rl = quantile_arr(q, flds["mu"], np.exp(flds["gamma"]), flds["xi"])
            lo, hi = np.quantile(rl, [0.025, 0.975], axis=0)
            for i, sid in enumerate(ids):
                w.writerow([sid, repr(float(coords[i, 0])), repr(float(coords[i, 1])), q,
                            repr(float(rl[:, i].mean())), repr(float(rl[:, i].std())),
                            repr(float(lo[i])), repr(float(hi[i]))])
    write_manifest(out, argv, vars(args), args.seed)
    return 0


def cmd_compare(args, argv):
    hist, fut = load_samples(args.hist), load_samples(args.fut)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.variance_ratio:
        ratios = variance_ratio(hist, fut)
        write_ratio_csv(ratios, out / "variance_ratio.csv", hist.site_ids, hist.coords)
    else:
        summary = compare_scenarios(hist, fut, args.quantiles)
        write_summary_csv(summary, out / "summary.csv")
    write_manifest(out, argv, vars(args), None)
    return 0


def cmd_simstudy(args, argv):
    design = DESIGNS[args.design]
    if args.full_scale:
        M, n_iters, burn_in = 50, 25000, 10000
    else:
        M, n_iters, burn_in = 10, 6000, 2000
    M = args.replicates or M
    n_iters = args.iters or n_iters
    burn_in = args.burn_in if args.burn_in is not None else burn_in
    grids = design.fit_grids
    if args.grids:
        lo, hi = design.fit_grids[0][1:]
        grids = [(m, lo, hi) for m in args.grids]
    rows = run_design(design, M=M, seed=args.seed, grids=grids, n_iters=n_iters, burn_in=burn_in,
                      n_chains=args.chains, n_jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["design", "replicate", "m", "L", "spacing", "param", "rmse", "coverage", "estimate", "truth",
            "status", "min_accept", "max_accept"]
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    summ = summarize(rows)
    with open(out / "summary.csv", "w", newline="") as fh:
        if summ:
            w = csv.DictWriter(fh, fieldnames=list(summ[0]))
            w.writeheader()
            w.writerows(summ)
    cfg = {**vars(args), "M": M, "n_iters": n_iters, "burn_in": burn_in, "grids": grids}
    write_manifest(out, argv, cfg, args.seed)
    return 0


def cmd_rerun(args, argv):
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    cmd = manifest["command"]
    if cmd and cmd[0] == "rerun":
        raise InputError("manifest records a rerun")
    return main(cmd)


# -- parser -----------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="hmaxstable", description="Hierarchical max-stable model for spatial block maxima.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a dataset or a gallery of single-year fields")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--alpha", type=_floats)
    s.add_argument("--tau", type=float, default=1.0)
    s.add_argument("--mu", type=float, default=0.0)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--xi", type=float, default=0.1)
    s.add_argument("--years", type=int, default=10)
    s.add_argument("--sites", help="site_id,x,y[,covariates] csv")
    s.add_argument("--site-grid", type=_grid, default=(7, 0.0, 6.0))
    s.add_argument("--knots")
    s.add_argument("--knots-grid", type=_grid)
    s.add_argument("--gallery", action="store_true", help="one-year raster per alpha, knots at every cell")
    s.add_argument("--gallery-size", type=int, default=50)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("madogram", help="pairwise empirical extremal coefficients")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_madogram)

    s = sub.add_parser("extremal", help="model extremal coefficient against distance")
    s.add_argument("--tau", type=float, default=1.0)
    s.add_argument("--spacings", type=_floats, default=[0.5, 1.0, 1.25, 2.0])
    s.add_argument("--alpha", type=_floats, default=[0.2, 0.5, 0.8])
    s.add_argument("--h-max", type=float, default=6.0)
    s.add_argument("--h-step", type=float, default=0.05)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extremal)

    s = sub.add_parser("fit", help="run the sampler and write a sample store")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="key = value file; flags override it")
    s.add_argument("--iters", dest="n_iters", type=int)
    s.add_argument("--burn-in", type=int)
    s.add_argument("--chains", dest="n_chains", type=int)
    s.add_argument("--thin", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--alpha-fixed", type=float)
    s.add_argument("--tau-fixed", type=float)
    s.add_argument("--knots")
    s.add_argument("--knots-grid", type=_grid)
    s.add_argument("--covariates", type=_names, help="covariates in the GP means (default: all)")
    s.add_argument("--constant", type=_names, help="GEV fields held constant over space")
    s.add_argument("--spike", type=_names, help="GP fields whose variance gets a spike-slab prior")
    s.add_argument("--nu", help="Matern smoothness, or 'free' to sample it")
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="posterior predictive draws and return levels at new sites")
    s.add_argument("--samples", required=True)
    s.add_argument("--sites", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--quantiles", type=_floats, default=[0.1, 0.5, 0.95])
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("compare", help="paired change between two sample stores")
    s.add_argument("--hist", required=True)
    s.add_argument("--fut", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--quantiles", type=_floats, default=[0.1, 0.5, 0.95])
    s.add_argument("--variance-ratio", action="store_true",
                   help="posterior variance of --hist over --fut instead of the change")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("simstudy", help="simulation study for one design")
    s.add_argument("--design", type=int, choices=sorted(DESIGNS), required=True)
    s.add_argument("--replicates", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--iters", type=int)
    s.add_argument("--burn-in", type=int)
    s.add_argument("--chains", type=int, default=1)
    s.add_argument("--grids", type=lambda t: [int(v) for v in _floats(t)], help="knots per side, e.g. 5,9,12")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--full-scale", action="store_true", help="50 replicates of 25000 iterations")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simstudy)

    s = sub.add_parser("rerun", help="repeat a run from its manifest")
    s.add_argument("manifest")
    s.set_defaults(func=cmd_rerun)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cmd_argv = [a for a in argv if a not in ("-v", "--verbose")]
    try:
        return args.func(args, cmd_argv)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InitializationError, NumericalError, RuntimeError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
