"""On-disk posterior sample stores.

A store is a directory of CSV tables plus ``store.json``:

``scalars.csv``     chain, iteration and one column per scalar parameter
``fields.csv``      draw, chain, iteration, site_id, mu, gamma, xi
``effects.csv``     draw, year index, then one column per knot (optional)
``sites.csv``       site_id, x, y and covariates
``knots.csv``       knot_id, x, y
``acceptance.csv``  chain, block, rate

Floats are written with 17 significant digits so a reload is exact.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .basis import KnotGrid, load_knots_csv, save_knots_csv
from .errors import ParseError
from .mcmc import FIELDS, PosteriorSamples

FMT = "%.17g"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (frozenset, set)):
        return sorted(obj)
    return obj


def save_samples(samples: PosteriorSamples, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = list(samples.scalars)
    D = samples.n_draws

    with open(d / "scalars.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "iteration", *names])
        for k in range(D):
            w.writerow([int(samples.chain[k]), int(samples.iteration[k]),
                        *(FMT % samples.scalars[nm][k] for nm in names)])

    with open(d / "fields.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["draw", "chain", "iteration", "site_id", *FIELDS])
        for k in range(D):
            c, it = int(samples.chain[k]), int(samples.iteration[k])
            for i, sid in enumerate(samples.site_ids):
                w.writerow([k, c, it, sid, *(FMT % samples.fields[f][k, i] for f in FIELDS)])

    if samples.A is not None:
        _, L, T = samples.A.shape
        with open(d / "effects.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["draw", "year_index", *(f"k{l}" for l in range(L))])
            for k in range(D):
                for t in range(T):
                    w.writerow([k, t, *(FMT % v for v in samples.A[k, :, t])])

    with open(d / "sites.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site_id", "x", "y", *samples.covariate_names])
        cov = samples.covariates if samples.covariates is not None else np.zeros((len(samples.site_ids), 0))
        for i, sid in enumerate(samples.site_ids):
            w.writerow([sid, FMT % samples.coords[i, 0], FMT % samples.coords[i, 1], *(FMT % v for v in cov[i])])

    save_knots_csv(KnotGrid(samples.knots), d / "knots.csv")

    with open(d / "acceptance.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "block", "rate"])
        for c, rates in samples.acceptance.items():
            for b, r in rates.items():
                w.writerow([c, b, FMT % r])

    info = {
        "format": "hmaxstable-samples/1",
        "n_draws": D,
        "scalars": names,
        "years": list(samples.years),
        "has_effects": samples.A is not None,
        "designs": {f: {"covariates": list(v[0]), "nu": v[1]} for f, v in samples.designs.items()},
        "meta": _jsonable(samples.meta),
    }
    with open(d / "store.json", "w") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
    return d


def _read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    return rows[0], rows[1:]


def load_samples(directory) -> PosteriorSamples:
    d = Path(directory)
    try:
        with open(d / "store.json") as fh:
            info = json.load(fh)
    except FileNotFoundError:
        raise ParseError(f"{d}: not a sample store (store.json missing)") from None
    if info.get("format") != "hmaxstable-samples/1":
        raise ParseError(f"{d}/store.json: unknown format {info.get('format')!r}")

    head, rows = _read_table(d / "scalars.csv")
    chain = np.array([int(r[0]) for r in rows], dtype=int)
    iteration = np.array([int(r[1]) for r in rows], dtype=int)
    vals = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(len(rows), len(head) - 2)
    scalars = {nm: vals[:, j] for j, nm in enumerate(head[2:])}
    D = len(rows)

    head, rows = _read_table(d / "sites.csv")
    site_ids = [r[0] for r in rows]
    coords = np.array([[float(r[1]), float(r[2])] for r in rows]).reshape(-1, 2)
    covariate_names = head[3:]
    covariates = np.array([[float(v) for v in r[3:]] for r in rows]).reshape(len(rows), len(covariate_names))

    head, rows = _read_table(d / "fields.csv")
    if head != ["draw", "chain", "iteration", "site_id", *FIELDS]:
        raise ParseError(f"{d}/fields.csv:1: unexpected header")
    n = len(site_ids)
    col = {sid: i for i, sid in enumerate(site_ids)}
    fields = {f: np.empty((D, n)) for f in FIELDS}
    for lineno, r in enumerate(rows, start=2):
        k = int(r[0])
        if not 0 <= k < D or r[3] not in col:
            raise ParseError(f"{d}/fields.csv:{lineno}: unknown draw or site")
        for j, f in enumerate(FIELDS):
            fields[f][k, col[r[3]]] = float(r[4 + j])

    A = None
    if info.get("has_effects"):
        head, rows = _read_table(d / "effects.csv")
        L = len(head) - 2
        T = len(info["years"])
        A = np.empty((D, L, T))
        for r in rows:
            A[int(r[0]), :, int(r[1])] = [float(v) for v in r[2:]]

    knots = load_knots_csv(d / "knots.csv").knots

    _, rows = _read_table(d / "acceptance.csv")
    acceptance = {}
    for r in rows:
        acceptance.setdefault(int(r[0]), {})[r[1]] = float(r[2])

    designs = {f: (v["covariates"], v["nu"]) for f, v in info["designs"].items()}
    return PosteriorSamples(chain=chain, iteration=iteration, scalars=scalars, fields=fields, A=A,
                            acceptance=acceptance, site_ids=site_ids, coords=coords, knots=knots,
                            years=info["years"], designs=designs, covariates=covariates,
                            covariate_names=covariate_names, meta=info["meta"])
