"""Block-maxima datasets and their CSV representation.

A dataset lives in a directory holding two files:

``sites.csv``
    ``site_id,x,y`` followed by any number of numeric covariate columns
    (e.g. ``elev``).
``maxima.csv``
    ``site_id,year,value``, one row per site and year.  Every site must have
    a value for every year that appears in the file.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError

SITES_FILE = "sites.csv"
MAXIMA_FILE = "maxima.csv"


@dataclass
class Dataset:
    site_ids: list[str]
    coords: np.ndarray  # (n, 2)
    years: list[int]
    Y: np.ndarray  # (T, n)
    covariates: np.ndarray = None  # (n, p)
    covariate_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.site_ids = [str(s) for s in self.site_ids]
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        self.years = [int(y) for y in self.years]
        n = len(self.site_ids)
        if self.covariates is None:
            self.covariates = np.zeros((n, 0))
        self.covariates = np.asarray(self.covariates, dtype=float).reshape(n, -1)
        problems = validate(self)
        if problems:
            raise ParseError("; ".join(problems))

    @property
    def n(self) -> int:
        return len(self.site_ids)

    @property
    def T(self) -> int:
        return len(self.years)

    def design_matrix(self, names=None) -> np.ndarray:
        """Intercept column followed by the named covariates (all if ``None``)."""
        names = self.covariate_names if names is None else list(names)
        cols = [np.ones(self.n)]
        for nm in names:
            cols.append(self.covariates[:, self.covariate_names.index(nm)])
        return np.column_stack(cols)


def validate(ds: Dataset) -> list[str]:
    """Human-readable list of problems; empty when the dataset is usable."""
    out = []
    n = len(ds.site_ids)
    if len(set(ds.site_ids)) != n:
        seen = set()
        dups = sorted({s for s in ds.site_ids if s in seen or seen.add(s)})
        out.append(f"duplicate site ids: {dups[:5]}")
    if ds.coords.shape != (n, 2):
        out.append(f"coords shape {ds.coords.shape} != ({n}, 2)")
    if ds.Y.shape != (len(ds.years), n):
        out.append(f"Y shape {ds.Y.shape} != ({len(ds.years)}, {n})")
    if any(y < 0 for y in ds.years):
        out.append("negative year label")
    if len(set(ds.years)) != len(ds.years):
        out.append("duplicate years")
    if not np.all(np.isfinite(ds.coords)):
        out.append("non-finite site coordinates")
    if ds.Y.size and not np.all(np.isfinite(ds.Y)):
        t, i = np.argwhere(~np.isfinite(ds.Y))[0]
        out.append(f"non-finite value at site {ds.site_ids[i]!r}, year {ds.years[t]}")
    if len(ds.covariate_names) != ds.covariates.shape[1]:
        out.append("covariate names do not match covariate columns")
    return out


def save_dataset(ds: Dataset, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / SITES_FILE, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site_id", "x", "y", *ds.covariate_names])
        for i, sid in enumerate(ds.site_ids):
            w.writerow([sid, repr(float(ds.coords[i, 0])), repr(float(ds.coords[i, 1])),
                        *(repr(float(v)) for v in ds.covariates[i])])
    with open(d / MAXIMA_FILE, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site_id", "year", "value"])
        for i, sid in enumerate(ds.site_ids):
            for t, yr in enumerate(ds.years):
                w.writerow([sid, yr, repr(float(ds.Y[t, i]))])


def _num(text, path, lineno, col):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"{path}:{lineno}: column {col!r} is not numeric: {text!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"{path}:{lineno}: column {col!r} is not finite")
    return v


def load_dataset(path, maxima_path=None) -> Dataset:
    """Read a dataset directory (or explicit ``sites`` and ``maxima`` paths).

    Raises :class:`ParseError` naming the offending file and line for schema
    violations, duplicate sites or (site, year) pairs, and missing cells.
    """
    path = Path(path)
    if maxima_path is None:
        sites_path, maxima_path = path / SITES_FILE, path / MAXIMA_FILE
    else:
        sites_path, maxima_path = path, Path(maxima_path)

    with open(sites_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["site_id", "x", "y"]:
            raise ParseError(f"{sites_path}:1: header must start with site_id,x,y")
        cov_names = header[3:]
        ids, coords, covs, index = [], [], [], {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{sites_path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            sid = row[0]
            if sid in index:
                raise ParseError(f"{sites_path}:{lineno}: duplicate site_id {sid!r}")
            index[sid] = len(ids)
            ids.append(sid)
            coords.append((_num(row[1], sites_path, lineno, "x"), _num(row[2], sites_path, lineno, "y")))
            covs.append([_num(v, sites_path, lineno, c) for v, c in zip(row[3:], cov_names)])

    cells = {}
    with open(maxima_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["site_id", "year", "value"]:
            raise ParseError(f"{maxima_path}:1: header must be site_id,year,value")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"{maxima_path}:{lineno}: expected 3 fields, got {len(row)}")
            sid, yr_text, val = row
            if sid not in index:
                raise ParseError(f"{maxima_path}:{lineno}: unknown site_id {sid!r}")
            try:
                yr = int(yr_text)
            except ValueError:
                raise ParseError(f"{maxima_path}:{lineno}: year {yr_text!r} is not an integer") from None
            if yr < 0:
                raise ParseError(f"{maxima_path}:{lineno}: negative year {yr}")
            key = (index[sid], yr)
            if key in cells:
                raise ParseError(f"{maxima_path}:{lineno}: duplicate entry for site {sid!r}, year {yr}")
            cells[key] = _num(val, maxima_path, lineno, "value")

    years = sorted({yr for _, yr in cells})
    col = {yr: t for t, yr in enumerate(years)}
    Y = np.full((len(years), len(ids)), np.nan)
    for (i, yr), v in cells.items():
        Y[col[yr], i] = v
    missing = np.argwhere(np.isnan(Y))
    if missing.size:
        t, i = missing[0]
        raise ParseError(
            f"{maxima_path}: missing value for site {ids[i]!r}, year {years[t]} "
            f"({len(missing)} missing cell(s) in total)"
        )
    return Dataset(ids, np.array(coords).reshape(-1, 2), years, Y,
                   np.array(covs).reshape(len(ids), len(cov_names)), cov_names)
