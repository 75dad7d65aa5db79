"""Gaussian kernel basis on a set of spatial knots.

Weights are the Gaussian kernels normalised to sum to one at every location,
computed in log space so that locations far from all knots still get a valid
simplex.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .errors import DegenerateLocationError, ParameterError, ParseError

#: Nearest-knot distance, in bandwidths, beyond which weights are refused.
FAR_FIELD_BANDWIDTHS = 38.0


@dataclass(frozen=True)
class KnotGrid:
    """Knot locations ``v_1..v_L``.

    ``m`` and ``bounds`` are set for regular ``m x m`` grids and ``None`` for
    knots placed at arbitrary points (e.g. the data sites).
    """

    knots: np.ndarray
    m: int | None = None
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        k = np.atleast_2d(np.asarray(self.knots, dtype=float))
        if k.ndim != 2 or k.shape[1] != 2:
            raise ParameterError("knots must be an (L, 2) array")
        object.__setattr__(self, "knots", k)

    @property
    def L(self) -> int:
        return self.knots.shape[0]

    @property
    def spacing(self) -> float:
        """Grid spacing; median nearest-neighbour distance for irregular knots."""
        if self.m is not None and self.bounds is not None:
            if self.m < 2:
                return np.inf
            lo, hi = self.bounds
            return (hi - lo) / (self.m - 1)
        if self.L < 2:
            return np.inf
        d = cdist(self.knots, self.knots)
        np.fill_diagonal(d, np.inf)
        return float(np.median(d.min(axis=1)))


def make_grid(m: int, l: float, u: float) -> KnotGrid:
    """Regular ``m x m`` grid on ``[l, u]^2`` including both endpoints."""
    if int(m) != m or m < 1:
        raise ParameterError("m must be a positive integer")
    if not l < u:
        raise ParameterError("grid bounds need l < u")
    pts = np.linspace(l, u, int(m)) if m > 1 else np.array([(l + u) / 2.0])
    xx, yy = np.meshgrid(pts, pts)
    return KnotGrid(np.column_stack([xx.ravel(), yy.ravel()]), m=int(m), bounds=(float(l), float(u)))


def knots_at(points) -> KnotGrid:
    """Knots placed at the given points (one per data site, say)."""
    return KnotGrid(np.asarray(points, dtype=float))


@dataclass(frozen=True)
class KernelBasis:
    grid: KnotGrid
    tau: float

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ParameterError(f"bandwidth tau must be > 0, got {self.tau!r}")

    @property
    def L(self) -> int:
        return self.grid.L

    def with_tau(self, tau) -> "KernelBasis":
        return KernelBasis(self.grid, float(tau))


def gaussian_kernel(s, v, tau):
    """Isotropic bivariate normal density with standard deviation ``tau``."""
    if not tau > 0:
        raise ParameterError("tau must be > 0")
    d2 = np.sum((np.asarray(s, dtype=float) - np.asarray(v, dtype=float)) ** 2, axis=-1)
    return np.exp(-d2 / (2.0 * tau**2)) / (2.0 * np.pi * tau**2)


def log_weights_matrix(sites, knots, tau, check=True):
    """``log w_l(s_i)`` as an ``(n, L)`` array.

    The normalising constant of the kernel cancels, so only squared distances
    enter.
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    d2 = cdist(sites, knots, "sqeuclidean")
    if check:
        nearest = np.sqrt(d2.min(axis=1))
        bad = np.flatnonzero(nearest > FAR_FIELD_BANDWIDTHS * tau)
        if bad.size:
            raise DegenerateLocationError(
                f"location {sites[bad[0]].tolist()} is {nearest[bad[0]] / tau:.1f} bandwidths "
                "from the nearest knot"
            )
    logk = -d2 / (2.0 * tau**2)
    return logk - logsumexp(logk, axis=1, keepdims=True)


def weights(s, basis: KernelBasis):
    """Normalised kernel weights.

    A single coordinate gives a length-L vector; an ``(n, 2)`` array gives an
    ``(n, L)`` matrix whose rows sum to one.
    """
    s = np.asarray(s, dtype=float)
    w = np.exp(log_weights_matrix(s, basis.grid.knots, basis.tau))
    return w[0] if s.ndim == 1 else w


class SpacingAdvice(NamedTuple):
    status: str  # "ok" or "warn"
    ratio: float  # grid spacing / bandwidth


def check_spacing(basis: KernelBasis) -> SpacingAdvice:
    """Rule of thumb: knot spacing should not exceed the kernel bandwidth."""
    ratio = basis.grid.spacing / basis.tau
    return SpacingAdvice("ok" if ratio <= 1.0 + 1e-12 else "warn", float(ratio))


def save_knots_csv(grid: KnotGrid, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["knot_id", "x", "y"])
        for i, (x, y) in enumerate(grid.knots):
            w.writerow([i, repr(float(x)), repr(float(y))])


def load_knots_csv(path) -> KnotGrid:
    rows = []
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"knot_id", "x", "y"} <= set(reader.fieldnames):
            raise ParseError(f"{path}: expected columns knot_id,x,y")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append((float(row["x"]), float(row["y"])))
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: bad knot coordinate") from exc
    return KnotGrid(np.array(rows))
