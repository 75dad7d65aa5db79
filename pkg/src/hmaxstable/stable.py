"""Positive stable random effects through an auxiliary-variable representation.

A positive stable variable ``A ~ PS(alpha)`` has Laplace transform
``E exp(-tA) = exp(-t**alpha)`` but no closed-form density.  Pairing it with
an auxiliary ``B in (0, 1)`` gives the joint density

    p(A, B | alpha) = alpha / (1 - alpha) * A**(-1/(1-alpha))
                      * c(B) * exp(-c(B) * A**(-alpha/(1-alpha)))

whose A-marginal is ``PS(alpha)``.  Given B, ``A**(-alpha/(1-alpha))`` is
exponential with rate ``c(B)``, which is how :func:`ps_sample` draws exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

B_CLAMP = 1e-12


@dataclass(frozen=True)
class StablePair:
    """A positive stable draw ``A`` with its auxiliary variable ``B``.

    Fields may be scalars or equally shaped arrays.
    """

    A: float | np.ndarray
    B: float | np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A)
        B = np.asarray(self.B)
        if np.any(~(A > 0)):
            raise DomainError("StablePair requires A > 0")
        if np.any(~((B > 0) & (B < 1))):
            raise DomainError("StablePair requires 0 < B < 1")


def _check_alpha_open(alpha):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")


def log_c_arr(B, alpha):
    """``log c(B)`` with B clamped away from the endpoints; no validation."""
    B = np.clip(np.asarray(B, dtype=float), B_CLAMP, 1.0 - B_CLAMP)
    pb = np.pi * B
    sa = np.log(np.sin(alpha * pb))
    return (sa - np.log(np.sin(pb))) / (1.0 - alpha) + np.log(np.sin((1.0 - alpha) * pb)) - sa


def ps_c(B, alpha):
    """The auxiliary-variable rate ``c(B)``.

    ``[sin(alpha pi B) / sin(pi B)] ** (1/(1-alpha)) * sin((1-alpha) pi B) / sin(alpha pi B)``
    """
    _check_alpha_open(alpha)
    Ba = np.asarray(B, dtype=float)
    if np.any(~((Ba > 0) & (Ba < 1))):
        raise DomainError("B must lie in (0, 1)")
    out = np.exp(log_c_arr(Ba, alpha))
    return float(out) if out.ndim == 0 else out


def joint_logpdf_arr(A, B, alpha):
    """Elementwise log p(A, B | alpha) without validation (A may be an array)."""
    log_a = np.log(A)
    log_c = log_c_arr(B, alpha)
    r = 1.0 / (1.0 - alpha)
    with np.errstate(over="ignore"):
        tail = np.exp(log_c - alpha * r * log_a)
    return np.log(alpha) + np.log(r) - r * log_a + log_c - tail


def ps_joint_logpdf(pair: StablePair, alpha):
    """Log joint density of an auxiliary pair; ``alpha`` must be in (0, 1)."""
    _check_alpha_open(alpha)
    out = joint_logpdf_arr(np.asarray(pair.A, dtype=float), pair.B, alpha)
    return float(out) if np.ndim(out) == 0 else out


def _open_uniform(rng, size):
    u = rng.random(size)
    return np.where(u > 0, u, 2.0**-54)


def sample_arr(rng, alpha, size):
    """Return ``(A, B)`` arrays of ``PS(alpha)`` pairs (alpha in (0, 1])."""
    B = _open_uniform(rng, size)
    if alpha == 1.0:
        # degenerate limit: point mass at one
        return (np.ones(size) if size is not None else 1.0), B
    E = rng.standard_exponential(size)
    log_w = np.log(E) - log_c_arr(B, alpha)
    with np.errstate(over="ignore"):
        A = np.exp(-(1.0 - alpha) / alpha * log_w)
    return A, B


def ps_sample(rng: np.random.Generator, alpha, size=None) -> StablePair:
    """Draw ``PS(alpha)`` variables together with their auxiliary ``B``.

    ``alpha = 1`` returns ``A = 1`` exactly.  Very small ``alpha`` can
    overflow ``A`` to ``inf``; that is left to propagate.
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha!r}")
    A, B = sample_arr(rng, alpha, size)
    if size is None:
        return StablePair(float(A), float(B))
    return StablePair(A, B)


def laplace_transform(t, alpha):
    """``exp(-t**alpha)``, the PS(alpha) Laplace transform."""
    return np.exp(-np.asarray(t, dtype=float) ** alpha)
