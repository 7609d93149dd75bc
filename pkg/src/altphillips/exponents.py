"""Scaling algebra of the Alt-Phillips problem.

For an exponent gamma in (-2, 2) the problem carries

    beta   = 2 / (2 - gamma)          homogeneity of minimizers
    s      = beta * gamma             weight exponent of the w-formulation
    c_beta = beta ** (-beta)          constant of the one-dimensional solution

and the change of unknown w = beta * u**(1/beta) turns the singular potential
into the weight w**s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "DomainError",
    "ExponentPack",
    "DimensionWindow",
    "make_exponents",
    "u_to_w",
    "w_to_u",
    "one_dim_solution",
    "dimension_window",
    "d7_gamma_threshold",
]


@dataclass(frozen=True)
class ExponentPack:
    gamma: float
    beta: float
    s: float
    c_beta: float

    def identity_defects(self) -> dict:
        """Absolute defects of the algebraic identities tying the four numbers together."""
        g, b, s, c = self.gamma, self.beta, self.s, self.c_beta
        return {
            "one_plus_s": abs((1.0 + s) * (2.0 - g) - (2.0 + g)),
            "c_beta": abs(c - ((2.0 - g) / 2.0) ** (2.0 / (2.0 - g))),
            "s_over_beta": abs(s - b * g),
        }


def make_exponents(gamma: float) -> ExponentPack:
    """Build the exponent pack for gamma in the open interval (-2, 2)."""
    gamma = float(gamma)
    if not (-2.0 < gamma < 2.0) or math.isnan(gamma):
        raise DomainError(f"gamma={gamma!r} outside the admissible interval (-2, 2)")
    beta = 2.0 / (2.0 - gamma)
    # s = 2*gamma/(2-gamma) evaluated directly; beta*gamma loses a digit near gamma -> 2
    s = 2.0 * gamma / (2.0 - gamma)
    c_beta = beta ** (-beta)
    return ExponentPack(gamma=gamma, beta=beta, s=s, c_beta=c_beta)


def _check_nonneg(x, name):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError(f"{name} must be non-negative")
    return arr


def u_to_w(u_value, pack: ExponentPack):
    """w = beta * u**(1/beta); accepts scalars or arrays, u = 0 maps to 0."""
    u = _check_nonneg(u_value, "u")
    w = pack.beta * np.power(u, 1.0 / pack.beta)
    return float(w) if w.ndim == 0 else w


def w_to_u(w_value, pack: ExponentPack):
    """Inverse of u_to_w: u = (w / beta)**beta."""
    w = _check_nonneg(w_value, "w")
    u = np.power(w / pack.beta, pack.beta)
    return float(u) if u.ndim == 0 else u


def one_dim_solution(t, pack: ExponentPack):
    """Return (u0, w0) = (c_beta * (t+)**beta, t+) for scalar or array t."""
    tp = np.maximum(np.asarray(t, dtype=float), 0.0)
    u0 = pack.c_beta * np.power(tp, pack.beta)
    if tp.ndim == 0:
        return float(u0), float(tp)
    return u0, tp


@dataclass(frozen=True)
class DimensionWindow:
    """Open interval (d_low, d_high) of dimensions where the axial argument closes."""

    s: float
    d_low: float
    d_high: float

    def admits(self, d: float) -> bool:
        return self.d_low < d < self.d_high

    @property
    def width(self) -> float:
        return self.d_high - self.d_low


def dimension_window(s: float) -> DimensionWindow:
    """Window 2 + (1 -/+ sqrt(1-s))**2 for the weight exponent s <= 1."""
    s = float(s)
    if s > 1.0 or math.isnan(s):
        raise DomainError(f"s={s!r} > 1: the window needs sqrt(1 - s) to be real")
    r = math.sqrt(1.0 - s)
    return DimensionWindow(s=s, d_low=2.0 + (1.0 - r) ** 2, d_high=2.0 + (1.0 + r) ** 2)


def d7_gamma_threshold() -> float:
    """gamma below which the window contains d = 7, i.e. s(gamma) = 2*sqrt(5) - 5."""
    return (10.0 - 8.0 * math.sqrt(5.0)) / 11.0
