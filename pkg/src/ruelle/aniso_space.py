"""Anisotropic Fourier weights and the truncated frequency basis.

Weights are always carried as logarithms: ratios ``C_{n1} / C_{n2}`` over a
modest truncation already span many orders of magnitude, and only the product
with the decaying oscillatory integral is of moderate size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import HyperbolicAutomorphism

TWO_PI = 2.0 * math.pi
DEFAULT_C = 0.05


@dataclass(frozen=True)
class AnisotropicWeight:
    """``n -> C_n = exp(-2 pi c (||n^+|| - ||n^-||))`` for the splitting of ``M^T``."""

    m: HyperbolicAutomorphism
    c: float = DEFAULT_C
    swapped: bool = False  # exchange the roles of the two cones

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("weight parameter c must be > 0")

    def check_strip(self, r: float) -> None:
        if not self.c < r:
            raise ValueError(f"c must be < r (c = {self.c}, r = {r})")

    def log_weight(self, n) -> np.ndarray | float:
        plus, minus = self.m.split_norms(n)
        s = plus - minus
        if self.swapped:
            s = -s
        out = -TWO_PI * self.c * s
        return float(out) if np.ndim(out) == 0 else out

    def weight(self, n):
        return np.exp(self.log_weight(n))

    @property
    def kappa(self) -> float:
        """``||P^-||`` as an operator from (R^2, l1) to (R^2, l2): the largest column norm."""
        p = self.m.p_plus if self.swapped else self.m.p_minus
        return float(np.hypot(p[0], p[1]).max())

    def embedding_margin(self, n) -> np.ndarray | float:
        """``kappa * ||n||_1 + (||n^+|| - ||n^-||)``, nonnegative for every ``n``.

        This is the Hardy-to-L2 embedding inequality restated for the Euclidean
        projection norms, with ``kappa`` absorbing the norm equivalence.
        """
        n = np.asarray(n, dtype=float)
        plus, minus = self.m.split_norms(n)
        s = minus - plus if self.swapped else plus - minus
        out = self.kappa * np.abs(n).sum(axis=-1) + s
        return float(out) if np.ndim(out) == 0 else out


def hardy_log_weight(n, r: float):
    """Log of the Hardy-space normalisation ``exp(-2 pi r ||n||_1)``."""
    if not r > 0:
        raise ValueError("r must be > 0")
    out = -TWO_PI * r * np.abs(np.asarray(n, dtype=float)).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class BasisIndex:
    """Frequencies ``|n|_inf <= N`` ordered by ``(|n|_inf, n1, n2)``; index 0 is ``n = 0``."""

    radius: int
    freqs: np.ndarray = field(init=False, repr=False)
    _table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        N = int(self.radius)
        if N < 0:
            raise ValueError("truncation radius must be >= 0")
        r = np.arange(-N, N + 1)
        n1, n2 = np.meshgrid(r, r, indexing="ij")
        n1, n2 = n1.ravel(), n2.ravel()
        shell = np.maximum(np.abs(n1), np.abs(n2))
        order = np.lexsort((n2, n1, shell))
        freqs = np.column_stack([n1[order], n2[order]]).astype(np.int64)
        table = np.empty((2 * N + 1, 2 * N + 1), dtype=np.int64)
        table[freqs[:, 0] + N, freqs[:, 1] + N] = np.arange(len(freqs))
        freqs.setflags(write=False)
        table.setflags(write=False)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "_table", table)

    def __len__(self) -> int:
        return len(self.freqs)

    def contains(self, n) -> np.ndarray | bool:
        n = np.asarray(n)
        out = (np.abs(n) <= self.radius).all(axis=-1)
        return bool(out) if np.ndim(out) == 0 else out

    def index_of(self, n):
        """Matrix position of frequency ``n`` (vectorised); raises ``KeyError`` outside the box."""
        n = np.asarray(n, dtype=np.int64)
        if not np.all(self.contains(n)):
            raise KeyError(f"frequency outside |n|_inf <= {self.radius}")
        out = self._table[n[..., 0] + self.radius, n[..., 1] + self.radius]
        return int(out) if np.ndim(out) == 0 else out
