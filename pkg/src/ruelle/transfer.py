"""Transfer operator as the transpose of the Koopman matrix, and the SRB functional.

The fixed left eigenvector ``w`` of the Koopman matrix (``w^T K = w^T``) is the
list of Fourier moments ``w_n = mu(exp(2 pi i n.x))`` of the invariant measure
selected by the simple eigenvalue 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .analytic_maps import PerturbedMap
from .aniso_space import BasisIndex
from .errors import EigenNoConverge, EigenvalueOneNotSimple
from .koopman import KoopmanMatrix, complex_left_vector, real_form, spectrum

TWO_PI = 2.0 * math.pi
GAP_TOL = 1e-6


def transfer_spectrum(K: KoopmanMatrix) -> np.ndarray:
    """Sorted eigenvalues of :func:`transfer_matrix`."""
    return spectrum(transfer_matrix(K), K.basis)


def transfer_matrix(K: KoopmanMatrix, weighted: bool = True) -> np.ndarray:
    """Matrix of the transfer operator on the dual basis: the transpose of ``K``.

    ``weighted=False`` transposes the raw integral matrix instead; the two are
    diagonally similar.
    """
    return (K.entries if weighted else K.integrals).T.copy()


@dataclass
class SrbFunctional:
    """Fourier moments of the invariant measure, aligned with ``basis``."""

    basis: BasisIndex
    coefficients: np.ndarray
    eigenvalue: complex
    residual: float
    gap: float

    def coefficient(self, n) -> complex:
        return complex(self.coefficients[self.basis.index_of(n)])

    def expectation(self, observable: Mapping) -> float:
        """``mu(f)`` for ``f(x) = sum_k f_k exp(2 pi i k.x)`` given as ``{k: f_k}``.

        Modes outside the truncation raise ``KeyError``.
        """
        total = 0j
        for k, fk in observable.items():
            total += complex(fk) * self.coefficient(k)
        return float(total.real)

    def symmetry_defect(self) -> float:
        """``max |w_{-n} - conj(w_n)|``; zero for a real measure."""
        idx = self.basis.index_of(-self.basis.freqs)
        return float(np.abs(self.coefficients[idx] - np.conj(self.coefficients)).max())

    def rows(self):
        for n, w in zip(self.basis.freqs, self.coefficients):
            yield int(n[0]), int(n[1]), float(w.real), float(w.imag)


def srb_extract(K: KoopmanMatrix, gap_tol: float = GAP_TOL) -> SrbFunctional:
    """Left eigenvector of ``K`` for the eigenvalue closest to 1, with ``w_0 = 1``.

    Raises
    ------
    EigenvalueOneNotSimple
        If another eigenvalue lies within ``gap_tol`` of the one nearest 1.
    """
    try:
        ev, vl = scipy.linalg.eig(real_form(K.entries, K.basis), left=True, right=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise EigenNoConverge(str(exc)) from exc
    dist = np.abs(ev - 1.0)
    order = np.argsort(dist, kind="stable")
    i = int(order[0])
    gap = float(dist[order[1]]) if len(ev) > 1 else math.inf
    if abs(ev[i].imag) > gap_tol or gap <= gap_tol:
        raise EigenvalueOneNotSimple(
            f"two eigenvalues within {gap_tol:g} of 1: {ev[order[0]]:.12g}, {ev[order[1]]:.12g}")
    # the eigenvalue nearest 1 is real, so its left vector in the real form is real
    y = vl[:, i].real
    u = complex_left_vector(y, K.basis)
    w = u * np.exp(K.log_weights)          # undo the diagonal similarity
    if w[0] == 0:
        raise EigenvalueOneNotSimple("fixed left eigenvector has no constant component")
    w = w / w[0]
    w[0] = 1.0
    resid = float(np.abs(w @ K.integrals - w).max())
    return SrbFunctional(basis=K.basis, coefficients=w, eigenvalue=complex(ev[i]), residual=resid, gap=gap)


# ---------------------------------------------------------------------------
# observables and orbit averages
# ---------------------------------------------------------------------------
def cos_observable(k) -> dict:
    """``cos(2 pi k.x)`` in mode form."""
    k = (int(k[0]), int(k[1]))
    return {k: 0.5, (-k[0], -k[1]): 0.5}


def sin_observable(k) -> dict:
    k = (int(k[0]), int(k[1]))
    return {k: -0.5j, (-k[0], -k[1]): 0.5j}


def eval_observable(observable: Mapping, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1], dtype=complex)
    for k, fk in observable.items():
        out += complex(fk) * np.exp(1j * TWO_PI * (x[..., 0] * k[0] + x[..., 1] * k[1]))
    return out.real


@dataclass
class BirkhoffResult:
    means: np.ndarray
    stderr: np.ndarray
    n_points: int
    n_steps: int
    burn_in: int
    seed: int


def birkhoff_average(T: PerturbedMap, observables: Sequence[Mapping], n_points: int = 1000,
                     n_steps: int = 10_000, burn_in: int = 100, seed: int = 0) -> BirkhoffResult:
    """Time averages of each observable along ``n_points`` orbits from uniform random starts.

    All orbits advance together; the starting points come from a seeded
    generator so the result is reproducible. ``stderr`` is the spread of the
    per-orbit averages divided by ``sqrt(n_points)``.
    """
    rng = np.random.default_rng(seed)
    x = rng.random((n_points, 2))
    for _ in range(burn_in):
        x = T.eval(x, mod1=True)
    acc = np.zeros((len(observables), n_points))
    for _ in range(n_steps):
        for i, f in enumerate(observables):
            acc[i] += eval_observable(f, x)
        x = T.eval(x, mod1=True)
    per_orbit = acc / n_steps
    means = per_orbit.mean(axis=1)
    stderr = per_orbit.std(axis=1, ddof=1) / math.sqrt(n_points) if n_points > 1 else np.full(len(observables), np.nan)
    return BirkhoffResult(means=means, stderr=stderr, n_points=n_points, n_steps=n_steps,
                          burn_in=burn_in, seed=seed)
