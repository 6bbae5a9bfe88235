"""Truncated weighted Koopman matrix, resonances, traces and determinant coefficients.

Matrix elements in the Fourier basis are the oscillatory integrals

    I[n1, n2] = int exp(2 pi i (n2.T(x) - n1.x)) dx.

For ``T = M + eps * psi`` the phase splits as ``(M^T n2).x + eps * n2.psi(x)``, so
``I[n1, n2]`` is the Fourier coefficient at ``n1 - M^T n2`` of
``g_{n2}(x) = exp(2 pi i eps n2.psi(x))``. One FFT per column gives all of them.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft
import scipy.linalg
from scipy.special import gammaln

from .analytic_maps import PerturbedMap, fixed_points_perturbed
from .aniso_space import AnisotropicWeight, BasisIndex
from .errors import (AliasingSuspect, EigenNoConverge, GridTooSmall, OverflowRisk,
                     PeriodTooDeep, WeightOverflow)
from .lattice import DEFAULT_POINT_CAP

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
TAIL_TOL = 1e-17          # neglected Bessel tail per mode
ALIAS_TOL = 1e-10         # grid-doubling self-test tolerance
NOISE_FLOOR = 1e-14       # |I| below this is FFT round-off, not signal
LOG_WEIGHT_LIMIT = 700.0
MAX_ORBIT_PERIOD = 5
_CHUNK_ELEMS = 1 << 22


def worker_count() -> int:
    """Worker cap from ``RUELLE_THREADS`` (default: all cores)."""
    env = os.environ.get("RUELLE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer RUELLE_THREADS=%r", env)
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# grid sizing
# ---------------------------------------------------------------------------
def _bessel_order(amp: np.ndarray, tol: float = TAIL_TOL) -> np.ndarray:
    """Smallest ``m`` with ``(a/2)^j / j! < tol`` for all ``j >= m``.

    ``|J_j(a)| <= (a/2)^j / j!``, so modes beyond this order of
    ``exp(i a sin t)`` are below ``tol``.
    """
    amp = np.asarray(amp, dtype=float)
    out = np.zeros(amp.shape, dtype=np.int64)
    pos = amp > 0
    if not pos.any():
        return out
    a = amp[pos]
    jmax = int(np.ceil(a.max() * math.e)) + 60
    j = np.arange(jmax + 1)
    with np.errstate(divide="ignore"):
        logterm = j[None, :] * np.log(a[:, None] / 2.0) - gammaln(j + 1.0)[None, :]
    ok = (logterm < math.log(tol)) & (j[None, :] >= a[:, None] / 2.0)
    # first index from which every later term is below tol
    bad_rev = np.cumsum(~ok[:, ::-1], axis=1)[:, ::-1]
    first = np.argmax(bad_rev == 0, axis=1)
    out[pos] = first
    return out


def column_bandwidth(T: PerturbedMap, freqs: np.ndarray) -> np.ndarray:
    """Sup-norm radius outside which the spectrum of ``g_{n2}`` is below ``TAIL_TOL`` per mode."""
    freqs = np.asarray(freqs, dtype=float).reshape(-1, 2)
    psi = T.psi
    if T.is_linear:
        return np.zeros(len(freqs), dtype=np.int64)
    half = [(i, k) for i, k in enumerate(psi.freqs) if tuple(k) > (0, 0)]
    bw = np.zeros(len(freqs), dtype=np.int64)
    for i, k in half:
        amp = TWO_PI * T.epsilon * 2.0 * np.abs(freqs @ psi.coefs[i])
        bw += int(np.abs(k).max()) * _bessel_order(amp)
    return bw


def default_grid(T: PerturbedMap, N: int) -> int:
    """Power of two ``>= 8 (N + max column bandwidth)``."""
    bw = int(column_bandwidth(T, BasisIndex(N).freqs).max(initial=0))
    target = 8 * (N + bw)
    return 1 << max(3, math.ceil(math.log2(target)))


# ---------------------------------------------------------------------------
# oscillatory integrals
# ---------------------------------------------------------------------------
def _requested(m, G, axis):
    """Gather indices and validity mask for requested frequencies ``m`` (shape (..., 2))."""
    lim = G // 2 - 1
    if axis is None:
        ok = (np.abs(m) <= lim).all(axis=-1)
    else:
        ok = (m[..., 1 - axis] == 0) & (np.abs(m[..., axis]) <= lim)
    return np.mod(m, G), ok


def _spectra(T: PerturbedMap, cols: np.ndarray, G: int, axis, workers: int) -> np.ndarray:
    """Normalised DFT of ``g_{n2}`` for each ``n2`` in ``cols`` (1-D or 2-D layout)."""
    scale = TWO_PI * T.epsilon
    t = np.arange(G) / G
    if axis is not None:
        x = np.zeros((G, 2))
        x[:, axis] = t
        psi_grid = T.psi(x)                                   # (G, 2)
        phase = scale * (cols.astype(float) @ psi_grid.T)     # (c, G)
        return scipy.fft.fft(np.exp(1j * phase), axis=1, workers=workers) / G
    x1, x2 = np.meshgrid(t, t, indexing="ij")
    psi_grid = T.psi(np.stack([x1, x2], axis=-1))             # (G, G, 2)
    phase = scale * np.einsum("ck,ijk->cij", cols.astype(float), psi_grid)
    return scipy.fft.fft2(np.exp(1j * phase), axes=(1, 2), workers=workers) / (G * G)


def _gather(spec, req, ok, axis):
    out = np.zeros(ok.shape, dtype=complex)
    c_idx = np.broadcast_to(np.arange(ok.shape[0])[:, None], ok.shape)
    if axis is None:
        out[ok] = spec[c_idx[ok], req[..., 0][ok], req[..., 1][ok]]
    else:
        out[ok] = spec[c_idx[ok], req[..., axis][ok]]
    return out


def upper_half(freqs: np.ndarray) -> np.ndarray:
    """Positions of the frequencies with ``n1 > 0``, or ``n1 == 0`` and ``n2 > 0``."""
    freqs = np.asarray(freqs)
    return np.flatnonzero((freqs[:, 0] > 0) | ((freqs[:, 0] == 0) & (freqs[:, 1] > 0)))


@dataclass
class IntegralStats:
    grid_size: int
    bandwidth: int
    aliasing_bound: float
    layout: str
    checked_columns: list = field(default_factory=list)
    max_alias_change: float = 0.0


def oscillatory_integrals(T: PerturbedMap, basis: BasisIndex, G: int, *,
                          check_aliasing: bool = True, workers: int | None = None):
    """All ``I[n1, n2]`` over the truncation as a dense matrix.

    Rows and columns follow ``basis`` order. Requested frequencies outside the
    FFT window are set to zero; the largest coefficient in the outer half of
    the window is reported as an aliasing bound.

    Returns
    -------
    I : ndarray, complex, shape (D, D)
    stats : IntegralStats

    Raises
    ------
    GridTooSmall
        If some column's essential bandwidth does not fit in the window.
    AliasingSuspect
        If recomputing sampled columns on a doubled grid moves any requested
        coefficient by more than ``ALIAS_TOL``.
    """
    G = int(G)
    if G < 8 or G & (G - 1):
        raise ValueError(f"grid size must be a power of two >= 8, got {G}")
    workers = workers or worker_count()
    ns = basis.freqs
    D = len(ns)
    mt_ns = ns @ T.m.matrix                      # row j is M^T n_j
    req_freq = ns[:, None, :] - mt_ns[None, :, :]   # (n1, n2, 2)

    if T.is_linear:
        I = (req_freq == 0).all(axis=-1).astype(complex)
        return I, IntegralStats(grid_size=G, bandwidth=0, aliasing_bound=0.0, layout="exact")

    bw = column_bandwidth(T, ns)
    if bw.max() > G // 2 - 1:
        raise GridTooSmall(
            f"column bandwidth {int(bw.max())} does not fit a grid of size {G}; need G >= {2 * int(bw.max()) + 2}")
    axis = T.psi.single_axis()
    layout = "1d" if axis is not None else "2d"
    per_col = G if axis is not None else G * G
    chunk = max(1, _CHUNK_ELEMS // per_col)

    # g_{-n2} = conj(g_{n2}) gives I[-n1, -n2] = conj(I[n1, n2]): transform only
    # the upper half of the columns and mirror the rest, so the symmetry is exact
    half = upper_half(ns)
    neg = basis.index_of(-ns)
    I = np.zeros((D, D), dtype=complex)
    alias_bound = 0.0
    outer = np.abs(np.fft.fftfreq(G, 1.0 / G)) >= G // 4
    for start in range(0, len(half), chunk):
        cols = half[start:start + chunk]
        spec = _spectra(T, ns[cols], G, axis, workers)
        req = req_freq[:, cols].transpose(1, 0, 2)
        idx, ok = _requested(req, G, axis)
        I[:, cols] = _gather(spec, idx, ok, axis).T
        if axis is not None:
            tail = np.abs(spec[:, outer]).max(initial=0.0)
        else:
            ring = outer[:, None] | outer[None, :]
            tail = np.abs(spec[:, ring]).max(initial=0.0)
        alias_bound = max(alias_bound, float(tail))
    I[:, neg[half]] = np.conj(I[neg][:, half])
    I[:, 0] = 0.0
    I[0, 0] = 1.0     # n2 = 0: the constant function is fixed exactly
    if alias_bound > 1e-12:
        log.warning("aliasing bound %.3e on grid %d", alias_bound, G)
    else:
        log.debug("aliasing bound %.3e on grid %d", alias_bound, G)
    stats = IntegralStats(grid_size=G, bandwidth=int(bw.max()), aliasing_bound=alias_bound, layout=layout)

    if check_aliasing and D > 1:
        order = half[np.lexsort((-half, bw[half]))[::-1]]
        sample = [int(j) for j in order[:4]]
        cols = ns[sample]
        spec2 = _spectra(T, cols, 2 * G, axis, workers)
        req = req_freq[:, sample].transpose(1, 0, 2)
        idx, ok = _requested(req, 2 * G, axis)
        fine = _gather(spec2, idx, ok, axis).T
        change = float(np.abs(fine - I[:, sample]).max())
        stats.checked_columns = sample
        stats.max_alias_change = change
        if change > ALIAS_TOL:
            raise AliasingSuspect(f"doubling the grid from {G} moved coefficients by {change:.3e}")
    return I, stats


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------
@dataclass
class KoopmanMatrix:
    """Weighted Koopman matrix over a square frequency truncation.

    ``entries[i, j] = exp(log C_{n_i} - log C_{n_j}) * integrals[i, j]``;
    ``integrals`` keeps the unweighted oscillatory integrals. The two matrices
    are diagonally similar, so they share eigenvalues and traces; the weighted
    one is the better conditioned representation.
    """

    T: PerturbedMap
    weight: AnisotropicWeight
    basis: BasisIndex
    integrals: np.ndarray = field(repr=False)
    log_weights: np.ndarray = field(repr=False)
    entries: np.ndarray = field(repr=False)
    grid_size: int
    stats: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.basis.radius

    @property
    def dim(self) -> int:
        return len(self.basis)


def assemble(T: PerturbedMap, w: AnisotropicWeight, N: int, G: int | str = "auto", *,
             check_aliasing: bool = True, workers: int | None = None) -> KoopmanMatrix:
    """Assemble the weighted Koopman matrix for ``|n|_inf <= N``.

    Raises
    ------
    ValueError
        If ``c >= r``.
    WeightOverflow
        If a log weight ratio exceeds 700 before exponentiation.
    """
    w.check_strip(T.r)
    if w.m.entries != T.m.entries:
        raise ValueError("weight and map use different matrices")
    basis = BasisIndex(int(N))
    G = default_grid(T, basis.radius) if G in (None, "auto") else int(G)
    lw = np.asarray(w.log_weight(basis.freqs), dtype=float)
    spread = float(lw.max() - lw.min())
    if spread > LOG_WEIGHT_LIMIT:
        raise WeightOverflow(f"log weight ratio {spread:.1f} exceeds {LOG_WEIGHT_LIMIT}; lower c or N")
    I, istats = oscillatory_integrals(T, basis, G, check_aliasing=check_aliasing, workers=workers)
    entries = I * np.exp(lw[:, None] - lw[None, :])
    K = KoopmanMatrix(T=T, weight=w, basis=basis, integrals=I, log_weights=lw, entries=entries, grid_size=G)
    shells, smax = shell_maxima(K)
    K.stats = {
        "grid_size": G,
        "layout": istats.layout,
        "bandwidth": istats.bandwidth,
        "aliasing_bound": istats.aliasing_bound,
        "alias_check_change": istats.max_alias_change,
        "max_abs_entry": float(np.abs(entries).max()),
        "shell_index": shells.tolist(),
        "shell_max": smax.tolist(),
        "strip_distance_bound": T.strip_distance_bound(),
    }
    return K


def shell_maxima(K: KoopmanMatrix):
    """Largest weighted magnitude on each shell ``||n1||_1 + ||n2||_1 = s``.

    Entries whose integral is below ``NOISE_FLOOR`` count as zero.
    """
    s = np.abs(K.basis.freqs).sum(axis=1)
    S = (s[:, None] + s[None, :]).ravel()
    mag = np.abs(K.entries).ravel().copy()
    mag[np.abs(K.integrals).ravel() < NOISE_FLOOR] = 0.0
    out = np.zeros(int(S.max()) + 1)
    np.maximum.at(out, S, mag)
    return np.arange(len(out)), out


def decay_slope(K: KoopmanMatrix) -> float:
    """Least-squares slope of ``log(shell max)`` against the shell index over nonempty shells."""
    shells, smax = shell_maxima(K)
    keep = smax > 0
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(shells[keep], np.log(smax[keep]), 1)[0])


# ---------------------------------------------------------------------------
# spectrum and traces
# ---------------------------------------------------------------------------
def spectrum_order(ev) -> np.ndarray:
    """Indices sorting by modulus descending; within a conjugate pair the upper half-plane member first."""
    ev = np.asarray(ev, dtype=complex).ravel()
    return np.lexsort((-ev.real, ev.imag < 0, -np.round(np.abs(ev), 10)))


def sort_spectrum(ev) -> np.ndarray:
    ev = np.asarray(ev, dtype=complex).ravel()
    return ev[spectrum_order(ev)]


def _real_basis(basis: BasisIndex):
    pos = upper_half(basis.freqs)
    return pos, basis.index_of(-basis.freqs[pos])


def real_form(a: np.ndarray, basis: BasisIndex) -> np.ndarray:
    """``U^H a U`` in the basis ``1, (e_n + e_-n)/sqrt 2, (e_n - e_-n)/(i sqrt 2)``.

    A matrix with ``a[-i, -j] = conj(a[i, j])`` (the Fourier matrix of a real
    operator) becomes real here, so a real eigensolver returns exactly
    conjugate-paired eigenvalues.
    """
    p, q = _real_basis(basis)
    r2 = math.sqrt(2.0)
    rows = np.concatenate([a[:1], (a[p] + a[q]) / r2, 1j * (a[p] - a[q]) / r2])
    out = np.concatenate([rows[:, :1], (rows[:, p] + rows[:, q]) / r2, -1j * (rows[:, p] - rows[:, q]) / r2], axis=1)
    scale = max(1.0, float(np.abs(out).max()))
    if np.abs(out.imag).max() > 1e-12 * scale:
        raise ValueError("matrix is not the Fourier matrix of a real operator")
    return np.ascontiguousarray(out.real)


def complex_left_vector(y: np.ndarray, basis: BasisIndex) -> np.ndarray:
    """Map a row vector of the real form back to Fourier coordinates (``u^T = y^T U^H``)."""
    p, q = _real_basis(basis)
    h = len(p)
    y = np.asarray(y)
    u = np.zeros(len(basis), dtype=complex)
    u[0] = y[0]
    c, s_ = y[1:h + 1], y[h + 1:]
    u[p] = (c + 1j * s_) / math.sqrt(2.0)
    u[q] = (c - 1j * s_) / math.sqrt(2.0)
    return u


def _eigvals(a):
    try:
        return scipy.linalg.eigvals(a, check_finite=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise EigenNoConverge(str(exc)) from exc


def spectrum(a: np.ndarray, basis: BasisIndex) -> np.ndarray:
    """Sorted eigenvalues of a real-structured Fourier matrix via its real form."""
    return sort_spectrum(_eigvals(real_form(a, basis)))


def resonances(K: KoopmanMatrix, k: int | None = None) -> np.ndarray:
    """The ``k`` largest-modulus eigenvalues of the weighted matrix (all if ``k`` is None)."""
    ev = spectrum(K.entries, K.basis)
    return ev if k is None else ev[:k]


def eigen_conditions(K: KoopmanMatrix):
    """Sorted eigenvalues with their condition numbers ``1 / |y^H x|`` (unit ``x``, ``y``).

    Clusters that are close to defective have huge condition numbers; their
    computed positions are only meaningful to roughly ``cond * 1e-16 * ||K||``.
    """
    try:
        ev, vl, vr = scipy.linalg.eig(real_form(K.entries, K.basis), left=True, right=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise EigenNoConverge(str(exc)) from exc
    dots = np.abs(np.einsum("ij,ij->j", vl.conj(), vr))
    with np.errstate(divide="ignore", over="ignore"):
        cond = 1.0 / dots
    order = spectrum_order(ev)
    return ev[order], cond[order]


def trace_matrix(K: KoopmanMatrix) -> complex:
    return complex(np.trace(K.integrals))


def matrix_traces(K: KoopmanMatrix, p: int) -> np.ndarray:
    """``tr(K^j)`` for ``j = 1..p`` using ``tr(A B) = sum(A * B^T)`` and half the powers."""
    a = K.entries
    powers = {1: a}
    for j in range(2, (p + 1) // 2 + 1):
        powers[j] = powers[j - 1] @ a
    out = np.zeros(p, dtype=complex)
    for j in range(1, p + 1):
        if j == 1:
            out[0] = np.trace(a)
            continue
        h = j // 2
        out[j - 1] = np.sum(powers[j - h] * powers[h].T)
    return out


def orbit_weights(T: PerturbedMap, period: int = 1, **kwargs):
    """Periodic points of ``T`` and their weights ``|det(I - D T^n)|^{-1}``."""
    pts = fixed_points_perturbed(T, period, **kwargs)
    _, jac = T.iterate_with_jacobian(pts, period)
    det = np.linalg.det(np.eye(2) - jac)
    return pts, 1.0 / np.abs(det)


def trace_orbit(T: PerturbedMap, period: int = 1, **kwargs) -> float:
    """Periodic-orbit side of the trace formula: sum of ``|det(I - D T^n)|^{-1}``."""
    return float(orbit_weights(T, period, **kwargs)[1].sum())


def orbit_traces(T: PerturbedMap, p: int, cap: int = DEFAULT_POINT_CAP) -> np.ndarray:
    if p > MAX_ORBIT_PERIOD:
        raise PeriodTooDeep(f"orbit pipeline is capped at period {MAX_ORBIT_PERIOD}, asked for {p}")
    out = np.zeros(p)
    for n in range(1, p + 1):
        try:
            out[n - 1] = trace_orbit(T, n, cap=cap)
        except OverflowRisk as exc:
            raise PeriodTooDeep(str(exc)) from exc
    return out


def det_coeffs_from_traces(traces: Sequence[complex]) -> np.ndarray:
    """Coefficients of ``exp(-sum_n z^n t_n / n)`` through order ``len(traces)``."""
    p = len(traces)
    a = np.zeros(p + 1, dtype=complex)
    a[0] = 1.0
    for m in range(1, p + 1):
        a[m] = -sum(traces[j - 1] * a[m - j] for j in range(1, m + 1)) / m
    return a


@dataclass
class DetCoefficients:
    order: int
    from_matrix: np.ndarray | None = None
    from_orbits: np.ndarray | None = None

    def max_discrepancy(self) -> float:
        if self.from_matrix is None or self.from_orbits is None:
            return float("nan")
        return float(np.abs(self.from_matrix - self.from_orbits).max())


def det_coeffs(p: int, K: KoopmanMatrix | None = None, T: PerturbedMap | None = None, *,
               cap: int = DEFAULT_POINT_CAP) -> DetCoefficients:
    """Coefficients ``a_0..a_p`` of ``det(1 - z K)`` from matrix traces and/or periodic orbits."""
    if p < 0:
        raise ValueError("order must be >= 0")
    out = DetCoefficients(order=p)
    if K is not None:
        out.from_matrix = det_coeffs_from_traces(matrix_traces(K, p) if p else [])
    if T is not None:
        out.from_orbits = det_coeffs_from_traces(orbit_traces(T, p, cap=cap) if p else [])
    return out


def conjugate_closed(ev, tol: float = 1e-8) -> bool:
    """Every eigenvalue has a conjugate partner in the list (to ``tol``)."""
    ev = np.asarray(ev, dtype=complex)
    if not len(ev):
        return True
    dist = np.abs(ev[:, None] - np.conj(ev)[None, :]).min(axis=1)
    return bool(dist.max() <= tol)


@dataclass
class ResonanceReport:
    eigenvalues: np.ndarray
    trace_matrix: complex
    trace_orbit: float | None
    det_coeffs: DetCoefficients
    N: int
    G: int
    c: float
    epsilon: float
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def cpair(z):
            return [float(np.real(z)), float(np.imag(z))]

        d = self.det_coeffs
        return {
            "N": self.N,
            "G": self.G,
            "c": self.c,
            "epsilon": self.epsilon,
            "eigenvalues": [cpair(z) for z in self.eigenvalues],
            "trace_matrix": cpair(self.trace_matrix),
            "trace_orbit": self.trace_orbit,
            "det_coeffs": {
                "order": d.order,
                "matrix": None if d.from_matrix is None else [cpair(z) for z in d.from_matrix],
                "orbit": None if d.from_orbits is None else [cpair(z) for z in d.from_orbits],
            },
            **self.extras,
        }


def resonance_report(K: KoopmanMatrix, k: int | None = 10, det_order: int = 3) -> ResonanceReport:
    """Eigenvalues, both trace routes and both determinant-coefficient routes for ``K``."""
    T = K.T
    ev = resonances(K)
    extras = {
        "decay_slope": decay_slope(K),
        "strip_distance_bound": K.stats.get("strip_distance_bound"),
        "aliasing_bound": K.stats.get("aliasing_bound"),
        "conjugate_closed": conjugate_closed(ev),
        "distance_to_one": float(np.abs(ev - 1.0).min()),
        "eigenvalue_sum": [float(ev.sum().real), float(ev.sum().imag)],
    }
    try:
        t_orb = trace_orbit(T, 1)
    except (PeriodTooDeep, OverflowRisk) as exc:
        t_orb = None
        extras["trace_orbit_error"] = type(exc).__name__
    dets = det_coeffs(det_order, K=K)
    try:
        dets.from_orbits = det_coeffs(det_order, T=T).from_orbits
    except PeriodTooDeep as exc:
        extras["det_orbit_error"] = type(exc).__name__
    return ResonanceReport(
        eigenvalues=ev if k is None else ev[:k], trace_matrix=trace_matrix(K), trace_orbit=t_orb,
        det_coeffs=dets, N=K.N, G=K.grid_size, c=K.weight.c, epsilon=T.epsilon, extras=extras,
    )
