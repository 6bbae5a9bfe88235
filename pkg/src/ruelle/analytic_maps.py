"""Trigonometric perturbations ``T = M + eps * psi`` of a linear torus map.

``psi`` is always a real trigonometric polynomial, so it is entire and bounded on
every complex strip around the torus; no other representation of holomorphic
perturbations is needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.spatial import cKDTree

from .errors import CountMismatch, NewtonDiverged
from .lattice import DEFAULT_POINT_CAP, HyperbolicAutomorphism, periodic_points_linear

TWO_PI = 2.0 * math.pi
REALITY_TOL = 1e-12


def _as_int_pair(k):
    k1, k2 = (int(v) for v in k)
    return (k1, k2)


class TrigPolynomial:
    """Real-valued map ``x -> sum_k c_k exp(2 pi i k.x)`` from the torus to R^2.

    Parameters
    ----------
    modes : mapping
        Frequency ``(k1, k2)`` to complex 2-vector coefficient. Missing
        conjugate partners ``-k`` are filled in; inconsistent partners raise.
    """

    def __init__(self, modes: Mapping | None = None):
        full: dict[tuple[int, int], np.ndarray] = {}
        for k, coef in (modes or {}).items():
            k = _as_int_pair(k)
            coef = np.asarray(coef, dtype=complex).reshape(2)
            full[k] = coef
        for k in list(full):
            nk = (-k[0], -k[1])
            if k == nk:
                if np.abs(full[k].imag).max() > REALITY_TOL:
                    raise ValueError("the constant mode must be real")
                full[k] = full[k].real.astype(complex)
            elif nk in full:
                if np.abs(full[nk] - np.conj(full[k])).max() > REALITY_TOL * max(1.0, np.abs(full[k]).max()):
                    raise ValueError(f"modes {k} and {nk} are not complex conjugates")
            else:
                full[nk] = np.conj(full[k])
        keys = sorted(k for k, v in full.items() if np.any(v != 0))
        self.freqs = np.array(keys, dtype=np.int64).reshape(-1, 2)
        self.coefs = np.array([full[k] for k in keys], dtype=complex).reshape(-1, 2)
        self.freqs.setflags(write=False)
        self.coefs.setflags(write=False)

    # -- construction helpers -------------------------------------------------
    @classmethod
    def zero(cls) -> "TrigPolynomial":
        return cls({})

    @classmethod
    def sine_mode(cls, k, amp: float, direction, phase: float = 0.0) -> "TrigPolynomial":
        """``amp * sin(2 pi (k.x + phase)) * direction``; ``phase`` in turns."""
        k = _as_int_pair(k)
        if k == (0, 0):
            return cls({(0, 0): amp * math.sin(TWO_PI * phase) * np.asarray(direction, dtype=float)})
        c = amp * np.exp(1j * TWO_PI * phase) / 2j
        return cls({k: c * np.asarray(direction, dtype=float)})

    @classmethod
    def from_json(cls, data) -> "TrigPolynomial":
        modes: dict = {}
        for item in data:
            k = _as_int_pair(item["k"])
            re = np.asarray(item["re"], dtype=float).reshape(2)
            im = np.asarray(item.get("im", [0.0, 0.0]), dtype=float).reshape(2)
            if k in modes:
                raise ValueError(f"duplicate mode {k}")
            modes[k] = re + 1j * im
        return cls(modes)

    def to_json(self) -> list:
        return [
            {"k": [int(k[0]), int(k[1])], "re": [float(c[0].real), float(c[1].real)],
             "im": [float(c[0].imag), float(c[1].imag)]}
            for k, c in zip(self.freqs, self.coefs)
        ]

    # -- algebra ----------------------------------------------------------------
    def modes(self) -> dict:
        return {(int(k[0]), int(k[1])): c.copy() for k, c in zip(self.freqs, self.coefs)}

    def __add__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        out = self.modes()
        for k, c in other.modes().items():
            out[k] = out.get(k, 0) + c
        return TrigPolynomial(out)

    def __mul__(self, s: float) -> "TrigPolynomial":
        s = float(s)
        return TrigPolynomial({k: s * c for k, c in self.modes().items()})

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return f"TrigPolynomial({len(self.freqs)} modes, max_freq={self.max_freq})"

    @property
    def max_freq(self) -> int:
        return int(np.abs(self.freqs).max()) if len(self.freqs) else 0

    @property
    def is_constant(self) -> bool:
        return not np.any(self.freqs)

    def single_axis(self):
        """Index ``j`` such that ``psi`` depends on ``x_j`` only, else ``None``.

        A constant polynomial reports axis 0.
        """
        if not np.any(self.freqs[:, 1]):
            return 0
        if not np.any(self.freqs[:, 0]):
            return 1
        return None

    # -- evaluation ---------------------------------------------------------------
    def _phases(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(1j * TWO_PI * (x @ self.freqs.T.astype(float)))

    def eval_complex(self, x) -> np.ndarray:
        """Mode sum in complex arithmetic; the imaginary part vanishes on real ``x``."""
        x = np.asarray(x, dtype=float)
        if not len(self.freqs):
            return np.zeros(x.shape, dtype=complex)
        return self._phases(x) @ self.coefs

    def __call__(self, x) -> np.ndarray:
        return self.eval_complex(x).real

    def jacobian(self, x) -> np.ndarray:
        """``D psi(x)`` with shape ``x.shape[:-1] + (2, 2)``, rows = components."""
        x = np.asarray(x, dtype=float)
        if not len(self.freqs):
            return np.zeros(x.shape[:-1] + (2, 2))
        e = self._phases(x)
        dk = 1j * TWO_PI * self.freqs.astype(float)
        return np.einsum("...m,mi,ml->...il", e, self.coefs, dk).real


class Profile:
    """Real 1-D trigonometric polynomial ``t -> sum_q c_q exp(2 pi i q t)``."""

    def __init__(self, modes: Mapping | None = None):
        full: dict[int, complex] = {}
        for q, c in (modes or {}).items():
            full[int(q)] = complex(c)
        for q in list(full):
            if q == 0:
                if abs(full[q].imag) > REALITY_TOL:
                    raise ValueError("the constant mode must be real")
                full[q] = complex(full[q].real)
            elif -q in full:
                if abs(full[-q] - full[q].conjugate()) > REALITY_TOL * max(1.0, abs(full[q])):
                    raise ValueError(f"modes {q} and {-q} are not complex conjugates")
            else:
                full[-q] = full[q].conjugate()
        self.freqs = np.array(sorted(q for q, c in full.items() if c != 0), dtype=np.int64)
        self.coefs = np.array([full[q] for q in self.freqs], dtype=complex)

    @classmethod
    def sine(cls, q: int, amp: float = 1.0, phase: float = 0.0) -> "Profile":
        """``amp * sin(2 pi (q t + phase))``, ``phase`` measured in turns."""
        q = int(q)
        if q == 0:
            return cls({0: amp * math.sin(TWO_PI * phase)})
        return cls({q: amp * np.exp(1j * TWO_PI * phase) / 2j})

    @classmethod
    def from_json(cls, data) -> "Profile":
        return cls.sine(int(data["q"]), float(data.get("amp", 1.0)), float(data.get("phase", 0.0)))

    def to_json(self) -> dict:
        return {"modes": [{"q": int(q), "re": float(c.real), "im": float(c.imag)}
                          for q, c in zip(self.freqs, self.coefs)]}

    @property
    def is_constant(self) -> bool:
        return not np.any(self.freqs)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if not len(self.freqs):
            return np.zeros(t.shape)
        return (np.exp(1j * TWO_PI * np.multiply.outer(t, self.freqs)) @ self.coefs).real

    def derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if not len(self.freqs):
            return np.zeros(t.shape)
        w = 1j * TWO_PI * self.freqs * self.coefs
        return (np.exp(1j * TWO_PI * np.multiply.outer(t, self.freqs)) @ w).real

    def to_field(self, j: int, direction) -> TrigPolynomial:
        """``x -> profile(x_j) * direction`` as a trig polynomial (``j`` is 1-based)."""
        if j not in (1, 2):
            raise ValueError("j must be 1 or 2")
        direction = np.asarray(direction, dtype=float).reshape(2)
        modes = {}
        for q, c in zip(self.freqs, self.coefs):
            k = (int(q), 0) if j == 1 else (0, int(q))
            modes[k] = c * direction
        return TrigPolynomial(modes)


@dataclass(frozen=True)
class PerturbedMap:
    """The torus map ``x -> M x + epsilon * psi(x)`` with strip half-width ``r``."""

    m: HyperbolicAutomorphism
    psi: TrigPolynomial = field(default_factory=TrigPolynomial.zero)
    epsilon: float = 0.0
    r: float = 0.1

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.r <= 0:
            raise ValueError("strip half-width r must be > 0")

    @property
    def is_linear(self) -> bool:
        return self.epsilon == 0.0 or not len(self.psi.freqs)

    def eval(self, x, mod1: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = x @ self.m.matrix.T.astype(float)
        if self.epsilon:
            y = y + self.epsilon * self.psi(x)
        return np.mod(y, 1.0) if mod1 else y

    __call__ = eval

    def derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        mm = np.broadcast_to(self.m.matrix.astype(float), x.shape[:-1] + (2, 2))
        if not self.epsilon:
            return mm.copy()
        return mm + self.epsilon * self.psi.jacobian(x)

    def iterate(self, x, n: int) -> np.ndarray:
        """Lifted ``T^n(x)`` on R^2 (no reduction mod 1)."""
        for _ in range(n):
            x = self.eval(x)
        return x

    def iterate_with_jacobian(self, x, n: int):
        """Lifted ``T^n(x)`` and ``D T^n(x)`` by the chain rule along the orbit."""
        x = np.asarray(x, dtype=float)
        jac = np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy()
        for _ in range(n):
            jac = self.derivative(x) @ jac
            x = self.eval(x)
        return x, jac

    def strip_distance_bound(self) -> float:
        return strip_distance_bound(self)


def strip_distance_bound(T: PerturbedMap) -> float:
    """Upper bound for ``sup |T - M| + sup |DT - DM|`` over the complex strip of half-width ``r``."""
    psi = T.psi
    if not len(psi.freqs) or T.epsilon == 0.0:
        return 0.0
    k = psi.freqs.astype(float)
    knorm2 = np.hypot(k[:, 0], k[:, 1])
    knorm1 = np.abs(k).sum(axis=1)
    cnorm = np.sqrt((np.abs(psi.coefs) ** 2).sum(axis=1))
    terms = (1.0 + TWO_PI * knorm2) * cnorm * np.exp(TWO_PI * T.r * knorm1)
    return float(T.epsilon * terms.sum())


def fixed_points_perturbed(T: PerturbedMap, period: int = 1, *, max_epsilon: float | None = None,
                           tol: float = 1e-12, max_iter: int = 50,
                           cap: int = DEFAULT_POINT_CAP) -> np.ndarray:
    """Continue the periodic points of ``M`` to ``T`` by Newton's method.

    Each linear seed ``x0`` carries the integer lift ``v = (I - M^n) x0``, held
    fixed while solving ``T^n(x) - x + v = 0`` on R^2; this keeps every point on
    its own analytic branch.

    Returns
    -------
    ndarray, shape (count, 2)
        Points in ``[0, 1)^2``, in the order of the linear seeds.

    Raises
    ------
    NewtonDiverged
        A seed failed to converge within ``max_iter`` steps.
    CountMismatch
        Two continued points coincide within 1e-8 on the torus.
    """
    if max_epsilon is not None and T.epsilon > max_epsilon:
        raise ValueError(f"epsilon = {T.epsilon} exceeds the continuation threshold {max_epsilon}")
    seeds = periodic_points_linear(T.m, period, cap=cap)
    x = seeds.points.astype(float).copy()
    if T.is_linear:
        return x
    lift = seeds.lifts.astype(float)
    eye = np.eye(2)
    done = np.zeros(len(x), dtype=bool)
    for _ in range(max_iter):
        active = ~done
        if not active.any():
            break
        xa = x[active]
        y, jac = T.iterate_with_jacobian(xa, period)
        resid = y - xa + lift[active]
        step = np.linalg.solve(jac - eye, resid[..., None])[..., 0]
        xa = xa - step
        x[active] = xa
        bad = ~np.isfinite(xa).all(axis=1)
        if bad.any():
            idx = int(np.flatnonzero(active)[np.argmax(bad)])
            raise NewtonDiverged(f"Newton iteration blew up from seed #{idx} {seeds.points[idx].tolist()}",
                                 seed_index=idx, seed=seeds.points[idx])
        conv = np.abs(step).max(axis=1) <= tol
        done[np.flatnonzero(active)[conv]] = True
    if not done.all():
        idx = int(np.flatnonzero(~done)[0])
        raise NewtonDiverged(
            f"Newton did not converge to {tol} in {max_iter} steps from seed #{idx} "
            f"{seeds.points[idx].tolist()}; epsilon = {T.epsilon} is likely too large for continuation",
            seed_index=idx, seed=seeds.points[idx])
    pts = np.mod(x, 1.0)
    pts[pts >= 1.0] = 0.0
    if len(pts) > 1:
        pairs = cKDTree(pts, boxsize=1.0).query_pairs(1e-8)
        if pairs:
            i, j = sorted(pairs)[0]
            raise CountMismatch(f"continued points #{i} and #{j} collide: {pts[i].tolist()} ~ {pts[j].tolist()}")
    return pts
