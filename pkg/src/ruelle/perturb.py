"""First-order trace functional and structured perturbations of a linear map.

Three constructions are provided, all of the form ``psi(x) = profile(x_j) * direction``:

* generic: direction ``v_j``, the j-th column of ``((I - M)^T)^{-1}``, which makes
  the first-order trace coefficient proportional to ``sum profile'(x_j)`` over the
  fixed points of ``M``;
* volume preserving: a direction for which ``det(M + eps D psi) = det M`` holds
  identically;
* volume breaking: the preserving direction plus ``delta`` times the j-th column
  of ``M``, giving ``det - det M = delta * eps * profile'(x_j) * det M``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .analytic_maps import Profile, TrigPolynomial
from .errors import DetDriftDetected, DiagonalMatrix, NotInGenericSet
from .lattice import HyperbolicAutomorphism, fixed_points_linear

GENERIC_REL_TOL = 1e-12
DET_TOL = 1e-12
CHECK_GRID = 64
CHECK_EPSILONS = (0.01, 0.1)
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class BFunctionalResult:
    """``value`` is the mean of ``per_fixed_point``; ``scale`` bounds each term a priori."""

    value: float
    points: np.ndarray
    per_fixed_point: np.ndarray
    n_m: int
    scale: float


def _resolvent(m: HyperbolicAutomorphism) -> np.ndarray:
    """``(I - M)^{-1}`` from the integer adjugate."""
    a, b, c, d = m.entries
    den = (1 - a) * (1 - d) - b * c
    return np.array([[1 - d, b], [c, 1 - a]], dtype=float) / den


def b_functional(m: HyperbolicAutomorphism, psi: TrigPolynomial) -> BFunctionalResult:
    """Mean over the fixed points ``x`` of ``M`` of ``tr((I - M)^{-1} D psi(x))``.

    This is the first-order coefficient of ``tr K_{M + eps psi}`` in ``eps``.
    Fixed points are exact rationals; ``D psi`` comes from the mode sum.
    """
    fp = fixed_points_linear(m)
    res = _resolvent(m)
    jac = psi.jacobian(fp.points)
    terms = np.einsum("ij,pji->p", res, jac)
    # |tr(R D psi)| <= ||R||_F ||D psi||_F, and ||D psi||_F is bounded mode by mode
    k = psi.freqs.astype(float)
    dbound = float((TWO_PI * np.hypot(k[:, 0], k[:, 1]) * np.sqrt((np.abs(psi.coefs) ** 2).sum(axis=1))).sum())
    return BFunctionalResult(value=float(terms.sum() / fp.count), points=fp.points,
                             per_fixed_point=terms, n_m=fp.count,
                             scale=float(np.linalg.norm(res) * dbound))


def generic_direction(m: HyperbolicAutomorphism, j: int) -> np.ndarray:
    """``v_j``: the j-th column (1-based) of ``((I - M)^T)^{-1}``."""
    _check_j(j)
    return _resolvent(m).T[:, j - 1].copy()


def _check_j(j):
    if j not in (1, 2):
        raise ValueError(f"coordinate index j must be 1 or 2, got {j}")


class Kind(enum.Enum):
    GENERIC = "generic"
    VOLUME_PRESERVING = "volume_preserving"
    VOLUME_BREAKING = "volume_breaking"


@dataclass
class StructuredPerturbation:
    kind: Kind
    j: int
    profile: Profile
    alpha: np.ndarray
    realized: TrigPolynomial
    b_value: float
    delta: float | None = None
    alpha_integer: tuple[int, int] | None = None
    checks: dict = field(default_factory=dict)

    @property
    def in_generic_set(self) -> bool:
        return bool(self.checks.get("in_generic_set", False))

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "j": self.j,
            "profile": self.profile.to_json(),
            "alpha": [float(v) for v in self.alpha],
            "alpha_integer": None if self.alpha_integer is None else list(self.alpha_integer),
            "delta": self.delta,
            "b_functional": self.b_value,
            "psi": self.realized.to_json(),
            "checks": self.checks,
        }


def _generic_flag(res: BFunctionalResult) -> bool:
    return res.scale > 0 and abs(res.value) > GENERIC_REL_TOL * res.scale


def make_generic(m: HyperbolicAutomorphism, j: int, profile: Profile) -> StructuredPerturbation:
    """``psi(x) = profile(x_j) v_j`` together with its first-order trace coefficient.

    Raises
    ------
    NotInGenericSet
        When the coefficient vanishes to ``1e-12`` relative to an a priori bound
        on the per-point terms.
        Raising the profile frequency or shifting its phase usually helps.
    """
    _check_j(j)
    v = generic_direction(m, j)
    psi = profile.to_field(j, v)
    res = b_functional(m, psi)
    if not _generic_flag(res):
        raise NotInGenericSet(
            f"B_M = {res.value:.3e} vanishes for this profile (j = {j}); try another frequency or phase")
    return StructuredPerturbation(kind=Kind.GENERIC, j=j, profile=profile, alpha=v, realized=psi,
                                  b_value=res.value, checks={"in_generic_set": True,
                                                             "per_fixed_point": res.per_fixed_point.tolist()})


def find_generic_profile(m: HyperbolicAutomorphism, j: int = 1, amp: float = 1.0,
                         qs: Sequence[int] = range(1, 9), phases: Sequence[float] = (0.0, 0.25)):
    """First ``amp * sin(2 pi (q t + phase))`` in a fixed scan order that lands in the generic set."""
    for q in qs:
        for ph in phases:
            try:
                return make_generic(m, j, Profile.sine(q, amp, ph))
            except NotInGenericSet:
                continue
    raise NotInGenericSet(f"no sine profile with q in {list(qs)} and phase in {list(phases)} is generic")


def _raw_entries(m):
    if isinstance(m, HyperbolicAutomorphism):
        return m.entries
    a = np.asarray(m)
    if a.size != 4:
        raise ValueError(f"expected a 2x2 matrix, got shape {a.shape}")
    return tuple(int(v) for v in a.reshape(-1))


def solve_alpha(m, j: int):
    """Integer direction making a rank-one column update determinant-neutral.

    ``m`` may be a :class:`HyperbolicAutomorphism` or any 2x2 integer array; the
    diagonal check runs before hyperbolicity is considered. For ``j = 1`` the
    condition is ``alpha_1 d = alpha_2 b``, for ``j = 2`` it is ``alpha_1 c = alpha_2 a``. Returns the primitive integer solution (first
    nonzero entry positive) and its unit-length float version.
    """
    _check_j(j)
    a, b, c, d = _raw_entries(m)
    shown = [[a, b], [c, d]]
    if b == 0 and c == 0:
        raise DiagonalMatrix(f"M = {shown} is diagonal")
    # column j of (I - M)^{-1} alpha is proportional to b (j = 1) or c (j = 2);
    # a zero there would make every preserving perturbation first-order invisible
    off = b if j == 1 else c
    if off == 0:
        raise DiagonalMatrix(f"M = {shown} is triangular with a zero entry opposite column {j}")
    ai = (b, d) if j == 1 else (a, c)
    g = math.gcd(*ai)
    ai = (ai[0] // g, ai[1] // g)
    if ai[0] < 0 or (ai[0] == 0 and ai[1] < 0):
        ai = (-ai[0], -ai[1])
    vec = np.array(ai, dtype=float)
    return ai, vec / np.hypot(*vec)


def _grid(n=CHECK_GRID):
    t = np.arange(n) / n
    x1, x2 = np.meshgrid(t, t, indexing="ij")
    return np.stack([x1, x2], axis=-1).reshape(-1, 2)


def _det_perturbed(m: HyperbolicAutomorphism, psi: TrigPolynomial, eps: float, x) -> np.ndarray:
    jac = m.matrix.astype(float) + eps * psi.jacobian(x)
    return jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]


def make_volume_preserving(m: HyperbolicAutomorphism, j: int, profile: Profile, *,
                           epsilons: Sequence[float] = CHECK_EPSILONS) -> StructuredPerturbation:
    """``psi(x) = profile(x_j) alpha`` with ``det(M + eps D psi) = det M`` everywhere.

    The identity is checked on a 64 x 64 grid for each ``eps`` in ``epsilons``.
    """
    ai, alpha = solve_alpha(m, j)
    psi = profile.to_field(j, alpha)
    x = _grid()
    drift = max(float(np.abs(_det_perturbed(m, psi, e, x) - m.det).max()) for e in epsilons)
    if drift >= DET_TOL:
        raise DetDriftDetected(f"determinant drift {drift:.3e} for a volume-preserving direction")
    res = b_functional(m, psi)
    return StructuredPerturbation(
        kind=Kind.VOLUME_PRESERVING, j=j, profile=profile, alpha=alpha, realized=psi, b_value=res.value,
        alpha_integer=ai,
        checks={"det_max_drift": drift, "grid": CHECK_GRID, "epsilons": list(epsilons),
                "in_generic_set": _generic_flag(res)},
    )


def make_volume_breaking(m: HyperbolicAutomorphism, j: int, profile: Profile, delta: float, *,
                         epsilons: Sequence[float] = CHECK_EPSILONS) -> StructuredPerturbation:
    """Preserving direction plus ``delta * w_j`` (``w_j`` the j-th column of ``M``).

    Checks on the grid, for each ``eps``, that
    ``det(M + eps D psi) - det M = delta * eps * profile'(x_j) * det M``
    pointwise, and records the fraction of grid points where ``|det| != 1``.
    """
    if delta == 0:
        raise ValueError("delta must be nonzero")
    ai, alpha = solve_alpha(m, j)
    w = m.matrix[:, j - 1].astype(float)
    abar = alpha + delta * w
    v = generic_direction(m, j)
    if abs(v @ abar) <= GENERIC_REL_TOL * (np.abs(v) @ np.abs(abar)):
        raise ValueError(f"v_j . alpha_bar vanishes for delta = {delta}; flip the sign of delta")
    psi = profile.to_field(j, abar)
    x = _grid()
    dphi = profile.derivative(x[:, j - 1])
    worst, frac = 0.0, 1.0
    for e in epsilons:
        det = _det_perturbed(m, psi, e, x)
        expected = delta * e * dphi * m.det
        worst = max(worst, float(np.abs(det - m.det - expected).max()))
        frac = min(frac, float(np.mean(np.abs(np.abs(det) - 1.0) > 1e-9)))
    if worst >= DET_TOL:
        raise DetDriftDetected(f"volume-breaking identity off by {worst:.3e}")
    res = b_functional(m, psi)
    return StructuredPerturbation(
        kind=Kind.VOLUME_BREAKING, j=j, profile=profile, alpha=abar, realized=psi, b_value=res.value,
        delta=float(delta), alpha_integer=ai,
        checks={"identity_max_error": worst, "fraction_det_not_unit": frac,
                "breaks_volume": frac >= 0.9, "grid": CHECK_GRID, "epsilons": list(epsilons),
                "in_generic_set": _generic_flag(res)},
    )


def _minor(a: np.ndarray, i: int, j: int) -> np.ndarray:
    sub = np.delete(np.delete(a, i, axis=-2), j, axis=-1)
    return np.linalg.det(sub)


def detpres_residual(jacobian_fn: Callable, j: int, alpha, profile: Profile, x) -> np.ndarray | float:
    """Difference of the two sides of the rank-one determinant update identity.

    Left side: ``det(DT + D T_phi) - det DT`` with ``T_phi(x) = phi(x_j) alpha``.
    Right side: ``(-1)^j phi'(x_j) sum_i (-1)^i alpha_i det(minor_{i,j}(DT))``,
    indices 1-based. Both are evaluated independently at ``x`` (shape ``(..., d)``).
    """
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    dt = np.asarray(jacobian_fn(x), dtype=float)
    d = dt.shape[-1]
    dphi = profile.derivative(x[..., j - 1])
    upd = np.zeros(dt.shape)
    upd[..., :, j - 1] = dphi[..., None] * alpha
    lhs = np.linalg.det(dt + upd) - np.linalg.det(dt)
    acc = 0.0
    for i in range(1, d + 1):
        acc = acc + (-1) ** i * alpha[i - 1] * _minor(dt, i - 1, j - 1)
    rhs = (-1) ** j * dphi * acc
    out = np.abs(lhs - rhs)
    return float(out) if np.ndim(out) == 0 else out
