"""Integer hyperbolic linear algebra on the 2-torus.

Spectral splitting of the dual action ``M^T``, cone classification of integer
frequencies and exact enumeration of fixed and periodic points of ``M``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFixedEquation, NotHyperbolic, OverflowRisk, SingularMatrix

CONE_TOL = 1e-12
DEFAULT_POINT_CAP = 10**6


def _unit_with_sign(v):
    v = np.asarray(v, dtype=float)
    v = v / np.hypot(v[0], v[1])
    first = v[0] if v[0] != 0.0 else v[1]
    return -v if first < 0 else v


def _eigvec(mt, mu):
    # two candidate null vectors of (M^T - mu I); keep the better conditioned one
    (p, q), (r, s) = mt
    cand1 = np.array([q, mu - p], dtype=float)
    cand2 = np.array([mu - s, r], dtype=float)
    v = cand1 if np.hypot(*cand1) >= np.hypot(*cand2) else cand2
    return _unit_with_sign(v)


@dataclass(frozen=True)
class HyperbolicAutomorphism:
    """Integer matrix ``[[a, b], [c, d]]`` together with the splitting of ``M^T``.

    ``u_plus`` spans the expanding eigenline of ``M^T`` (eigenvalue modulus
    ``lam``), ``u_minus`` the contracting one. ``p_plus``/``p_minus`` are the
    oblique projectors onto those lines along each other.
    """

    a: int
    b: int
    c: int
    d: int
    det: int
    lam: float
    mu_plus: float
    mu_minus: float
    u_plus: np.ndarray = field(repr=False)
    u_minus: np.ndarray = field(repr=False)
    p_plus: np.ndarray = field(repr=False)
    p_minus: np.ndarray = field(repr=False)
    _coord: np.ndarray = field(repr=False)  # rows map n to (u_plus, u_minus) coordinates

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=np.int64)

    @property
    def entries(self) -> tuple[int, int, int, int]:
        return (self.a, self.b, self.c, self.d)

    @property
    def trace(self) -> int:
        return self.a + self.d

    def power(self, n: int) -> list[list[int]]:
        """Exact integer ``M**n`` as nested Python ints."""
        out = [[1, 0], [0, 1]]
        m = [[self.a, self.b], [self.c, self.d]]
        for _ in range(n):
            out = [
                [out[0][0] * m[0][0] + out[0][1] * m[1][0], out[0][0] * m[0][1] + out[0][1] * m[1][1]],
                [out[1][0] * m[0][0] + out[1][1] * m[1][0], out[1][0] * m[0][1] + out[1][1] * m[1][1]],
            ]
        return out

    def coordinates(self, n) -> np.ndarray:
        """Coordinates of ``n`` (shape ``(..., 2)``) in the ``(u_plus, u_minus)`` basis."""
        n = np.asarray(n, dtype=float)
        return n @ self._coord.T

    def split_norms(self, n) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised ``(||n^+||, ||n^-||)`` for frequencies of shape ``(..., 2)``."""
        co = self.coordinates(n)
        return np.abs(co[..., 0]), np.abs(co[..., 1])


def validate_hyperbolic(m, require_unimodular: bool = True) -> HyperbolicAutomorphism:
    """Check that ``m`` is a hyperbolic integer 2x2 matrix and build its splitting data.

    Parameters
    ----------
    m : array_like
        Either a 2x2 nested sequence or four integers in row-major order.
    require_unimodular : bool
        Reject ``|det| != 1`` (the setting of the torus automorphisms studied here).

    Raises
    ------
    SingularMatrix
        If ``det(m) == 0``.
    NotHyperbolic
        If an eigenvalue has modulus one, eigenvalues are complex, or there is
        no expanding/contracting pair.
    """
    arr = np.asarray(m)
    flat = arr.reshape(-1).tolist()
    if len(flat) != 4:
        raise ValueError(f"expected a 2x2 matrix, got shape {arr.shape}")
    ints = []
    for v in flat:
        if float(v) != int(round(float(v))):
            raise ValueError(f"matrix entries must be integers, got {v!r}")
        ints.append(int(round(float(v))))
    a, b, c, d = ints
    det = a * d - b * c
    tr = a + d
    if det == 0:
        raise SingularMatrix(f"det(M) = 0 for M = {[[a, b], [c, d]]}")
    if require_unimodular and abs(det) != 1:
        raise NotHyperbolic(f"|det(M)| = {abs(det)}, expected 1")
    # characteristic polynomial t^2 - tr t + det; +-1 roots checked exactly
    if 1 - tr + det == 0 or 1 + tr + det == 0:
        raise NotHyperbolic(f"M = {[[a, b], [c, d]]} has an eigenvalue of modulus 1")
    disc = tr * tr - 4 * det
    if disc <= 0:
        raise NotHyperbolic(f"M = {[[a, b], [c, d]]} has no real eigenvalue splitting (disc = {disc})")
    root = math.sqrt(disc)
    mu1 = (tr + math.copysign(root, tr)) / 2.0 if tr != 0 else root / 2.0
    mu2 = det / mu1
    if abs(mu1) < abs(mu2):
        mu1, mu2 = mu2, mu1
    if not (abs(mu1) > 1.0 > abs(mu2)):
        raise NotHyperbolic(
            f"M = {[[a, b], [c, d]]} needs one expanding and one contracting eigenvalue, got {mu1}, {mu2}"
        )
    mt = ((a, c), (b, d))
    u_plus = _eigvec(mt, mu1)
    u_minus = _eigvec(mt, mu2)
    basis = np.column_stack([u_plus, u_minus])
    coord = np.linalg.inv(basis)
    p_plus = np.outer(u_plus, coord[0])
    p_minus = np.outer(u_minus, coord[1])
    for arr_ in (u_plus, u_minus, p_plus, p_minus, coord):
        arr_.setflags(write=False)
    return HyperbolicAutomorphism(
        a=a, b=b, c=c, d=d, det=det, lam=abs(mu1), mu_plus=mu1, mu_minus=mu2,
        u_plus=u_plus, u_minus=u_minus, p_plus=p_plus, p_minus=p_minus, _coord=coord,
    )


@dataclass(frozen=True)
class DualSplit:
    n: np.ndarray
    plus_part: np.ndarray
    minus_part: np.ndarray
    plus_norm: float
    minus_norm: float

    @property
    def signed_norm(self) -> float:
        """``||n^+|| - ||n^-||``, the quantity that drives the anisotropic weight."""
        return self.plus_norm - self.minus_norm


def dual_split(m: HyperbolicAutomorphism, n) -> DualSplit:
    """Decompose ``n`` along the expanding and contracting eigenlines of ``M^T``."""
    n = np.asarray(n, dtype=float)
    co = m.coordinates(n)
    plus = co[0] * m.u_plus
    minus = n - plus
    return DualSplit(n=n, plus_part=plus, minus_part=minus,
                     plus_norm=float(abs(co[0])), minus_norm=float(abs(co[1])))


class Cone(enum.Enum):
    PLUS = "plus"
    MINUS = "minus"
    BOUNDARY = "boundary"


def cone_of(m: HyperbolicAutomorphism, n, tol: float = CONE_TOL) -> Cone:
    s = dual_split(m, n).signed_norm
    if s > tol:
        return Cone.PLUS
    if s < -tol:
        return Cone.MINUS
    return Cone.BOUNDARY


@dataclass(frozen=True)
class FixedPointSet:
    """Periodic points of a linear torus map, stored exactly.

    ``points[i] = numerators[i] / denominator`` lies in ``[0, 1)^2`` and
    ``(I - M^period) points[i] = lifts[i]`` holds over the integers.
    """

    points: np.ndarray
    numerators: np.ndarray
    denominator: int
    lifts: np.ndarray
    period: int = 1

    @property
    def count(self) -> int:
        return len(self.points)


def periodic_points_linear(m: HyperbolicAutomorphism, n: int = 1,
                           cap: int = DEFAULT_POINT_CAP) -> FixedPointSet:
    """Fixed points of ``M**n`` on the torus by scanning the image polytope.

    Integer vectors ``v`` in the bounding box of ``(I - M^n)[0,1)^2`` are mapped
    back with the exact adjugate; those landing in the half-open unit square are
    the periodic points.
    """
    if n < 1:
        raise ValueError("period must be >= 1")
    mn = m.power(n)
    A = [[1 - mn[0][0], -mn[0][1]], [-mn[1][0], 1 - mn[1][1]]]
    det = A[0][0] * A[1][1] - A[0][1] * A[1][0]
    if det == 0:
        raise DegenerateFixedEquation(f"det(I - M^{n}) = 0")
    if abs(det) > cap:
        raise OverflowRisk(f"|det(I - M^{n})| = {abs(det)} exceeds the cap {cap}")
    corners = [(0, 0), (A[0][0], A[1][0]), (A[0][1], A[1][1]),
               (A[0][0] + A[0][1], A[1][0] + A[1][1])]
    lo1, hi1 = min(p[0] for p in corners), max(p[0] for p in corners)
    lo2, hi2 = min(p[1] for p in corners), max(p[1] for p in corners)
    sgn = 1 if det > 0 else -1
    den = abs(det)
    # x = adj(A) v / det; scaled numerators y = sgn * adj(A) v must satisfy 0 <= y < |det|
    adj = np.array([[A[1][1], -A[0][1]], [-A[1][0], A[0][0]]], dtype=np.int64) * sgn
    v2 = np.arange(lo2, hi2 + 1, dtype=np.int64)
    found_v, found_y = [], []
    for v1 in range(lo1, hi1 + 1):
        y1 = adj[0, 0] * v1 + adj[0, 1] * v2
        y2 = adj[1, 0] * v1 + adj[1, 1] * v2
        ok = (y1 >= 0) & (y1 < den) & (y2 >= 0) & (y2 < den)
        if ok.any():
            found_v.append(np.column_stack([np.full(ok.sum(), v1, dtype=np.int64), v2[ok]]))
            found_y.append(np.column_stack([y1[ok], y2[ok]]))
    lifts = np.concatenate(found_v) if found_v else np.zeros((0, 2), dtype=np.int64)
    nums = np.concatenate(found_y) if found_y else np.zeros((0, 2), dtype=np.int64)
    order = np.lexsort((nums[:, 1], nums[:, 0]))
    nums, lifts = nums[order], lifts[order]
    if len(nums) != den:
        raise DegenerateFixedEquation(
            f"lattice scan found {len(nums)} points, expected |det(I - M^{n})| = {den}"
        )
    return FixedPointSet(points=nums / den, numerators=nums, denominator=den, lifts=lifts, period=n)


def fixed_points_linear(m: HyperbolicAutomorphism) -> FixedPointSet:
    return periodic_points_linear(m, 1)
