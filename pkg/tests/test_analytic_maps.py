import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruelle.analytic_maps import (PerturbedMap, Profile, TrigPolynomial, fixed_points_perturbed,
                                  strip_distance_bound)
from ruelle.errors import CountMismatch, NewtonDiverged
from ruelle.lattice import fixed_points_linear

TWO_PI = 2 * math.pi


def single_mode(k=(1, 2), a=0.7, v=(0.3, -0.4)):
    return TrigPolynomial.sine_mode(k, a, v), np.array(k, float), a, np.array(v)


def test_conjugate_partner_completed():
    p = TrigPolynomial({(1, 0): [1 + 2j, 0.5j]})
    modes = p.modes()
    np.testing.assert_array_equal(modes[(-1, 0)], np.conj(modes[(1, 0)]))


def test_inconsistent_partner_rejected():
    with pytest.raises(ValueError, match="conjugates"):
        TrigPolynomial({(1, 0): [1j, 0], (-1, 0): [1j, 0]})


def test_complex_constant_rejected():
    with pytest.raises(ValueError):
        TrigPolynomial({(0, 0): [1j, 0]})


def test_json_roundtrip_and_duplicates():
    p, *_ = single_mode()
    q = TrigPolynomial.from_json(p.to_json())
    np.testing.assert_array_equal(p.freqs, q.freqs)
    np.testing.assert_array_equal(p.coefs, q.coefs)
    with pytest.raises(ValueError, match="duplicate"):
        TrigPolynomial.from_json([{"k": [1, 0], "re": [1, 0]}, {"k": [1, 0], "re": [2, 0]}])


def test_from_json_fills_partner():
    p = TrigPolynomial.from_json([{"k": [2, 1], "re": [0.0, 0.0], "im": [-0.5, 0.0]}])
    x = np.array([0.1, 0.3])
    assert p(x)[0] == pytest.approx(math.sin(TWO_PI * (2 * 0.1 + 0.3)))
    assert len(p.freqs) == 2


def test_algebra():
    p, *_ = single_mode()
    q = TrigPolynomial.sine_mode((0, 1), 0.2, (1, 0))
    x = np.random.default_rng(0).random((20, 2))
    np.testing.assert_allclose((p + 2.0 * q)(x), p(x) + 2 * q(x), atol=1e-15)
    np.testing.assert_allclose((-p)(x), -p(x), atol=1e-15)
    assert (p + -p).is_constant
    assert TrigPolynomial.zero().max_freq == 0
    assert p.max_freq == 2


def test_single_axis():
    assert TrigPolynomial.sine_mode((3, 0), 1, (1, 1)).single_axis() == 0
    assert TrigPolynomial.sine_mode((0, 2), 1, (1, 1)).single_axis() == 1
    assert TrigPolynomial.sine_mode((1, 1), 1, (1, 1)).single_axis() is None


def test_eval_linear(example_m, rng):
    T = PerturbedMap(example_m)
    x = rng.random((50, 2))
    np.testing.assert_allclose(T(x, mod1=True), np.mod(x @ example_m.matrix.T, 1.0), atol=1e-15)


def test_eval_single_mode_oracle(example_m, rng):
    psi, k, a, v = single_mode()
    T = PerturbedMap(example_m, psi, 0.03)
    x = rng.random((40, 2))
    expected = x @ example_m.matrix.T + 0.03 * a * np.sin(TWO_PI * x @ k)[:, None] * v
    np.testing.assert_allclose(T(x), expected, atol=1e-14)
    np.testing.assert_allclose(T(np.zeros(2)), 0.0, atol=1e-16)


def test_reality_of_complex_evaluation(rng):
    p = TrigPolynomial({(1, 0): [0.3 + 0.1j, 0.2j], (1, -2): [0.05, -0.4 + 0.2j], (0, 0): [0.5, 0.0]})
    z = p.eval_complex(rng.random((100, 2)))
    assert np.abs(z.imag).max() < 1e-12


def test_derivative_trivial_cases(example_m, rng):
    x = rng.random((5, 2))
    np.testing.assert_array_equal(PerturbedMap(example_m).derivative(x), np.broadcast_to(example_m.matrix, (5, 2, 2)))
    const = TrigPolynomial({(0, 0): [0.3, -0.2]})
    np.testing.assert_array_equal(PerturbedMap(example_m, const, 0.5).derivative(x),
                                  np.broadcast_to(example_m.matrix, (5, 2, 2)))


def test_derivative_finite_differences(example_m, rng):
    psi = TrigPolynomial({(1, 0): [0.3 + 0.1j, 0.2j], (1, -2): [0.05, -0.4 + 0.2j]})
    T = PerturbedMap(example_m, psi, 0.1)
    x = rng.random((100, 2))
    h = 1e-6
    fd = np.stack([(T(x + h * e) - T(x - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)
    jac = T.derivative(x)
    np.testing.assert_allclose(jac, fd, rtol=1e-6, atol=1e-7)


def test_iterate_with_jacobian(example_m, rng):
    psi, *_ = single_mode()
    T = PerturbedMap(example_m, psi, 0.02)
    x = rng.random((10, 2))
    y, jac = T.iterate_with_jacobian(x, 3)
    np.testing.assert_allclose(y, T.iterate(x, 3), atol=1e-12)
    h = 1e-6
    fd = np.stack([(T.iterate(x + h * e, 3) - T.iterate(x - h * e, 3)) / (2 * h) for e in np.eye(2)], axis=-1)
    np.testing.assert_allclose(jac, fd, rtol=1e-6, atol=1e-5)


def test_strip_bound_basic(example_m):
    psi, *_ = single_mode()
    assert strip_distance_bound(PerturbedMap(example_m, psi, 0.0)) == 0.0
    b1 = PerturbedMap(example_m, psi, 0.01).strip_distance_bound()
    assert PerturbedMap(example_m, psi, 0.02).strip_distance_bound() == pytest.approx(2 * b1, rel=1e-15)
    assert PerturbedMap(example_m, psi, 0.01, r=0.2).strip_distance_bound() > b1


def test_strip_bound_tight_on_real_torus(example_m):
    psi, k, a, v = single_mode()
    eps = 0.05
    bound = PerturbedMap(example_m, psi, eps, r=1e-12).strip_distance_bound()
    t = np.linspace(0, 1, 401)
    x = np.stack(np.meshgrid(t, t, indexing="ij"), -1).reshape(-1, 2)
    sup_f = np.linalg.norm(eps * psi(x), axis=1).max()
    sup_d = np.linalg.norm(eps * psi.jacobian(x), ord=2, axis=(1, 2)).max()
    closed_form = eps * a * np.linalg.norm(v) * (1 + TWO_PI * np.linalg.norm(k))
    assert bound == pytest.approx(closed_form, rel=1e-9)
    assert sup_f + sup_d <= bound * (1 + 1e-12)
    assert sup_f + sup_d >= 0.999 * bound


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 0.5), st.floats(0, 0.5), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_strip_bound_monotone(e1, e2, r1, r2):
    from ruelle.lattice import validate_hyperbolic
    m = validate_hyperbolic([[3, 1], [2, 1]])
    psi, *_ = single_mode()
    lo_e, hi_e = sorted((e1, e2))
    lo_r, hi_r = sorted((r1, r2))
    assert PerturbedMap(m, psi, lo_e, lo_r).strip_distance_bound() <= PerturbedMap(m, psi, hi_e, hi_r).strip_distance_bound()


def test_constructor_validation(example_m):
    with pytest.raises(ValueError):
        PerturbedMap(example_m, epsilon=-1.0)
    with pytest.raises(ValueError):
        PerturbedMap(example_m, r=0.0)


def test_profile_basics():
    p = Profile.sine(3, 2.0, 0.25)
    t = np.linspace(0, 1, 17)
    np.testing.assert_allclose(p(t), 2 * np.cos(TWO_PI * 3 * t), atol=1e-14)
    np.testing.assert_allclose(p.derivative(t), -2 * TWO_PI * 3 * np.sin(TWO_PI * 3 * t), atol=1e-12)
    assert Profile.sine(0, 1.0, 0.0).is_constant
    f = p.to_field(2, [1.0, -1.0])
    x = np.column_stack([np.zeros_like(t), t])
    np.testing.assert_allclose(f(x), np.outer(p(t), [1, -1]), atol=1e-14)
    assert Profile.from_json({"q": 3, "amp": 2.0, "phase": 0.25}).to_json() == p.to_json()


# -- fixed points -----------------------------------------------------------------
def test_fixed_points_linear_case(example_m):
    T = PerturbedMap(example_m)
    np.testing.assert_array_equal(fixed_points_perturbed(T), fixed_points_linear(example_m).points)


def test_origin_stays_fixed(example_m):
    psi = TrigPolynomial.sine_mode((1, 1), 0.5, (1, -1))
    pts = fixed_points_perturbed(PerturbedMap(example_m, psi, 0.02))
    assert np.abs(pts[0]).max() < 1e-15


def test_continuation_is_first_order(example_m):
    psi = TrigPolynomial.sine_mode((1, 0), 1.0, (0.3, 0.5), phase=0.1) + TrigPolynomial({(0, 0): [0.2, 0.1]})
    seeds = fixed_points_linear(example_m).points
    eps = 0.02
    dists = []
    for e in (eps, eps / 2, eps / 4):
        pts = fixed_points_perturbed(PerturbedMap(example_m, psi, e))
        d = pts - seeds
        d -= np.round(d)
        dists.append(np.linalg.norm(d, axis=1))
    dists = np.array(dists)
    assert (dists[0] > 0).all()
    ratios = dists[1:] / dists[:-1]
    np.testing.assert_allclose(ratios, 0.5, atol=0.02)


def test_continued_points_match_grid_minimum(example_m):
    psi = TrigPolynomial.sine_mode((1, 0), 1.0, (0.3, 0.5), phase=0.1)
    T = PerturbedMap(example_m, psi, 0.03)
    pts = fixed_points_perturbed(T)
    assert len(pts) == 2
    n = 400
    t = (np.arange(n) + 0.5) / n
    x = np.stack(np.meshgrid(t, t, indexing="ij"), -1).reshape(-1, 2)
    r = T(x) - x
    r -= np.round(r)
    res = np.linalg.norm(r, axis=1)
    for p in pts:
        d = x - p
        d -= np.round(d)
        near = np.linalg.norm(d, axis=1) < 0.05
        best = x[near][np.argmin(res[near])]
        gap = best - p
        gap -= np.round(gap)
        assert np.linalg.norm(gap) < 3.0 / n
        # and the Newton residual is far below the grid resolution
        rr = T(p) - p
        assert np.abs(rr - np.round(rr)).max() < 1e-12


def test_periodic_continuation_count(example_m):
    psi = TrigPolynomial.sine_mode((1, 0), 1.0, (0.3, 0.5), phase=0.1)
    pts = fixed_points_perturbed(PerturbedMap(example_m, psi, 0.01), period=2)
    assert len(pts) == 12       # |det(I - M^2)| = |1 - 14 + 1|


def test_newton_diverges_for_large_epsilon(example_m):
    psi = TrigPolynomial.sine_mode((3, 2), 1.0, (1, 1), phase=0.1)
    with pytest.raises((NewtonDiverged, CountMismatch)):
        fixed_points_perturbed(PerturbedMap(example_m, psi, 3.0), period=2, max_iter=8)


def test_newton_reports_seed(example_m):
    psi = TrigPolynomial.sine_mode((3, 2), 1.0, (1, 1), phase=0.1)
    try:
        fixed_points_perturbed(PerturbedMap(example_m, psi, 3.0), max_iter=3)
    except NewtonDiverged as exc:
        assert exc.seed_index is not None and "seed" in str(exc)
    except CountMismatch:
        pass
    else:
        pytest.fail("expected a continuation failure")


def test_continuation_threshold(example_m):
    psi, *_ = single_mode()
    with pytest.raises(ValueError, match="threshold"):
        fixed_points_perturbed(PerturbedMap(example_m, psi, 0.2), max_epsilon=0.1)
