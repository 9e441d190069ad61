import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hilbundle.generators import fourier_field, plane_wave, random_unitary
from hilbundle.manifold import OperatorField, build_model, constant_field, scalar_field
from hilbundle.opspace import (BOUNDS, adjoint_derivative_check, adjoint_ratio, alpha_norm_1,
                               cb_amplify, cb_check, field_norm_1, op_norm, op_norms, pi_block,
                               pi_multiplicativity_error, product_norm_check, sandwich_check)

TWO_PI = 2 * math.pi


def _power_iteration(a, iters=500):
    """Independent largest-singular-value oracle."""
    v = np.ones(a.shape[1], complex)
    for _ in range(iters):
        v = a.conj().T @ (a @ v)
        v /= np.linalg.norm(v)
    return float(np.linalg.norm(a @ v))


def test_op_norm_examples():
    assert op_norm(np.eye(2)) == pytest.approx(1)
    assert op_norm([[0, 1], [0, 0]]) == pytest.approx(1)
    assert op_norm(np.zeros((0, 0))) == 0


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_op_norms_against_power_iteration(r, c, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, r, c)) + 1j * rng.standard_normal((3, r, c))
    got = op_norms(a)
    for k in range(3):
        assert got[k] == pytest.approx(_power_iteration(a[k]), rel=1e-8)


def test_norm1_constant(circle):
    c = constant_field(circle, np.array([[2.0 + 0j]]))
    assert field_norm_1(circle, c) == pytest.approx(2)


def test_norm1_plane_wave(circle):
    # |f| = 1 and |df| = 1, hence sqrt(2)
    assert field_norm_1(circle, plane_wave(circle, [1])) == pytest.approx(math.sqrt(2), abs=1e-6)


def test_norm1_sine(circle):
    theta = circle.coords()[..., 0]
    f = scalar_field(np.sin(theta), np.cos(theta)[..., None])
    assert field_norm_1(circle, f) == pytest.approx(1.0, abs=1e-12)


def test_norm1_fd_path_close(circle):
    f = plane_wave(circle, [1])
    h = circle.spacing[0]
    assert abs(field_norm_1(circle, f, fd=True) - field_norm_1(circle, f)) <= h ** 2 / 6


def test_pi_block_identity_and_zero(circle):
    eye = constant_field(circle, np.eye(2))
    assert alpha_norm_1(circle, eye) == pytest.approx(1)
    zero = constant_field(circle, np.zeros((2, 2)))
    assert alpha_norm_1(circle, zero) == 0


def test_pi_block_layout(torus2, rng):
    a = fourier_field(torus2, 2, 3, rng, degree=1)
    B = pi_block(torus2, a)
    assert B.shape == torus2.shape + (6, 9)
    x = (5, 7)
    np.testing.assert_array_equal(B[x][:2, :3], a.values[x])
    np.testing.assert_array_equal(B[x][2:4, :3], a.deriv[x][0])
    np.testing.assert_array_equal(B[x][4:6, :3], a.deriv[x][1])
    np.testing.assert_array_equal(B[x][4:6, 6:9], a.values[x])
    assert np.all(B[x][:2, 3:] == 0)


def test_sandwich_examples(circle, rng):
    theta = circle.coords()[..., 0]
    e = np.exp(1j * theta)
    vals = e[..., None, None] * np.eye(2)
    der = (1j * e)[..., None, None, None] * np.eye(2)
    a = OperatorField(vals, der)
    assert sandwich_check(circle, a).passed
    U = random_unitary(3, rng)
    rep = sandwich_check(circle, constant_field(circle, U))
    assert rep.passed
    assert alpha_norm_1(circle, constant_field(circle, U)) == pytest.approx(1)


def test_sandwich_random_and_adversarial(circle, rng):
    for _ in range(50):
        assert sandwich_check(circle, fourier_field(circle, 3, 3, rng)).passed
    steep = fourier_field(circle, 3, 3, rng, degree=12, scale=50)
    assert sandwich_check(circle, steep).passed


def test_adjoint_ratio_selfadjoint_is_one(circle, rng):
    a = fourier_field(circle, 3, 3, rng)
    h = (a + a.adjoint()) * 0.5
    r = adjoint_ratio(circle, h)
    assert r == pytest.approx(1.0, abs=1e-12)


def test_adjoint_ratio_bound_torus2(torus2, rng):
    worst = 0.0
    for _ in range(20):
        a = fourier_field(torus2, 4, 4, rng, degree=int(rng.integers(1, 4)))
        assert adjoint_derivative_check(torus2, a).passed
        worst = max(worst, adjoint_ratio(torus2, a))
    assert 1.0 < worst <= math.sqrt(2) + 1e-6


def test_adjoint_ratio_one_dimensional_is_one(circle, rng):
    # in one dimension d(a*) = (da)* and the ratio is exactly 1
    a = fourier_field(circle, 3, 2, rng)
    assert adjoint_ratio(circle, a) == pytest.approx(1.0, abs=1e-12)


def test_product_examples(circle, rng):
    one = constant_field(circle, np.array([[1.0 + 0j]]))
    assert field_norm_1(circle, one @ one) == pytest.approx(1)
    f = plane_wave(circle, [1])
    assert field_norm_1(circle, f @ f) == pytest.approx(math.sqrt(5), abs=1e-6)
    assert field_norm_1(circle, f) ** 2 == pytest.approx(2, abs=1e-6)
    for _ in range(30):
        a = fourier_field(circle, 2, 2, rng)
        b = fourier_field(circle, 2, 2, rng)
        assert product_norm_check(circle, a, b).passed
        assert pi_multiplicativity_error(circle, a, b) < 1e-10


def test_cb_bounds(circle, torus2):
    assert BOUNDS["involution"](1) == 1
    assert cb_amplify(circle, "identity", 2, samples=5) == pytest.approx(1)
    assert cb_amplify(circle, "involution", 2, samples=10) <= 1 + 1e-9
    assert cb_check(torus2, "involution", 3, samples=20).passed
    assert cb_check(circle, "multiplication", 2, samples=10).passed


def test_cb_callable_and_errors(circle):
    assert cb_amplify(circle, lambda F: F * 2.0, 1, samples=3) == pytest.approx(2)
    with pytest.raises(ValueError):
        cb_amplify(circle, "nonsense", 1, samples=1)
    with pytest.raises(ValueError):
        cb_amplify(circle, "identity", 0)


@given(st.integers(0, 2 ** 31), st.integers(1, 3))
def test_pi_is_multiplicative(seed, d):
    m = build_model("torus", 2, [TWO_PI, 3.0], [16, 12])
    rng = np.random.default_rng(seed)
    a = fourier_field(m, d, d, rng, degree=2)
    b = fourier_field(m, d, d, rng, degree=2)
    assert pi_multiplicativity_error(m, a, b) < 1e-10
    assert product_norm_check(m, a, b).passed
