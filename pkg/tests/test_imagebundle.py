import math

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from hypothesis import given, settings, strategies as st

from hilbundle.generators import random_unitary, rotating_projector
from hilbundle.imagebundle import (ProjectionField, _inv_sqrt_eig_deriv, _inv_sqrt_quad_deriv,
                                   build_W, dispro_check, image_bundle, inv_sqrt_eig,
                                   inv_sqrt_quad, projection_field, quadrature_convergence,
                                   random_spd, select_radius)
from hilbundle.manifold import OperatorField, build_model, constant_field
from hilbundle.partition import ball_cover, build_partition
from hilbundle.report import CheckReport
from hilbundle.stabilize import cocycle_residual

TWO_PI = 2 * math.pi


def _fake(D_P):
    return ProjectionField(None, D_P, 1)


@pytest.fixture(scope="module")
def rotating1(circle):
    F = rotating_projector(circle, 3, 1, np.random.default_rng(8))
    return projection_field(circle, F)


@pytest.fixture(scope="module")
def constant_proj(circle):
    v = random_unitary(3, np.random.default_rng(2))[:, :2]
    return projection_field(circle, constant_field(circle, v @ v.conj().T))


def test_select_radius_examples(circle):
    big = build_model("torus", 1, [100.0], [1000])
    assert select_radius(big, _fake(1.0)) == pytest.approx(0.225)
    assert select_radius(big, _fake(10.0)) == pytest.approx(0.0225)
    assert select_radius(circle, _fake(0.0)) == pytest.approx(0.9 * math.pi)
    assert select_radius(circle, _fake(0.0), s=0.3) == pytest.approx(0.3)


def test_projection_field_validation(circle, rng):
    with pytest.raises(ValueError):
        projection_field(circle, constant_field(circle, np.array([[1.0, 1.0], [0.0, 1.0]])))
    vals = np.zeros(circle.shape + (2, 2), complex)
    vals[: 128, 0, 0] = 1
    with pytest.raises(ValueError):
        projection_field(circle, OperatorField(vals))


def test_dispro_constant(circle, constant_proj):
    rep = dispro_check(circle, constant_proj, 1.0, centers=[circle.point((0,))])
    assert rep["dispro.half"].measured == 0


def test_dispro_rotating_with_formula_radius(circle, rotating1):
    r = select_radius(circle, rotating1)
    rep = dispro_check(circle, rotating1, r)
    assert rep.passed and rep["dispro.half"].measured < 0.5
    assert rep.tables["dispro_profile"].header == ["distance", "norm_diff"]


def test_dispro_inflated_radius_flags_violation(circle):
    F = rotating_projector(circle, 3, 1, np.random.default_rng(3), max_frequency=4)
    P = projection_field(circle, F)
    r = min(10 * select_radius(circle, P), 0.9 * math.pi)
    rep = dispro_check(circle, P, r)
    assert not rep["dispro.half"].passed


def test_inv_sqrt_eig_examples():
    np.testing.assert_allclose(inv_sqrt_eig(np.eye(3)), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(inv_sqrt_eig(np.diag([4.0, 1.0])), np.diag([0.5, 1.0]), atol=1e-15)
    with pytest.raises(ValueError):
        inv_sqrt_eig(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        inv_sqrt_quad(np.diag([1.0, 0.0]))


def test_scalar_identity_independent_oracle():
    val, _ = scipy.integrate.quad(lambda lam: lam ** -0.5 / (lam + 1), 0, np.inf)
    assert val / math.pi == pytest.approx(1.0, abs=1e-8)
    assert inv_sqrt_quad(np.array([[1.0]]))[0, 0].real == pytest.approx(1.0, abs=1e-8)


def test_quad_examples():
    np.testing.assert_allclose(inv_sqrt_quad(np.diag([4.0, 1.0])), np.diag([0.5, 1.0]), atol=1e-8)
    np.testing.assert_allclose(inv_sqrt_quad(np.eye(2)), np.eye(2), atol=1e-12)
    with pytest.raises(ValueError):
        inv_sqrt_quad(np.eye(2), nodes=8)


@given(st.integers(0, 2 ** 31), st.integers(1, 8))
def test_eig_against_scipy_sqrtm(seed, k):
    L = random_spd(np.random.default_rng(seed), k, 1e3)
    ref = np.linalg.inv(scipy.linalg.sqrtm(L))
    np.testing.assert_allclose(inv_sqrt_eig(L), ref, atol=1e-9 * np.linalg.norm(ref, 2))


@given(st.integers(0, 2 ** 31), st.integers(1, 8))
def test_random_spd_condition(seed, k):
    L = random_spd(np.random.default_rng(seed), k, 1e3)
    assert np.allclose(L, L.conj().T)
    lam = np.linalg.eigvalsh(L)
    assert lam.min() > 0 and lam.max() / lam.min() <= 1e3 * (1 + 1e-9)


def test_quadrature_convergence_table(rng):
    t = quadrature_convergence(rng, count=20)
    errs = np.array([row[3:] for row in t.rows])
    assert t.header == ["matrix", "dim", "cond", "err_16", "err_32", "err_64", "err_128",
                        "err_200"]
    assert errs[:, -1].max() < 1e-6
    # doubling the nodes never makes things worse, down to roundoff
    for a, b in [(0, 1), (1, 2), (2, 3)]:
        assert np.all(errs[:, b] <= np.maximum(errs[:, a], 1e-12))


def test_inv_sqrt_derivatives_agree_and_match_fd(rng):
    A = random_spd(rng, 4, 50)
    B = random_spd(rng, 4, 50) - random_spd(rng, 4, 50)
    B = (B + B.conj().T) / 2
    lam, U = np.linalg.eigh(A)
    d_eig = _inv_sqrt_eig_deriv(lam, U, B[None])[0]
    d_quad = _inv_sqrt_quad_deriv(A, B[None], 400)[0]
    t = 1e-5
    fd = (inv_sqrt_eig(A + t * B) - inv_sqrt_eig(A - t * B)) / (2 * t)
    np.testing.assert_allclose(d_eig, fd, atol=1e-6)
    np.testing.assert_allclose(d_quad, d_eig, atol=1e-6 * np.abs(d_eig).max())


def test_build_W_constant_is_inclusion(circle, constant_proj):
    f = build_W(circle, constant_proj, circle.point((0,)), 1.0)
    assert f.report.passed, f.report.summary()
    W = f.W.values[f.mask]
    np.testing.assert_allclose(W, np.broadcast_to(f.basis, W.shape), atol=1e-14)
    assert np.max(np.abs(f.W.deriv)) < 1e-14


@pytest.mark.parametrize("method", ["eig", "quad"])
def test_build_W_rotating(circle, rotating1, method):
    r = select_radius(circle, rotating1)
    f = build_W(circle, rotating1, circle.point((17,)), r, method=method)
    assert f.report.passed, f.report.summary()
    assert f.report["W.isometry"].measured < 1e-8
    assert f.report["W.range"].measured < 1e-8


def test_image_bundle_constant(circle, constant_proj):
    eps = TWO_PI / 8
    part = build_partition(circle, ball_cover(circle, eps), eps)
    b = image_bundle(circle, constant_proj, 2 * eps + 0.01, part)
    assert b.C_tau < 1e-12
    for (i, j), t in b.transitions.items():
        m = b.overlap(i, j)
        np.testing.assert_allclose(t.values[m], np.broadcast_to(np.eye(2), t.values[m].shape),
                                   atol=1e-12)


def test_image_bundle_rejects_small_radius(circle, rotating1):
    eps = TWO_PI / 8
    part = build_partition(circle, ball_cover(circle, eps), eps)
    with pytest.raises(ValueError):
        image_bundle(circle, rotating1, eps, part)


@settings(max_examples=4)
@given(st.integers(0, 2 ** 31), st.sampled_from([1, 2]))
def test_image_bundle_rotating_property(seed, rank):
    m = build_model("torus", 1, [TWO_PI], [128])
    P = projection_field(m, rotating_projector(m, 3, rank, np.random.default_rng(seed)))
    r = select_radius(m, P)
    eps = 0.45 * r
    if eps < m.spacing[0]:
        return
    part = build_partition(m, ball_cover(m, eps), eps)
    rep = CheckReport()
    b = image_bundle(m, P, r, part, report=rep)
    assert rep.passed, rep.summary()
    assert cocycle_residual(b) < 1e-8
    assert b.C_tau <= 6 * math.sqrt(2) * P.D_P + 1e-8
