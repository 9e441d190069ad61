import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hilbundle.blocks import block_section, split_section
from hilbundle.generators import fourier_field
from hilbundle.manifold import OperatorField, build_model, constant_field, derham
from hilbundle.partition import ball_cover, build_partition
from hilbundle.stabilize import (BundleError, build_projection, cocycle_residual, gauge_section,
                                 make_bundle, phi_embed, psi_project, stabilization_check,
                                 validate_bundle, verify_projection)

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def trivial(circle, circle_partition):
    return make_bundle(circle, circle_partition, "trivial", d=2)


@pytest.fixture(scope="module")
def gauge(circle, circle_partition):
    return make_bundle(circle, circle_partition, "gauge", d=2, rng=np.random.default_rng(4))


def test_trivial_bundle(trivial):
    assert trivial.C_tau == 0
    for t in trivial.transitions.values():
        assert np.all(t.values[..., 0, 0][t.values[..., 0, 0] != 0] == 1)
    assert validate_bundle(trivial).passed


def test_trivial_projection_blocks(circle, trivial, circle_partition):
    sp = build_projection(trivial, circle_partition)
    chi = circle_partition.chi
    for (i, j), blk in sp.field.blocks.items():
        np.testing.assert_allclose(blk.values[..., 0, 0], np.sqrt(chi[i] * chi[j]), atol=1e-15)
        assert np.all(blk.values[..., 0, 1] == 0)
    assert verify_projection(sp).passed


def test_gauge_cocycle_exact(gauge):
    assert cocycle_residual(gauge) < 1e-12
    rep = validate_bundle(gauge)
    assert rep.passed, rep.summary()
    assert gauge.C_tau > 0


def test_non_unitary_generator_rejected(circle, circle_partition):
    def bad(i, j):
        v = np.broadcast_to(2 * np.eye(2, dtype=complex), circle.shape + (2, 2)).copy()
        return OperatorField(v, np.zeros(circle.shape + (1, 2, 2), complex))
    with pytest.raises(BundleError):
        make_bundle(circle, circle_partition, bad, d=2)


def test_unknown_generator_and_radius(circle, circle_partition):
    with pytest.raises(BundleError):
        make_bundle(circle, circle_partition, "moebius")
    with pytest.raises(BundleError):
        make_bundle(circle, circle_partition, radius=0.5 * circle_partition.epsilon)


def test_phi_of_constant_on_trivial(circle, trivial, circle_partition):
    xi = np.array([[0.6], [0.8j]])
    local = gauge_section(trivial, constant_field(circle, xi))
    emb = phi_embed(trivial, circle_partition, local)
    parts = split_section(emb, trivial.m)
    for i, p in enumerate(parts):
        np.testing.assert_allclose(p.values[..., :, 0],
                                   xi[:, 0] * circle_partition.sqrt_chi[i][..., None], atol=1e-15)
    norms = np.sqrt(np.sum(np.abs(emb.values[..., 0]) ** 2, axis=-1))
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)


def test_zero_section(circle, gauge, circle_partition):
    local = gauge_section(gauge, constant_field(circle, np.zeros((2, 1))))
    assert np.max(np.abs(phi_embed(gauge, circle_partition, local).values)) == 0


def test_psi_single_block(circle, gauge, circle_partition, rng):
    m, d = gauge.m, gauge.d
    t1 = fourier_field(circle, d, 1, rng)
    zero = OperatorField(np.zeros_like(t1.values), np.zeros_like(t1.deriv))
    parts = [zero] * m
    parts[1] = t1
    out = psi_project(gauge, circle_partition, block_section(parts))
    s1 = circle_partition.sqrt_chi[1]
    for j in range(m):
        if (j, 1) not in gauge.transitions:
            continue
        mask = gauge.domains[j]
        expect = (gauge.transitions[(j, 1)].values @ t1.values)[..., :, 0] * s1[..., None]
        np.testing.assert_allclose(out[j].values[mask][..., 0], expect[mask], atol=1e-13)


def test_psi_is_module_map(circle, gauge, circle_partition, rng):
    t = fourier_field(circle, gauge.m * gauge.d, 1, rng, degree=2)
    f = fourier_field(circle, 1, 1, rng, degree=2)
    a = psi_project(gauge, circle_partition, t * f)
    b = psi_project(gauge, circle_partition, t)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x.values, (y * f).values, atol=1e-12)


def test_incompatible_local_data_rejected(circle, gauge, circle_partition, rng):
    local = [fourier_field(circle, 2, 1, rng).masked(gauge.domains[i]) for i in range(gauge.m)]
    with pytest.raises(BundleError):
        phi_embed(gauge, circle_partition, local)


def test_projection_against_dense_oracle(circle, gauge, circle_partition):
    sp = build_projection(gauge, circle_partition)
    dense = sp.field.dense()
    P = dense.values
    assert np.max(np.abs(P @ P - P)) < 1e-12
    assert np.max(np.abs(P - np.conj(np.swapaxes(P, -1, -2)))) < 1e-14
    np.testing.assert_allclose(np.trace(P, axis1=-2, axis2=-1).real, gauge.d, atol=1e-12)
    # measured D_P agrees with a finite-difference derivative of the dense field
    fd = derham(circle, OperatorField(P)).components
    fd_sup = float(np.max(np.linalg.norm(fd[..., 0, :, :], ord=2, axis=(-2, -1))))
    assert sp.D_P == pytest.approx(fd_sup, rel=1e-2)
    assert sp.D_P <= sp.bound


def test_stabilization_gauge_bundles(circle, circle_partition):
    rng = np.random.default_rng(99)
    for _ in range(3):
        b = make_bundle(circle, circle_partition, "gauge", d=2, rng=rng)
        rep = stabilization_check(b, circle_partition, rng)
        assert rep.passed, rep.summary()


def test_stabilization_box(box2, box_partition):
    rng = np.random.default_rng(5)
    b = make_bundle(box2, box_partition, "gauge", d=2, rng=rng, strength=0.5)
    rep = stabilization_check(b, box_partition, rng, sections=2)
    assert rep.passed, rep.summary()


@settings(max_examples=6)
@given(st.integers(0, 2 ** 31), st.integers(1, 3), st.floats(0.1, 2.0))
def test_stabilization_property(seed, d, strength):
    m = build_model("torus", 1, [TWO_PI], [96])
    eps = TWO_PI / 6
    P = build_partition(m, ball_cover(m, eps), eps)
    rng = np.random.default_rng(seed)
    b = make_bundle(m, P, "gauge", d=d, rng=rng, strength=strength)
    rep = stabilization_check(b, P, rng, sections=1)
    assert rep.passed, rep.summary()
