import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hilbundle.manifold import build_model
from hilbundle.partition import (ball_cover, build_partition, bump_profile,
                                 lattice_multiplicity, verify_partition)

TWO_PI = 2 * math.pi


def _sqrt_chi_complex_step(x, centers, eps, L, step=1e-30):
    """Independent evaluation of d sqrt(chi_i) on the circle by complex-step differentiation."""
    R = 2 * eps
    betas = []
    for c in centers:
        z = (x - c + L / 2) % L - L / 2 + 1j * step
        u = z ** 2 / R ** 2
        inside = np.abs(z.real) < R
        betas.append(np.where(inside, np.exp(-1 / np.where(inside, 1 - u, 1.0)), 0))
    betas = np.array(betas)
    root = np.sqrt(np.sum(betas ** 2, axis=0))
    return (betas / root).real, (betas / root).imag / step


def test_bump_profile_values():
    assert bump_profile(0.0) == pytest.approx(math.exp(-1))
    assert bump_profile(1.0) == 0 and bump_profile(-1.5) == 0
    t = np.linspace(-0.99, 0.99, 101)
    np.testing.assert_allclose(bump_profile(t), bump_profile(-t))


def test_cover_quarter_circle(circle64):
    cs = ball_cover(circle64, math.pi / 2)
    np.testing.assert_allclose([c.coords[0] for c in cs], [0, math.pi / 2, math.pi, 3 * math.pi / 2])
    P = build_partition(circle64, cs, math.pi / 2)
    # every point of the circle lies in all four doubled balls
    assert P.K == 4
    assert lattice_multiplicity(circle64, math.pi / 2) == 4


def test_cover_eighth_circle(circle):
    eps = math.pi / 4
    cs = ball_cover(circle, eps)
    assert len(cs) == 8
    x = circle.coords()[..., 0]
    inside = np.zeros(x.shape, int)
    for c in cs:
        d = np.abs((x - c.coords[0] + math.pi) % TWO_PI - math.pi)
        inside += d < eps
    assert inside.min() >= 1


@pytest.mark.parametrize("eps", [math.pi, 4.0, -0.1, 0.0])
def test_cover_rejects_bad_eps(circle, eps):
    with pytest.raises(ValueError):
        ball_cover(circle, eps)


def test_cover_rejects_sub_grid_eps(circle64):
    with pytest.raises(ValueError):
        ball_cover(circle64, 0.5 * circle64.spacing[0])


def test_antipodal_pair(circle):
    eps = 0.9 * math.pi / 2
    cs = [circle.point((0,)), circle.point((128,))]
    P = build_partition(circle, cs, eps)
    assert np.max(np.abs(P.chi.sum(axis=0) - 1)) < 1e-12
    assert P.K == 2


def test_sqrt_chi_matches_complex_step_oracle(circle, circle_partition):
    P = circle_partition
    x = circle.coords()[..., 0]
    vals, ders = _sqrt_chi_complex_step(x, P.centers[:, 0], P.epsilon, TWO_PI)
    np.testing.assert_allclose(P.sqrt_chi, vals, atol=1e-13)
    np.testing.assert_allclose(P.dsqrt_chi[..., 0], ders, atol=1e-11)
    assert P.C_chi == pytest.approx(np.max(np.abs(ders)), rel=1e-12)


def test_frozen_partition_constants(circle_partition):
    # eight members of pitch pi/4 on the circle, grid 256; values from the complex-step oracle
    P = circle_partition
    assert P.size == 8 and P.K == 4
    assert P.C_chi == pytest.approx(1.00523, abs=1e-4)
    assert P.lower_bound >= 1 / P.K


def test_verify_valid_partition(circle, circle_partition):
    rep = verify_partition(circle, circle_partition)
    assert rep.passed, rep.summary()
    assert rep["partition.sum_to_one"].measured < 1e-12


def test_verify_detects_deleted_bump(circle, circle_partition):
    P = circle_partition
    broken = dataclasses.replace(P, sqrt_chi=P.sqrt_chi[1:], dsqrt_chi=P.dsqrt_chi[1:],
                                 centers=P.centers[1:])
    rep = verify_partition(circle, broken)
    assert not rep["partition.sum_to_one"].passed


def test_verify_detects_misdeclared_eps(circle, circle_partition):
    broken = dataclasses.replace(circle_partition, epsilon=circle_partition.epsilon / 2)
    rep = verify_partition(circle, broken)
    assert not rep["partition.support"].passed


def test_C_chi_scales_inversely_with_eps(circle):
    eps = math.pi / 8
    small = build_partition(circle, ball_cover(circle, eps), eps)
    large = build_partition(circle, ball_cover(circle, 2 * eps), 2 * eps)
    assert small.C_chi / large.C_chi == pytest.approx(2.0, rel=0.05)


def test_box_partition(box2, box_partition):
    rep = verify_partition(box2, box_partition)
    assert rep.passed, rep.summary()
    assert box_partition.K <= lattice_multiplicity(box2, box_partition.epsilon)


@given(st.floats(0.2, math.pi / 2))
def test_partition_properties_circle(eps):
    m = build_model("torus", 1, [TWO_PI], [128])
    P = build_partition(m, ball_cover(m, eps), eps)
    chi = P.chi
    assert np.max(np.abs(chi.sum(axis=0) - 1)) < 1e-12
    assert chi.min() >= 0 and chi.max() <= 1 + 1e-12
    assert P.K <= lattice_multiplicity(m, eps)
    assert P.lower_bound >= 1 / P.K - 1e-12
    # pair bound is never above twice the single-member bound
    assert P.pair_deriv_bound <= 2 * P.C_chi + 1e-12


@given(st.floats(0.5, 1.5), st.floats(0.5, 1.5))
def test_partition_properties_torus2(e0, scale):
    m = build_model("torus", 2, [TWO_PI, TWO_PI * scale], [48, 48])
    eps = min(e0, 0.45 * m.injectivity_radius)
    P = build_partition(m, ball_cover(m, eps), eps)
    assert verify_partition(m, P).passed
    assert P.K <= lattice_multiplicity(m, eps)
