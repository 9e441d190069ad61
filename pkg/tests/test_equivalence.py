import math

import numpy as np
import pytest

from hilbundle.equivalence import (BundleMorphism, faithfulness_roundtrip, gauge_morphism,
                                   injectivity_check, localized_probes, module_morphism,
                                   morphism_residual, reconstruct_morphism,
                                   reconstruction_constants, surjectivity_roundtrip)
from hilbundle.generators import fourier_field, random_unitary, rotating_projector
from hilbundle.imagebundle import image_bundle, projection_field, select_radius
from hilbundle.manifold import constant_field, scalar_field
from hilbundle.partition import ball_cover, build_partition
from hilbundle.stabilize import BundleError, make_bundle

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def bundles(circle, circle_partition):
    rng = np.random.default_rng(21)
    return [make_bundle(circle, circle_partition, "gauge", d=2, rng=rng) for _ in range(3)]


@pytest.fixture(scope="module")
def trivials(circle, circle_partition):
    return [make_bundle(circle, circle_partition, "trivial", d=2) for _ in range(2)]


def _image(model, F):
    P = projection_field(model, F)
    r = select_radius(model, P)
    if not np.isfinite(r) or r > 0.9 * model.injectivity_radius:
        r = 0.9 * model.injectivity_radius
    eps = min(0.45 * r, model.injectivity_radius / 2 - 1e-9)
    part = build_partition(model, ball_cover(model, eps), eps)
    return P, part, image_bundle(model, P, r, part)


def test_surjectivity_constant_projection(circle):
    v = random_unitary(3, np.random.default_rng(1))[:, :2]
    P, part, b = _image(circle, constant_field(circle, v @ v.conj().T))
    rep = surjectivity_roundtrip(circle, P, part, b)
    assert rep.passed, rep.summary()
    assert rep["surjectivity.AstarA"].measured < 1e-12


@pytest.mark.parametrize("rank", [1, 2])
def test_surjectivity_rotating(circle, rank):
    F = rotating_projector(circle, 3, rank, np.random.default_rng(40 + rank))
    P, part, b = _image(circle, F)
    rep = surjectivity_roundtrip(circle, P, part, b, np.random.default_rng(0))
    assert rep.passed, rep.summary()


def test_surjectivity_needs_image_bundle(circle, circle_partition, bundles):
    with pytest.raises(BundleError):
        surjectivity_roundtrip(circle, None, circle_partition, bundles[0])


def test_identity_morphism_reconstructs_transitions(circle, circle_partition, bundles):
    b = bundles[0]
    mor = gauge_morphism(b, b, constant_field(circle, np.eye(2)))
    for key, f in mor.fields.items():
        m = b.overlap(*key)
        np.testing.assert_allclose(f.values[m], b.transitions[key].values[m], atol=1e-12)
    rec = reconstruct_morphism(module_morphism(mor, circle_partition), b, b, circle_partition)
    for key, t in b.transitions.items():
        m = b.overlap(*key)
        assert np.max(np.abs(rec[key].values[m] - t.values[m])) < 1e-8


def test_global_gauge_on_trivial_recovered(circle, circle_partition, trivials):
    v = fourier_field(circle, 2, 2, np.random.default_rng(3))
    mor = gauge_morphism(trivials[0], trivials[1], v)
    rep = faithfulness_roundtrip(circle, mor, circle_partition, pairs=10)
    assert rep.passed, rep.summary()
    assert rep["faithful.reconstruction"].measured < 1e-8


def test_faithfulness_with_functoriality(circle, circle_partition, bundles):
    rng = np.random.default_rng(5)
    a = fourier_field(circle, 2, 2, rng, degree=2)
    b = fourier_field(circle, 2, 2, rng, degree=2)
    mor = gauge_morphism(bundles[0], bundles[1], a)
    second = gauge_morphism(bundles[1], bundles[2], b)
    rep = faithfulness_roundtrip(circle, mor, circle_partition, second, rng, pairs=50)
    assert rep.passed, rep.summary()
    for name in ["faithful.adjoint", "faithful.functorial", "faithful.reconstruction"]:
        assert rep[name].measured < 1e-8


def test_adjoint_morphism_blocks(circle, circle_partition, bundles):
    a = fourier_field(circle, 2, 2, np.random.default_rng(6))
    mor = gauge_morphism(bundles[0], bundles[1], a)
    G = module_morphism(mor, circle_partition)
    Gs = module_morphism(mor.adjoint(), circle_partition)
    assert (G.adjoint() - Gs).max_residual() < 1e-12


def test_incompatible_morphism_rejected(circle, circle_partition, bundles):
    a = fourier_field(circle, 2, 2, np.random.default_rng(7))
    mor = gauge_morphism(bundles[0], bundles[1], a)
    fields = dict(mor.fields)
    fields[(0, 1)] = fields[(0, 1)] * 2.0
    bad = BundleMorphism(mor.source, mor.target, fields)
    assert morphism_residual(bad) > 1e-3
    with pytest.raises(BundleError):
        faithfulness_roundtrip(circle, bad, circle_partition, pairs=2)


def test_injectivity_examples(circle, circle_partition, trivials):
    t0, t1 = trivials
    eye = gauge_morphism(t0, t1, constant_field(circle, np.eye(2)))
    two = gauge_morphism(t0, t1, constant_field(circle, 2 * np.eye(2)))
    probes = localized_probes(t0, circle_partition)
    G1, G2 = module_morphism(eye, circle_partition), module_morphism(two, circle_partition)
    assert injectivity_check(G1, G2, probes).passed
    rep = injectivity_check(G1, module_morphism(eye, circle_partition), probes,
                            expect_distinct=False)
    assert rep.passed and rep["injectivity.equal"].measured == 0


def test_injectivity_local_difference(circle, circle_partition, trivials):
    # the morphisms differ only inside a small interval around one chart centre
    t0, t1 = trivials
    x = circle.coords()[..., 0]
    c = circle_partition.centers[3, 0]
    z = (x - c) / 0.2
    inside = np.abs(z) < 1
    b = np.where(inside, np.exp(-1 / np.where(inside, 1 - z ** 2, 1.0)), 0.0)
    db = np.where(inside, b * (-2 * z / np.where(inside, 1 - z ** 2, 1.0) ** 2) / 0.2, 0.0)
    bump = scalar_field(b, db[..., None])
    X = constant_field(circle, np.array([[0, 1], [1, 0]]))
    base = constant_field(circle, np.eye(2))
    alpha = gauge_morphism(t0, t1, base)
    beta = gauge_morphism(t0, t1, base + X * bump)
    probes = localized_probes(t0, circle_partition)
    rep = injectivity_check(module_morphism(alpha, circle_partition),
                            module_morphism(beta, circle_partition), probes)
    assert rep.passed
    assert rep["injectivity.distinguished"].details["witness"][0] in (2, 3, 4)


def test_reconstruction_constants(circle_partition):
    k = reconstruction_constants(circle_partition)
    d, C = k["delta_chi"], k["C_chi"]
    assert d >= 1 / circle_partition.K
    assert k["C_delta_chi"] == pytest.approx((1 + C / d) / d)
