"""Seeded closed-form test fields with exact derivatives.

Every generator returns :class:`~hilbundle.manifold.OperatorField` objects
carrying an analytic ``deriv`` so that norm inequalities can be checked
without discretization error.  Randomness always comes from an explicit
``numpy.random.Generator``.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.linalg import expm, expm_frechet

from .manifold import Kind, ManifoldModel, OperatorField, displacement, scalar_field

__all__ = [
    "fourier_field",
    "fourier_section",
    "plane_wave",
    "box_envelope",
    "random_unitary",
    "random_hermitian",
    "rotating_projector",
    "expm_field",
    "chart_gauge",
]


def _frequencies(dimension: int, degree: int) -> np.ndarray:
    rng = range(-degree, degree + 1)
    return np.array(list(itertools.product(rng, repeat=dimension)), dtype=float)


def plane_wave(model: ManifoldModel, k) -> OperatorField:
    """The scalar field ``exp(i 2 pi k.x / L)`` with its exact derivative."""
    k = np.asarray(k, dtype=float).reshape(model.dimension)
    w = 2 * np.pi * k / np.asarray(model.extents)
    phase = np.exp(1j * model.coords() @ w)
    deriv = 1j * w * phase[..., None]
    return scalar_field(phase, deriv)


def box_envelope(model: ManifoldModel) -> OperatorField:
    """Smooth product bump vanishing on the box margin (identically one on the torus)."""
    if model.kind is Kind.TORUS:
        return scalar_field(np.ones(model.shape), np.zeros(model.shape + (model.dimension,)))
    vals = np.ones(model.shape)
    grads = []
    coords = model.coords()
    factors, dfactors = [], []
    for axis, (L, h) in enumerate(zip(model.extents, model.spacing)):
        lo, hi = 2.5 * h, L - 3.5 * h
        c, half = (lo + hi) / 2, (hi - lo) / 2
        s = (coords[..., axis] - c) / half
        inside = np.abs(s) < 1
        u = np.where(inside, 1 - s ** 2, 1.0)
        b = np.where(inside, np.exp(1 - 1 / u), 0.0)
        db = np.where(inside, b * (-2 * s / u ** 2) / half, 0.0)
        factors.append(b)
        dfactors.append(db)
    for b in factors:
        vals = vals * b
    for axis in range(model.dimension):
        g = dfactors[axis]
        for other in range(model.dimension):
            if other != axis:
                g = g * factors[other]
        grads.append(g)
    return scalar_field(vals, np.stack(grads, axis=-1))


def fourier_field(model: ManifoldModel, d_out: int, d_in: int, rng: np.random.Generator,
                  degree: int = 3, scale: float = 1.0) -> OperatorField:
    """Random trigonometric polynomial ``sum_k C_k exp(i 2 pi k.x / L)``.

    Coefficients are complex Gaussian, damped by ``1 / (1 + |k|^2)``.  On
    the box the result is multiplied by :func:`box_envelope` so that it
    vanishes on the margin.
    """
    ks = _frequencies(model.dimension, degree)
    damp = 1.0 / (1.0 + np.sum(ks ** 2, axis=1))
    coef = (rng.standard_normal((len(ks), d_out, d_in))
            + 1j * rng.standard_normal((len(ks), d_out, d_in))) * damp[:, None, None]
    coef *= scale / np.sqrt(np.sum(damp ** 2))
    w = 2 * np.pi * ks / np.asarray(model.extents)          # (K, N)
    phase = np.exp(1j * model.coords() @ w.T)                 # grid + (K,)
    grid = model.shape
    vals = (phase @ coef.reshape(len(ks), -1)).reshape(grid + (d_out, d_in))
    dcoef = (1j * w.T[:, :, None] * coef.reshape(1, len(ks), -1))          # (N, K, d_out*d_in)
    deriv = np.stack([phase @ dc for dc in dcoef], axis=-2).reshape(
        grid + (model.dimension, d_out, d_in))
    f = OperatorField(vals, deriv)
    if model.kind is Kind.BOX:
        f = f * box_envelope(model)
    return f


def fourier_section(model: ManifoldModel, d: int, rng: np.random.Generator,
                    degree: int = 3, scale: float = 1.0) -> OperatorField:
    return fourier_field(model, d, 1, rng, degree=degree, scale=scale)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (z + z.conj().T) / 2


def expm_field(generator: OperatorField, mask: np.ndarray | None = None) -> OperatorField:
    """Pointwise matrix exponential with its exact Frechet derivative.

    With ``mask`` only the selected points are computed; the rest hold the
    identity with zero derivative.
    """
    X = generator.values
    grid = X.shape[:-2]
    vals = np.broadcast_to(np.eye(X.shape[-1], dtype=complex), X.shape).copy()
    der = None if generator.deriv is None else np.zeros_like(generator.deriv, dtype=complex)
    points = np.ndindex(*grid) if mask is None else map(tuple, np.argwhere(mask))
    for idx in points:
        if der is None:
            vals[idx] = expm(X[idx])
            continue
        for a in range(generator.deriv.shape[-3]):
            e, de = expm_frechet(X[idx], generator.deriv[idx + (a,)])
            der[idx + (a,)] = de
        vals[idx] = e
    return OperatorField(vals, der)


def rotating_projector(model: ManifoldModel, d: int, rank: int, rng: np.random.Generator,
                       max_frequency: int = 1) -> OperatorField:
    """Projection field ``U(x) P0 U(x)*`` with ``U`` a product of periodic one-parameter groups.

    Along axis ``a`` the rotation is ``exp(theta_a X_a)`` with
    ``theta_a = 2 pi x_a / L_a`` and ``X_a`` anti-hermitian with integer
    spectrum in ``[-max_frequency, max_frequency]``, so the field is periodic.
    ``P0`` is a random rank-``rank`` orthogonal projection.
    """
    if not 1 <= rank <= d:
        raise ValueError("rank must lie in [1, d]")
    v0 = random_unitary(d, rng)[:, :rank]
    P0 = v0 @ v0.conj().T
    gens = []
    for _ in range(model.dimension):
        V = random_unitary(d, rng)
        freqs = rng.integers(-max_frequency, max_frequency + 1, size=d)
        if d > 1 and np.all(freqs == freqs[0]):
            # a scalar generator would leave P0 fixed
            freqs[0] = freqs[0] - 1 if freqs[0] > -max_frequency else freqs[0] + 1
        elif not np.any(freqs):
            freqs[0] = max_frequency
        gens.append(V @ np.diag(1j * freqs) @ V.conj().T)
    return _conjugated_projector(model, P0, gens)


def _conjugated_projector(model: ManifoldModel, P0: np.ndarray, gens) -> OperatorField:
    d = P0.shape[0]
    coords = model.coords()
    thetas = 2 * np.pi * coords / np.asarray(model.extents)
    # U = U_1(theta_1) U_2(theta_2) ...; each U_a diagonalised once
    factors = []
    for a, X in enumerate(gens):
        lam, V = np.linalg.eigh(-1j * X)
        t = thetas[..., a]
        Ua = np.einsum("ij,...j,kj->...ik", V, np.exp(1j * np.multiply.outer(t, lam)), V.conj())
        factors.append(Ua)
    U = np.broadcast_to(np.eye(d, dtype=complex), model.shape + (d, d)).copy()
    for Ua in factors:
        U = U @ Ua
    dU = []
    for a in range(model.dimension):
        left = np.broadcast_to(np.eye(d, dtype=complex), model.shape + (d, d)).copy()
        for b in range(a):
            left = left @ factors[b]
        right = np.broadcast_to(np.eye(d, dtype=complex), model.shape + (d, d)).copy()
        for b in range(a, model.dimension):
            right = right @ factors[b]
        w = 2 * np.pi / model.extents[a]
        dU.append(w * left @ gens[a] @ right)
    dU = np.stack(dU, axis=-3)
    Uh = np.conj(np.swapaxes(U, -1, -2))
    vals = U @ P0 @ Uh
    half = np.einsum("...nij,jk,...kl->...nil", dU, P0, Uh)
    deriv = half + np.conj(np.swapaxes(half, -1, -2))
    vals = (vals + np.conj(np.swapaxes(vals, -1, -2))) / 2
    return OperatorField(vals, deriv)


def chart_gauge(model: ManifoldModel, center, A: np.ndarray, F: OperatorField | None = None,
                mask: np.ndarray | None = None) -> OperatorField:
    """``exp(i sum_a phi_a(z) A_a + F(z))`` in the normal chart at ``center``.

    ``A`` has shape ``(N, d, d)`` with hermitian slices, ``F`` is an
    optional anti-hermitian field.  The chart coordinate ``phi`` is the
    lifted displacement, smooth on any ball of radius below ``r_inj``.
    """
    phi = displacement(model, center)
    X = 1j * np.einsum("...a,aij->...ij", phi, A)
    dX = np.broadcast_to(1j * A, model.shape + A.shape).copy()
    gen = OperatorField(X, dX)
    if F is not None:
        gen = gen + F
    return expm_field(gen, mask)
