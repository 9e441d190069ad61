"""The standard module C^1_0(M, H): sections, the hermitian form, and morphisms.

Sections are :class:`OperatorField` objects with ``d_in == 1``.  A bounded
operator field ``alpha`` acts on sections pointwise; conversely any module
morphism can be read back as an operator field by probing it with constant
sections.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .manifold import Kind, ManifoldModel, OperatorField, constant_field, scalar_field
from .generators import box_envelope, fourier_field
from .opspace import alpha_norm_1, field_derivative, op_norms
from .report import CheckReport, TOL_IDENTITY, check_le

__all__ = [
    "section_norm_1",
    "hermitian_form",
    "apply_morphism",
    "recover_field",
    "cutoff",
    "morphism_norm_estimate",
    "NotAModuleMap",
]

Morphism = Callable[[OperatorField], OperatorField]


class NotAModuleMap(ValueError):
    """Raised when a black-box map fails the right-module identity."""


def section_norm_1(model: ManifoldModel, s: OperatorField, fd: bool = False) -> float:
    """``sup_x (<s,s>(x) + <ds,ds>(x))^{1/2}``; the fibre norm of ``ds`` is Hilbert-Schmidt."""
    if s.d_in != 1:
        raise ValueError("sections have d_in == 1")
    d = field_derivative(model, s, fd)
    v = np.sum(np.abs(s.values[..., 0]) ** 2, axis=-1)
    dv = np.sum(np.abs(d[..., 0]) ** 2, axis=(-2, -1))
    return float(np.sqrt(np.max(v + dv)))


def hermitian_form(s: OperatorField, t: OperatorField) -> OperatorField:
    """``<s,t>(x) = <s(x), t(x)>``, conjugate-linear in ``s``."""
    if s.values.shape != t.values.shape or s.d_in != 1:
        raise ValueError(f"section shapes differ: {s.values.shape} vs {t.values.shape}")
    return s.adjoint() @ t


def apply_morphism(alpha: OperatorField, s: OperatorField) -> OperatorField:
    """``(alpha s)(x) = alpha(x) s(x)`` with ``d(alpha s) = (d alpha) s + (alpha (x) 1) ds``."""
    if alpha.d_in != s.d_out or s.d_in != 1:
        raise ValueError(f"cannot apply a {alpha.d_out}x{alpha.d_in} field to a "
                         f"{s.d_out}-section")
    return alpha @ s


def cutoff(model: ManifoldModel) -> OperatorField:
    """The probe cutoff: identically one on the torus, a plateau bump on the box.

    On the box the plateau covers every point of the support region except
    the few cells next to the margin, where a probed value is divided back
    out (see :func:`recover_field`).
    """
    if model.kind is Kind.TORUS:
        return scalar_field(np.ones(model.shape), np.zeros(model.shape + (model.dimension,)))
    return box_envelope(model)


def morphism_norm_estimate(model: ManifoldModel, beta: Morphism, d: int,
                           sections: list[OperatorField]) -> float:
    """Lower estimate of ``||beta||`` as the largest ``||beta(s)||_1 / ||s||_1``."""
    best = 0.0
    for s in sections:
        ns = section_norm_1(model, s)
        if ns > 0:
            best = max(best, section_norm_1(model, beta(s)) / ns)
    return best


def _probe(model, beta, d, sigma):
    """Read ``alpha(x) e_k`` from ``beta(e_k sigma)`` at every point where ``sigma`` is nonzero."""
    sig = sigma.values[..., 0, 0].real
    keep = np.abs(sig) > 1e-3
    safe = np.where(keep, sig, 1.0)
    dsig = sigma.deriv[..., 0, 0].real
    cols, dcols = [], []
    for k in range(d):
        e = np.zeros((d, 1), dtype=complex)
        e[k, 0] = 1.0
        out = beta(constant_field(model, e) * sigma)
        if out.values.shape[:-2] != model.shape or out.d_in != 1:
            raise NotAModuleMap("morphism must return a section on the same grid")
        v = out.values[..., 0]
        dv = field_derivative(model, out)[..., 0]
        col = np.where(keep[..., None], v / safe[..., None], 0.0)
        # d(alpha e_k) = (d(beta(e_k sigma)) - alpha e_k dsigma) / sigma
        dcol = np.where(keep[..., None, None],
                        (dv - col[..., None, :] * dsig[..., :, None]) / safe[..., None, None], 0.0)
        cols.append(col)
        dcols.append(dcol)
    return np.stack(cols, axis=-1), np.stack(dcols, axis=-1), keep


def recover_field(model: ManifoldModel, beta: Morphism, d: int, d_out: int | None = None,
                  rng: np.random.Generator | None = None, tol: float = TOL_IDENTITY,
                  report: CheckReport | None = None) -> OperatorField:
    """Rebuild the operator field ``alpha`` with ``apply_morphism(alpha, .) == beta``.

    ``beta`` is probed on ``e_k * sigma`` for the standard basis ``e_k``
    and the cutoff ``sigma``, and read back at every point.  Before
    trusting the result, the right-module identity ``beta(s f) = beta(s) f``
    is tested on a random section and scalar field; failure raises
    :class:`NotAModuleMap`.  When a ``report`` is passed, the bound
    ``||alpha||_1 <= 2 ||beta||`` is recorded against a probe-based lower
    estimate of ``||beta||``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    sigma = cutoff(model)
    vals, dvals, keep = _probe(model, beta, d, sigma)
    alpha = OperatorField(vals, dvals)

    s = fourier_field(model, d, 1, rng, degree=2)
    f = fourier_field(model, 1, 1, rng, degree=2)
    lhs = beta(s * f)
    rhs = beta(s) * f
    err = float(np.max(np.abs(lhs.values - rhs.values)))
    scale = max(1.0, float(np.max(np.abs(rhs.values))))
    if err > tol * scale:
        raise NotAModuleMap(f"beta(s f) != beta(s) f (max deviation {err:.3g})")
    if d_out is not None and alpha.d_out != d_out:
        raise NotAModuleMap(f"morphism output dimension {alpha.d_out} != {d_out}")

    if report is not None:
        probes = [s, fourier_field(model, d, 1, rng, degree=1)]
        probes += [constant_field(model, np.eye(d)[:, [k]]) * sigma for k in range(d)]
        probes.append(_adaptive_probe(model, alpha, sigma))
        est = morphism_norm_estimate(model, beta, d, probes)
        a1 = alpha_norm_1(model, alpha)
        report.add(check_le("morphism.recovery_bound", "||Phi^-1(beta)||_1 <= 2 ||beta||",
                            a1, 2 * est, 1e-9, beta_estimate=est, probes=len(probes)))
    return alpha


def _adaptive_probe(model, alpha, sigma):
    """Constant section along the top right-singular vector of ``[alpha; d alpha]`` at its peak.

    For this probe ``||beta(s)||_1 >= ||(alpha, d alpha)(x*)|| >= ||alpha||_1 / sqrt(2)``,
    which makes the probe-based norm estimate sharp up to ``sqrt(2)``.
    """
    d = field_derivative(model, alpha)
    grid = alpha.grid_shape
    stacked = np.concatenate(
        [alpha.values, d.reshape(grid + (-1, alpha.d_in))], axis=-2)
    norms = op_norms(stacked)
    x = np.unravel_index(int(np.argmax(norms)), grid)
    _, _, vh = np.linalg.svd(stacked[x])
    v = vh[0].conj()[:, None]
    return constant_field(model, v) * sigma

