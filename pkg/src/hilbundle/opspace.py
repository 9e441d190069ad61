"""Matrix norms on C^1_0(M), the block representation pi, and their inequalities.

``pi(a)(x)`` is the lower-triangular block operator

    [[ a(x),    0          ],
     [ (da)(x), a(x) (x) 1 ]]

acting on ``H (+) (H (x) T*_x M)``.  Cotangent components are stacked
axis-major, so ``a(x) (x) 1`` is ``N`` diagonal copies of ``a(x)``.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .generators import fourier_field
from .manifold import ManifoldModel, OperatorField, derham
from .report import CheckReport, TOL_ALGEBRAIC, check_le

__all__ = [
    "op_norm",
    "op_norms",
    "field_derivative",
    "field_norm_1",
    "pi_block",
    "alpha_norm_1",
    "sandwich_check",
    "adjoint_derivative_check",
    "adjoint_ratio",
    "product_norm_check",
    "pi_multiplicativity_error",
    "cb_amplify",
    "cb_check",
]

DENOMINATOR_FLOOR = 1e-9


def op_norm(matrix) -> float:
    """Largest singular value."""
    a = np.atleast_2d(np.asarray(matrix))
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, ord=2))


def op_norms(stack: np.ndarray) -> np.ndarray:
    """Batched :func:`op_norm` over the leading axes."""
    if stack.shape[-1] == 1:
        return np.sqrt(np.sum(np.abs(stack[..., 0]) ** 2, axis=-1))
    if stack.shape[-2] == 1:
        return np.sqrt(np.sum(np.abs(stack[..., 0, :]) ** 2, axis=-1))
    # largest eigenvalue of the smaller Gram matrix; several times faster than batched SVD
    if stack.shape[-2] >= stack.shape[-1]:
        gram = np.conj(np.swapaxes(stack, -1, -2)) @ stack
    else:
        gram = stack @ np.conj(np.swapaxes(stack, -1, -2))
    return np.sqrt(np.maximum(np.linalg.eigvalsh(gram)[..., -1], 0.0))


def field_derivative(model: ManifoldModel, f: OperatorField, fd: bool = False) -> np.ndarray:
    """Derivative components ``grid + (N, d_out, d_in)``, analytic when available."""
    if f.deriv is not None and not fd:
        return f.deriv
    return derham(model, f).components


def _deriv_norms(model, f, fd=False) -> np.ndarray:
    d = field_derivative(model, f, fd)
    s = d.reshape(d.shape[:-3] + (d.shape[-3] * d.shape[-2], d.shape[-1]))
    return op_norms(s)


def field_norm_1(model: ManifoldModel, f: OperatorField, fd: bool = False) -> float:
    """``sup_x (||f(x)||^2 + ||(df)(x)||^2)^{1/2}``."""
    a = op_norms(f.values)
    b = _deriv_norms(model, f, fd)
    return float(np.max(np.sqrt(a ** 2 + b ** 2)))


def pi_block(model: ManifoldModel, alpha: OperatorField, fd: bool = False) -> np.ndarray:
    """The block operators ``pi(alpha)(x)`` for every grid point."""
    N = model.dimension
    do, di = alpha.d_out, alpha.d_in
    a = alpha.values
    d = field_derivative(model, alpha, fd)
    out = np.zeros(a.shape[:-2] + (do * (N + 1), di * (N + 1)), dtype=complex)
    out[..., :do, :di] = a
    for k in range(N):
        rows = slice(do * (k + 1), do * (k + 2))
        out[..., rows, :di] = d[..., k, :, :]
        out[..., rows, di * (k + 1):di * (k + 2)] = a
    return out


def alpha_norm_1(model: ManifoldModel, alpha: OperatorField, fd: bool = False) -> float:
    """``sup_x ||pi(alpha)(x)||``."""
    return float(np.max(op_norms(pi_block(model, alpha, fd))))


def sandwich_check(model: ManifoldModel, alpha: OperatorField,
                   tol: float = TOL_ALGEBRAIC) -> CheckReport:
    """``(|a| + |da|)/2 <= |pi(a)| <= |a| + |da|`` at every grid point."""
    a = op_norms(alpha.values)
    da = _deriv_norms(model, alpha)
    p = op_norms(pi_block(model, alpha))
    lower_gap = float(np.max(0.5 * (a + da) - p))
    upper_gap = float(np.max(p - (a + da)))
    scale = max(1.0, float(np.max(a + da)))
    report = CheckReport()
    report.add(check_le("sandwich.lower", "(|a|+|da|)/2 <= |pi(a)|", lower_gap, 0.0, tol * scale))
    report.add(check_le("sandwich.upper", "|pi(a)| <= |a|+|da|", upper_gap, 0.0, tol * scale))
    return report


def adjoint_ratio(model: ManifoldModel, alpha: OperatorField) -> float:
    """``max_x ||d(a*)(x)|| / ||da(x)||`` over points where the denominator is not tiny."""
    d = field_derivative(model, alpha)
    N = d.shape[-3]
    grid = d.shape[:-3]
    stacked = d.reshape(grid + (N * alpha.d_out, alpha.d_in))
    dstar = np.conj(np.swapaxes(d, -1, -2)).reshape(grid + (N * alpha.d_in, alpha.d_out))
    num, den = op_norms(dstar), op_norms(stacked)
    keep = den > DENOMINATOR_FLOOR
    if not np.any(keep):
        return 0.0
    return float(np.max(num[keep] / den[keep]))


def adjoint_derivative_check(model: ManifoldModel, alpha: OperatorField,
                             tol: float = 1e-6) -> CheckReport:
    report = CheckReport()
    ratio = adjoint_ratio(model, alpha)
    report.add(check_le("adjoint.derivative_ratio", "||d(a*)(x)|| <= sqrt(N) ||da(x)||",
                        ratio, math.sqrt(model.dimension), tol, N=model.dimension))
    return report


def pi_multiplicativity_error(model: ManifoldModel, f: OperatorField, g: OperatorField) -> float:
    """Entrywise max of ``pi(fg) - pi(f) pi(g)``."""
    lhs = pi_block(model, f @ g)
    rhs = pi_block(model, f) @ pi_block(model, g)
    return float(np.max(np.abs(lhs - rhs)))


def product_norm_check(model: ManifoldModel, f: OperatorField, g: OperatorField,
                       tol: float = TOL_ALGEBRAIC) -> CheckReport:
    report = CheckReport()
    nf, ng = field_norm_1(model, f), field_norm_1(model, g)
    nfg = field_norm_1(model, f @ g)
    report.add(check_le("product.norm", "||fg||_1 <= sqrt(5) ||f||_1 ||g||_1", nfg,
                        math.sqrt(5) * nf * ng, tol, f_norm=nf, g_norm=ng))
    err = pi_multiplicativity_error(model, f, g)
    # |pi(a)| <= sqrt(2) ||a||_1, so this bounds the size of pi(f) pi(g)
    scale = max(1.0, 2 * nf * ng)
    report.add(check_le("product.pi_multiplicative", "pi(fg) = pi(f) pi(g)", err, 0.0,
                        tol * scale))
    return report


def _random_matrix_field(model, n, rng):
    degree = int(rng.integers(1, 5))
    scale = float(np.exp(rng.uniform(-1.0, 1.0)))
    return fourier_field(model, n, n, rng, degree=degree, scale=scale)


def _involution(F: OperatorField) -> OperatorField:
    return F.adjoint()


BOUNDS: dict[str, Callable[[int], float]] = {
    "identity": lambda N: 1.0,
    "involution": lambda N: math.sqrt(N),
    "multiplication": lambda N: math.sqrt(5),
}


def cb_amplify(model: ManifoldModel, which: str | Callable[[OperatorField], OperatorField],
               n: int, samples: int = 50, seed: int = 0) -> float:
    """Randomised lower estimate of the norm of the ``n``-th amplification of a map.

    ``which`` is ``"identity"``, ``"involution"`` (``F -> F*`` on ``n x n``
    fields), ``"multiplication"`` (the bilinear ``(F, G) -> FG``, normalised
    by ``||F||_1 ||G||_1``) or a callable on ``n x n`` fields.  The largest
    ratio of output to input ``||.||_1`` norm over the samples is returned.
    """
    if n < 1:
        raise ValueError("amplification level must be >= 1")
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        F = _random_matrix_field(model, n, rng)
        nF = field_norm_1(model, F)
        if nF == 0:
            continue
        if which == "multiplication":
            G = _random_matrix_field(model, n, rng)
            ratio = field_norm_1(model, F @ G) / (nF * field_norm_1(model, G))
        elif which == "identity":
            ratio = field_norm_1(model, F) / nF
        elif which == "involution":
            ratio = field_norm_1(model, _involution(F)) / nF
        elif callable(which):
            ratio = field_norm_1(model, which(F)) / nF
        else:
            raise ValueError(f"unknown map {which!r}")
        best = max(best, ratio)
    return best


def cb_check(model: ManifoldModel, which: str, n: int, samples: int = 50, seed: int = 0,
             tol: float = 1e-9) -> CheckReport:
    """One-sided check: the amplified estimate must not exceed the known upper bound."""
    report = CheckReport()
    est = cb_amplify(model, which, n, samples, seed)
    report.add(check_le(f"cb.{which}", f"||{which}_n|| <= bound at every level n", est,
                        BOUNDS[which](model.dimension), tol, level=n, samples=samples))
    return report
