"""The image bundle of a projection-valued field.

For a smooth field of orthogonal projections ``P(y)`` and a chart ``U_x``
small enough that ``||P(y) - P(z)|| < 1/2`` on it, the compression
``Lambda(y) = B* P(y) B`` to an orthonormal basis ``B`` of ``Im P(x)`` is
invertible with ``||Lambda^{-1}|| < 2``, and

    W_x(y) = P(y) B Lambda(y)^{-1/2}

is an isometry of ``Im P(x)`` onto ``Im P(y)``.  The transitions
``tau_ij = W_i* W_j`` make ``Im P`` a bundle of bounded geometry.

The inverse square root is computed either from an eigendecomposition or
from the integral ``Lambda^{-1/2} = (1/pi) int_0^inf l^{-1/2} (l + Lambda)^{-1} dl``,
split at ``l = 1`` and mapped to ``[0, 1]`` twice (``l = t^2`` and
``l = 1/u^2``), which leaves two smooth integrands for Gauss-Legendre nodes:

    Lambda^{-1/2} = (2/pi) [ int_0^1 (t^2 + Lambda)^{-1} dt + int_0^1 (1 + u^2 Lambda)^{-1} du ].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .manifold import GridPoint, ManifoldModel, OperatorField, derham, displacement, normal_chart
from .opspace import op_norms
from .partition import PartitionOfUnity
from .report import (CheckReport, Table, TOL_IDENTITY, TOL_LINALG, check_le, check_lt,
                     merge_worst)
from .stabilize import BundleError, BundleData, validate_bundle

__all__ = [
    "ProjectionField",
    "Frame",
    "projection_field",
    "select_radius",
    "dispro_check",
    "inv_sqrt_eig",
    "inv_sqrt_quad",
    "quadrature_convergence",
    "build_W",
    "image_bundle",
]

RADIUS_SAFETY = 0.9
ROUNDOFF_FLOOR = 1e-12


@dataclass(eq=False)
class ProjectionField:
    field: OperatorField
    D_P: float
    rank: int

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def deriv(self) -> np.ndarray:
        return self.field.deriv


def _stacked_norms(d: np.ndarray) -> np.ndarray:
    """Norms of ``N x a x b`` derivative stacks as ``(N a) x b`` matrices."""
    return op_norms(d.reshape(d.shape[:-3] + (d.shape[-3] * d.shape[-2], d.shape[-1])))


def _adjoint_stacked_norms(d: np.ndarray) -> np.ndarray:
    return _stacked_norms(np.conj(np.swapaxes(d, -1, -2)))


def projection_field(model: ManifoldModel, F: OperatorField,
                     tol: float = TOL_IDENTITY) -> ProjectionField:
    """Validate ``F`` as a field of orthogonal projections of constant rank."""
    P = F.values
    if P.shape[-1] != P.shape[-2]:
        raise ValueError("projections must be square")
    idem = float(np.max(np.abs(P @ P - P)))
    herm = float(np.max(np.abs(P - np.conj(np.swapaxes(P, -1, -2)))))
    if idem > tol or herm > tol:
        raise ValueError(f"not a projection field (idempotency {idem:.3g}, hermiticity {herm:.3g})")
    ranks = np.rint(np.real(np.trace(P, axis1=-2, axis2=-1))).astype(int)
    if ranks.min() != ranks.max():
        raise ValueError("rank of the projection field is not constant")
    if F.deriv is None:
        F = F.with_fd_derivative(model)
    D_P = float(np.max(_stacked_norms(F.deriv)))
    return ProjectionField(F, D_P, int(ranks.flat[0]))


def select_radius(model: ManifoldModel, P: ProjectionField, s: float | None = None) -> float:
    """``0.9 min(s, 1 / (4 gamma D_P))`` with ``gamma = sup ||g||^{1/2}``, kept below ``r_inj``."""
    s = math.inf if s is None else float(s)
    r_inj = model.injectivity_radius
    if P.D_P == 0:
        return min(s, RADIUS_SAFETY * r_inj)
    gamma = math.sqrt(model.metric_bound)
    r = RADIUS_SAFETY * min(s, 1.0 / (4.0 * gamma * P.D_P))
    return r if r < r_inj else RADIUS_SAFETY * r_inj


def _chart_centers(model, centers):
    if centers is None:
        return [model.point(idx) for idx in model.indices()]
    return [c if isinstance(c, GridPoint) else model.nearest_point(c) for c in centers]


def _second_derivative_sup(model, P: ProjectionField) -> float:
    dd = derham(model, OperatorField(P.deriv.reshape(model.shape + (-1, P.deriv.shape[-1]))))
    return float(np.max(np.abs(dd.components))) * math.sqrt(model.dimension) * P.deriv.shape[-1]


def dispro_check(model: ManifoldModel, P: ProjectionField, r: float, centers=None,
                 tol: float = 1e-12) -> CheckReport:
    """``||P(y) - P(z)|| < 1/2`` for all grid pairs in every chart ``U_{x,r}``.

    Also checks the mean-value estimate
    ``||P(y) - P(z)|| <= |phi(y) - phi(z)| sup_U ||dP|| sup ||g||^{1/2}``,
    with the sup taken over the chart grown by one cell plus a first-order
    allowance for the sup between grid points.
    """
    centers = _chart_centers(model, centers)
    gamma = math.sqrt(model.metric_bound)
    h = max(model.spacing)
    slack_rate = 0.5 * h * math.sqrt(model.dimension) * _second_derivative_sup(model, P)
    dnorm = _stacked_norms(P.deriv)
    worst, worst_pair, mv_ratio = 0.0, None, 0.0
    profile = None
    for n, c in enumerate(centers):
        chart = normal_chart(model, c, r)
        z = displacement(model, c)
        grown = np.sqrt(np.sum(z ** 2, axis=-1)) < r + h * math.sqrt(model.dimension)
        G = float(np.max(dnorm[grown]))
        V = P.values[chart.mask]
        phi = z[chart.mask]
        diff = V[:, None] - V[None, :]
        norms = op_norms(diff)
        dist = np.sqrt(np.sum((phi[:, None] - phi[None, :]) ** 2, axis=-1))
        k = np.unravel_index(int(np.argmax(norms)), norms.shape)
        if norms[k] > worst:
            worst, worst_pair = float(norms[k]), (c.index, float(dist[k]))
        denom = dist * (G + slack_rate) * gamma
        # differences at roundoff level carry no information about the derivative
        excess = np.maximum(norms - ROUNDOFF_FLOOR, 0.0)
        pos = (dist > 0) & (excess > 0)
        if np.any(pos):
            mv_ratio = max(mv_ratio, float(np.max(excess[pos] / denom[pos]))
                           if np.all(denom[pos] > 0) else math.inf)
        if n == 0:
            i0 = int(np.argmin(np.sum(phi ** 2, axis=-1)))
            order = np.argsort(dist[i0], kind="stable")
            profile = Table(["distance", "norm_diff"],
                            [[float(dist[i0, j]), float(norms[i0, j])] for j in order])
    report = CheckReport()
    report.add(check_lt("dispro.half", "||P(y) - P(z)|| < 1/2 on U_{x,r}", worst, 0.5, tol,
                        radius=r, charts=len(centers),
                        worst_center=list(worst_pair[0]) if worst_pair else None))
    report.add(check_le("dispro.mean_value", "||P(y)-P(z)|| <= |phi(y)-phi(z)| sup||dP|| gamma",
                        mv_ratio, 1.0, tol, slack_rate=slack_rate, floor=ROUNDOFF_FLOOR))
    if profile is not None:
        report.tables["dispro_profile"] = profile
    return report


def _check_pd(lam):
    if lam.size and np.min(lam) <= 0:
        raise ValueError("matrix is not positive definite")


def inv_sqrt_eig(L) -> np.ndarray:
    """``U D^{-1/2} U*`` from ``L = U D U*``; works on stacks of matrices."""
    L = np.asarray(L)
    H = (L + np.conj(np.swapaxes(L, -1, -2))) / 2
    lam, U = np.linalg.eigh(H)
    _check_pd(lam)
    return (U * lam[..., None, :] ** -0.5) @ np.conj(np.swapaxes(U, -1, -2))


def _gauss_nodes(nodes: int):
    if nodes < 16:
        raise ValueError("at least 16 quadrature nodes are required")
    x, w = np.polynomial.legendre.leggauss(nodes // 2)
    return (x + 1) / 2, w / 2


def _resolvents(L, nodes):
    """Resolvents ``(t^2 + L)^{-1}`` and ``(1 + u^2 L)^{-1}`` at the nodes, with weights."""
    t, w = _gauss_nodes(nodes)
    eye = np.eye(L.shape[-1])
    first = np.linalg.inv(t[:, None, None] ** 2 * eye + L[..., None, :, :])
    second = np.linalg.inv(eye + t[:, None, None] ** 2 * L[..., None, :, :])
    return first, second, w, t


def inv_sqrt_quad(L, nodes: int = 200) -> np.ndarray:
    """Quadrature of the resolvent integral with ``nodes // 2`` Gauss nodes per half."""
    L = np.asarray(L, dtype=complex)
    H = (L + np.conj(np.swapaxes(L, -1, -2))) / 2
    _check_pd(np.linalg.eigvalsh(H))
    first, second, w, _ = _resolvents(H, nodes)
    return (2 / np.pi) * np.einsum("q,...qij->...ij", w, first + second)


def _inv_sqrt_quad_deriv(L, dL, nodes):
    """``d(L^{-1/2})`` by differentiating under the integral: ``dR = -R dL R``."""
    first, second, w, t = _resolvents(L, nodes)
    # (1 + u^2 L)^{-1} has derivative -u^2 R dL R
    a = np.einsum("q,...qij,...njk,...qkl->...nil", w, first, dL, first, optimize=True)
    b = np.einsum("q,...qij,...njk,...qkl->...nil", w * t ** 2, second, dL, second,
                  optimize=True)
    return -(2 / np.pi) * (a + b)


def _inv_sqrt_eig_deriv(lam, U, dL):
    """Divided-difference formula for the derivative of ``L^{-1/2}``."""
    s = np.sqrt(lam)
    # (f(a) - f(b)) / (a - b) for f = x^{-1/2}, exact also on the diagonal
    F = -1.0 / (s[..., :, None] * s[..., None, :] * (s[..., :, None] + s[..., None, :]))
    Uh = np.conj(np.swapaxes(U, -1, -2))
    G = Uh[..., None, :, :] @ dL @ U[..., None, :, :]
    return U[..., None, :, :] @ (F[..., None, :, :] * G) @ Uh[..., None, :, :]


def quadrature_convergence(rng: np.random.Generator, count: int = 50, max_dim: int = 8,
                           max_cond: float = 1e3, nodes=(16, 32, 64, 128, 200)) -> Table:
    """Relative error of :func:`inv_sqrt_quad` against :func:`inv_sqrt_eig` per matrix and node count."""
    rows = []
    for n in range(count):
        L = random_spd(rng, int(rng.integers(1, max_dim + 1)), max_cond)
        ref = inv_sqrt_eig(L)
        errs = [float(np.linalg.norm(inv_sqrt_quad(L, q) - ref, 2) / np.linalg.norm(ref, 2))
                for q in nodes]
        rows.append([n, L.shape[0], float(np.linalg.cond(L))] + errs)
    return Table(["matrix", "dim", "cond"] + [f"err_{q}" for q in nodes], rows)


def random_spd(rng: np.random.Generator, k: int, max_cond: float = 1e3) -> np.ndarray:
    """Random hermitian positive definite ``k x k`` matrix with condition number ``<= max_cond``."""
    z = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
    q, _ = np.linalg.qr(z)
    scale = float(np.exp(rng.uniform(-2.0, 2.0)))
    lam = scale * np.exp(rng.uniform(0.0, math.log(max_cond), size=k))
    lam[0] = scale
    if k > 1:
        lam[-1] = scale * max_cond ** rng.uniform(0.5, 1.0)
    return (q * lam) @ q.conj().T


@dataclass(eq=False)
class Frame:
    """``W_x`` on the chart ``U_{x,r}`` as a ``d x k`` field, zero outside the chart."""

    center: GridPoint
    radius: float
    mask: np.ndarray
    basis: np.ndarray
    W: OperatorField
    inv_gram_max: float
    report: CheckReport = field(repr=False)


def _image_basis(Px: np.ndarray, k: int) -> np.ndarray:
    q, _, _ = scipy.linalg.qr(Px, pivoting=True)
    return q[:, :k]


def build_W(model: ManifoldModel, P: ProjectionField, x, r: float, method: str = "eig",
            nodes: int = 200, tol: float = TOL_LINALG, fd_check: bool = True) -> Frame:
    """The isometries ``W_x(y)`` on ``U_{x,r}`` with their exact derivative."""
    chart = normal_chart(model, x if isinstance(x, GridPoint) else model.nearest_point(x), r)
    mask, k = chart.mask, P.rank
    B = _image_basis(P.values[chart.center.index], k)
    Bh = B.conj().T
    Pv, dP = P.values[mask], P.deriv[mask]
    L = Bh @ Pv @ B
    dL = Bh @ dP @ B
    lam, U = np.linalg.eigh(L)
    if np.min(lam) <= 0:
        raise BundleError(f"Gram operator is singular on the chart at {chart.center.index}")
    if method == "eig":
        S = (U * lam[..., None, :] ** -0.5) @ np.conj(np.swapaxes(U, -1, -2))
        dS = _inv_sqrt_eig_deriv(lam, U, dL)
    elif method == "quad":
        S = inv_sqrt_quad(L, nodes)
        dS = _inv_sqrt_quad_deriv(L, dL, nodes)
    else:
        raise ValueError(f"unknown inverse square root method {method!r}")
    PB = Pv @ B
    Wv = PB @ S
    dW = dP @ B @ S[:, None] + PB[:, None] @ dS

    grid, d, N = model.shape, Pv.shape[-1], model.dimension
    vals = np.zeros(grid + (d, k), complex)
    ders = np.zeros(grid + (N, d, k), complex)
    vals[mask], ders[mask] = Wv, dW
    W = OperatorField(vals, ders)

    report = CheckReport()
    eye = np.eye(k)
    Wh = np.conj(np.swapaxes(Wv, -1, -2))
    inv_gram = float(np.max(1.0 / lam))
    sup_dP = float(np.max(_stacked_norms(dP)))
    report.add(check_lt("W.inverse_gram", "||Lambda^{-1}|| < 2", inv_gram, 2.0))
    report.add(check_le("W.isometry", "W*W = I_k", float(np.max(np.abs(Wh @ Wv - eye))), 0.0,
                        tol))
    report.add(check_le("W.range", "WW* = P(y)", float(np.max(np.abs(Wv @ Wh - Pv))), 0.0, tol))
    dW_sup = float(np.max(_stacked_norms(dW)))
    dWh_sup = float(np.max(_adjoint_stacked_norms(dW)))
    report.add(check_le("W.deriv_bound", "||d(iota W)|| <= 3 sqrt(2) sup_U ||dP||", dW_sup,
                        3 * math.sqrt(2) * sup_dP, tol, sup_dP=sup_dP))
    report.add(check_le("W.adjoint_deriv_bound", "||d(iota W)*|| <= 3 sqrt(2) sup_U ||dP||",
                        dWh_sup, 3 * math.sqrt(2) * sup_dP, tol))
    dS_sup = float(np.max(_stacked_norms(dS)))
    dL_sup = float(np.max(_stacked_norms(dL)))
    report.add(check_le("W.inv_sqrt_deriv", "sup||d Lambda^{-1/2}|| <= sup||dLambda|| "
                        "sup||Lambda^{-3/2}||", dS_sup, dL_sup * inv_gram ** 1.5, tol))
    if fd_check:
        report.add(_fd_consistency(model, W, mask, sup_dP))
    return Frame(chart.center, float(r), mask, B, W, inv_gram, report)


def _fd_consistency(model, W, mask, sup_dP):
    """Central differences of ``W`` against the exact derivative on interior chart points."""
    interior = mask.copy()
    for axis in range(model.dimension):
        interior &= np.roll(mask, 1, axis=axis) & np.roll(mask, -1, axis=axis)
    fd = derham(model, W.without_derivative()).components
    err = float(np.max(np.abs(fd[interior] - W.deriv[interior]), initial=0.0))
    h = max(model.spacing)
    # central differences are exact to h^2/6 sup|W'''|; W''' scales like sup||dP||^3
    tol = h ** 2 * (1.0 + 6.0 * max(1.0, sup_dP) ** 3)
    return check_le("W.fd_consistency", "finite differences of W agree with dW to O(h^2)",
                    err, 0.0, tol, h=h)


def image_bundle(model: ManifoldModel, P: ProjectionField, r: float,
                 partition: PartitionOfUnity, method: str = "eig", nodes: int = 200,
                 tol: float = TOL_LINALG, report: CheckReport | None = None,
                 fd_check: bool = True) -> BundleData:
    """Bundle with fibre ``C^k`` and transitions ``tau_ij = W_i* W_j`` over the partition cover."""
    if 2 * partition.epsilon > r + 1e-12:
        raise BundleError(f"partition supports (2 eps = {2 * partition.epsilon}) exceed the "
                          f"chart radius {r}")
    centers = [model.nearest_point(c) for c in partition.centers]
    frames = [build_W(model, P, c, r, method, nodes, tol, fd_check) for c in centers]
    domains = np.stack([f.mask for f in frames])
    m = len(frames)
    flat = domains.reshape(m, -1).astype(np.int32)
    inter = (flat @ flat.T) > 0
    transitions = {}
    chain = 0.0
    C_tau = 0.0
    dWn = [_stacked_norms(f.W.deriv) for f in frames]
    dWhn = [_adjoint_stacked_norms(f.W.deriv) for f in frames]
    for i, j in zip(*np.nonzero(inter)):
        i, j = int(i), int(j)
        mask = domains[i] & domains[j]
        t = (frames[i].W.adjoint() @ frames[j].W).masked(mask)
        transitions[(i, j)] = t
        dn = _stacked_norms(t.deriv)[mask]
        C_tau = max(C_tau, float(np.max(dn)))
        chain = max(chain, float(np.max(dn - dWhn[i][mask] - dWn[j][mask])))
    bundle = BundleData(model, centers, float(r), P.rank, domains, transitions, C_tau, "image",
                        gauges=[f.W.adjoint() for f in frames], frames=frames)
    if report is not None:
        report.extend(merge_worst([f.report for f in frames], label="charts"))
        checks = validate_bundle(bundle, tol)
        report.extend([c for c in checks if c.name != "bundle.C_tau_finite"], prefix="image")
        report.add(check_le("image.transition_chain",
                            "||d tau_ij|| <= ||d(iota W_i)*|| + ||d(iota W_j)||", chain, 0.0, tol))
        report.add(check_le("image.C_tau", "C_tau <= 6 sqrt(2) sup ||dP||", C_tau,
                            6 * math.sqrt(2) * P.D_P, tol, D_P=P.D_P, charts=m))
    return bundle
