"""Bounded partitions of unity with smooth square roots.

Bumps ``beta_i(x) = psi(d(x, y_i) / 2 eps)`` with ``psi(t) = exp(-1/(1 - t^2))``
are normalised by the square root of their sum of squares, so
``sqrt(chi_i) = beta_i / (sum_j beta_j^2)^{1/2}`` is smooth and
``sum_i chi_i = 1`` holds identically.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .manifold import (Kind, ManifoldModel, GridPoint, OperatorField, derham, displacement,
                       distance_to, scalar_field)
from .report import CheckReport, TOL_ALGEBRAIC, check_flag, check_le

__all__ = [
    "PartitionOfUnity",
    "ball_cover",
    "build_partition",
    "verify_partition",
    "bump_profile",
    "lattice_multiplicity",
]


def bump_profile(t):
    """``exp(-1/(1 - t^2))`` for ``|t| < 1``, else 0."""
    t = np.asarray(t, dtype=float)
    u = 1 - t ** 2
    safe = np.where(u > 0, u, 1.0)
    return np.where(u > 0, np.exp(-1 / safe), 0.0)


def _center_coords(centers) -> np.ndarray:
    out = []
    for c in centers:
        out.append(c.coords if isinstance(c, GridPoint) else c)
    return np.atleast_2d(np.asarray(out, dtype=float))


def _axis_indices(n: int, q: int, periodic: bool) -> np.ndarray:
    """``ceil(n/q)`` nearly equispaced indices in ``range(n)`` with gaps ``<= q``."""
    c = max(1, math.ceil(n / q))
    offset = 0.0 if periodic else 0.5
    return np.unique(np.floor((np.arange(c) + offset) * n / c).astype(int))


def ball_cover(model: ManifoldModel, eps: float) -> list[GridPoint]:
    """Centres on a grid sublattice whose pitch is at most ``eps`` along every axis.

    The per-axis pitch is the largest whole number of cells not exceeding
    ``eps`` (spread evenly when it does not divide the grid).  Coverage of
    the model by the ``eps``-balls is verified on the grid.
    """
    if not 0 < eps < model.injectivity_radius:
        raise ValueError(f"eps={eps} must lie in (0, r_inj={model.injectivity_radius})")
    if any(eps < h for h in model.spacing):
        raise ValueError(f"eps={eps} is below the grid spacing")
    axes = [_axis_indices(n, int(eps // h + 1e-9), model.is_periodic)
            for n, h in zip(model.grid_sizes, model.spacing)]
    centers = [model.point(idx) for idx in itertools.product(*axes)]
    dmin = np.full(model.shape, np.inf)
    for c in centers:
        dmin = np.minimum(dmin, distance_to(model, c))
    region = model.support_mask()
    if np.max(dmin[region]) >= eps:
        raise ValueError(f"eps={eps} is too small for a lattice cover in dimension "
                         f"{model.dimension}")
    return centers


def lattice_multiplicity(model: ManifoldModel, eps: float) -> int:
    """Predicted multiplicity of the doubled balls around :func:`ball_cover` centres.

    Exact in one dimension (given the grid resolves the gaps); an upper
    bound in higher dimension, where balls are bounded by cubes.
    """
    k = 1
    for n, h in zip(model.grid_sizes, model.spacing):
        q = int(eps // h + 1e-9)
        idx = _axis_indices(n, q, model.is_periodic)
        pitch = np.min(np.diff(np.r_[idx, idx[0] + n])) * h if model.is_periodic \
            else (np.min(np.diff(idx)) * h if len(idx) > 1 else np.inf)
        k *= min(len(idx), math.ceil(4 * eps / pitch - 1e-9))
    return k


@dataclass(eq=False)
class PartitionOfUnity:
    """``sqrt_chi[i]`` is ``sqrt(chi_i)`` on the grid, ``dsqrt_chi[i]`` its exact gradient."""

    model: ManifoldModel
    epsilon: float
    centers: np.ndarray
    sqrt_chi: np.ndarray          # (m,) + grid
    dsqrt_chi: np.ndarray         # (m,) + grid + (N,)
    multiplicity: int
    deriv_bound: float
    region: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.centers)

    @property
    def K(self) -> int:
        return self.multiplicity

    @property
    def C_chi(self) -> float:
        return self.deriv_bound

    @cached_property
    def chi(self) -> np.ndarray:
        return self.sqrt_chi ** 2

    @cached_property
    def dchi(self) -> np.ndarray:
        return 2 * self.sqrt_chi[..., None] * self.dsqrt_chi

    @cached_property
    def active(self) -> np.ndarray:
        """``active[i]`` marks grid points where ``sqrt(chi_i)`` or its gradient is nonzero."""
        return (self.sqrt_chi > 0) | np.any(self.dsqrt_chi != 0, axis=-1)

    def sqrt_field(self, i: int) -> OperatorField:
        return scalar_field(self.sqrt_chi[i], self.dsqrt_chi[i])

    def chi_field(self, i: int) -> OperatorField:
        return scalar_field(self.chi[i], self.dchi[i])

    def sqrt_pair(self, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        """``sqrt(chi_i chi_j)`` and its gradient."""
        v = self.sqrt_chi[i] * self.sqrt_chi[j]
        d = (self.dsqrt_chi[i] * self.sqrt_chi[j][..., None]
             + self.sqrt_chi[i][..., None] * self.dsqrt_chi[j])
        return v, d

    def neighbours(self) -> list[tuple[int, int]]:
        """Pairs ``(i, j)`` whose supports meet on the grid (including ``i == j``)."""
        act = self.active.reshape(self.size, -1)
        inter = (act.astype(np.int32) @ act.T.astype(np.int32)) > 0
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(inter))]

    @cached_property
    def pair_deriv_bound(self) -> float:
        """``sup_{i,j} ||d sqrt(chi_i chi_j)||``."""
        best = 0.0
        for i, j in self.neighbours():
            _, d = self.sqrt_pair(i, j)
            best = max(best, float(np.max(np.sqrt(np.sum(d ** 2, axis=-1)))))
        return best

    @cached_property
    def chi_deriv_bound(self) -> float:
        """``sup_j ||d chi_j||``."""
        return float(np.max(np.sqrt(np.sum(self.dchi ** 2, axis=-1))))

    @cached_property
    def lower_bound(self) -> float:
        """``delta_chi``: the smallest over the grid of ``max_j chi_j``."""
        return float(np.min(np.max(self.chi, axis=0)[self.region]))

    def fd_deriv_bound(self) -> float:
        best = 0.0
        for i in range(self.size):
            ct = derham(self.model, self.sqrt_field(i).without_derivative())
            best = max(best, float(np.max(np.abs(ct.components))))
        return best


def build_partition(model: ManifoldModel, centers, eps: float) -> PartitionOfUnity:
    centers = _center_coords(centers)
    if centers.shape[1] != model.dimension:
        raise ValueError("centre dimension does not match the model")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if model.is_periodic and 2 * eps > model.injectivity_radius + 1e-12:
        # the doubled ball would wrap around the torus and the bump lose smoothness
        raise ValueError(f"2*eps={2 * eps} exceeds r_inj={model.injectivity_radius}")
    R = 2 * eps
    betas, dbetas = [], []
    for c in centers:
        z = displacement(model, c)
        u = np.sum(z ** 2, axis=-1) / R ** 2
        inside = u < 1
        w = np.where(inside, 1 - u, 1.0)
        b = np.where(inside, np.exp(-1 / w), 0.0)
        # d/dz exp(-1/(1-u)) = b * (-(1-u)^-2) * 2z/R^2
        db = np.where(inside[..., None], (b * (-1 / w ** 2))[..., None] * 2 * z / R ** 2, 0.0)
        betas.append(b)
        dbetas.append(db)
    beta = np.stack(betas)
    dbeta = np.stack(dbetas)
    S = np.sum(beta ** 2, axis=0)
    region = model.support_mask() if model.kind is Kind.BOX else np.ones(model.shape, bool)
    if np.any(S[region] <= 1e-280):
        raise ValueError("the doubled balls do not cover the required region")
    S_safe = np.where(S > 0, S, 1.0)
    root = np.sqrt(S_safe)
    sqrt_chi = np.where(S > 0, beta / root, 0.0)
    dS_half = np.sum(beta[..., None] * dbeta, axis=0)            # (1/2) dS
    dsqrt = np.where((S > 0)[..., None],
                     dbeta / root[..., None]
                     - beta[..., None] * dS_half / (S_safe ** 1.5)[..., None], 0.0)
    K = int(np.max(np.sum(sqrt_chi > 0, axis=0)))
    C = float(np.max(np.sqrt(np.sum(dsqrt ** 2, axis=-1))))
    return PartitionOfUnity(model, float(eps), centers, sqrt_chi, dsqrt, K, C, region)


def verify_partition(model: ManifoldModel, P: PartitionOfUnity,
                     tol: float = TOL_ALGEBRAIC) -> CheckReport:
    """Check the four conditions of a bounded partition of unity."""
    report = CheckReport()
    chi = P.sqrt_chi ** 2
    total = np.sum(chi, axis=0)
    sum_err = float(np.max(np.abs(total - 1)[P.region])) if P.size else math.inf
    report.add(check_le("partition.sum_to_one", "sum_i chi_i(x) = 1", sum_err, 0.0, tol))
    rng_ok = bool(np.all(chi >= 0) and np.all(chi <= 1 + tol))
    report.add(check_flag("partition.range", "chi_i(x) in [0, 1]", rng_ok,
                          float(np.max(chi)) if P.size else math.nan))

    escape = 0.0
    for i, c in enumerate(P.centers):
        dist = np.sqrt(np.sum(displacement(model, c) ** 2, axis=-1))
        outside = (P.sqrt_chi[i] > 0) & (dist >= 2 * P.epsilon)
        if np.any(outside):
            escape = max(escape, float(np.max(dist[outside]) - 2 * P.epsilon))
    report.add(check_le("partition.support", "supp sqrt(chi_i) in B_2eps(y_i)", escape, 0.0,
                        epsilon=P.epsilon))

    K = int(np.max(np.sum(P.sqrt_chi > 0, axis=0))) if P.size else 0
    report.add(check_le("partition.multiplicity", "finite multiplicity K", K, P.multiplicity,
                        members=P.size))
    C = float(np.max(np.sqrt(np.sum(P.dsqrt_chi ** 2, axis=-1)))) if P.size else math.inf
    report.add(check_flag("partition.deriv_bound", "C_chi = sup ||d sqrt(chi_i)|| < inf",
                          math.isfinite(C), C))
    return report
