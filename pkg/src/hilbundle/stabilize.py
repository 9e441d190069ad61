"""Stabilisation of a Hilbert bundle into a trivial one.

A bundle is described by a cover of charts ``U_i`` (balls around partition
centres) and unitary transition fields ``tau_ij`` on the overlaps.  Its
sections are tuples of local data ``s_i`` on ``U_i`` with
``s_i = tau_ij s_j``.  Given a partition of unity ``{chi_i}`` subordinate to
the cover,

* ``Phi(s)`` is the block section with ``i``-th block ``s_i sqrt(chi_i)``,
* ``Psi(t)`` has local data ``s_j = sum_i tau_ji t_i sqrt(chi_i)``,
* ``P = Phi Psi`` has blocks ``P_ij = tau_ij sqrt(chi_i chi_j)``.

``Psi Phi = 1`` and ``P`` is an orthogonal projection of rank ``d`` at every
point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .blocks import BlockField, block_section, split_section
from .generators import chart_gauge, fourier_field, random_hermitian
from .manifold import GridPoint, ManifoldModel, OperatorField, distance_to, scalar_field
from .opspace import field_derivative, op_norms
from .partition import PartitionOfUnity
from .report import CheckReport, TOL_IDENTITY, TOL_LINALG, check_le

__all__ = [
    "BundleData",
    "BundleError",
    "StabilizedProjection",
    "make_bundle",
    "validate_bundle",
    "gauge_section",
    "phi_embed",
    "psi_project",
    "build_projection",
    "verify_projection",
    "stabilization_check",
]

Transition = Callable[[int, int], OperatorField]


class BundleError(ValueError):
    pass


@dataclass(eq=False)
class BundleData:
    """Cover data and transition fields of a bundle with fibre ``C^d``.

    ``transitions[(i, j)]`` holds ``tau_ij`` on the whole grid, zeroed
    outside ``U_i & U_j``.  ``gauges[i]`` (when present) is a unitary field
    ``u_i`` on ``U_i`` with ``tau_ij = u_i u_j*``.
    """

    model: ManifoldModel
    centers: list[GridPoint]
    radius: float
    d: int
    domains: np.ndarray                      # (m,) + grid
    transitions: dict[tuple[int, int], OperatorField]
    C_tau: float
    generator: str = "custom"
    gauges: list[OperatorField] | None = None
    frames: list | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return len(self.centers)

    def overlap(self, i: int, j: int) -> np.ndarray:
        return self.domains[i] & self.domains[j]

    def tau(self, i: int, j: int) -> OperatorField:
        return self.transitions[(i, j)]

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self.transitions)


@dataclass(eq=False)
class StabilizedProjection:
    field: BlockField
    bundle: BundleData
    partition: PartitionOfUnity
    D_P: float
    bound: float

    @property
    def m(self) -> int:
        return self.field.m


def _domains(model, centers, radius):
    return np.stack([distance_to(model, c) < radius for c in centers])


def _overlap_pairs(domains):
    m = len(domains)
    flat = domains.reshape(m, -1).astype(np.int32)
    inter = (flat @ flat.T) > 0
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(inter))]


def _mask(f: OperatorField, mask: np.ndarray) -> OperatorField:
    return f.masked(mask)


def _sup_deriv(model, f: OperatorField, mask: np.ndarray) -> float:
    if not np.any(mask):
        return 0.0
    d = field_derivative(model, f)[mask]
    return float(np.max(op_norms(d.reshape(d.shape[0], -1, d.shape[-1]))))


def make_bundle(model: ManifoldModel, partition: PartitionOfUnity,
                generator: str | Transition = "trivial", d: int = 2,
                rng: np.random.Generator | None = None, radius: float | None = None,
                strength: float = 1.0, gauges: list[OperatorField] | None = None,
                tol: float = TOL_IDENTITY) -> BundleData:
    """Build a bundle over the cover of ``partition``.

    ``generator`` is ``"trivial"`` (``tau = I``), ``"gauge"`` (random
    ``u_i = exp(i sum_a phi_a A_a + F)`` with hermitian ``A_a`` and an
    anti-hermitian Fourier field ``F``, and ``tau_ij = u_i u_j*``) or a
    callable ``(i, j) -> OperatorField`` returning ``tau_ij`` on the grid.
    Explicit ``gauges`` override the random choice.  The chart radius
    defaults to ``2 eps`` so that every ``supp chi_i`` lies in ``U_i``.
    """
    centers = [model.point(model.nearest_point(c).index) for c in partition.centers]
    radius = 2 * partition.epsilon if radius is None else float(radius)
    if not 0 < radius < model.injectivity_radius:
        raise BundleError(f"chart radius {radius} must lie in (0, r_inj)")
    if radius < 2 * partition.epsilon - 1e-12:
        raise BundleError("charts must contain the supports of the partition members")
    domains = _domains(model, centers, radius)
    pairs = _overlap_pairs(domains)
    name = generator if isinstance(generator, str) else "custom"

    if isinstance(generator, str) and generator == "gauge" and gauges is None:
        rng = np.random.default_rng(0) if rng is None else rng
        gauges = []
        for i, c in enumerate(centers):
            A = np.stack([random_hermitian(d, rng) for _ in range(model.dimension)])
            A *= strength / max(1.0, np.linalg.norm(A, ord=2, axis=(-2, -1)).max())
            G = fourier_field(model, d, d, rng, degree=2, scale=strength)
            F = (G - G.adjoint()) * 0.5
            gauges.append(chart_gauge(model, c, A, F, mask=domains[i]))
        name = "gauge"
    elif isinstance(generator, str) and generator not in ("trivial", "gauge"):
        raise BundleError(f"unknown bundle generator {generator!r}")

    transitions: dict[tuple[int, int], OperatorField] = {}
    for i, j in pairs:
        mask = domains[i] & domains[j]
        if gauges is not None:
            t = gauges[i] @ gauges[j].adjoint()
        elif callable(generator):
            t = generator(i, j)
        else:
            eye = np.broadcast_to(np.eye(d, dtype=complex), model.shape + (d, d)).copy()
            t = OperatorField(eye, np.zeros(model.shape + (model.dimension, d, d), complex))
        if t.values.shape != model.shape + (d, d):
            raise BundleError(f"transition ({i},{j}) has shape {t.values.shape}")
        if t.deriv is None:
            raise BundleError("transitions must carry their derivative")
        transitions[(i, j)] = _mask(t, mask)

    C_tau = max((_sup_deriv(model, t, domains[i] & domains[j])
                 for (i, j), t in transitions.items()), default=0.0)
    bundle = BundleData(model, centers, radius, d, domains, transitions, C_tau, name, gauges)
    report = validate_bundle(bundle, tol)
    if not report.passed:
        raise BundleError("invalid transition data:\n" + report.summary())
    return bundle


def validate_bundle(bundle: BundleData, tol: float = TOL_IDENTITY) -> CheckReport:
    """Unitarity, ``tau_ii = I``, ``tau_ji = tau_ij*`` and the cocycle identity."""
    d = bundle.d
    eye = np.eye(d)
    unit = ident = sym = 0.0
    for (i, j), t in bundle.transitions.items():
        mask = bundle.overlap(i, j)
        v = t.values[mask]
        unit = max(unit, float(np.max(np.abs(np.conj(np.swapaxes(v, -1, -2)) @ v - eye),
                                      initial=0.0)))
        if i == j:
            ident = max(ident, float(np.max(np.abs(v - eye), initial=0.0)))
        back = bundle.transitions.get((j, i))
        if back is None:
            sym = math.inf
        else:
            sym = max(sym, float(np.max(np.abs(v - np.conj(np.swapaxes(back.values[mask], -1, -2))),
                                        initial=0.0)))
    cocycle = cocycle_residual(bundle)
    report = CheckReport()
    report.add(check_le("bundle.unitary", "tau_ij* tau_ij = I", unit, 0.0, tol))
    report.add(check_le("bundle.identity", "tau_ii = I", ident, 0.0, tol))
    report.add(check_le("bundle.symmetric", "tau_ji = tau_ij*", sym, 0.0, tol))
    report.add(check_le("bundle.cocycle", "tau_ij tau_jk = tau_ik", cocycle, 0.0, tol))
    report.add(check_le("bundle.C_tau_finite", "C_tau = sup ||d tau_ij|| < inf",
                        bundle.C_tau, math.inf, C_tau=bundle.C_tau))
    return report


def cocycle_residual(bundle: BundleData) -> float:
    by_first: dict[int, list[int]] = {}
    for i, j in bundle.transitions:
        by_first.setdefault(i, []).append(j)
    worst = 0.0
    for (i, j), tij in bundle.transitions.items():
        for k in by_first.get(j, []):
            tik = bundle.transitions.get((i, k))
            mask = bundle.domains[i] & bundle.domains[j] & bundle.domains[k]
            if not np.any(mask):
                continue
            if tik is None:
                return math.inf
            r = tij.values[mask] @ bundle.transitions[(j, k)].values[mask] - tik.values[mask]
            worst = max(worst, float(np.max(np.abs(r))))
    return worst


def gauge_section(bundle: BundleData, v: OperatorField) -> list[OperatorField]:
    """Compatible local data ``s_i = u_i v`` from a global ``C^d``-valued section ``v``."""
    out = []
    for i in range(bundle.m):
        s = v if bundle.gauges is None else bundle.gauges[i] @ v
        out.append(_mask(s, bundle.domains[i]))
    return out


def compatibility_residual(bundle: BundleData, local: list[OperatorField]) -> float:
    worst = 0.0
    for (i, j), t in bundle.transitions.items():
        mask = bundle.overlap(i, j)
        if i == j or not np.any(mask):
            continue
        r = local[i].values[mask] - t.values[mask] @ local[j].values[mask]
        worst = max(worst, float(np.max(np.abs(r))))
    return worst


def phi_embed(bundle: BundleData, partition: PartitionOfUnity, local: list[OperatorField],
              tol: float = TOL_IDENTITY) -> OperatorField:
    """Block section with ``i``-th block ``s_i sqrt(chi_i)``."""
    if len(local) != bundle.m:
        raise BundleError(f"expected {bundle.m} local sections, got {len(local)}")
    scale = max([1.0] + [float(np.max(np.abs(s.values))) for s in local])
    res = compatibility_residual(bundle, local)
    if res > tol * scale:
        raise BundleError(f"local data are not compatible (residual {res:.3g})")
    parts = []
    for i, s in enumerate(local):
        if s.deriv is None:
            raise BundleError("local data must carry their derivative")
        parts.append(s * partition.sqrt_field(i))
    return block_section(parts)


def psi_project(bundle: BundleData, partition: PartitionOfUnity,
                t: OperatorField) -> list[OperatorField]:
    """Local data ``s_j = sum_i tau_ji t_i sqrt(chi_i)`` on each chart."""
    parts = split_section(t, bundle.m)
    if t.deriv is None:
        parts = [OperatorField(p.values, field_derivative(bundle.model, p)) for p in parts]
    weighted = [p * partition.sqrt_field(i) for i, p in enumerate(parts)]
    grid, d, N = bundle.model.shape, bundle.d, bundle.model.dimension
    vals = [np.zeros(grid + (d, 1), complex) for _ in range(bundle.m)]
    ders = [np.zeros(grid + (N, d, 1), complex) for _ in range(bundle.m)]
    for (j, i), tau in bundle.transitions.items():
        if not np.any(partition.active[i] & bundle.domains[j]):
            continue
        prod = tau @ weighted[i]
        vals[j] += prod.values
        ders[j] += prod.deriv
    return [_mask(OperatorField(v, dv), bundle.domains[j])
            for j, (v, dv) in enumerate(zip(vals, ders))]


def build_projection(bundle: BundleData, partition: PartitionOfUnity) -> StabilizedProjection:
    """Blocks ``P_ij = tau_ij sqrt(chi_i chi_j)`` over the pairs whose supports meet."""
    if bundle.m != partition.size:
        raise BundleError("bundle and partition must share their centres")
    blocks = {}
    for i, j in partition.neighbours():
        if (i, j) not in bundle.transitions:
            raise BundleError(f"no transition for overlapping pair ({i},{j})")
        v, dv = partition.sqrt_pair(i, j)
        blocks[(i, j)] = bundle.transitions[(i, j)] * scalar_field(v, dv)
    bf = BlockField(bundle.m, bundle.d, bundle.d, blocks, partition.active)
    D_P = block_deriv_sup(bf)
    K = partition.multiplicity
    bound = K ** 1.5 * (bundle.C_tau + partition.pair_deriv_bound)
    return StabilizedProjection(bf, bundle, partition, D_P, bound)


def block_deriv_sup(bf: BlockField) -> float:
    """``sup_x ||dB(x)||`` with the derivative stacked axis-major."""
    best = 0.0
    for idx in np.ndindex(*bf.grid_shape):
        ids, _, der = bf.local(idx)
        if len(ids):
            best = max(best, float(np.linalg.norm(der.reshape(-1, der.shape[-1]), ord=2)))
    return best


def verify_projection(sp: StabilizedProjection, tol: float = TOL_IDENTITY,
                      eig_tol: float = TOL_LINALG) -> CheckReport:
    bf, d = sp.field, sp.bundle.d
    idem = herm = eig_dev = 0.0
    bad_rank = 0
    for idx in np.ndindex(*bf.grid_shape):
        ids, val, _ = bf.local(idx)
        if not len(ids):
            bad_rank += d > 0
            continue
        idem = max(idem, float(np.max(np.abs(val @ val - val))))
        herm = max(herm, float(np.max(np.abs(val - val.conj().T))))
        ev = np.linalg.eigvalsh((val + val.conj().T) / 2)
        eig_dev = max(eig_dev, float(np.max(np.minimum(np.abs(ev), np.abs(ev - 1)))))
        bad_rank += int(np.sum(ev > 0.5)) != d
    report = CheckReport()
    report.add(check_le("projection.idempotent", "P(x)^2 = P(x)", idem, 0.0, tol))
    report.add(check_le("projection.selfadjoint", "P(x)* = P(x)", herm, 0.0, tol))
    report.add(check_le("projection.spectrum", "spectrum of P(x) in {0, 1}", eig_dev, 0.0, eig_tol))
    report.add(check_le("projection.rank", "rank P(x) = d", bad_rank, 0, rank=d))
    K = sp.partition.multiplicity
    report.add(check_le("projection.deriv_bound", "||dP(x)|| <= K^{3/2} (C_tau + C_chi)",
                        sp.D_P, sp.bound, tol, K=K, C_tau=sp.bundle.C_tau,
                        C_chi_pair=sp.partition.pair_deriv_bound,
                        C_chi_single=sp.partition.deriv_bound,
                        ratio=sp.D_P / sp.bound if sp.bound > 0 else 0.0))
    return report


def stabilization_check(bundle: BundleData, partition: PartitionOfUnity,
                        rng: np.random.Generator, sections: int = 3,
                        tol: float = TOL_IDENTITY) -> CheckReport:
    """``Psi Phi = 1``, the pointwise norm identity, and ``P = Phi Psi`` on random data."""
    model = bundle.model
    sp = build_projection(bundle, partition)
    roundtrip = norm_dev = p_dev = 0.0
    for _ in range(sections):
        t = fourier_field(model, bundle.m * bundle.d, 1, rng, degree=2)
        local = psi_project(bundle, partition, t)
        back = psi_project(bundle, partition, phi_embed(bundle, partition, local, tol))
        for j in range(bundle.m):
            mask = bundle.domains[j]
            roundtrip = max(roundtrip, float(np.max(np.abs(back[j].values[mask]
                                                           - local[j].values[mask]))))
        emb = phi_embed(bundle, partition, local, tol)
        # ||Phi(s)(x)|| = ||s(x)||, read in any chart containing x
        own = np.argmax(partition.sqrt_chi, axis=0)
        ref = np.take_along_axis(
            np.stack([np.sum(np.abs(s.values[..., 0]) ** 2, axis=-1) for s in local]),
            own[None], axis=0)[0]
        got = np.sum(np.abs(emb.values[..., 0]) ** 2, axis=-1)
        norm_dev = max(norm_dev, float(np.max(np.abs(np.sqrt(got) - np.sqrt(ref)))))
        p_dev = max(p_dev, float(np.max(np.abs(sp.field.apply(t).values - emb.values))))
    report = CheckReport()
    report.add(check_le("stabilize.psi_phi", "Psi(Phi(s)) = s", roundtrip, 0.0, tol,
                        m=bundle.m, sections=sections))
    report.add(check_le("stabilize.norm_identity", "||Phi(s)(x)|| = ||s(x)||", norm_dev, 0.0,
                        tol))
    report.add(check_le("stabilize.P_equals_phi_psi", "P = Phi Psi", p_dev, 0.0, tol))
    report.extend(verify_projection(sp, tol))
    return report
