"""The two round trips between bundles and projective modules.

*Surjectivity.*  For a projection field ``P`` with image bundle ``E`` the map
``A(x) xi = sum_i e_i W_i*(x) P(x) xi sqrt(chi_i)(x)`` satisfies ``A*A = P``
and ``AA* = P_stab``, so the module ``P C^1_0(M, H)`` is unitarily the
stabilised module of ``E``.

*Faithfulness.*  A bundle morphism given by overlap fields ``alpha_ij``
(compatible with both cocycles) acts on stabilised modules through the block
field ``Gamma(alpha)_ij = alpha_ij sqrt(chi_i chi_j)``.  Probing
``Gamma(alpha)`` with the localised sections ``xi_{x_j}`` returns
``alpha_jj`` wherever ``chi_j > 0``, and from the diagonal terms every
``alpha_ij`` is recovered through the transitions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blocks import BlockField
from .generators import fourier_field
from .manifold import OperatorField, scalar_field
from .opspace import alpha_norm_1, op_norms, pi_block
from .partition import PartitionOfUnity
from .report import CheckReport, TOL_LINALG, check_flag, check_le
from .stabilize import BundleError, BundleData, build_projection, psi_project
from .stdmodule import section_norm_1

__all__ = [
    "BundleMorphism",
    "gauge_morphism",
    "morphism_residual",
    "module_morphism",
    "surjectivity_roundtrip",
    "faithfulness_roundtrip",
    "reconstruct_morphism",
    "injectivity_check",
    "localized_probes",
    "reconstruction_constants",
]


@dataclass(eq=False)
class BundleMorphism:
    """Overlap fields ``alpha_ij : E_source -> E_target`` on ``U_i & U_j``."""

    source: BundleData
    target: BundleData
    fields: dict[tuple[int, int], OperatorField]

    def adjoint(self) -> "BundleMorphism":
        fields = {(j, i): f.adjoint() for (i, j), f in self.fields.items()}
        return BundleMorphism(self.target, self.source, fields)

    def compose(self, first: "BundleMorphism") -> "BundleMorphism":
        """``self o first`` with ``(self o first)_ij = self_ij first_jj``."""
        fields = {}
        for (i, j), f in self.fields.items():
            fields[(i, j)] = (f @ first.fields[(j, j)]).masked(self.source.overlap(i, j))
        return BundleMorphism(first.source, self.target, fields)


def _gauge(bundle: BundleData, i: int) -> OperatorField | None:
    return None if bundle.gauges is None else bundle.gauges[i]


def gauge_morphism(source: BundleData, target: BundleData, a: OperatorField) -> BundleMorphism:
    """``alpha_ij = w_i a u_j*`` from the gauges ``u`` of ``source`` and ``w`` of ``target``."""
    if source.m != target.m or not np.array_equal(source.domains, target.domains):
        raise BundleError("source and target must share their cover")
    fields = {}
    for (i, j) in source.transitions:
        f = a
        u, w = _gauge(source, j), _gauge(target, i)
        if u is not None:
            f = f @ u.adjoint()
        if w is not None:
            f = w @ f
        fields[(i, j)] = f.masked(source.overlap(i, j))
    return BundleMorphism(source, target, fields)


def morphism_residual(mor: BundleMorphism) -> float:
    """Worst violation of ``alpha_ij = sigma_ik alpha_kj`` and ``alpha_ij = alpha_ik tau_kj``."""
    src, tgt = mor.source, mor.target
    by_first: dict[int, list[int]] = {}
    for i, k in src.transitions:
        by_first.setdefault(i, []).append(k)
    worst = 0.0
    for (i, j), a in mor.fields.items():
        for k in by_first.get(i, []):
            mask = src.domains[i] & src.domains[j] & src.domains[k]
            if not np.any(mask) or (k, j) not in mor.fields:
                continue
            left = tgt.transitions[(i, k)].values[mask] @ mor.fields[(k, j)].values[mask]
            right = mor.fields[(i, k)].values[mask] @ src.transitions[(k, j)].values[mask]
            ref = a.values[mask]
            worst = max(worst, float(np.max(np.abs(left - ref))),
                        float(np.max(np.abs(right - ref))))
    return worst


def module_morphism(mor: BundleMorphism, partition: PartitionOfUnity) -> BlockField:
    """``Gamma(alpha)`` with blocks ``alpha_ij sqrt(chi_i chi_j)``."""
    blocks = {}
    for i, j in partition.neighbours():
        if (i, j) not in mor.fields:
            raise BundleError(f"morphism is missing the overlap ({i},{j})")
        v, dv = partition.sqrt_pair(i, j)
        blocks[(i, j)] = mor.fields[(i, j)] * scalar_field(v, dv)
    return BlockField(partition.size, mor.target.d, mor.source.d, blocks, partition.active)


def reconstruction_constants(partition: PartitionOfUnity) -> dict[str, float]:
    """``delta_chi``, ``C_chi`` and ``C_{delta,chi} = delta^-1 (1 + delta^-1 C_chi)``."""
    delta = partition.lower_bound
    C = partition.deriv_bound
    return {"delta_chi": delta, "C_chi": C, "C_delta_chi": (1 + C / delta) / delta}


def _pointwise_gram_deviation(A: np.ndarray, P: np.ndarray) -> float:
    Ah = np.conj(np.swapaxes(A, -1, -2))
    return float(np.max(np.abs(Ah @ A - P)))


def surjectivity_roundtrip(model, P, partition: PartitionOfUnity, bundle: BundleData,
                           rng: np.random.Generator | None = None,
                           tol: float = TOL_LINALG) -> CheckReport:
    """``A*A = P``, ``AA* = P_stab`` and ``||A xi|| = ||P xi||`` for the image bundle of ``P``."""
    if bundle.frames is None:
        raise BundleError("surjectivity needs an image bundle built by image_bundle()")
    rng = np.random.default_rng(0) if rng is None else rng
    Pf = P.field
    parts = []
    for i, f in enumerate(bundle.frames):
        Ai = (f.W.adjoint() @ Pf) * partition.sqrt_field(i)
        parts.append(Ai)
    A = OperatorField(np.concatenate([p.values for p in parts], axis=-2),
                      np.concatenate([p.deriv for p in parts], axis=-2))
    report = CheckReport()
    report.add(check_le("surjectivity.AstarA", "A(x)* A(x) = P(x)",
                        _pointwise_gram_deviation(A.values, Pf.values), 0.0, tol))

    sp = build_projection(bundle, partition)
    k = bundle.d
    dev = 0.0
    for idx in np.ndindex(*model.shape):
        ids, val, _ = sp.field.local(idx)
        if not len(ids):
            continue
        rows = np.concatenate([np.arange(i * k, (i + 1) * k) for i in ids])
        Ax = A.values[idx][rows]
        dev = max(dev, float(np.max(np.abs(Ax @ Ax.conj().T - val))))
        # rows of A outside the active set vanish
        dev = max(dev, float(np.max(np.abs(np.delete(A.values[idx], rows, axis=0)), initial=0.0)))
    report.add(check_le("surjectivity.AAstar", "A(x) A(x)* = P_stab(x)", dev, 0.0, tol))

    xi = fourier_field(model, Pf.d_out, 1, rng, degree=2)
    lhs = np.sqrt(np.sum(np.abs((A @ xi).values[..., 0]) ** 2, axis=-1))
    rhs = np.sqrt(np.sum(np.abs((Pf @ xi).values[..., 0]) ** 2, axis=-1))
    report.add(check_le("surjectivity.isometry", "||A(x) xi(x)|| = ||P(x) xi(x)||",
                        float(np.max(np.abs(lhs - rhs))), 0.0, tol))

    a1 = alpha_norm_1(model, A)
    C_tau_p = max(alpha_norm_1(model, (f.W.adjoint() @ Pf).masked(f.mask))
                  for f in bundle.frames)
    C_chi_p = max(alpha_norm_1(model, partition.sqrt_field(i)) for i in range(partition.size))
    K = partition.multiplicity
    report.add(check_le("surjectivity.norm_bound", "||A||_1 <= sqrt(K) C_tau' C_chi'", a1,
                        math.sqrt(K) * C_tau_p * C_chi_p, tol, K=K, C_tau_prime=C_tau_p,
                        C_chi_prime=C_chi_p))
    return report


def localized_probes(bundle: BundleData, partition: PartitionOfUnity,
                     sp=None) -> dict[tuple[int, int], OperatorField]:
    """``Phi(xi_{x_j}) = P_stab(e_j xi)`` for every chart ``j`` and basis vector ``xi = e_k``."""
    sp = build_projection(bundle, partition) if sp is None else sp
    grid, d, N, m = bundle.model.shape, bundle.d, bundle.model.dimension, bundle.m
    out = {}
    for j in range(m):
        for k in range(d):
            v = np.zeros(grid + (m * d, 1), complex)
            v[..., j * d + k, 0] = 1.0
            e = OperatorField(v, np.zeros(grid + (N, m * d, 1), complex))
            out[(j, k)] = sp.field.apply(e)
    return out


def reconstruct_morphism(gamma: BlockField, source: BundleData, target: BundleData,
                         partition: PartitionOfUnity) -> dict[tuple[int, int], OperatorField]:
    """Read ``alpha_jj`` off ``Gamma(alpha)`` with localised probes, then rebuild every ``alpha_ij``.

    ``chi_j alpha_jj xi = sqrt(chi_j) rho_j(Gamma(alpha) Phi(xi_{x_j}))``, where ``rho_j``
    is the ``j``-th local datum of ``Psi``.  Off the diagonal,
    ``alpha_ij = sigma_{i j*} alpha_{j* j*} tau_{j* j}`` with ``j*`` the member of
    largest weight at the point.
    """
    model = source.model
    m, ds, dt = source.m, source.d, target.d
    probes = localized_probes(source, partition)
    diag_vals = np.zeros((m,) + model.shape + (dt, ds), complex)
    for (j, k), probe in probes.items():
        out = gamma.apply(probe)
        local = psi_project(target, partition, out)[j]
        sq = partition.sqrt_chi[j]
        keep = sq > 0
        diag_vals[j][keep, :, k] = local.values[keep, :, 0] / sq[keep][:, None]
    star = np.argmax(partition.chi, axis=0)
    rec = {}
    for (i, j) in source.transitions:
        mask = source.overlap(i, j)
        vals = np.zeros(model.shape + (dt, ds), complex)
        for js in np.unique(star[mask]):
            sel = mask & (star == js)
            if (i, js) not in target.transitions or (js, j) not in source.transitions:
                raise BundleError(f"chart {js} does not meet the overlap ({i},{j})")
            vals[sel] = (target.transitions[(i, js)].values[sel] @ diag_vals[js][sel]
                         @ source.transitions[(js, j)].values[sel])
        rec[(i, j)] = OperatorField(vals)
    return rec


def _module_norm_estimate(model, gamma: BlockField, probes) -> float:
    best = 0.0
    for s in probes:
        ns = section_norm_1(model, s)
        if ns > 0:
            best = max(best, section_norm_1(model, gamma.apply(s)) / ns)
    return best


def faithfulness_roundtrip(model, mor: BundleMorphism, partition: PartitionOfUnity,
                           second: BundleMorphism | None = None, rng=None, pairs: int = 50,
                           tol: float = TOL_LINALG) -> CheckReport:
    """Adjoint compatibility, reconstruction of ``alpha`` and the reconstruction bound.

    With ``second`` (a morphism out of ``mor.target``) functoriality
    ``Gamma(second o mor) = Gamma(second) Gamma(mor)`` is checked as well.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    src, tgt = mor.source, mor.target
    report = CheckReport()
    res = morphism_residual(mor)
    report.add(check_le("faithful.compatible", "alpha_ij = sigma_ik alpha_kl tau_lj", res, 0.0,
                        tol))
    if res > tol:
        raise BundleError(f"morphism is not compatible with the cocycles (residual {res:.3g})")
    G = module_morphism(mor, partition)
    Gs = module_morphism(mor.adjoint(), partition)
    m = partition.size

    adj = 0.0
    for _ in range(pairs):
        s = fourier_field(model, m * src.d, 1, rng, degree=2)
        t = fourier_field(model, m * tgt.d, 1, rng, degree=2)
        lhs = np.sum(np.conj(G.apply(s).values[..., 0]) * t.values[..., 0], axis=-1)
        rhs = np.sum(np.conj(s.values[..., 0]) * Gs.apply(t).values[..., 0], axis=-1)
        adj = max(adj, float(np.max(np.abs(lhs - rhs))))
    report.add(check_le("faithful.adjoint", "<Gamma(a) s, t> = <s, Gamma(a*) t>", adj, 0.0, tol,
                        pairs=pairs))

    if second is not None:
        comp = second.compose(mor)
        Gc = module_morphism(comp, partition)
        G2 = module_morphism(second, partition)
        fun = 0.0
        for _ in range(pairs):
            s = fourier_field(model, m * src.d, 1, rng, degree=2)
            fun = max(fun, float(np.max(np.abs(Gc.apply(s).values - G2.apply(G.apply(s)).values))))
        report.add(check_le("faithful.functorial", "Gamma(b o a) = Gamma(b) Gamma(a)", fun, 0.0,
                            tol, pairs=pairs))

    rec = reconstruct_morphism(G, src, tgt, partition)
    err = 0.0
    covered = 0
    total = 0
    for key, f in mor.fields.items():
        mask = src.overlap(*key)
        total += int(np.sum(mask))
        covered += int(np.sum(mask))
        err = max(err, float(np.max(np.abs(rec[key].values[mask] - f.values[mask]), initial=0.0)))
    consts = reconstruction_constants(partition)
    report.add(check_le("faithful.reconstruction", "probing Gamma(alpha) recovers alpha_ij", err,
                        0.0, tol, coverage=covered / total if total else 1.0, **consts))

    sp_src = build_projection(src, partition)
    probes = list(localized_probes(src, partition, sp_src).values())
    probes += [sp_src.field.apply(fourier_field(model, m * src.d, 1, rng, degree=1))
               for _ in range(3)]
    est = _module_norm_estimate(model, G, probes)
    p_norm = _block_pi_norm(sp_src.field)
    lhs = 0.0
    for j in range(m):
        region = partition.chi[j] >= consts["delta_chi"]
        if np.any(region):
            pj = op_norms(pi_block(model, mor.fields[(j, j)]))[region]
            lhs = max(lhs, float(np.max(pj)))
    bound = 2 * est * p_norm * consts["C_delta_chi"]
    report.add(check_le("faithful.reconstruction_bound",
                        "||pi(alpha_jj)(y)|| <= 2 ||Gamma(alpha)|| ||P|| C_{delta,chi}", lhs,
                        bound, tol, gamma_estimate=est, projection_norm=p_norm, **consts))
    return report


def _block_pi_norm(bf: BlockField) -> float:
    """``sup_x ||pi(B)(x)||`` evaluated on the active sub-blocks."""
    best = 0.0
    N = bf.dimension
    for idx in np.ndindex(*bf.grid_shape):
        ids, val, der = bf.local(idx)
        if not len(ids):
            continue
        r, c = val.shape
        pi = np.zeros(((N + 1) * r, (N + 1) * c), complex)
        pi[:r, :c] = val
        for a in range(N):
            pi[(a + 1) * r:(a + 2) * r, :c] = der[a]
            pi[(a + 1) * r:(a + 2) * r, (a + 1) * c:(a + 2) * c] = val
        best = max(best, float(np.linalg.norm(pi, 2)))
    return best


def injectivity_check(gamma_a: BlockField, gamma_b: BlockField,
                      probes: dict[tuple[int, int], OperatorField],
                      expect_distinct: bool = True, tol: float = TOL_LINALG) -> CheckReport:
    """Search the probe sections for one on which the two module maps differ."""
    worst, witness = 0.0, None
    for key, s in probes.items():
        diff = float(np.max(np.abs(gamma_a.apply(s).values - gamma_b.apply(s).values)))
        if diff > worst:
            worst, witness = diff, key
    distinct = worst > tol
    report = CheckReport()
    report.add(check_flag("injectivity.distinguished" if expect_distinct else "injectivity.equal",
                          "Gamma(alpha) = Gamma(beta) only if alpha = beta",
                          distinct == expect_distinct, worst, distinguished=distinct,
                          witness=list(witness) if (distinct and witness) else None,
                          probes=len(probes)))
    return report
