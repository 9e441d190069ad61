"""Scenario configuration and the check suites run by the CLI.

A scenario is a YAML file validated against ``schemas/config.schema.json``.
Each suite draws from its own random stream ``default_rng([seed, index])``
so that selecting a subset of suites never changes the numbers of the
others.  Suites that repeat a construction over many seeded items report
the worst instance of every check, together with the item count.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np
import yaml

from . import __version__
from .equivalence import (BundleMorphism, faithfulness_roundtrip, gauge_morphism, injectivity_check,
                          localized_probes, module_morphism, surjectivity_roundtrip)
from .generators import (fourier_field, plane_wave, random_unitary, rotating_projector)
from .imagebundle import (ProjectionField, dispro_check, image_bundle, inv_sqrt_quad,
                          projection_field, quadrature_convergence, select_radius)
from .manifold import (Kind, ManifoldModel, OperatorField, build_model, constant_field, derham,
                       geodesic_distance, normal_chart)
from .opspace import (adjoint_derivative_check, alpha_norm_1, cb_check, field_norm_1,
                      product_norm_check, sandwich_check)
from .partition import (PartitionOfUnity, ball_cover, build_partition, lattice_multiplicity,
                        verify_partition)
from .report import (CheckReport, Table, check_close, check_flag, check_ge, check_le, check_lt,
                     merge_worst)
from .stabilize import BundleError, make_bundle, stabilization_check, validate_bundle
from .stdmodule import (NotAModuleMap, apply_morphism, cutoff, hermitian_form, recover_field,
                        section_norm_1)

SUITES = ("manifold", "partition", "opspace", "stdmodule", "stabilize", "imagebundle",
          "equivalence")

# stream for the projector fields shared by the imagebundle and equivalence suites
_IMAGE_STREAM = len(SUITES)
QUAD_NODES = (16, 32, 64, 128)
DEFAULT_PARTITION_MEMBERS = 8
DISPRO_MAX_CHARTS = 1024

DEFAULTS: dict[str, Any] = {
    "name": "scenario",
    "suites": list(SUITES),
    "partition": {},
    "fiber": {"d": 2},
    "bundle": {"generator": "gauge", "count": 1, "strength": 1.0},
    "projector": {"generator": "rotating", "count": 2, "d": 3, "ranks": [1, 2],
                  "max_frequency": 1, "radius_scale": 1.0, "method": "eig"},
    "opspace": {"fields": 10, "d": 3, "degree": 3, "amplification": 2, "samples": 10},
    "stdmodule": {"fields": 5, "pairs": 10, "d": 2},
    "equivalence": {"morphisms": 1, "pairs": 20},
    "quadrature": {"nodes": 200, "matrices": 20, "max_dim": 8, "max_cond": 1e3},
    "tolerances": {"algebraic": 1e-12, "identity": 1e-10, "linalg": 1e-8},
}


class ConfigError(ValueError):
    """The scenario file is missing, unparsable or fails validation."""


def _schema(name: str) -> dict:
    return json.loads(resources.files("hilbundle").joinpath("schemas", name).read_text())


def config_schema() -> dict:
    return _schema("config.schema.json")


def report_schema() -> dict:
    return _schema("report.schema.json")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate_config(raw: Any) -> dict:
    """Schema validation, cross-field checks and defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        jsonschema.validate(raw, config_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    cfg = _merge(DEFAULTS, raw)
    man = cfg["manifold"]
    n = man["dimension"]
    if len(man["extents"]) != n or len(man["grid"]) != n:
        raise ConfigError("manifold: extents and grid need one entry per dimension")
    d = cfg["projector"]["d"]
    if any(k > d for k in cfg["projector"]["ranks"]):
        raise ConfigError("projector: every rank must be at most d")
    cfg["suites"] = [s for s in SUITES if s in cfg["suites"]]
    return cfg


def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return validate_config(raw)


def apply_overrides(cfg: dict, seed: int | None = None, grid: int | None = None,
                    quad_nodes: int | None = None, suites: list[str] | None = None) -> dict:
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["seed"] = int(seed)
    if grid is not None:
        cfg["manifold"]["grid"] = [int(grid)] * cfg["manifold"]["dimension"]
    if quad_nodes is not None:
        cfg["quadrature"]["nodes"] = int(quad_nodes)
    if suites:
        unknown = sorted(set(suites) - set(SUITES))
        if unknown:
            raise ConfigError(f"unknown suite(s): {', '.join(unknown)}")
        cfg["suites"] = [s for s in SUITES if s in suites]
    return validate_config(cfg)


@dataclass
class ImageItem:
    projector: ProjectionField
    radius: float
    partition: PartitionOfUnity | None = None
    bundle: Any = None
    report: CheckReport = field(default_factory=CheckReport)


class Scenario:
    """Lazily built model, partition and projector fields for one configuration."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        man = cfg["manifold"]
        try:
            self.model: ManifoldModel = build_model(man["kind"], man["dimension"], man["extents"],
                                                    man["grid"])
        except ValueError as exc:
            raise ConfigError(f"manifold: {exc}") from None
        self.tol = cfg["tolerances"]
        self._partition: PartitionOfUnity | None = None
        self._images: list[ImageItem] | None = None

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg["seed"], stream])

    @property
    def epsilon(self) -> float:
        part = self.cfg["partition"]
        if "epsilon" in part:
            return float(part["epsilon"])
        members = part.get("members", DEFAULT_PARTITION_MEMBERS)
        return min(self.model.extents) / members

    @property
    def partition(self) -> PartitionOfUnity:
        if self._partition is None:
            eps = self.epsilon
            needs_charts = {"stabilize", "equivalence"} & set(self.cfg["suites"])
            if needs_charts and 2 * eps >= self.model.injectivity_radius:
                raise ConfigError(f"partition: bundle charts of radius 2*eps = {2 * eps:.6g} "
                                  f"must stay below r_inj = {self.model.injectivity_radius:.6g}")
            try:
                self._partition = build_partition(self.model, ball_cover(self.model, eps), eps)
            except ValueError as exc:
                raise ConfigError(f"partition: {exc}") from None
        return self._partition

    def images(self) -> list[ImageItem]:
        if self._images is None:
            self._images = _build_images(self)
        return self._images


def _fd_tolerance(model: ManifoldModel, deriv: np.ndarray, safety: float = 4.0) -> float:
    """``safety * h^2/6 * sup |f'''|`` with ``f'''`` from second differences of the exact ``f'``."""
    flat = deriv.reshape(model.shape + (-1, 1))
    d1 = derham(model, OperatorField(flat)).components
    d2 = derham(model, OperatorField(d1.reshape(model.shape + (-1, 1)))).components
    h = max(model.spacing)
    return safety * h ** 2 / 6 * float(np.max(np.abs(d2))) + 1e-12


def _interior(model: ManifoldModel) -> tuple[slice, ...]:
    if model.kind is Kind.TORUS:
        return tuple(slice(None) for _ in model.shape)
    return tuple(slice(1, -1) for _ in model.shape)


# ---------------------------------------------------------------- suites


def manifold_suite(sc: Scenario, rng: np.random.Generator) -> CheckReport:
    model = sc.model
    rep = CheckReport()
    inner = _interior(model)
    w = 2 * np.pi / np.asarray(model.extents)
    h = np.asarray(model.spacing)

    f, g = plane_wave(model, np.ones(model.dimension)), plane_wave(model, 2 * np.ones(model.dimension))
    err = np.abs(derham(model, f).components - f.deriv)[inner]
    # |w - sin(w h)/h| <= w^3 h^2 / 6 for central differences of exp(i w x)
    per_axis = w ** 3 * h ** 2 / 6
    ratio = float(np.max(err[..., 0, 0] / per_axis))
    rep.add(check_le("fd_consistency", "central differences are O(h^2) accurate", ratio, 1.0,
                     1e-9, h=float(max(h))))

    lin = derham(model, f * 2.0 + g * 3.0).components - (2.0 * derham(model, f).components
                                                         + 3.0 * derham(model, g).components)
    rep.add(check_le("derivative_linear", "d(af + bg) = a df + b dg", float(np.max(np.abs(lin))),
                     0.0, sc.tol["algebraic"] * 10))

    leib = derham(model, f * g).components - (derham(model, f).components * g.values[..., None, :, :]
                                              + f.values[..., None, :, :] * derham(model, g).components)
    bound = ((3 * w) ** 3 + w ** 3 + (2 * w) ** 3) * h ** 2 / 6
    ratio = float(np.max(np.abs(leib)[inner][..., 0, 0] / bound))
    rep.add(check_le("leibniz", "d(fg) = f dg + g df up to O(h^2)", ratio, 1.0, 1e-9))

    pts = [tuple(int(i) for i in rng.integers(0, n, size=60)) for n in model.shape]
    pts = list(zip(*pts))
    tri = sym = 0.0
    for a, b, c in zip(pts[0::3], pts[1::3], pts[2::3]):
        dab, dbc, dac = (geodesic_distance(model, a, b), geodesic_distance(model, b, c),
                         geodesic_distance(model, a, c))
        tri = max(tri, dac - dab - dbc)
        sym = max(sym, abs(dab - geodesic_distance(model, b, a)))
    rep.add(check_le("distance_triangle", "d(x,z) <= d(x,y) + d(y,z)", tri, 0.0,
                     sc.tol["algebraic"]))
    rep.add(check_le("distance_symmetric", "d(x,y) = d(y,x)", sym, 0.0, sc.tol["algebraic"]))

    r = 0.9 * min(model.injectivity_radius, min(model.extents) / 4)
    chart = normal_chart(model, tuple(n // 2 for n in model.shape), r)
    rep.add(check_close("chart_metric", "sup ||g_phi|| (flat metric)", chart.metric_sup, 1.0,
                        sc.tol["algebraic"], radius=r))
    rep.add(check_close("chart_metric_inverse", "sup ||g_phi^-1|| (flat metric)",
                        chart.metric_inverse_sup, 1.0, sc.tol["algebraic"], radius=r))
    return rep


def partition_suite(sc: Scenario, rng: np.random.Generator) -> CheckReport:
    model, P = sc.model, sc.partition
    rep = CheckReport()
    rep.extend(verify_partition(model, P, sc.tol["algebraic"]))
    rep.add(check_le("partition.lattice_multiplicity", "K <= lattice prediction", P.K,
                     lattice_multiplicity(model, P.epsilon), 0, members=P.size, epsilon=P.epsilon))
    rep.add(check_ge("partition.lower_bound", "max_j chi_j(x) >= 1/K", P.lower_bound, 1.0 / P.K,
                     sc.tol["algebraic"]))

    err, tol = 0.0, 0.0
    for i in range(P.size):
        s = P.sqrt_field(i)
        fd = derham(model, s.without_derivative()).components
        err = max(err, float(np.max(np.abs(fd - s.deriv))))
        tol = max(tol, _fd_tolerance(model, s.deriv))
    rep.add(check_le("partition.fd_consistency", "FD of sqrt(chi_i) matches the exact derivative",
                     err, 0.0, tol))

    eps2 = 2 * P.epsilon
    limit = model.injectivity_radius if model.is_periodic else math.inf
    if 2 * eps2 <= limit:
        P2 = build_partition(model, ball_cover(model, eps2), eps2)
        ratio = P.C_chi / P2.C_chi
        rep.add(check_close("partition.C_chi_scaling", "C_chi scales like 1/eps", ratio, 2.0, 0.3,
                            C_chi=P.C_chi, C_chi_doubled=P2.C_chi))
    return rep


def _matrix_field(model, d, rng, degree):
    return fourier_field(model, d, d, rng, degree=int(rng.integers(1, degree + 1)),
                         scale=float(np.exp(rng.uniform(-0.5, 0.5))))


def opspace_suite(sc: Scenario, rng: np.random.Generator) -> CheckReport:
    model, cfg = sc.model, sc.cfg["opspace"]
    d, degree = cfg["d"], cfg["degree"]
    items = []
    for _ in range(cfg["fields"]):
        a = _matrix_field(model, d, rng, degree)
        b = _matrix_field(model, d, rng, degree)
        item = CheckReport()
        item.extend(sandwich_check(model, a, sc.tol["algebraic"]))
        item.extend(adjoint_derivative_check(model, a))
        item.extend(product_norm_check(model, a, b, sc.tol["algebraic"]))
        items.append(item)
    rep = merge_worst(items, label="fields")

    a = _matrix_field(model, d, rng, degree)
    fd_gap = abs(field_norm_1(model, a, fd=True) - field_norm_1(model, a))
    rep.add(check_le("norm_fd_consistency", "||a||_1 via FD derivative agrees to O(h^2)", fd_gap,
                     0.0, _fd_tolerance(model, a.deriv)))

    if model.kind is Kind.TORUS:
        k = np.zeros(model.dimension)
        k[0] = 1
        f = plane_wave(model, k)
        w = 2 * np.pi / model.extents[0]
        nf = field_norm_1(model, f)
        rep.add(check_close("analytic_pair.f", "||exp(i theta)||_1 = sqrt(1 + w^2)", nf,
                            math.sqrt(1 + w ** 2), 1e-6))
        rep.add(check_close("analytic_pair.fg", "||exp(2 i theta)||_1 = sqrt(1 + 4 w^2)",
                            field_norm_1(model, f @ f), math.sqrt(1 + 4 * w ** 2), 1e-6,
                            f_norm_product=nf * nf))

    seed = int(rng.integers(2 ** 31))
    levels = []
    for n in range(1, cfg["amplification"] + 1):
        lv = CheckReport()
        lv.extend(cb_check(model, "involution", n, cfg["samples"], seed + n))
        lv.extend(cb_check(model, "multiplication", n, cfg["samples"], seed + n))
        levels.append(lv)
    rep.extend(merge_worst(levels, label="levels"))
    return rep


def stdmodule_suite(sc: Scenario, rng: np.random.Generator) -> CheckReport:
    model, cfg = sc.model, sc.cfg["stdmodule"]
    d = cfg["d"]
    keep = np.abs(cutoff(model).values[..., 0, 0]) > 1e-3
    items = []
    for _ in range(cfg["fields"]):
        alpha = _matrix_field(model, d, rng, 3)
        item = CheckReport()
        back = recover_field(model, lambda s, a=alpha: apply_morphism(a, s), d, rng=rng,
                             tol=sc.tol["identity"], report=item)
        err = max(float(np.max(np.abs(back.values - alpha.values)[keep])),
                  float(np.max(np.abs(back.deriv - alpha.deriv)[keep])))
        item.add(check_le("morphism.roundtrip", "Phi^-1(Phi(alpha)) = alpha", err, 0.0,
                          sc.tol["identity"], coverage=float(np.mean(keep))))
        items.append(item)
    rep = merge_worst(items, label="fields")

    items = []
    for _ in range(cfg["pairs"]):
        alpha = _matrix_field(model, d, rng, 3)
        s = fourier_field(model, d, 1, rng, degree=3)
        t = fourier_field(model, d, 1, rng, degree=3)
        item = CheckReport()
        lhs = section_norm_1(model, apply_morphism(alpha, s))
        item.add(check_le("morphism.norm_bound", "||Phi(alpha)(s)||_1 <= ||alpha||_1 ||s||_1", lhs,
                          alpha_norm_1(model, alpha) * section_norm_1(model, s), 1e-12))
        x = hermitian_form(apply_morphism(alpha, s), t).values
        y = hermitian_form(s, apply_morphism(alpha.adjoint(), t)).values
        scale = max(1.0, float(np.max(np.abs(x))))
        item.add(check_le("morphism.adjointable", "<alpha s, t> = <s, alpha* t>",
                          float(np.max(np.abs(x - y))), 0.0, sc.tol["algebraic"] * scale))
        f = fourier_field(model, 1, 1, rng, degree=2)
        u = apply_morphism(alpha, s * f).values
        v = (apply_morphism(alpha, s) * f).values
        scale = max(1.0, float(np.max(np.abs(v))))
        item.add(check_le("morphism.module_map", "Phi(alpha)(s f) = Phi(alpha)(s) f",
                          float(np.max(np.abs(u - v))), 0.0, sc.tol["algebraic"] * scale))
        items.append(item)
    rep.extend(merge_worst(items, label="pairs"))

    def squash(s: OperatorField) -> OperatorField:
        return OperatorField(s.values * np.abs(s.values) ** 2)

    try:
        recover_field(model, squash, d, rng=rng)
        rejected = False
    except NotAModuleMap:
        rejected = True
    rep.add(check_flag("morphism.rejects_nonlinear", "maps failing beta(s f) = beta(s) f are rejected",
                       rejected))
    return rep


def stabilize_suite(sc: Scenario, rng: np.random.Generator) -> CheckReport:
    model, P, cfg = sc.model, sc.partition, sc.cfg["bundle"]
    items = []
    for _ in range(cfg["count"]):
        bundle = make_bundle(model, P, cfg["generator"], sc.cfg["fiber"]["d"], rng,
                             strength=cfg["strength"], tol=sc.tol["identity"])
        item = CheckReport()
        item.extend(validate_bundle(bundle, sc.tol["identity"]))
        item.extend(stabilization_check(bundle, P, rng, tol=sc.tol["identity"]))
        items.append(item)
    rep = merge_worst(items, label="bundles")
    for c in rep:
        c.details.setdefault("m", P.size)
        c.details.setdefault("K", P.K)
    return rep


def _projector(sc: Scenario, rank: int, rng: np.random.Generator) -> ProjectionField:
    cfg, model = sc.cfg["projector"], sc.model
    if cfg["generator"] == "constant":
        v = random_unitary(cfg["d"], rng)[:, :rank]
        F = constant_field(model, v @ v.conj().T)
    else:
        F = rotating_projector(model, cfg["d"], rank, rng, cfg["max_frequency"])
    return projection_field(model, F, sc.tol["identity"])


def _dispro_centers(model: ManifoldModel):
    if model.size <= DISPRO_MAX_CHARTS:
        return None
    flat = np.linspace(0, model.size - 1, DISPRO_MAX_CHARTS).astype(int)
    return [model.point(np.unravel_index(int(i), model.shape)) for i in flat]


def _build_images(sc: Scenario) -> list[ImageItem]:
    model, cfg = sc.model, sc.cfg["projector"]
    rng = sc.rng(_IMAGE_STREAM)
    out = []
    for n in range(cfg["count"]):
        rank = cfg["ranks"][n % len(cfg["ranks"])]
        P = _projector(sc, rank, rng)
        r = select_radius(model, P) * cfg["radius_scale"]
        cap = 0.9 * model.injectivity_radius
        r = min(r, cap) if math.isfinite(cap) else r
        item = ImageItem(P, r)
        item.report.extend(dispro_check(model, P, r, _dispro_centers(model)))
        eps = 0.45 * r
        reason = ""
        if not item.report.passed:
            reason = "chart radius violates the projection-distance bound"
        elif eps < max(model.spacing):
            reason = f"grid too coarse for chart radius {r:.4g}"
        if not reason:
            try:
                item.partition = build_partition(model, ball_cover(model, eps), eps)
                item.bundle = image_bundle(model, P, r, item.partition, cfg["method"],
                                           sc.cfg["quadrature"]["nodes"], sc.tol["linalg"],
                                           report=item.report)
            except (BundleError, ValueError) as exc:
                reason = str(exc)
        item.report.add(check_flag("construction", "image bundle frames W_x exist on every chart",
                                   not reason, reason=reason or None, rank=rank, radius=r,
                                   D_P=P.D_P))
        out.append(item)
    return out


def _quadrature_checks(sc: Scenario, rng: np.random.Generator) -> CheckReport:
    q = sc.cfg["quadrature"]
    nodes = tuple(n for n in QUAD_NODES if n < q["nodes"]) + (q["nodes"],)
    table = quadrature_convergence(rng, q["matrices"], q["max_dim"], q["max_cond"], nodes)
    errs = np.array([row[3:] for row in table.rows], dtype=float)
    rep = CheckReport()
    rep.add(check_lt("quadrature.accuracy", "rel. error of L^{-1/2} quadrature vs eigendecomposition",
                     float(np.max(errs[:, -1])), 1e-6, 0.0, nodes=q["nodes"],
                     scheme="Gauss-Legendre, split at 1", matrices=q["matrices"]))
    # error must not grow as the node count doubles, down to the roundoff floor
    floor = 1e-12
    grow = 0.0
    for a, b in zip(nodes[:-1], nodes[1:]):
        if b == 2 * a:
            i, j = nodes.index(a), nodes.index(b)
            excess = errs[:, j] - np.maximum(errs[:, i], floor)
            grow = max(grow, float(np.max(excess)))
    rep.add(check_le("quadrature.monotone", "error decreases as nodes double", grow, 0.0, 0.0,
                     floor=floor))
    scalar = float(inv_sqrt_quad(np.array([[1.0]]), q["nodes"])[0, 0].real)
    rep.add(check_close("quadrature.scalar_identity", "(1/pi) int lambda^{-1/2} (lambda+1)^{-1} = 1",
                        scalar, 1.0, 1e-8))
    rep.tables["quadrature_convergence"] = table
    return rep


def imagebundle_suite(sc: Scenario, rng: np.random.Generator) -> CheckReport:
    rep = _quadrature_checks(sc, rng)
    items = sc.images()
    merged = merge_worst([it.report for it in items], label="projectors")
    rep.extend(merged)
    return rep


def equivalence_suite(sc: Scenario, rng: np.random.Generator) -> CheckReport:
    model, P = sc.model, sc.partition
    rep = CheckReport()
    surj = []
    for it in sc.images():
        item = CheckReport()
        ok = it.bundle is not None
        item.add(check_flag("surjectivity.available", "image bundle was constructed", ok))
        if ok:
            item.extend(surjectivity_roundtrip(model, it.projector, it.partition, it.bundle, rng,
                                               sc.tol["linalg"]))
        surj.append(item)
    rep.extend(merge_worst(surj, label="projectors"))

    d = sc.cfg["fiber"]["d"]
    cfg = sc.cfg["equivalence"]
    items = []
    for _ in range(cfg["morphisms"]):
        b1, b2, b3 = (make_bundle(model, P, "gauge", d, rng) for _ in range(3))
        mor = gauge_morphism(b1, b2, _matrix_field(model, d, rng, 2))
        second = gauge_morphism(b2, b3, _matrix_field(model, d, rng, 2))
        item = CheckReport()
        item.extend(faithfulness_roundtrip(model, mor, P, second, rng, cfg["pairs"],
                                           sc.tol["linalg"]))
        probes = localized_probes(b1, P)
        G = module_morphism(mor, P)
        doubled = BundleMorphism(mor.source, mor.target,
                                 {k: f * 2.0 for k, f in mor.fields.items()})
        item.extend(injectivity_check(G, module_morphism(doubled, P), probes, True,
                                      sc.tol["linalg"]))
        item.extend(injectivity_check(G, module_morphism(mor, P), probes, False,
                                      sc.tol["linalg"]))
        items.append(item)
    rep.extend(merge_worst(items, label="morphisms"))
    return rep


SUITE_FUNCTIONS: dict[str, Callable[[Scenario, np.random.Generator], CheckReport]] = {
    "manifold": manifold_suite,
    "partition": partition_suite,
    "opspace": opspace_suite,
    "stdmodule": stdmodule_suite,
    "stabilize": stabilize_suite,
    "imagebundle": imagebundle_suite,
    "equivalence": equivalence_suite,
}


def run_scenario(cfg: dict) -> CheckReport:
    """Run the selected suites in canonical order and assemble one report."""
    sc = Scenario(cfg)
    report = CheckReport(scenario=cfg, version=__version__)
    for index, name in enumerate(SUITES):
        if name not in cfg["suites"]:
            continue
        part = CheckReport()
        with part.timed():
            try:
                part.extend(SUITE_FUNCTIONS[name](sc, sc.rng(index)))
            except ConfigError:
                raise
            except (BundleError, NotAModuleMap, ValueError) as exc:
                part.add(check_flag("completed", "suite ran to completion", False,
                                    error=f"{type(exc).__name__}: {exc}"))
        for c in part:
            if not c.name.startswith(name + "."):
                c.name = f"{name}.{c.name}"
        report.checks.extend(part.checks)
        for key, table in part.tables.items():
            report.tables.setdefault(key, table)
    return report


STANDARD_TABLES: dict[str, list[str]] = {
    "quadrature_convergence": ["matrix", "dim", "cond"] + [f"err_{n}" for n in QUAD_NODES + (200,)],
    "dispro_profile": ["distance", "norm_diff"],
}


def empty_table(name: str) -> Table:
    return Table(list(STANDARD_TABLES[name]), [])
