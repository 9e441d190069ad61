"""Discrete flat model manifolds and fields sampled on their grids.

Two geometries are supported: the flat torus ``R^N / (L_1 Z x ... x L_N Z)``
and a Euclidean box ``[0, L_1) x ... x [0, L_N)`` whose fields are required to
vanish on a two-cell margin (a stand-in for "vanishing at infinity").

All fields share one array layout.  An operator field with fibre maps
``C^{d_in} -> C^{d_out}`` stores ``values`` of shape ``grid + (d_out, d_in)``
and, optionally, an analytic derivative ``deriv`` of shape
``grid + (N, d_out, d_in)`` holding the partial derivatives along each chart
axis.  Scalar fields are ``1 x 1`` operator fields and vector fields (sections)
have ``d_in == 1``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "Kind",
    "ManifoldModel",
    "GridPoint",
    "Chart",
    "OperatorField",
    "CotangentField",
    "build_model",
    "geodesic_distance",
    "distance_to",
    "displacement",
    "derham",
    "cotangent_norm",
    "cotangent_norms",
    "normal_chart",
    "scalar_field",
    "vector_field",
    "constant_field",
]

MIN_GRID = 4
MARGIN_CELLS = 2


class Kind(str, enum.Enum):
    TORUS = "torus"
    BOX = "box"

    @classmethod
    def parse(cls, value: "Kind | str") -> "Kind":
        if isinstance(value, Kind):
            return value
        aliases = {"flattorus": cls.TORUS, "torus": cls.TORUS,
                   "euclideanbox": cls.BOX, "box": cls.BOX}
        try:
            return aliases[str(value).lower().replace("_", "").replace("-", "")]
        except KeyError:
            raise ValueError(f"unknown manifold kind {value!r}") from None


class GridPoint(NamedTuple):
    index: tuple[int, ...]
    coords: tuple[float, ...]


@dataclass(frozen=True)
class ManifoldModel:
    kind: Kind
    extents: tuple[float, ...]
    grid_sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.extents) != len(self.grid_sizes) or not self.extents:
            raise ValueError("extents and grid_sizes must be non-empty and of equal length")
        if any(not (e > 0) or not math.isfinite(e) for e in self.extents):
            raise ValueError(f"extents must be positive, got {self.extents}")
        if any(n < MIN_GRID for n in self.grid_sizes):
            raise ValueError(f"every grid size must be >= {MIN_GRID}, got {self.grid_sizes}")

    @property
    def dimension(self) -> int:
        return len(self.extents)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.grid_sizes)

    @property
    def size(self) -> int:
        return int(np.prod(self.grid_sizes))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / n for e, n in zip(self.extents, self.grid_sizes))

    @property
    def h(self) -> float:
        """Largest grid spacing."""
        return max(self.spacing)

    @property
    def injectivity_radius(self) -> float:
        if self.kind is Kind.TORUS:
            return min(self.extents) / 2
        return math.inf

    @property
    def is_periodic(self) -> bool:
        return self.kind is Kind.TORUS

    @property
    def metric_bound(self) -> float:
        """``sup ||g_phi||`` over all normal charts (identity metric on flat models)."""
        return 1.0

    @property
    def inverse_metric_bound(self) -> float:
        return 1.0

    def axes(self) -> list[np.ndarray]:
        return [np.arange(n) * h for n, h in zip(self.grid_sizes, self.spacing)]

    def coords(self) -> np.ndarray:
        """Coordinates of every grid point, shape ``grid + (N,)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def point(self, index: Sequence[int]) -> GridPoint:
        index = tuple(int(i) % n if self.is_periodic else int(i)
                      for i, n in zip(index, self.grid_sizes))
        for i, n in zip(index, self.grid_sizes):
            if not 0 <= i < n:
                raise IndexError(f"grid index {index} out of bounds for {self.grid_sizes}")
        return GridPoint(index, tuple(i * h for i, h in zip(index, self.spacing)))

    def nearest_point(self, coords: Sequence[float]) -> GridPoint:
        idx = [round(c / h) for c, h in zip(coords, self.spacing)]
        if not self.is_periodic:
            idx = [min(max(i, 0), n - 1) for i, n in zip(idx, self.grid_sizes)]
        return self.point(idx)

    def indices(self):
        return np.ndindex(*self.grid_sizes)

    def support_mask(self) -> np.ndarray:
        """Grid points where fields may be nonzero (all points on the torus)."""
        mask = np.ones(self.shape, dtype=bool)
        if self.kind is Kind.BOX:
            for axis, n in enumerate(self.grid_sizes):
                sl = [slice(None)] * self.dimension
                sl[axis] = np.r_[0:MARGIN_CELLS, n - MARGIN_CELLS:n]
                mask[tuple(sl)] = False
        return mask


def build_model(kind, dimension: int, extents: Sequence[float],
                grid_sizes: Sequence[int]) -> ManifoldModel:
    if dimension < 1 or len(extents) != dimension or len(grid_sizes) != dimension:
        raise ValueError("dimension must match the lengths of extents and grid_sizes")
    return ManifoldModel(Kind.parse(kind), tuple(float(e) for e in extents),
                         tuple(int(n) for n in grid_sizes))


def _as_coords(model: ManifoldModel, p) -> np.ndarray:
    if isinstance(p, GridPoint):
        return np.asarray(p.coords, dtype=float)
    return np.asarray(p, dtype=float)


def displacement(model: ManifoldModel, center, points: np.ndarray | None = None) -> np.ndarray:
    """Chart coordinates ``z - x`` of ``points`` relative to ``center``.

    On the torus each component is lifted to ``[-L_k/2, L_k/2)``.  With
    ``points=None`` the whole grid is used and the result has shape
    ``grid + (N,)``.
    """
    x = _as_coords(model, center)
    z = model.coords() if points is None else np.asarray(points, dtype=float)
    diff = z - x
    if model.is_periodic:
        L = np.asarray(model.extents)
        diff = (diff + L / 2) % L - L / 2
    return diff


def geodesic_distance(model: ManifoldModel, x, y) -> float:
    diff = displacement(model, x, _as_coords(model, y)[None, :])[0]
    return float(np.sqrt(np.sum(diff ** 2)))


def distance_to(model: ManifoldModel, center) -> np.ndarray:
    """Geodesic distance from ``center`` to every grid point."""
    return np.sqrt(np.sum(displacement(model, center) ** 2, axis=-1))


@dataclass(frozen=True)
class CotangentField:
    """Components ``(df)(x)`` along each chart axis, shape ``grid + (N, d_out, d_in)``."""

    components: np.ndarray

    @property
    def dimension(self) -> int:
        return self.components.shape[-3]

    def stacked(self) -> np.ndarray:
        """The map ``H -> H (x) T*_x M`` as an ``(N d_out) x d_in`` matrix per point."""
        c = self.components
        return c.reshape(c.shape[:-3] + (c.shape[-3] * c.shape[-2], c.shape[-1]))


def _matmul_deriv(a_vals, a_der, b_vals, b_der):
    # Leibniz: d(ab) = da b + a db, per chart axis
    return a_der @ b_vals[..., None, :, :] + a_vals[..., None, :, :] @ b_der


@dataclass(frozen=True, eq=False)
class OperatorField:
    """A grid-indexed family of ``d_out x d_in`` complex matrices.

    ``deriv`` is the analytic de Rham derivative when the field was built
    from a closed-form expression; ``None`` means it is unknown and
    :func:`derham` must be used instead.
    """

    values: np.ndarray
    deriv: np.ndarray | None = None

    def __post_init__(self):
        if self.values.ndim < 3:
            raise ValueError("values must have shape grid + (d_out, d_in)")
        if self.deriv is not None:
            expected = self.values.shape[:-2] + (self.deriv.shape[-3],) + self.values.shape[-2:]
            if self.deriv.shape != expected:
                raise ValueError(f"deriv shape {self.deriv.shape} does not match values "
                                 f"{self.values.shape}")

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.values.shape[:-2]

    @property
    def d_out(self) -> int:
        return self.values.shape[-2]

    @property
    def d_in(self) -> int:
        return self.values.shape[-1]

    @property
    def has_deriv(self) -> bool:
        return self.deriv is not None

    def cotangent(self) -> CotangentField:
        if self.deriv is None:
            raise ValueError("field carries no analytic derivative")
        return CotangentField(self.deriv)

    def at(self, index) -> np.ndarray:
        return self.values[tuple(index)]

    def adjoint(self) -> "OperatorField":
        vals = np.conj(np.swapaxes(self.values, -1, -2))
        der = None if self.deriv is None else np.conj(np.swapaxes(self.deriv, -1, -2))
        return OperatorField(vals, der)

    def __matmul__(self, other: "OperatorField") -> "OperatorField":
        vals = self.values @ other.values
        der = None
        if self.deriv is not None and other.deriv is not None:
            der = _matmul_deriv(self.values, self.deriv, other.values, other.deriv)
        return OperatorField(vals, der)

    def __add__(self, other: "OperatorField") -> "OperatorField":
        der = None
        if self.deriv is not None and other.deriv is not None:
            der = self.deriv + other.deriv
        return OperatorField(self.values + other.values, der)

    def __sub__(self, other: "OperatorField") -> "OperatorField":
        return self + other * -1.0

    def __neg__(self) -> "OperatorField":
        return self * -1.0

    def __mul__(self, other) -> "OperatorField":
        """Multiply by a complex number or pointwise by a scalar field."""
        if isinstance(other, OperatorField):
            if other.values.shape[-2:] != (1, 1):
                raise ValueError("pointwise product needs a scalar (1x1) field")
            f = other.values[..., 0, 0][..., None, None]
            vals = self.values * f
            der = None
            if self.deriv is not None and other.deriv is not None:
                df = other.deriv[..., 0, 0][..., None, None]
                der = self.deriv * f[..., None, :, :] + self.values[..., None, :, :] * df
            return OperatorField(vals, der)
        c = complex(other)
        return OperatorField(self.values * c, None if self.deriv is None else self.deriv * c)

    __rmul__ = __mul__

    def with_fd_derivative(self, model: ManifoldModel) -> "OperatorField":
        return OperatorField(self.values, derham(model, self).components)

    def without_derivative(self) -> "OperatorField":
        return OperatorField(self.values)

    def masked(self, mask: np.ndarray) -> "OperatorField":
        m = mask[..., None, None]
        der = None if self.deriv is None else self.deriv * m[..., None, :, :]
        return OperatorField(self.values * m, der)


def scalar_field(values, deriv=None) -> OperatorField:
    values = np.asarray(values, dtype=complex)[..., None, None]
    if deriv is not None:
        deriv = np.asarray(deriv, dtype=complex)[..., None, None]
    return OperatorField(values, deriv)


def vector_field(values, deriv=None) -> OperatorField:
    values = np.asarray(values, dtype=complex)[..., None]
    if deriv is not None:
        deriv = np.asarray(deriv, dtype=complex)[..., None]
    return OperatorField(values, deriv)


def constant_field(model: ManifoldModel, matrix) -> OperatorField:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    vals = np.broadcast_to(matrix, model.shape + matrix.shape).copy()
    return OperatorField(vals, np.zeros(model.shape + (model.dimension,) + matrix.shape, complex))


def derham(model: ManifoldModel, f: OperatorField) -> CotangentField:
    """Second-order central differences along every axis, entrywise.

    Periodic wrap on the torus; on the box the end points use second-order
    one-sided stencils, which act on the zero margin only.
    """
    vals = f.values
    if vals.shape[:-2] != model.shape:
        raise ValueError(f"field grid {vals.shape[:-2]} does not match model {model.shape}")
    parts = []
    for axis, h in enumerate(model.spacing):
        if model.is_periodic:
            d = (np.roll(vals, -1, axis=axis) - np.roll(vals, 1, axis=axis)) / (2 * h)
        else:
            d = np.gradient(vals, h, axis=axis, edge_order=2)
        parts.append(d)
    return CotangentField(np.stack(parts, axis=model.dimension))


def cotangent_norms(ct: CotangentField) -> np.ndarray:
    """Operator norm of ``(df)(x) : H -> H (x) T*_x M`` at every grid point."""
    stacked = ct.stacked()
    if stacked.shape[-1] == 1:
        return np.sqrt(np.sum(np.abs(stacked[..., 0]) ** 2, axis=-1))
    return np.linalg.norm(stacked, ord=2, axis=(-2, -1))


def cotangent_norm(model: ManifoldModel, ct: CotangentField, x) -> float:
    index = x.index if isinstance(x, GridPoint) else model.point(x).index
    stacked = ct.stacked()[index]
    return float(np.linalg.norm(stacked, ord=2))


@dataclass(frozen=True, eq=False)
class Chart:
    """Normal chart ``U_{x,r}`` around a grid point.

    For both flat models the exponential map is a translation, so the
    coordinate map is the (periodic-aware) displacement and the metric is the
    identity matrix everywhere on the chart.
    """

    model: ManifoldModel
    center: GridPoint
    radius: float
    mask: np.ndarray

    def coordinates(self) -> np.ndarray:
        return displacement(self.model, self.center)

    def metric(self, index=None) -> np.ndarray:
        return np.eye(self.model.dimension)

    @property
    def metric_sup(self) -> float:
        return 1.0

    @property
    def metric_inverse_sup(self) -> float:
        return 1.0

    def points(self) -> np.ndarray:
        return np.argwhere(self.mask)


def normal_chart(model: ManifoldModel, x, r: float) -> Chart:
    if not 0 < r < model.injectivity_radius:
        raise ValueError(f"chart radius {r} must lie in (0, r_inj={model.injectivity_radius})")
    center = x if isinstance(x, GridPoint) else model.point(x)
    mask = distance_to(model, center) < r
    return Chart(model, center, float(r), mask)
