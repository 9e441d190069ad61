"""Sparse block operator fields on ``H^m``.

Stabilised projections and the morphisms built from them are ``m x m``
block matrices whose ``(i, j)`` block vanishes unless the supports of the
``i``-th and ``j``-th partition members meet.  Only those blocks are
stored, each as a full-grid :class:`OperatorField`.  Pointwise linear
algebra is done on the small sub-matrix of indices active at a point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold import OperatorField

__all__ = ["BlockField", "block_section", "split_section"]


@dataclass(eq=False)
class BlockField:
    """``blocks[(i, j)]`` is a ``row_dim x col_dim`` field; absent blocks are zero.

    ``active[i]`` marks the grid points where row or column ``i`` may be
    nonzero; every stored block must vanish (with its derivative) where
    either index is inactive.
    """

    m: int
    row_dim: int
    col_dim: int
    blocks: dict[tuple[int, int], OperatorField]
    active: np.ndarray

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.active.shape[1:]

    @property
    def dimension(self) -> int:
        return next(iter(self.blocks.values())).deriv.shape[-3]

    def active_ids(self, idx) -> np.ndarray:
        return np.nonzero(self.active[(slice(None),) + tuple(idx)])[0]

    def local(self, idx, ids=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(ids, value, deriv)`` restricted to the indices active at ``idx``.

        ``value`` is ``(n r) x (n c)`` and ``deriv`` is ``N x (n r) x (n c)``
        for ``n = len(ids)``.
        """
        idx = tuple(idx)
        if ids is None:
            ids = self.active_ids(idx)
        r, c, n, N = self.row_dim, self.col_dim, len(ids), self.dimension
        val = np.zeros((n * r, n * c), dtype=complex)
        der = np.zeros((N, n * r, n * c), dtype=complex)
        for a, i in enumerate(ids):
            for b, j in enumerate(ids):
                blk = self.blocks.get((int(i), int(j)))
                if blk is None:
                    continue
                val[a * r:(a + 1) * r, b * c:(b + 1) * c] = blk.values[idx]
                if blk.deriv is not None:
                    der[:, a * r:(a + 1) * r, b * c:(b + 1) * c] = blk.deriv[idx]
        return ids, val, der

    def adjoint(self) -> "BlockField":
        blocks = {(j, i): f.adjoint() for (i, j), f in self.blocks.items()}
        return BlockField(self.m, self.col_dim, self.row_dim, blocks, self.active)

    def __matmul__(self, other: "BlockField") -> "BlockField":
        if self.col_dim != other.row_dim or self.m != other.m:
            raise ValueError("block shapes do not match")
        by_row: dict[int, list[int]] = {}
        for (j, k) in other.blocks:
            by_row.setdefault(j, []).append(k)
        out: dict[tuple[int, int], OperatorField] = {}
        for (i, j), a in self.blocks.items():
            for k in by_row.get(j, []):
                prod = a @ other.blocks[(j, k)]
                out[(i, k)] = prod if (i, k) not in out else out[(i, k)] + prod
        return BlockField(self.m, self.row_dim, other.col_dim, out, self.active | other.active)

    def __sub__(self, other: "BlockField") -> "BlockField":
        out = dict(self.blocks)
        for key, f in other.blocks.items():
            out[key] = out[key] - f if key in out else f * -1.0
        return BlockField(self.m, self.row_dim, self.col_dim, out, self.active | other.active)

    def apply(self, t: OperatorField) -> OperatorField:
        """Apply to a block section of fibre dimension ``m * col_dim``."""
        parts = split_section(t, self.m)
        grid = self.grid_shape
        N = self.dimension
        vals = [np.zeros(grid + (self.row_dim, 1), complex) for _ in range(self.m)]
        ders = [np.zeros(grid + (N, self.row_dim, 1), complex) for _ in range(self.m)]
        for (i, j), blk in self.blocks.items():
            prod = blk @ parts[j]
            vals[i] += prod.values
            if prod.deriv is not None:
                ders[i] += prod.deriv
        return block_section([OperatorField(v, d) for v, d in zip(vals, ders)])

    def max_residual(self) -> float:
        """Largest entry over all stored blocks (values only)."""
        if not self.blocks:
            return 0.0
        return float(max(np.max(np.abs(f.values)) for f in self.blocks.values()))

    def max_deriv_residual(self) -> float:
        if not self.blocks:
            return 0.0
        return float(max(np.max(np.abs(f.deriv)) for f in self.blocks.values()
                         if f.deriv is not None))

    def dense(self) -> OperatorField:
        """Full ``(m r) x (m c)`` field; only sensible for small ``m``."""
        grid, r, c, N = self.grid_shape, self.row_dim, self.col_dim, self.dimension
        vals = np.zeros(grid + (self.m * r, self.m * c), complex)
        ders = np.zeros(grid + (N, self.m * r, self.m * c), complex)
        for (i, j), f in self.blocks.items():
            vals[..., i * r:(i + 1) * r, j * c:(j + 1) * c] = f.values
            if f.deriv is not None:
                ders[..., i * r:(i + 1) * r, j * c:(j + 1) * c] = f.deriv
        return OperatorField(vals, ders)


def block_section(parts: list[OperatorField]) -> OperatorField:
    """Stack ``m`` sections into one section of ``H^m``."""
    vals = np.concatenate([p.values for p in parts], axis=-2)
    ders = None
    if all(p.deriv is not None for p in parts):
        ders = np.concatenate([p.deriv for p in parts], axis=-2)
    return OperatorField(vals, ders)


def split_section(t: OperatorField, m: int) -> list[OperatorField]:
    if t.d_out % m:
        raise ValueError(f"section of dimension {t.d_out} does not split into {m} blocks")
    d = t.d_out // m
    out = []
    for i in range(m):
        sl = slice(i * d, (i + 1) * d)
        out.append(OperatorField(t.values[..., sl, :],
                                 None if t.deriv is None else t.deriv[..., sl, :]))
    return out
