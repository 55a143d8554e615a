"""Bravais lattices, dual lattices and Brillouin-zone k-grids.

The Brillouin zone is realized as the centered coefficient box: k belongs to
the fundamental cell iff its coefficients alpha_j in the dual basis satisfy
-1/2 <= alpha_j < 1/2.  Wrapping is exact integer arithmetic on coefficients,
so every band quantity downstream inherits clean dual-lattice periodicity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Lattice",
    "KGrid",
    "dual_basis",
    "wrap_to_bz",
    "bz_coefficients",
    "make_kgrid",
]

_DEGENERATE_TOL = 1e-12


class LatticeError(ValueError):
    pass


def dual_basis(basis: np.ndarray) -> np.ndarray:
    """Return dual vectors e*_k with e_j . e*_k = 2 pi delta_jk.

    Parameters
    ----------
    basis : (d, d) array, rows are the generating vectors e_j.
    """
    basis = np.asarray(basis, dtype=float)
    if basis.ndim != 2 or basis.shape[0] != basis.shape[1]:
        raise LatticeError(f"basis must be square (d, d), got {basis.shape}")
    gram = basis @ basis.T
    if abs(np.linalg.det(gram)) <= _DEGENERATE_TOL:
        raise LatticeError("degenerate lattice: basis vectors are linearly dependent")
    # rows of D solve basis @ D.T = 2 pi I
    return 2.0 * np.pi * np.linalg.inv(basis).T


@dataclass(frozen=True)
class Lattice:
    """A Bravais lattice in d <= 3 dimensions.

    Attributes
    ----------
    basis : (d, d) array, rows e_j (lattice units).
    dual : (d, d) array, rows e*_j with e_j . e*_k = 2 pi delta_jk.
    """

    basis: np.ndarray
    dual: np.ndarray

    @classmethod
    def from_basis(cls, basis) -> "Lattice":
        basis = np.atleast_2d(np.asarray(basis, dtype=float))
        if basis.shape[0] not in (1, 2, 3):
            raise LatticeError("only d in {1, 2, 3} supported")
        return cls(basis=basis, dual=dual_basis(basis))

    @classmethod
    def cubic(cls, dim: int, a: float = 1.0) -> "Lattice":
        return cls.from_basis(a * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.basis)))

    def dual_vector(self, coeffs) -> np.ndarray:
        """Integer coefficients -> dual lattice vector."""
        return np.asarray(coeffs, dtype=float) @ self.dual


def _as_vectors(k: np.ndarray, dim: int) -> tuple:
    """Normalize k to shape (..., dim); returns (array, original_shape)."""
    k = np.asarray(k, dtype=float)
    if dim == 1 and (k.ndim == 0 or k.shape[-1] != 1):
        k = k[..., None]
    if k.shape[-1] != dim:
        raise LatticeError(f"expected vectors with last axis {dim}, got shape {k.shape}")
    return k, k.shape


def bz_coefficients(k: np.ndarray, lattice: Lattice) -> np.ndarray:
    """Coefficients alpha with k = sum_j alpha_j e*_j (last axis of k is d)."""
    k, shape = _as_vectors(k, lattice.dim)
    flat = k.reshape(-1, lattice.dim)
    alpha = np.linalg.solve(lattice.dual.T, flat.T).T
    return alpha.reshape(shape)


def wrap_to_bz(k: np.ndarray, lattice: Lattice) -> np.ndarray:
    """Wrap k modulo the dual lattice into the centered cell, alpha_j in [-1/2, 1/2).

    Accepts a single vector or an (..., d) array (bare floats in 1D).
    """
    karr, shape = _as_vectors(k, lattice.dim)
    if not np.all(np.isfinite(karr)):
        raise LatticeError("wrap_to_bz requires finite k")
    alpha = bz_coefficients(karr, lattice)
    alpha = alpha - np.floor(alpha + 0.5)
    out = alpha @ lattice.dual
    return out.reshape(np.asarray(k, dtype=float).shape)


@dataclass(frozen=True)
class KGrid:
    """Uniform grid over the Brillouin-zone coefficient box.

    points has shape (N, d) with N = prod(shape); ordering is C-order over the
    per-axis index.  `centered=True` places points at cell centers
    alpha = (m + 1/2)/n - 1/2 (never touching the zone boundary); the
    zero-anchored variant alpha = m/n wrapped is what a finite periodic box
    of n cells produces as its fiber momenta.
    """

    lattice: Lattice
    shape: tuple
    points: np.ndarray
    centered: bool

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.lattice.dim

    def index_grid(self):
        """Per-axis integer index arrays, shape = self.shape each."""
        return np.indices(self.shape)

    def reshape(self, values: np.ndarray) -> np.ndarray:
        """View flat per-point values (N, ...) as (shape..., ...)."""
        return np.asarray(values).reshape(self.shape + np.asarray(values).shape[1:])

    def spacing(self) -> np.ndarray:
        """Coefficient-space spacing 1/n per axis."""
        return 1.0 / np.asarray(self.shape, dtype=float)


def make_kgrid(lattice: Lattice, shape, centered: bool = True) -> KGrid:
    """Build a uniform wrap-closed k-grid.

    shape : int or sequence of d ints, all >= 1.
    """
    if np.isscalar(shape):
        shape = (int(shape),) * lattice.dim
    shape = tuple(int(s) for s in shape)
    if len(shape) != lattice.dim:
        raise LatticeError(f"shape has {len(shape)} entries for a {lattice.dim}-d lattice")
    if any(s < 1 for s in shape):
        raise LatticeError("grid shape entries must be >= 1")
    axes = []
    for n in shape:
        m = np.arange(n)
        if centered:
            alpha = (m + 0.5) / n - 0.5
        else:
            alpha = m / n
            alpha = alpha - np.floor(alpha + 0.5)
        axes.append(alpha)
    mesh = np.meshgrid(*axes, indexing="ij")
    alpha = np.stack([a.ravel() for a in mesh], axis=-1)
    points = alpha @ lattice.dual
    return KGrid(lattice=lattice, shape=shape, points=points, centered=centered)
