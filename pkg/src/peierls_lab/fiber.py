"""Plane-wave discretization of the periodic fiber Hamiltonian and band solving.

The fiber operator at crystal momentum k acts on cell-periodic functions as
(1/2)(-i d/dy + k)^2 + V(y).  In the plane-wave basis e^{i g.y} indexed by
dual-lattice vectors g inside a coefficient box |n_j| <= cutoff, the matrix is

    H(k)[g, g'] = (1/2)|k + g|^2 delta_{gg'} + Vhat(g - g'),

which makes dual-lattice equivariance an exact index shift and keeps the free
case exact.  Fourier coefficients must decay; rough potentials that are merely
integrable on the cell are outside the supported class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import KGrid, Lattice

__all__ = [
    "FourierPotential",
    "PlaneWaveBasis",
    "FiberMatrix",
    "BandStructure",
    "fiber_matrix",
    "solve_bands",
    "check_gap",
    "tau_equivariance_check",
    "mathieu_potential",
    "potential_2d",
]

DEGENERACY_TOL = 1e-9


class FiberError(ValueError):
    pass


@dataclass(frozen=True)
class FourierPotential:
    """Real periodic potential given by its Fourier coefficients.

    coefficients maps integer dual-basis tuples n to complex amplitudes
    Vhat(g) with g = sum_j n_j e*_j.  Hermitian symmetry
    Vhat(-g) = conj(Vhat(g)) is enforced at construction.
    """

    lattice: Lattice
    coefficients: dict = field(default_factory=dict)

    def __post_init__(self):
        for n, v in self.coefficients.items():
            nm = tuple(-int(c) for c in n)
            if nm not in self.coefficients:
                raise FiberError(f"missing Hermitian partner for coefficient {n}")
            if abs(np.conj(self.coefficients[nm]) - v) > 1e-12:
                raise FiberError(f"coefficient {n} breaks Hermitian symmetry")

    @property
    def max_order(self) -> int:
        if not self.coefficients:
            return 0
        return max(max(abs(int(c)) for c in n) for n in self.coefficients)

    def vhat(self, n: tuple) -> complex:
        return self.coefficients.get(tuple(int(c) for c in n), 0.0 + 0.0j)

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        """Sample V on real-space points y with last axis = d."""
        y = np.asarray(y, dtype=float)
        if self.lattice.dim == 1 and (y.ndim == 0 or y.shape[-1] != 1):
            y = y[..., None]
        out = np.zeros(y.shape[:-1], dtype=complex)
        for n, v in self.coefficients.items():
            g = self.lattice.dual_vector(n)
            out = out + v * np.exp(1j * (y @ g))
        return out.real


def mathieu_potential(v: float = 1.0, lattice: Lattice | None = None) -> FourierPotential:
    """1D cosine potential V(y) = 2 v cos(2 pi y) on the unit lattice."""
    lat = lattice if lattice is not None else Lattice.cubic(1)
    return FourierPotential(lat, {(1,): v + 0.0j, (-1,): v + 0.0j})


def potential_2d(v: float = 1.0, w: float = 0.0, lattice: Lattice | None = None) -> FourierPotential:
    """2D cosine potential, optionally non-separable.

    V(y) = 2v [cos(g1.y) + cos(g2.y)] + 2w cos((g1+g2).y).  A nonzero w breaks
    separability, which is what makes the mixed geometric tensors nonzero.
    """
    lat = lattice if lattice is not None else Lattice.cubic(2)
    coeffs = {
        (1, 0): v + 0.0j, (-1, 0): v + 0.0j,
        (0, 1): v + 0.0j, (0, -1): v + 0.0j,
    }
    if w != 0.0:
        coeffs[(1, 1)] = w + 0.0j
        coeffs[(-1, -1)] = w + 0.0j
    return FourierPotential(lat, coeffs)


@dataclass(frozen=True)
class PlaneWaveBasis:
    """Integer coefficient box |n_j| <= cutoff, C-ordered ascending."""

    lattice: Lattice
    cutoff: int
    offsets: np.ndarray  # (D, d) integer coefficients

    @classmethod
    def build(cls, lattice: Lattice, cutoff: int) -> "PlaneWaveBasis":
        if cutoff < 1:
            raise FiberError("cutoff must be >= 1")
        rng = np.arange(-cutoff, cutoff + 1)
        mesh = np.meshgrid(*([rng] * lattice.dim), indexing="ij")
        offsets = np.stack([m.ravel() for m in mesh], axis=-1)
        return cls(lattice=lattice, cutoff=cutoff, offsets=offsets)

    @property
    def size(self) -> int:
        return self.offsets.shape[0]

    def gvectors(self) -> np.ndarray:
        return self.offsets @ self.lattice.dual

    def index_of(self, n: np.ndarray) -> np.ndarray:
        """Flat index of integer coefficient vectors n (must lie in the box)."""
        n = np.asarray(n, dtype=int)
        w = 2 * self.cutoff + 1
        idx = np.zeros(n.shape[:-1], dtype=int)
        for ax in range(self.lattice.dim):
            idx = idx * w + (n[..., ax] + self.cutoff)
        return idx

    def shift_matrix(self, n_shift) -> np.ndarray:
        """Matrix of multiplication by e^{+i g.y} for g with integer coefficients
        n_shift: basis vector g_m is sent to g_m + g.

        Targets outside the box are dropped (zero fill); callers must keep
        shifts within their accuracy margin.
        """
        n_shift = np.asarray(n_shift, dtype=int)
        D = self.size
        S = np.zeros((D, D))
        tgt = self.offsets + n_shift
        ok = np.all(np.abs(tgt) <= self.cutoff, axis=1)
        S[self.index_of(tgt[ok]), np.nonzero(ok)[0]] = 1.0
        return S


@dataclass(frozen=True)
class FiberMatrix:
    k: np.ndarray
    basis: PlaneWaveBasis
    matrix: np.ndarray

    @property
    def size(self) -> int:
        return self.basis.size


def _potential_matrix(potential: FourierPotential, basis: PlaneWaveBasis) -> np.ndarray:
    D = basis.size
    V = np.zeros((D, D), dtype=complex)
    diff = basis.offsets[:, None, :] - basis.offsets[None, :, :]
    for n, v in potential.coefficients.items():
        mask = np.all(diff == np.asarray(n, dtype=int), axis=-1)
        V[mask] = v
    return V


def fiber_matrix(k, potential: FourierPotential, cutoff: int,
                 basis: PlaneWaveBasis | None = None) -> FiberMatrix:
    """Assemble the Hermitian plane-wave fiber matrix at momentum k."""
    lat = potential.lattice
    if basis is None:
        basis = PlaneWaveBasis.build(lat, cutoff)
    if potential.max_order > basis.cutoff:
        raise FiberError(
            f"cutoff {basis.cutoff} cannot contain potential support {potential.max_order}")
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if not np.all(np.isfinite(k)):
        raise FiberError("k must be finite")
    g = basis.gvectors()
    kin = 0.5 * np.sum((k[None, :] + g) ** 2, axis=-1)
    H = _potential_matrix(potential, basis) + np.diag(kin)
    return FiberMatrix(k=k, basis=basis, matrix=H)


@dataclass(frozen=True)
class BandStructure:
    """Eigenvalues/vectors of the fiber family over a k-grid.

    energies : (n_bands, N) ascending per k-point.
    vectors : (n_bands, N, D) plane-wave coefficients, orthonormal per k.
    guard_energies : (N,) first eigenvalue above the stored window (+inf if
        the window exhausts the matrix), used by gap checks.
    """

    kgrid: KGrid
    basis: PlaneWaveBasis
    potential: FourierPotential
    energies: np.ndarray
    vectors: np.ndarray
    guard_energies: np.ndarray
    relevant_index: int = 0

    @property
    def n_bands(self) -> int:
        return self.energies.shape[0]

    def frame(self, band: int) -> np.ndarray:
        """Eigenvector field of one band, shape (grid shape..., D)."""
        return self.kgrid.reshape(self.vectors[band])

    def band_grid(self, band: int) -> np.ndarray:
        return self.kgrid.reshape(self.energies[band])

    def neighbor_gap(self, band: int) -> float:
        """Minimal distance from band to its spectral neighbors over the grid."""
        gaps = []
        if band > 0:
            gaps.append(np.min(self.energies[band] - self.energies[band - 1]))
        if band + 1 < self.n_bands:
            gaps.append(np.min(self.energies[band + 1] - self.energies[band]))
        else:
            gaps.append(np.min(self.guard_energies - self.energies[band]))
        return float(min(gaps))


def solve_bands(potential: FourierPotential, kgrid: KGrid, cutoff: int,
                n_bands: int) -> BandStructure:
    """Diagonalize the fiber family over the grid, eigenvalues ascending."""
    basis = PlaneWaveBasis.build(potential.lattice, cutoff)
    if n_bands > basis.size:
        raise FiberError(f"n_bands {n_bands} exceeds matrix size {basis.size}")
    V = _potential_matrix(potential, basis)
    g = basis.gvectors()
    N = kgrid.n_points
    ham = np.broadcast_to(V, (N, basis.size, basis.size)).copy()
    kin = 0.5 * np.sum((kgrid.points[:, None, :] + g[None, :, :]) ** 2, axis=-1)
    ham[:, np.arange(basis.size), np.arange(basis.size)] += kin
    evals, evecs = np.linalg.eigh(ham)
    energies = np.ascontiguousarray(evals[:, :n_bands].T)
    vectors = np.ascontiguousarray(np.transpose(evecs[:, :, :n_bands], (2, 0, 1)))
    if n_bands < basis.size:
        guard = evals[:, n_bands].copy()
    else:
        guard = np.full(N, np.inf)
    return BandStructure(kgrid=kgrid, basis=basis, potential=potential,
                         energies=energies, vectors=vectors, guard_energies=guard)


def check_gap(bands: BandStructure, index_set) -> float:
    """Infimum over the grid of the distance between the selected band family
    and the complementary spectrum.  Returns 0.0 when bands touch."""
    idx = sorted(int(i) for i in index_set)
    if idx != list(range(idx[0], idx[-1] + 1)):
        raise FiberError("index set must be contiguous")
    if idx[0] < 0 or idx[-1] >= bands.n_bands:
        raise FiberError("index set outside computed bands")
    sel_lo, sel_hi = idx[0], idx[-1]
    dists = []
    if sel_lo > 0:
        dists.append(bands.energies[sel_lo] - bands.energies[sel_lo - 1])
    if sel_hi + 1 < bands.n_bands:
        dists.append(bands.energies[sel_hi + 1] - bands.energies[sel_hi])
    else:
        dists.append(bands.guard_energies - bands.energies[sel_hi])
    return float(max(0.0, min(np.min(d) for d in dists)))


def tau_equivariance_check(potential: FourierPotential, k, n_shift, cutoff: int) -> float:
    """Deviation of H(k - g) from the index-shift conjugation of H(k).

    n_shift are the integer coefficients of the dual vector g.  The comparison
    is restricted to the sub-box that both index sets cover; a shift exceeding
    the cutoff margin is rejected.
    """
    n_shift = np.atleast_1d(np.asarray(n_shift, dtype=int))
    margin = int(np.max(np.abs(n_shift)))
    if margin >= cutoff + 1:
        raise FiberError(f"shift {tuple(n_shift)} exceeds cutoff margin")
    lat = potential.lattice
    basis = PlaneWaveBasis.build(lat, cutoff)
    k = np.atleast_1d(np.asarray(k, dtype=float))
    g = lat.dual_vector(n_shift)
    H_k = fiber_matrix(k, potential, cutoff, basis).matrix
    H_shift = fiber_matrix(k - g, potential, cutoff, basis).matrix
    S = basis.shift_matrix(n_shift)
    conj = S @ H_k @ S.T
    keep = np.all(np.abs(basis.offsets - n_shift) <= cutoff, axis=1)
    sub = np.ix_(keep, keep)
    return float(np.linalg.norm(H_shift[sub] - conj[sub]))


def fiber_on_cell_grid(bands: BandStructure, band: int, m_per_axis: int) -> np.ndarray:
    """Sample the band eigenvectors on a uniform cell grid.

    Returns (N_k, m^d) complex samples, discretely normalized so that
    sum_j |phi_j|^2 = 1 on each fiber.  Exact provided m_per_axis > 2*cutoff.
    """
    basis = bands.basis
    lat = basis.lattice
    d = lat.dim
    if m_per_axis <= 2 * basis.cutoff:
        raise FiberError("cell grid too coarse for the plane-wave content")
    frac = np.arange(m_per_axis) / m_per_axis
    mesh = np.meshgrid(*([frac] * d), indexing="ij")
    y = sum(mesh[ax][..., None] * lat.basis[ax] for ax in range(d))
    phases = np.exp(1j * np.tensordot(y, basis.gvectors().T, axes=1))  # (grid..., D)
    coeffs = bands.vectors[band]  # (N_k, D)
    samples = np.tensordot(coeffs, phases, axes=([1], [d]))  # (N_k, grid...)
    samples = samples.reshape(coeffs.shape[0], -1)
    samples /= np.sqrt(m_per_axis ** d)
    return samples
