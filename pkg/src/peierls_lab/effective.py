"""First-order Peierls effective Hamiltonian and the effective-variable map.

For a single isolated band the effective symbol reads

    h = h0 + eps h1,
    h0(k, r) = E(k) + phi(r),
    h1(k, r) = -F_l(k, r) A_l(k) - lam B_lj(r) M_lj(k),
    F_l = -d_l phi(r) + lam B_lj(r) d_j E(k),

with A the Berry connection and M the Rammal-Wilkinson tensor.  The
effective-variable map and the semiclassical Hamiltonian

    k_eff = k + eps lam B(r) A(k),   r_eff = r + eps A(k),
    h_sc(k, r) = E(k) + phi(r) - eps lam B(r) . M(k)

reproduce h (composed with the inverse map) up to second order, which the
test suite measures as a convergence rate.  All band quantities are
interpolated trigonometrically in the zone coefficients, so dual-lattice
periodicity is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import EMFieldConfig
from .geometry import GeometricTensors
from .interp import PeriodicFourier, PeriodicSpline, fourier_coeffs_centered
from .lattice import KGrid, Lattice
from .weyl import GridSymbol, PhaseSpaceGrid

__all__ = [
    "BandData",
    "EffectiveHamiltonian",
    "SemiclassicalHamiltonian",
    "peierls_h0",
    "peierls_h1",
    "semiclassical_h",
    "t_eff",
    "t_eff_inverse",
    "effective_observable",
]


class EffectiveError(ValueError):
    pass


def _upsampled(samples: np.ndarray, factor: int) -> np.ndarray:
    """Fine-grid values (zero-anchored at -1/2) from cell-centered samples."""
    c = fourier_coeffs_centered(samples)
    fine_shape = tuple(factor * n for n in samples.shape)
    out = np.zeros(fine_shape, dtype=complex)
    idx = []
    for n_old, n_new in zip(samples.shape, fine_shape):
        half = (n_old - 1) // 2
        idx.append(np.r_[0:half + 1, n_new - half:n_new])
    src = []
    for n_old in samples.shape:
        half = (n_old - 1) // 2
        src.append(np.r_[0:half + 1, n_old - half:n_old])
    out[np.ix_(*idx)] = c[np.ix_(*src)]
    # evaluate sum c_P e^{2 pi i P alpha} on alpha_m = -1/2 + m/n_fine
    for ax, n_new in enumerate(fine_shape):
        P = np.fft.fftfreq(n_new, d=1.0 / n_new).astype(int)
        sh = [1] * len(fine_shape)
        sh[ax] = n_new
        out = out * np.exp(2j * np.pi * P * (-0.5)).reshape(sh)
    return np.fft.ifftn(out).real * np.prod(fine_shape)


@dataclass
class BandData:
    """Periodic band quantities of one isolated band with fast evaluators.

    Samples live on the band's (cell-centered) k-grid; evaluation happens in
    zone coefficients alpha = k . dual^{-1}, so any Bravais lattice works.
    energy/connection/rw/curvature evaluators take Cartesian k of shape
    (..., d) (bare floats in 1D) and broadcast.
    """

    lattice: Lattice
    shape: tuple
    energy_samples: np.ndarray
    connection_samples: np.ndarray      # (grid..., d)
    rw_samples: np.ndarray              # (grid..., d, d)
    curvature_samples: np.ndarray       # (grid..., d, d)
    upsample: int = 8

    def __post_init__(self):
        d = self.lattice.dim
        self._inv_dual = np.linalg.inv(self.lattice.dual)
        self._to_cart = self.lattice.basis.T / (2 * np.pi)  # grad_k = T @ grad_alpha
        fine = lambda s: _upsampled(s, self.upsample)
        n_f = tuple(self.upsample * n for n in self.shape)
        origin = -0.5
        spacing = [1.0 / n for n in n_f]
        mk = lambda v: PeriodicSpline(v, origin, spacing)

        def grad_fields(values):
            F = np.fft.fftn(values)
            out = []
            for ax, n in enumerate(values.shape):
                P = np.fft.fftfreq(n, d=1.0 / n)
                sh = [1] * values.ndim
                sh[ax] = n
                out.append(np.fft.ifftn(F * (2j * np.pi * P).reshape(sh)).real)
            return out

        # gradients are taken as exact derivatives of the value splines, so
        # value/gradient pairs are Hamiltonian-consistent (flows conserve the
        # interpolated energy to integrator accuracy)
        E_f = fine(self.energy_samples)
        self._E = mk(E_f)
        self._dE_splines = [mk(v) for v in grad_fields(E_f)]  # for the Hessian
        self._A = [mk(fine(self.connection_samples[..., l])) for l in range(d)]
        self._M = [[mk(fine(self.rw_samples[..., l, j])) for j in range(d)]
                   for l in range(d)]
        self._Om = [[mk(fine(self.curvature_samples[..., l, j])) for j in range(d)]
                    for l in range(d)]
        self._exactE = PeriodicFourier(self.energy_samples)

    # -- constructors ---------------------------------------------------

    @classmethod
    def from_geometry(cls, geom: GeometricTensors, upsample: int = 8) -> "BandData":
        bands = geom.frame.bands
        grid = bands.kgrid
        if not grid.centered:
            raise EffectiveError("band data requires a cell-centered k-grid")
        E = grid.reshape(bands.energies[geom.frame.band])
        return cls(lattice=grid.lattice, shape=grid.shape,
                   energy_samples=E, connection_samples=geom.connection,
                   rw_samples=geom.rw, curvature_samples=geom.curvature,
                   upsample=upsample)

    @classmethod
    def synthetic(cls, lattice: Lattice, shape, energy, connection=None,
                  rw=None, curvature=None, upsample: int = 8) -> "BandData":
        """Build from callables of k evaluated on a cell-centered grid."""
        from .lattice import make_kgrid
        grid = make_kgrid(lattice, shape)
        d = lattice.dim
        k = grid.points
        E = grid.reshape(np.asarray(energy(k), dtype=float))
        A = grid.reshape(np.asarray(connection(k), dtype=float)) if connection \
            else np.zeros(grid.shape + (d,))
        M = grid.reshape(np.asarray(rw(k), dtype=float)) if rw \
            else np.zeros(grid.shape + (d, d))
        Om = grid.reshape(np.asarray(curvature(k), dtype=float)) if curvature \
            else np.zeros(grid.shape + (d, d))
        return cls(lattice=lattice, shape=grid.shape, energy_samples=E,
                   connection_samples=A, rw_samples=M, curvature_samples=Om,
                   upsample=upsample)

    # -- evaluation (Cartesian k, arbitrary shape (..., d)) --------------

    def _alpha(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if self.lattice.dim == 1 and (k.ndim == 0 or k.shape[-1] != 1):
            k = k[..., None]
        return k @ self._inv_dual

    def energy(self, k) -> np.ndarray:
        return self._E(self._alpha(k))

    def energy_exact(self, k) -> np.ndarray:
        return self._exactE(self._alpha(k))

    def prep(self, k):
        """Shared spline preparation for a batch of k points (all band fields
        live on the same fine grid)."""
        return self._E.prep(self._alpha(k))

    def _grad_alpha(self, spline, a, prep=None) -> np.ndarray:
        d = self.lattice.dim
        units = np.eye(d, dtype=int)
        if prep is not None:
            return np.stack([spline.eval_prepped(prep, deriv=tuple(units[j]))
                             for j in range(d)], axis=-1)
        return np.stack([spline(a, deriv=tuple(units[j])) for j in range(d)], axis=-1)

    def denergy(self, k, prep=None) -> np.ndarray:
        """Cartesian gradient of the band energy, shape (..., d)."""
        a = None if prep is not None else self._alpha(k)
        return self._grad_alpha(self._E, a, prep) @ self._to_cart.T

    def hess_energy(self, k, prep=None) -> np.ndarray:
        a = None if prep is not None else self._alpha(k)
        d = self.lattice.dim
        Ha = np.stack([self._grad_alpha(self._dE_splines[i], a, prep)
                       for i in range(d)], axis=-2)
        return np.einsum("mi,...ij,nj->...mn", self._to_cart, Ha, self._to_cart)

    def connection(self, k, prep=None) -> np.ndarray:
        if prep is not None:
            return np.stack([f.eval_prepped(prep) for f in self._A], axis=-1)
        a = self._alpha(k)
        return np.stack([f(a) for f in self._A], axis=-1)

    def dconnection(self, k, prep=None) -> np.ndarray:
        """Jacobian d A_l / d k_m, shape (..., l, m)."""
        a = None if prep is not None else self._alpha(k)
        d = self.lattice.dim
        J = np.stack([self._grad_alpha(self._A[l], a, prep) for l in range(d)], axis=-2)
        return np.einsum("...lj,mj->...lm", J, self._to_cart)

    def rw(self, k, prep=None) -> np.ndarray:
        d = self.lattice.dim
        if prep is not None:
            return np.stack([np.stack([self._M[l][j].eval_prepped(prep)
                                       for j in range(d)], axis=-1)
                             for l in range(d)], axis=-2)
        a = self._alpha(k)
        return np.stack([np.stack([self._M[l][j](a) for j in range(d)], axis=-1)
                         for l in range(d)], axis=-2)

    def drw(self, k, prep=None) -> np.ndarray:
        """d M_lj / d k_m, shape (..., l, j, m)."""
        a = None if prep is not None else self._alpha(k)
        d = self.lattice.dim
        G = np.stack([np.stack([self._grad_alpha(self._M[l][j], a, prep)
                                for j in range(d)], axis=-2)
                      for l in range(d)], axis=-3)
        return np.einsum("...lji,mi->...ljm", G, self._to_cart)

    def curvature(self, k, prep=None) -> np.ndarray:
        d = self.lattice.dim
        if prep is not None:
            return np.stack([np.stack([self._Om[l][j].eval_prepped(prep)
                                       for j in range(d)], axis=-1)
                             for l in range(d)], axis=-2)
        a = self._alpha(k)
        return np.stack([np.stack([self._Om[l][j](a) for j in range(d)], axis=-1)
                         for l in range(d)], axis=-2)


def _as_points(v, d):
    v = np.asarray(v, dtype=float)
    if d == 1 and (v.ndim == 0 or v.shape[-1] != 1):
        v = v[..., None]
    return v


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """h = h0 + eps h1 for a single isolated band in an external field."""

    band: BandData
    field: EMFieldConfig

    @property
    def dim(self) -> int:
        return self.band.lattice.dim

    def h0(self, k, r) -> np.ndarray:
        k = _as_points(k, self.dim)
        r = _as_points(r, self.dim)
        return self.band.energy(k) + self.field.phi(r)

    def lorentz(self, k, r, prep=None) -> np.ndarray:
        """F_l = -d_l phi + lam B_lj d_j E, shape (..., d)."""
        k = _as_points(k, self.dim)
        r = _as_points(r, self.dim)
        F = -self.field.grad_phi(r)
        if self.field.lam != 0.0:
            B = self.field.B(r)
            F = F + self.field.lam * np.einsum("...lj,...j->...l", B,
                                               self.band.denergy(k, prep))
        return F

    def h1(self, k, r) -> np.ndarray:
        k = _as_points(k, self.dim)
        r = _as_points(r, self.dim)
        A = self.band.connection(k)
        out = -np.einsum("...l,...l->...", self.lorentz(k, r), A)
        if self.field.lam != 0.0:
            B = self.field.B(r)
            M = self.band.rw(k)
            out = out - self.field.lam * np.einsum("...lj,...lj->...", B, M)
        return out

    def value(self, k, r) -> np.ndarray:
        return self.h0(k, r) + self.field.eps * self.h1(k, r)

    def grad_k(self, k, r, prep=None) -> np.ndarray:
        k = _as_points(k, self.dim)
        r = _as_points(r, self.dim)
        eps, lam = self.field.eps, self.field.lam
        g = self.band.denergy(k, prep)
        if eps != 0.0:
            A = self.band.connection(k, prep)
            dA = self.band.dconnection(k, prep)    # (..., l, m)
            F = self.lorentz(k, r, prep)
            # d_m h1 = -(d_m F_l) A_l - F_l d_m A_l - lam B_lj d_m M_lj
            term = -np.einsum("...l,...lm->...m", F, dA)
            if lam != 0.0:
                B = self.field.B(r)
                H = self.band.hess_energy(k, prep)  # (..., j, m)
                dF = lam * np.einsum("...lj,...jm->...lm", B, H)
                term = term - np.einsum("...lm,...l->...m", dF, A)
                dM = self.band.drw(k, prep)        # (..., l, j, m)
                term = term - lam * np.einsum("...lj,...ljm->...m", B, dM)
            g = g + eps * term
        return g

    def grad_r(self, k, r, prep=None) -> np.ndarray:
        k = _as_points(k, self.dim)
        r = _as_points(r, self.dim)
        eps, lam = self.field.eps, self.field.lam
        g = self.field.grad_phi(r)
        if eps != 0.0:
            A = self.band.connection(k, prep)
            hess = self.field.hess_phi(r)          # (..., l, m)
            # d_m h1 = (d_m d_l phi) A_l - lam (d_m B_lj)(d_j E A_l + M_lj)
            term = np.einsum("...lm,...l->...m", hess, A)
            if lam != 0.0 and self.field.dbfield is not None:
                dB = self.field.dB(r)              # (..., l, j, m)
                dE = self.band.denergy(k, prep)
                M = self.band.rw(k, prep)
                term = term - lam * np.einsum("...ljm,...j,...l->...m", dB, dE, A)
                term = term - lam * np.einsum("...ljm,...lj->...m", dB, M)
            g = g + eps * term
        return g

    def grad_pair(self, k, r):
        """(grad_k, grad_r) with one shared spline preparation per batch."""
        prep = self.band.prep(_as_points(k, self.dim))
        return self.grad_k(k, r, prep), self.grad_r(k, r, prep)


@dataclass(frozen=True)
class SemiclassicalHamiltonian:
    """h_sc(k, r) = E(k) + phi(r) - eps lam B(r) . M(k) on effective variables."""

    band: BandData
    field: EMFieldConfig

    @property
    def dim(self) -> int:
        return self.band.lattice.dim

    def value(self, k, r) -> np.ndarray:
        k = _as_points(k, self.dim)
        r = _as_points(r, self.dim)
        out = self.band.energy(k) + self.field.phi(r)
        eps, lam = self.field.eps, self.field.lam
        if eps != 0.0 and lam != 0.0:
            out = out - eps * lam * np.einsum("...lj,...lj->...",
                                              self.field.B(r), self.band.rw(k))
        return out

    def grad_k(self, k, r, prep=None) -> np.ndarray:
        k = _as_points(k, self.dim)
        r = _as_points(r, self.dim)
        g = self.band.denergy(k, prep)
        eps, lam = self.field.eps, self.field.lam
        if eps != 0.0 and lam != 0.0:
            dM = self.band.drw(k, prep)
            g = g - eps * lam * np.einsum("...lj,...ljm->...m", self.field.B(r), dM)
        return g

    def grad_r(self, k, r, prep=None) -> np.ndarray:
        k = _as_points(k, self.dim)
        r = _as_points(r, self.dim)
        g = self.field.grad_phi(r)
        eps, lam = self.field.eps, self.field.lam
        if eps != 0.0 and lam != 0.0 and self.field.dbfield is not None:
            dB = self.field.dB(r)
            M = self.band.rw(k, prep)
            g = g - eps * lam * np.einsum("...ljm,...lj->...m", dB, M)
        return g

    def grad_pair(self, k, r):
        prep = self.band.prep(_as_points(k, self.dim))
        return self.grad_k(k, r, prep), self.grad_r(k, r, prep)


# -- functional interfaces -------------------------------------------------


def peierls_h0(band: BandData, field: EMFieldConfig):
    """Leading symbol (k, r) -> E(k) + phi(r).  Refuses degenerate input
    upstream (band data only exists for non-degenerate bands)."""
    h = EffectiveHamiltonian(band=band, field=field)
    return h.h0


def peierls_h1(band: BandData, field: EMFieldConfig):
    """Subleading symbol (k, r) -> -F . A - lam B : M."""
    h = EffectiveHamiltonian(band=band, field=field)
    return h.h1


def semiclassical_h(band: BandData, field: EMFieldConfig):
    """Semiclassical symbol of the corrected flow, on effective variables."""
    h = SemiclassicalHamiltonian(band=band, field=field)
    return h.value


def t_eff(k, r, band: BandData, field: EMFieldConfig):
    """First-order effective-variable map (k, r) -> (k_eff, r_eff)."""
    d = band.lattice.dim
    k = _as_points(k, d)
    r = _as_points(r, d)
    eps, lam = field.eps, field.lam
    A = band.connection(k)
    k_eff = k.copy()
    if lam != 0.0:
        k_eff = k + eps * lam * np.einsum("...lj,...j->...l", field.B(r), A)
    r_eff = r + eps * A
    return k_eff, r_eff


def t_eff_inverse(k_eff, r_eff, band: BandData, field: EMFieldConfig,
                  tol: float = 1e-12, max_iter: int = 50):
    """Invert the effective-variable map by fixed-point iteration."""
    d = band.lattice.dim
    k_eff = _as_points(k_eff, d)
    r_eff = _as_points(r_eff, d)
    k, r = k_eff.copy(), r_eff.copy()
    for _ in range(max_iter):
        k2, r2 = t_eff(k, r, band, field)
        dk = k_eff - k2
        dr = r_eff - r2
        k = k + dk
        r = r + dr
        if max(np.abs(dk).max(), np.abs(dr).max()) < tol:
            return k, r
    raise EffectiveError("effective-map inversion did not converge; eps too large")


def effective_observable(func, grid: PhaseSpaceGrid, band: BandData,
                         field: EMFieldConfig, check_periodic: bool = True) -> GridSymbol:
    """Samples of f o T_eff on a phase-space grid.

    func(k, r) takes (..., d) arrays (momentum first); it must be periodic in
    k under dual-lattice shifts, which is verified on a sample unless
    check_periodic is disabled.
    """
    d = grid.dim
    mesh = grid.phase_mesh()
    X = np.stack([np.broadcast_to(mesh[l], grid.ns + grid.ns) for l in range(d)], axis=-1)
    K = np.stack([np.broadcast_to(mesh[d + l], grid.ns + grid.ns) for l in range(d)], axis=-1)
    if check_periodic:
        rng = np.random.default_rng(0)
        kp = rng.normal(size=(16, d))
        rp = rng.normal(size=(16, d))
        g = band.lattice.dual[0]
        dev = np.abs(np.asarray(func(kp + g, rp)) - np.asarray(func(kp, rp))).max()
        if dev > 1e-8:
            raise EffectiveError("observable is not periodic in k under dual shifts")
    k_eff, r_eff = t_eff(K, X, band, field)
    return GridSymbol(grid=grid, samples=np.asarray(func(k_eff, r_eff), dtype=complex))
