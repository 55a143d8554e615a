"""Quantum propagation harnesses: discrete Zak transform, band projection,
reference propagation of quantized effective Hamiltonians, and the
Egorov-type and semiclassical-limit error measurements.

Propagators are built by exact eigendecomposition of dense Hermitian
matrices (no splitting error), and all time conventions are macroscopic:
states evolve under exp(-i (t/eps) H).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .effective import BandData, EffectiveHamiltonian
from .fiber import BandStructure, FourierPotential, fiber_on_cell_grid, solve_bands
from .fields import EMFieldConfig
from .flow import _rk4_run
from .geometry import fix_gauge
from .lattice import Lattice, make_kgrid
from .weyl import (GridSymbol, PhaseSpaceGrid, QuantizedOperator, operator_norm,
                   quantize, resample_periodic, sample_symbol)

__all__ = [
    "RealSpaceBox",
    "WaveFunction",
    "ZakField",
    "zak_transform",
    "zak_inverse",
    "zak_equivariance_defect",
    "Propagator",
    "realspace_hamiltonian",
    "band_project",
    "band_packet",
    "propagate_reference",
    "heisenberg_evolve",
    "flowed_symbol",
    "egorov_error",
    "semiclassical_limit_check",
]


class QuantumError(RuntimeError):
    pass


@dataclass(frozen=True)
class RealSpaceBox:
    """Periodic box of n_cells unit cells with m sample points per cell (1D).

    Grid points x[(c, j)] = c - n_cells//2 + j/m, C-ordered over (c, j).
    """

    lattice: Lattice
    n_cells: int
    m: int

    @property
    def n_points(self) -> int:
        return self.n_cells * self.m

    def cell_offsets(self) -> np.ndarray:
        return np.arange(self.n_cells) - self.n_cells // 2

    def cell_coords(self) -> np.ndarray:
        return np.arange(self.m) / self.m

    def points(self) -> np.ndarray:
        return (self.cell_offsets()[:, None] + self.cell_coords()[None, :]).ravel()

    def fiber_grid(self):
        """Zero-anchored k-grid matching the box's Zak fibers."""
        return make_kgrid(self.lattice, self.n_cells, centered=False)

    def fiber_momenta_unwrapped(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_cells) / self.n_cells

    def length(self) -> float:
        return float(self.n_cells)


@dataclass
class WaveFunction:
    box: RealSpaceBox
    samples: np.ndarray  # flat, length n_points

    def norm(self) -> float:
        return float(np.linalg.norm(self.samples))

    def normalized(self) -> "WaveFunction":
        return WaveFunction(self.box, self.samples / self.norm())

    def position_expectation(self) -> float:
        x = self.box.points()
        w = np.abs(self.samples) ** 2
        return float(np.sum(x * w) / np.sum(w))

    def position_variance(self) -> float:
        x = self.box.points()
        w = np.abs(self.samples) ** 2
        w = w / w.sum()
        mu = np.sum(x * w)
        return float(np.sum((x - mu) ** 2 * w))

    def edge_mass(self, fraction: float = 0.1) -> float:
        """Probability mass within the outer fraction of the box."""
        n = self.box.n_points
        lo = int(n * fraction / 2)
        w = np.abs(self.samples) ** 2
        return float((w[:lo].sum() + w[n - lo:].sum()) / w.sum())


@dataclass
class ZakField:
    box: RealSpaceBox
    samples: np.ndarray  # (n_cells, m)

    def norm(self) -> float:
        return float(np.linalg.norm(self.samples))


def zak_transform(psi: WaveFunction) -> ZakField:
    """u(k_q, y_j) = N^{-1/2} sum_c e^{-i k_q (y_j + c)} psi(c + y_j)."""
    box = psi.box
    arr = psi.samples.reshape(box.n_cells, box.m)
    gam = box.cell_offsets()
    kq = box.fiber_momenta_unwrapped()
    # sum over cells with e^{-i k_q gamma_c}
    ph_cell = np.exp(-1j * np.outer(kq, gam))
    u = ph_cell @ arr / np.sqrt(box.n_cells)
    y = box.cell_coords()
    u = u * np.exp(-1j * np.outer(kq, y))
    return ZakField(box=box, samples=u)


def zak_inverse(zf: ZakField) -> WaveFunction:
    box = zf.box
    kq = box.fiber_momenta_unwrapped()
    y = box.cell_coords()
    u = zf.samples * np.exp(+1j * np.outer(kq, y))
    gam = box.cell_offsets()
    ph_cell = np.exp(+1j * np.outer(gam, kq))
    arr = ph_cell @ u / np.sqrt(box.n_cells)
    return WaveFunction(box=box, samples=arr.ravel())


def zak_equivariance_defect(psi: WaveFunction, n_fibers: int = 4) -> float:
    """Deviation of the dual-shift identity u(k - 2 pi, y) = e^{2 pi i y} u(k, y)
    evaluated directly from the transform definition."""
    box = psi.box
    zf = zak_transform(psi)
    arr = psi.samples.reshape(box.n_cells, box.m)
    gam = box.cell_offsets()
    y = box.cell_coords()
    worst = 0.0
    for q in range(0, box.n_cells, max(1, box.n_cells // n_fibers)):
        k = 2 * np.pi * q / box.n_cells - 2 * np.pi
        u_shift = (np.exp(-1j * k * gam) @ arr) / np.sqrt(box.n_cells) * np.exp(-1j * k * y)
        target = np.exp(2j * np.pi * y) * zf.samples[q]
        worst = max(worst, float(np.abs(u_shift - target).max()))
    return worst


def _fiber_vectors_on_cells(bands: BandStructure, box: RealSpaceBox, band: int,
                            gauge: bool = True) -> np.ndarray:
    """Cell-grid samples of the band eigenvectors at the box's unwrapped fiber
    momenta (smooth in the fiber index when gauge=True)."""
    if bands.kgrid.shape != (box.n_cells,):
        raise QuantumError("band structure grid does not match the box fibers")
    if gauge:
        frame = fix_gauge(bands, band)
        coeffs = frame.vectors
        bands = replace(bands, vectors=bands.vectors.copy())
        bands.vectors[band] = coeffs
    samples = fiber_on_cell_grid(bands, band, box.m)  # (n_cells, m), wrapped reps
    k_store = bands.kgrid.points.ravel()
    k_unwrapped = box.fiber_momenta_unwrapped()
    shift = k_unwrapped - k_store  # integer multiples of 2 pi
    y = box.cell_coords()
    # u(k + g) = e^{-i g y} u(k) on samples
    return samples * np.exp(-1j * np.outer(shift, y))


def band_project(zf: ZakField, bands: BandStructure, band: int) -> ZakField:
    """Fiberwise rank-one projection onto the band eigenvectors."""
    v = _fiber_vectors_on_cells(bands, zf.box, band, gauge=False)
    amp = np.einsum("qj,qj->q", np.conj(v), zf.samples)
    return ZakField(box=zf.box, samples=v * amp[:, None])


def band_packet(bands: BandStructure, box: RealSpaceBox, band: int,
                k0: float, x0: float, sigma_k: float,
                smooth_gauge: bool = True) -> WaveFunction:
    """Normalized coherent-state-like packet in one band, centered at
    crystal momentum k0 and position x0 (lattice units).

    smooth_gauge=False skips the parallel-transport pass (needed for bands
    that touch at the zone edge, e.g. the free lowest band)."""
    v = _fiber_vectors_on_cells(bands, box, band, gauge=smooth_gauge)
    kq = box.fiber_momenta_unwrapped()
    dk = np.angle(np.exp(1j * (kq - k0)))
    env = np.exp(-dk ** 2 / (4 * sigma_k ** 2))
    u = env[:, None] * np.exp(-1j * kq * x0)[:, None] * v
    psi = zak_inverse(ZakField(box=box, samples=u))
    return psi.normalized()


# -- dense real-space Hamiltonian and propagation --------------------------


def realspace_hamiltonian(box: RealSpaceBox, potential: FourierPotential,
                          field: EMFieldConfig) -> np.ndarray:
    """Dense H = -(1/2) d^2/dx^2 + V(x) + phi(eps x) on the periodic box
    (1D, zero magnetic field)."""
    if field.lam != 0.0:
        raise QuantumError("real-space propagator implemented for B = 0 (1D)")
    n = box.n_points
    h = 1.0 / box.m
    xi = 2 * np.pi * np.fft.fftfreq(n, d=h)
    kin_spec = 0.5 * xi ** 2
    col = np.fft.ifft(kin_spec).real  # circulant generator
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    H = col[idx]
    x = box.points()
    H = H + np.diag(potential.evaluate(x) + field.phi(field.eps * x[:, None]))
    return H


@dataclass
class Propagator:
    """Spectral propagator psi(t) = U e^{-i (t/eps) w} U^dagger psi(0)."""

    w: np.ndarray
    U: np.ndarray
    eps: float

    @classmethod
    def of(cls, H: np.ndarray, eps: float) -> "Propagator":
        w, U = np.linalg.eigh(H)
        return cls(w=w, U=U, eps=eps)

    def apply(self, psi: np.ndarray, t: float) -> np.ndarray:
        c = self.U.conj().T @ psi
        return self.U @ (np.exp(-1j * (t / self.eps) * self.w) * c)

    def conjugate(self, M: np.ndarray, t: float) -> np.ndarray:
        """Heisenberg evolution e^{+i(t/eps)H} M e^{-i(t/eps)H}."""
        ph = np.exp(1j * (t / self.eps) * self.w)
        inner = self.U.conj().T @ M @ self.U
        return self.U @ (ph[:, None] * inner * np.conj(ph)[None, :]) @ self.U.conj().T


def propagate_reference(h_op: QuantizedOperator, field: EMFieldConfig,
                        psi: np.ndarray, t: float,
                        herm_tol: float = 1e-10) -> np.ndarray:
    """Evolve psi under the quantized effective Hamiltonian for macroscopic
    time t (spectral, unitary)."""
    defect = h_op.hermiticity_defect()
    if defect > herm_tol:
        raise QuantumError(f"quantized Hamiltonian not Hermitian ({defect:.2e})")
    M = 0.5 * (h_op.matrix + h_op.matrix.conj().T)
    return Propagator.of(M, field.eps).apply(psi, t)


def heisenberg_evolve(h_op: QuantizedOperator, f_op: QuantizedOperator,
                      field: EMFieldConfig, t: float) -> np.ndarray:
    M = 0.5 * (h_op.matrix + h_op.matrix.conj().T)
    return Propagator.of(M, field.eps).conjugate(f_op.matrix, t)


# -- Egorov-type error ------------------------------------------------------


def flowed_symbol(func, grid: PhaseSpaceGrid, model, field: EMFieldConfig,
                  t: float, dt: float, flow_shape=None) -> GridSymbol:
    """Samples of f o Phi_t (magnetic flow of the model Hamiltonian) on the
    phase-space grid.

    func(k, r) takes (..., d) arrays.  With flow_shape set, trajectories are
    integrated on a coarser phase-space grid and resampled trigonometrically
    (valid for smooth periodic data).
    """
    d = grid.dim
    if flow_shape is None:
        shape = grid.ns + grid.ns
        mesh = grid.phase_mesh()
        X = np.stack([np.broadcast_to(mesh[l], shape) for l in range(d)], axis=-1)
        K = np.stack([np.broadcast_to(mesh[d + l], shape) for l in range(d)], axis=-1)
    else:
        shape = tuple(flow_shape) + tuple(flow_shape)
        axes = []
        for l in range(d):
            Xf = grid.X_axis(l)
            n_c = flow_shape[l]
            # same box, coarser uniform sampling (periodic): endpoints align
            axes.append(Xf[0] + (Xf[1] - Xf[0]) * grid.ns[l] / n_c * np.arange(n_c))
        for l in range(d):
            xif = grid.xi_axis(l)
            n_c = flow_shape[l]
            axes.append(xif[0] + (xif[1] - xif[0]) * grid.ns[l] / n_c * np.arange(n_c))
        mesh = np.meshgrid(*axes, indexing="ij")
        X = np.stack(mesh[:d], axis=-1)
        K = np.stack(mesh[d:], axis=-1)
    kf = K.reshape(-1, d)
    xf = X.reshape(-1, d)
    k_t, r_t = _rk4_run(kf, xf, model, field, None, field.eps, False, t, dt,
                        record=False)
    vals = np.asarray(func(k_t, r_t), dtype=complex).reshape(shape)
    if flow_shape is not None:
        vals = resample_periodic(vals, grid.ns + grid.ns)
    return GridSymbol(grid=grid, samples=vals)


def egorov_error(f_func, heff: EffectiveHamiltonian, grid: PhaseSpaceGrid,
                 field: EMFieldConfig, t: float, dt: float = 0.02,
                 flow_shape=None, window: float = 0.5) -> float:
    """Interior-windowed operator norm of
    e^{+i(t/eps)Op(h)} Op(f) e^{-i(t/eps)Op(h)} - Op(f o Phi_t).

    The integrator budget is verified by a step-halving probe on a trajectory
    subsample before the norm is computed.
    """
    d = grid.dim
    h_sym = sample_symbol(
        lambda *mesh: heff.value(np.stack(mesh[d:], axis=-1),
                                 np.stack(mesh[:d], axis=-1)), grid)
    h_op = quantize(h_sym, field, assume_bandlimited=True)
    f_sym = sample_symbol(
        lambda *mesh: f_func(np.stack(mesh[d:], axis=-1),
                             np.stack(mesh[:d], axis=-1)), grid)
    f_op = quantize(f_sym, field, assume_bandlimited=True)
    # integrator sanity on a small probe batch
    rng = np.random.default_rng(0)
    kp = rng.uniform(-np.pi, np.pi, (16, d))
    xp = rng.uniform(grid.X_axis(0)[0], grid.X_axis(0)[-1], (16, d))
    k1, r1 = _rk4_run(kp, xp, heff, field, None, field.eps, False, t, dt, record=False)
    k2, r2 = _rk4_run(kp, xp, heff, field, None, field.eps, False, t, dt / 2, record=False)
    probe = max(np.abs(k1 - k2).max(), np.abs(r1 - r2).max())
    if probe > 1e-3 * field.eps ** 2:
        raise QuantumError(
            f"integrator budget violation: halving probe {probe:.2e} vs eps^2 scale")
    evolved = heisenberg_evolve(h_op, f_op, field, t)
    flowed = flowed_symbol(f_func, grid, heff, field, t, dt, flow_shape=flow_shape)
    target = quantize(flowed, field, assume_bandlimited=True)
    diff = evolved - target.matrix
    iw = grid.interior_indices(window)
    return operator_norm(diff[np.ix_(iw, iw)])


# -- semiclassical limit at the level of expectation values ----------------


def _translation_expectation(psi: WaveFunction, cells: int = 1) -> complex:
    """<psi| T_cells |psi> with T the lattice translation (B = 0)."""
    arr = psi.samples
    shifted = np.roll(arr, -cells * psi.box.m)
    return complex(np.vdot(psi.samples, shifted))


def semiclassical_limit_check(potential: FourierPotential, field_template: EMFieldConfig,
                              band_index: int, eps_list, t: float,
                              macro_box: float = 4.0, m_per_cell: int = 14,
                              cutoff: int = 6, sigma_scale: float = 1.0,
                              k0: float = 0.6, dt_flow: float = 5e-3,
                              n_hermite: int = 8) -> dict:
    """Bloch-oscillation expectation test against the corrected flow (1D).

    For each eps an n_cells ~ macro_box/eps periodic box is built, a band
    packet is prepared, propagated with the dense real-space Hamiltonian, and
    <Op(sin k)> is compared with sin(k(t)) along the corrected flow, both for
    the measured packet center (point oracle) and averaged over the packet's
    phase-space Gaussian (quadrature oracle).  Returns errors and log-log
    slopes; the point-oracle slope is the conservative figure.
    """
    from numpy.polynomial.hermite_e import hermegauss
    lat = potential.lattice
    if lat.dim != 1:
        raise QuantumError("expectation test implemented in one dimension")
    nodes, weights = hermegauss(n_hermite)
    weights = weights / np.sqrt(2 * np.pi)
    errs_point = []
    errs_avg = []
    results = []
    for eps in eps_list:
        fld = replace(field_template, eps=float(eps))
        n_cells = int(round(macro_box / eps))
        if n_cells % 2 == 0:
            n_cells += 1
        box = RealSpaceBox(lattice=lat, n_cells=n_cells, m=m_per_cell)
        bands = solve_bands(potential, box.fiber_grid(), cutoff, 3)
        sigma_k = sigma_scale * np.sqrt(eps)
        psi0 = band_packet(bands, box, band_index, k0=k0, x0=0.0, sigma_k=sigma_k)
        if psi0.edge_mass() > 1e-8:
            raise QuantumError("packet touches the box boundary; enlarge the box")
        H = realspace_hamiltonian(box, potential, fld)
        prop = Propagator.of(H, eps)
        psi_t = WaveFunction(box, prop.apply(psi0.samples, t))
        if psi_t.edge_mass() > 1e-6:
            raise QuantumError("evolved packet reaches the box boundary")
        # measured initial phase-space center and spreads
        T1 = _translation_expectation(psi0)
        k_bar = float(np.angle(T1))
        sig_k_meas = float(np.sqrt(max(-2.0 * np.log(abs(T1)), 1e-30)))
        x_bar = psi0.position_expectation()
        sig_x = np.sqrt(psi0.position_variance())
        # <Op(sin k)> = Im <T_1> exactly for B = 0
        obs = float(np.imag(_translation_expectation(psi_t)))
        # corrected-flow oracle from the measured center, batched together
        # with the Gauss-Hermite quadrature nodes of the Wigner Gaussian
        geom_band = _band_data_1d(bands, band_index)
        from .effective import SemiclassicalHamiltonian
        hsc = SemiclassicalHamiltonian(geom_band, fld)
        KK, XX = np.meshgrid(nodes, nodes, indexing="ij")
        k_batch = np.concatenate([[k_bar], (k_bar + sig_k_meas * KK).ravel()])
        x_batch = np.concatenate([[eps * x_bar],
                                  eps * (x_bar + sig_x * XX).ravel()])
        kt, rt = _rk4_run(k_batch[:, None], x_batch[:, None], hsc, fld,
                          geom_band, eps, True, t, dt_flow, record=False)
        vals = np.sin(kt[:, 0])
        val_point = float(vals[0])
        WW = np.outer(weights, weights).ravel()
        acc = float(np.sum(WW * vals[1:]))
        errs_point.append(abs(obs - val_point))
        errs_avg.append(abs(obs - acc))
        results.append({"eps": eps, "n_cells": n_cells, "obs": obs,
                        "oracle_point": val_point, "oracle_avg": acc,
                        "k_bar": k_bar, "x_bar": x_bar})
    eps_arr = np.asarray(list(eps_list), dtype=float)
    ep = np.asarray(errs_point)
    ea = np.asarray(errs_avg)
    slope_point = float(np.polyfit(np.log(eps_arr), np.log(ep), 1)[0])
    slope_avg = float(np.polyfit(np.log(eps_arr), np.log(ea), 1)[0])
    return {"eps": eps_arr, "error_point": ep, "error_avg": ea,
            "slope_point": slope_point, "slope_avg": slope_avg,
            "details": results}


def _band_data_1d(bands: BandStructure, band: int) -> BandData:
    """Band data on a centered grid rebuilt from the same potential (the
    zero-anchored fiber grid is not suitable for geometry stencils)."""
    from .geometry import geometric_tensors
    lat = bands.kgrid.lattice
    n = max(64, bands.kgrid.shape[0])
    grid = make_kgrid(lat, n)
    bb = solve_bands(bands.potential, grid, bands.basis.cutoff, max(2, band + 2))
    geom = geometric_tensors(bb, band)
    return BandData.from_geometry(geom)
