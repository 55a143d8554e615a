import numpy as np
import pytest

from peierls_lab.effective import BandData, EffectiveHamiltonian
from peierls_lab.fiber import (FourierPotential, fiber_matrix,
                               mathieu_potential, solve_bands)
from peierls_lab.fields import EMFieldConfig
from peierls_lab.geometry import geometric_tensors
from peierls_lab.lattice import Lattice, make_kgrid
from peierls_lab.quantum import (Propagator, QuantumError, RealSpaceBox,
                                 WaveFunction, band_packet, band_project,
                                 egorov_error, heisenberg_evolve,
                                 propagate_reference, realspace_hamiltonian,
                                 zak_equivariance_defect, zak_inverse,
                                 zak_transform)
from peierls_lab.weyl import PhaseSpaceGrid, position_operator, quantize, sample_symbol

LAT1 = Lattice.cubic(1)
BOX = RealSpaceBox(lattice=LAT1, n_cells=31, m=14)
RNG = np.random.default_rng(0)


def random_state(box=BOX):
    v = RNG.normal(size=box.n_points) + 1j * RNG.normal(size=box.n_points)
    return WaveFunction(box, v).normalized()


def test_zak_unitary_roundtrip_and_parseval():
    psi = random_state()
    zf = zak_transform(psi)
    assert abs(zf.norm() - 1.0) < 1e-12
    back = zak_inverse(zf)
    assert np.abs(back.samples - psi.samples).max() < 1e-12


def test_zak_plane_wave_single_fiber():
    q0 = 7
    k0 = 2 * np.pi * q0 / BOX.n_cells
    pw = WaveFunction(BOX, np.exp(1j * k0 * BOX.points())).normalized()
    mass = np.abs(zak_transform(pw).samples) ** 2
    per_fiber = mass.sum(axis=1)
    assert np.argmax(per_fiber) == q0
    assert np.delete(per_fiber, q0).max() < 1e-25


def test_zak_equivariance():
    assert zak_equivariance_defect(random_state()) < 1e-10


def test_band_project_idempotent_and_eigen():
    pot = mathieu_potential(1.0)
    bands = solve_bands(pot, BOX.fiber_grid(), 6, 3)
    zf = zak_transform(random_state())
    p1 = band_project(zf, bands, 0)
    p2 = band_project(p1, bands, 0)
    assert np.abs(p2.samples - p1.samples).max() < 1e-10
    pk = band_packet(bands, BOX, 0, k0=0.6, x0=0.0, sigma_k=0.25)
    zpk = zak_transform(pk)
    proj = band_project(zpk, bands, 0)
    assert np.abs(proj.samples - zpk.samples).max() < 1e-10
    # complementary projection annihilates the packet
    comp = zpk.samples - proj.samples
    assert np.abs(comp).max() < 1e-10


def test_band_project_commutes_with_free_fiber_hamiltonian():
    pot = mathieu_potential(1.0)
    bands = solve_bands(pot, BOX.fiber_grid(), 6, 3)
    zf = zak_transform(random_state())
    m = BOX.m
    y = BOX.cell_coords()
    # per-fiber Hamiltonian on the cell grid (spectral kinetic + potential)
    xi = 2 * np.pi * np.fft.fftfreq(m, d=1.0 / m)
    proj_then = band_project(zf, bands, 0)
    worst = 0.0
    for q in (0, 5, 16):
        k = BOX.fiber_momenta_unwrapped()[q]
        kin = np.fft.ifft(np.diag(0.5 * (xi + k) ** 2) @ np.fft.fft(np.eye(m), axis=0), axis=0)
        H = kin + np.diag(pot.evaluate(y[:, None]))
        v = band_project(zf, bands, 0).samples[q]
        Hv = H @ zf.samples[q]
        p_Hv = band_project(zak_transform(random_state()), bands, 0)  # shape only
        # compare P H u vs H P u on this fiber
        vecs = band_project(zf, bands, 0)
        u = zf.samples[q]
        # rank-one projector from the packet machinery
        from peierls_lab.quantum import _fiber_vectors_on_cells
        vq = _fiber_vectors_on_cells(bands, BOX, 0, gauge=False)[q]
        P = np.outer(vq, np.conj(vq))
        worst = max(worst, np.abs(P @ (H @ u) - H @ (P @ u)).max())
    assert worst < 1e-10


def test_propagator_trivials():
    pot = mathieu_potential(1.0)
    fld = EMFieldConfig.zero(1, eps=0.1)
    H = realspace_hamiltonian(BOX, pot, fld)
    prop = Propagator.of(H, 0.1)
    psi = random_state().samples
    assert np.abs(prop.apply(psi, 0.0) - psi).max() < 1e-12
    out = prop.apply(psi, 0.7)
    assert abs(np.linalg.norm(out) - 1.0) < 1e-12


def test_propagate_reference_unitary_and_phase():
    n = 33
    eps = 0.1
    grid = PhaseSpaceGrid.build(n, 1.0, eps=eps)
    fld = EMFieldConfig.zero(1, eps=eps)
    const = sample_symbol(lambda X, K: 2.5 + 0 * X, grid)
    h_op = quantize(const, fld, assume_bandlimited=True)
    psi = RNG.normal(size=n) + 1j * RNG.normal(size=n)
    psi /= np.linalg.norm(psi)
    out = propagate_reference(h_op, fld, psi, t=0.3)
    phase = np.exp(-1j * (0.3 / eps) * 2.5)
    assert np.abs(out - phase * psi).max() < 1e-10
    band = BandData.synthetic(LAT1, (33,), lambda k: np.cos(k[..., 0]))
    heff = EffectiveHamiltonian(band, fld)
    h_sym = sample_symbol(lambda X, K: heff.value(K[..., None], X[..., None]), grid)
    h_op2 = quantize(h_sym, fld, assume_bandlimited=True)
    out2 = propagate_reference(h_op2, fld, psi, t=1.0)
    assert abs(np.linalg.norm(out2) - 1.0) < 1e-12


def test_propagate_reference_rejects_nonhermitian():
    n = 9
    grid = PhaseSpaceGrid.build(n, 1.0, eps=0.1)
    from peierls_lab.weyl import QuantizedOperator
    M = np.triu(np.ones((n, n), dtype=complex))
    fld = EMFieldConfig.zero(1, eps=0.1)
    with pytest.raises(QuantumError):
        propagate_reference(QuantizedOperator(grid, M, {}), fld,
                            np.ones(n) / 3.0, 0.1)


def test_egorov_t0_zero_and_quadratic_floor():
    eps = 0.1
    n = 65
    grid = PhaseSpaceGrid.build(n, 0.5, eps=eps)
    fld = EMFieldConfig.zero(1, eps=eps)
    band = BandData.synthetic(LAT1, (65,), lambda k: np.cos(k[..., 0]))
    heff = EffectiveHamiltonian(band, fld)
    L = 65 * 0.5 * eps
    f = lambda k, r, L=L: np.sin(k[..., 0]) + 0.3 * np.cos(2 * np.pi * r[..., 0] / L)
    assert egorov_error(f, heff, grid, fld, t=0.0, dt=0.01) < 1e-12


def test_egorov_scaling_1d():
    pot = mathieu_potential(1.0)
    bands = solve_bands(pot, make_kgrid(LAT1, 64), 8, 3)
    band = BandData.from_geometry(geometric_tensors(bands, 0))
    L = 12.9
    errs = []
    for n in (129, 257):
        eps = L / n
        def phi(r, L=L):
            r = np.asarray(r, float)
            return 0.3 * np.cos(2 * np.pi * r[..., 0] / L)
        def gphi(r, L=L):
            r = np.asarray(r, float)
            return np.stack([-0.3 * 2 * np.pi / L * np.sin(2 * np.pi * r[..., 0] / L)], -1)
        def hphi(r, L=L):
            r = np.asarray(r, float)
            return (-0.3 * (2 * np.pi / L) ** 2 * np.cos(2 * np.pi * r[..., 0] / L))[..., None, None]
        fld = EMFieldConfig.zero(1, eps=eps, phi=phi, grad_phi=gphi, hess_phi=hphi)
        heff = EffectiveHamiltonian(band, fld)
        grid = PhaseSpaceGrid.build(n, 1.0, eps=eps)
        f = lambda k, r, L=L: np.sin(k[..., 0]) + 0.3 * np.cos(2 * np.pi * r[..., 0] / L)
        errs.append(egorov_error(f, heff, grid, fld, t=1.0, dt=0.02))
    ratio = errs[0] / errs[1]
    assert 3.0 < ratio < 5.0


def test_heisenberg_identity_observable():
    n = 33
    eps = 0.1
    grid = PhaseSpaceGrid.build(n, 1.0, eps=eps)
    fld = EMFieldConfig.zero(1, eps=eps)
    band = BandData.synthetic(LAT1, (33,), lambda k: np.cos(k[..., 0]))
    heff = EffectiveHamiltonian(band, fld)
    h_sym = sample_symbol(lambda X, K: heff.value(K[..., None], X[..., None]), grid)
    h_op = quantize(h_sym, fld, assume_bandlimited=True)
    ident = quantize(sample_symbol(lambda X, K: np.ones_like(X), grid), fld)
    out = heisenberg_evolve(h_op, ident, fld, t=0.8)
    assert np.abs(out - np.eye(n)).max() < 1e-10


def test_free_packet_group_velocity():
    V0 = FourierPotential(LAT1, {})
    bands0 = solve_bands(V0, BOX.fiber_grid(), 6, 3)
    pk0 = band_packet(bands0, BOX, 0, k0=0.7, x0=0.0, sigma_k=0.3,
                      smooth_gauge=False)
    fld = EMFieldConfig.zero(1, eps=0.05)
    prop = Propagator.of(realspace_hamiltonian(BOX, V0, fld), 0.05)
    t = 0.012
    psit = WaveFunction(BOX, prop.apply(pk0.samples, t))
    expected = 0.7 * t / 0.05
    assert abs(psit.position_expectation() - expected) < 1e-6
    assert abs(np.linalg.norm(psit.samples) - 1.0) < 1e-12


def test_packet_requires_matching_grid():
    pot = mathieu_potential(1.0)
    wrong = solve_bands(pot, make_kgrid(LAT1, 16), 6, 2)
    with pytest.raises(QuantumError):
        band_packet(wrong, BOX, 0, k0=0.3, x0=0.0, sigma_k=0.2)
