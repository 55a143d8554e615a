import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peierls_lab.fiber import (FiberError, FourierPotential, PlaneWaveBasis,
                               check_gap, fiber_matrix, mathieu_potential,
                               potential_2d, solve_bands,
                               tau_equivariance_check)
from peierls_lab.lattice import Lattice, make_kgrid, wrap_to_bz

LAT1 = Lattice.cubic(1)
LAT2 = Lattice.cubic(2)


def realspace_oracle_1d(potential, k, m=1500, n_levels=3):
    """Independent dense real-space diagonalization with a 5-point stencil.

    Fourth-order finite differences on the unit cell with Bloch boundary
    phases; accuracy ~ (2 pi h)^4 well below 1e-6 for the lowest levels.
    """
    h = 1.0 / m
    y = np.arange(m) * h
    main = np.full(m, 30.0)
    off1 = np.full(m - 1, -16.0)
    off2 = np.full(m - 2, 1.0)
    T = (np.diag(main) + np.diag(off1, 1) + np.diag(off1, -1)
         + np.diag(off2, 2) + np.diag(off2, -2)).astype(complex)
    bloch = np.exp(1j * k)
    T[0, m - 1] += -16.0 * np.conj(bloch)
    T[m - 1, 0] += -16.0 * bloch
    T[0, m - 2] += 1.0 * np.conj(bloch)
    T[1, m - 1] += 1.0 * np.conj(bloch)
    T[m - 2, 0] += 1.0 * bloch
    T[m - 1, 1] += 1.0 * bloch
    # (-1/2) d^2/dy^2 with psi(y+1) = e^{ik} psi(y); -i d -> -i d + k folded in
    H = T / (24.0 * h * h)
    # shift to the (-i d/dy + k)^2 form: absorb via the gauge psi = e^{iky} u
    H += np.diag(potential.evaluate(y[:, None]))
    return np.linalg.eigvalsh(H)[:n_levels]


def test_free_fiber_cutoff1():
    V0 = FourierPotential(LAT1, {})
    fm = fiber_matrix(0.0, V0, 1)
    expected = np.diag([0.5 * (2 * np.pi) ** 2, 0.0, 0.5 * (2 * np.pi) ** 2])
    assert np.abs(fm.matrix - expected).max() < 1e-12


def test_mathieu_tridiagonal():
    pot = mathieu_potential(0.7)
    fm = fiber_matrix(0.3, pot, 3)
    M = fm.matrix
    assert abs(M[0, 1] - 0.7) < 1e-14 and abs(M[1, 0] - 0.7) < 1e-14
    assert abs(M[0, 2]) == 0.0 and abs(M[0, 3]) == 0.0


def test_mathieu_vs_realspace_oracle():
    pot = mathieu_potential(1.0)
    ev = np.linalg.eigvalsh(fiber_matrix(0.0, pot, 8).matrix)[:3]
    oracle = realspace_oracle_1d(pot, 0.0)
    assert np.abs(ev - oracle).max() < 1e-6


def test_fiber_hermitian_and_rejects_small_cutoff():
    pot = potential_2d(1.0, 0.4)
    fm = fiber_matrix([0.2, -0.4], pot, 3)
    assert np.abs(fm.matrix - fm.matrix.conj().T).max() < 1e-12
    with pytest.raises(FiberError):
        fiber_matrix([0.0, 0.0], pot, 0)


def test_free_bands_exact():
    V0 = FourierPotential(LAT1, {})
    grid = make_kgrid(LAT1, 32)
    bands = solve_bands(V0, grid, 4, 3)
    assert np.abs(bands.energies[0] - 0.5 * grid.points.ravel() ** 2).max() < 1e-10


def test_free_band_touchings():
    V0 = FourierPotential(LAT1, {})
    # folding: lowest two branches meet at the zone edge, the next two at 0
    edge = np.linalg.eigvalsh(fiber_matrix(np.pi, V0, 4).matrix)
    assert abs(edge[0] - edge[1]) < 1e-10
    center = np.linalg.eigvalsh(fiber_matrix(0.0, V0, 4).matrix)
    assert abs(center[1] - center[2]) < 1e-10


def test_mathieu_band_energy_cross_check():
    pot = mathieu_potential(1.0)
    grid = make_kgrid(LAT1, 16)
    bands = solve_bands(pot, grid, 8, 2)
    k0 = grid.points.ravel()[3]
    oracle = realspace_oracle_1d(pot, k0, n_levels=1)
    assert abs(bands.energies[0, 3] - oracle[0]) < 1e-6


def test_check_gap_free_lowest_touches():
    V0 = FourierPotential(LAT1, {})
    # grid containing the zone edge, where the lowest free band touches
    grid = make_kgrid(LAT1, 32, centered=False)
    bands = solve_bands(V0, grid, 4, 3)
    assert check_gap(bands, [0]) < 1e-12


def test_check_gap_mathieu_positive_and_refines():
    pot = mathieu_potential(1.0)
    # even zero-anchored grids contain the zone edge, where the infimum sits
    coarse = solve_bands(pot, make_kgrid(LAT1, 16, centered=False), 8, 3)
    fine = solve_bands(pot, make_kgrid(LAT1, 128, centered=False), 10, 3)
    g_coarse = check_gap(coarse, [0])
    g_fine = check_gap(fine, [0])
    assert g_fine > 0
    assert abs(g_coarse - g_fine) < 1e-6


def test_check_gap_all_bands_uses_guard():
    pot = mathieu_potential(1.0)
    bands = solve_bands(pot, make_kgrid(LAT1, 16), 6, 4)
    g = check_gap(bands, [0, 1, 2, 3])
    # distance to the first omitted eigenvalue of the same matrices
    oracle = np.inf
    for p in range(bands.kgrid.n_points):
        ev = np.linalg.eigvalsh(fiber_matrix(bands.kgrid.points[p],
                                             pot, 6).matrix)
        oracle = min(oracle, ev[4] - ev[3])
    assert abs(g - oracle) < 1e-10


def test_check_gap_rejects_non_contiguous():
    pot = mathieu_potential(1.0)
    bands = solve_bands(pot, make_kgrid(LAT1, 8), 6, 4)
    with pytest.raises(FiberError):
        check_gap(bands, [0, 2])


def test_tau_equivariance_zero_shift():
    pot = mathieu_potential(1.0)
    assert tau_equivariance_check(pot, 0.37, [0], 8) == 0.0


def test_tau_equivariance_free():
    V0 = FourierPotential(LAT1, {})
    assert tau_equivariance_check(V0, 0.81, [2], 8) < 1e-12


def test_tau_equivariance_mathieu():
    pot = mathieu_potential(1.0)
    assert tau_equivariance_check(pot, 0.37, [1], 8) < 1e-10


def test_tau_equivariance_margin_error():
    pot = mathieu_potential(1.0)
    with pytest.raises(FiberError):
        tau_equivariance_check(pot, 0.1, [9], 8)


@settings(max_examples=25, deadline=None)
@given(st.integers(-3, 3), st.integers(-3, 3),
       st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_tau_equivariance_2d_property(n1, n2, k1, k2):
    pot = potential_2d(1.0, 0.3)
    dev = tau_equivariance_check(pot, [k1, k2], [n1, n2], 4)
    assert dev < 1e-10


def test_band_periodicity_on_grid():
    pot = mathieu_potential(1.0)
    grid = make_kgrid(LAT1, 32)
    bands = solve_bands(pot, grid, 8, 2)
    for p in (0, 5, 17):
        k = grid.points[p]
        kw = wrap_to_bz(k + 2 * np.pi, LAT1)
        ev = np.linalg.eigvalsh(fiber_matrix(kw, pot, 8).matrix)[0]
        assert abs(ev - bands.energies[0, p]) < 1e-10


def test_spectral_convergence_and_variational_monotonicity():
    pot = mathieu_potential(1.0)
    ks = [0.0, 0.9, 2.2]
    for k in ks:
        e_lo = np.linalg.eigvalsh(fiber_matrix(k, pot, 6).matrix)[:4]
        e_hi = np.linalg.eigvalsh(fiber_matrix(k, pot, 12).matrix)[:4]
        assert abs(e_lo[0] - e_hi[0]) < 1e-8
        # enlarging the basis never raises a level beyond solver noise
        assert np.all(e_hi - e_lo < 1e-11)


def test_potential_hermitian_symmetry_enforced():
    with pytest.raises(FiberError):
        FourierPotential(LAT1, {(1,): 1.0 + 0.0j})
    with pytest.raises(FiberError):
        FourierPotential(LAT1, {(1,): 1.0 + 0.5j, (-1,): 1.0 + 0.5j})


def test_shift_matrix_composition():
    basis = PlaneWaveBasis.build(LAT1, 4)
    S1 = basis.shift_matrix([1])
    S2 = basis.shift_matrix([-1])
    # inverse on the common sub-box
    P = S2 @ S1
    keep = np.abs(basis.offsets[:, 0] + 1) <= 4
    assert np.allclose(P[np.ix_(keep, keep)], np.eye(keep.sum()))
