#!/usr/bin/env python3
"""Compare the curvature-corrected flow of the semiclassical Hamiltonian with
the conjugated magnetic flow of the first-order effective Hamiltonian, and
monitor energy conservation (2D, constant field, non-separable band).

Usage: python scripts/run_flow_comparison.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from peierls_lab.cli import emit_plotdata
from peierls_lab.effective import BandData, SemiclassicalHamiltonian
from peierls_lab.fiber import potential_2d, solve_bands
from peierls_lab.fields import EMFieldConfig
from peierls_lab.flow import FlowState, compare_flows, integrate
from peierls_lab.geometry import geometric_tensors
from peierls_lab.lattice import Lattice, make_kgrid


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out/flow")
    out.mkdir(parents=True, exist_ok=True)
    lat = Lattice.cubic(2)
    bands = solve_bands(potential_2d(12.0, 2.0), make_kgrid(lat, (21, 21)), 7, 3)
    band = BandData.from_geometry(geometric_tensors(bands, 0))
    L = 2.5
    w = 2 * np.pi / L

    def phi(r):
        r = np.asarray(r, float)
        return 0.4 * np.cos(w * r[..., 0]) * np.cos(w * r[..., 1])

    def gphi(r):
        r = np.asarray(r, float)
        return np.stack([-0.4 * w * np.sin(w * r[..., 0]) * np.cos(w * r[..., 1]),
                         -0.4 * w * np.cos(w * r[..., 0]) * np.sin(w * r[..., 1])], -1)

    def hphi(r):
        r = np.asarray(r, float)
        d11 = -0.4 * w * w * np.cos(w * r[..., 0]) * np.cos(w * r[..., 1])
        d12 = 0.4 * w * w * np.sin(w * r[..., 0]) * np.sin(w * r[..., 1])
        return np.stack([np.stack([d11, d12], -1), np.stack([d12, d11], -1)], -2)

    fld = EMFieldConfig.constant(2, b=0.8, eps=0.1, lam=0.7, phi=phi,
                                 grad_phi=gphi, hess_phi=hphi)
    st = FlowState.of([0.7, -0.4], [0.3, 0.1])
    rep = compare_flows(st, band, fld, [0.1, 0.05, 0.025], t_final=1.0, dt=4e-3)
    for e, d in zip(rep["eps"], rep["distance"]):
        print(f"eps = {e:.3f}: flow distance = {d:.3e}")
    print(f"slope: {rep['slope']:.3f}")
    hsc = SemiclassicalHamiltonian(band, fld)
    traj = integrate(st, hsc, fld, 10.0, 5e-3, band=band, corrected=True,
                     halving_budget=None)
    print(f"energy drift over [0, 10]: {traj.energy_drift():.2e}")
    print(f"structure factor range: "
          f"[{traj.diagnostics['structure_factor'].min():.6f}, "
          f"{traj.diagnostics['structure_factor'].max():.6f}]")
    emit_plotdata(out / "flow.dat", {"eps": rep["eps"],
                                     "distance": rep["distance"]})
    emit_plotdata(out / "trajectory.dat", {
        "t": traj.times, "k1": traj.k[:, 0], "k2": traj.k[:, 1],
        "r1": traj.r[:, 0], "r2": traj.r[:, 1], "energy": traj.energy})


if __name__ == "__main__":
    main()
