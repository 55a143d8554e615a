#!/usr/bin/env python3
"""Egorov-type error sweep for the quantized first-order effective
Hamiltonian of the lowest Mathieu band (1D, zero field).

Prints the interior operator-norm error per scale and the log-log slope;
writes (eps, error) pairs for plotting.

Usage: python scripts/run_egorov_sweep.py [out_dir]
"""

import sys
import time
from pathlib import Path

import numpy as np

from peierls_lab.cli import emit_plotdata
from peierls_lab.effective import BandData, EffectiveHamiltonian
from peierls_lab.fiber import mathieu_potential, solve_bands
from peierls_lab.fields import EMFieldConfig
from peierls_lab.geometry import geometric_tensors
from peierls_lab.lattice import Lattice, make_kgrid
from peierls_lab.quantum import egorov_error
from peierls_lab.weyl import PhaseSpaceGrid


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out/egorov")
    out.mkdir(parents=True, exist_ok=True)
    lat = Lattice.cubic(1)
    bands = solve_bands(mathieu_potential(1.0), make_kgrid(lat, 64), 8, 3)
    band = BandData.from_geometry(geometric_tensors(bands, 0))
    L = 12.9
    eps_list, errs = [], []
    for n in (129, 257, 513):
        eps = L / n
        w = 2 * np.pi / L
        fld = EMFieldConfig.zero(
            1, eps,
            phi=lambda r: 0.3 * np.cos(w * np.asarray(r, float)[..., 0]),
            grad_phi=lambda r: np.stack(
                [-0.3 * w * np.sin(w * np.asarray(r, float)[..., 0])], -1),
            hess_phi=lambda r: (-0.3 * w * w * np.cos(
                w * np.asarray(r, float)[..., 0]))[..., None, None])
        heff = EffectiveHamiltonian(band, fld)
        grid = PhaseSpaceGrid.build(n, 1.0, eps=eps)
        f = lambda k, r: np.sin(k[..., 0]) + 0.3 * np.cos(w * r[..., 0])
        t0 = time.time()
        err = egorov_error(f, heff, grid, fld, t=1.0, dt=0.02)
        eps_list.append(eps)
        errs.append(err)
        print(f"eps = {eps:.4f}: error = {err:.3e}  ({time.time() - t0:.1f} s)")
    slope = np.polyfit(np.log(eps_list), np.log(errs), 1)[0]
    print(f"log-log slope: {slope:.3f}")
    emit_plotdata(out / "egorov.dat", {"eps": eps_list, "error": errs})


if __name__ == "__main__":
    main()
