#!/usr/bin/env python3
"""Generate Hofstadter butterfly data with Chern labels and write plot files.

Usage: python scripts/run_butterfly.py [q_max] [out_dir]
"""

import sys
from pathlib import Path

from peierls_lab.cli import emit_plotdata, write_csv
from peierls_lab.hofstadter import butterfly


def main():
    q_max = int(sys.argv[1]) if len(sys.argv) > 1 else 20
    out = Path(sys.argv[2]) if len(sys.argv) > 2 else Path("out/butterfly")
    out.mkdir(parents=True, exist_ok=True)
    data = butterfly(q_max, n_theta=64, chern_labels=True, chern_q_max=9)
    rows = [[float(e[0]), e[1], e[2], e[3], "" if e[4] is None else e[4]]
            for e in data.entries]
    write_csv(out / "butterfly.csv",
              ["alpha_dimensionless", "band_index", "E_min_energy",
               "E_max_energy", "chern"], rows)
    emit_plotdata(out / "butterfly.dat", {
        "alpha": [float(e[0]) for e in data.entries],
        "E_min": [e[2] for e in data.entries],
        "E_max": [e[3] for e in data.entries]})
    print(f"{len(data.fluxes())} fluxes, {len(data.entries)} subbands -> {out}")


if __name__ == "__main__":
    main()
