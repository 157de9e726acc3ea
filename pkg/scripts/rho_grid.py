"""rho checks over a grid of cigar endpoints and horizons."""

import argparse
import os

import numpy as np

from solitonlab.geodesic import PhiSpec
from solitonlab.models import ModelSpec, build_model
from solitonlab.rho import analyze, cigar_grid, rho_summary, write_hj_csv, write_rho_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--c", type=float, default=0.25)
    ap.add_argument("--side", type=int, default=7)
    ap.add_argument("--out", default="out/rho")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    model = build_model(ModelSpec("cigar"))
    phi = PhiSpec.c_times_R(args.c)
    rows = []
    for y, sb in cigar_grid(side=args.side):
        rows.append(analyze(model, phi, np.zeros(2), y, sb))
        r = rows[-1]
        print(f"y=({y[0]:.3f},{y[1]:.3f}) s_bar={sb:g} smooth={r.smooth} grad={r.grad_res:.2e} "
              f"HJ order={r.hj_order:.2f} lap slack={r.lap_rhs - r.lap_lhs:.3e}", flush=True)
    print(rho_summary(rows))
    write_rho_csv(os.path.join(args.out, "rho.csv"), rows, 2)
    write_hj_csv(os.path.join(args.out, "rho_hj.csv"), rows, 2)


if __name__ == "__main__":
    main()
