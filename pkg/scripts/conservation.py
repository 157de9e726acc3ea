"""Drift of C = |S|^2 - 2 phi along cigar phi-geodesics, with step halving."""

import argparse

import numpy as np

from solitonlab.geodesic import PhiSpec, conserved_quantity, integrate_phi_geodesic
from solitonlab.models import ModelSpec, build_model


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--c", type=float, nargs="+", default=[0.05, 0.25, 1.0])
    ap.add_argument("--s-bar", type=float, default=20.0)
    ap.add_argument("--step", type=float, default=1e-3)
    args = ap.parse_args()
    model = build_model(ModelSpec("cigar"))
    x0, v0 = np.array([-1.0, 0.3]), np.array([4.0, 0.0])
    print("c        C                 drift(h)   drift(h/2)  ratio")
    for c in args.c:
        phi = PhiSpec.c_times_R(c)
        C, d1 = conserved_quantity(integrate_phi_geodesic(model, phi, x0, v0, args.s_bar, args.step))
        _, d2 = conserved_quantity(integrate_phi_geodesic(model, phi, x0, v0, args.s_bar, args.step / 2))
        print(f"{c:<8} {C:<17.12f} {d1:.3e}  {d2:.3e}   {d1 / d2:.1f}")


if __name__ == "__main__":
    main()
