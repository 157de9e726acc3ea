"""Witness curvature along cigar minimisers against the closed form."""

import argparse
import math
import os

import numpy as np

from solitonlab.decay import c_window_check, decay_run, liminf_summary, radial_targets, write_decay_csv, write_decay_json
from solitonlab.models import ModelSpec, build_model


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--c", type=float, default=0.25)
    ap.add_argument("--d", type=float, nargs="+", default=[5.0, 10.0, 20.0, 40.0])
    ap.add_argument("--out", default="out/decay")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    model = build_model(ModelSpec("cigar"))
    recs = decay_run(model, args.c, np.zeros(2), radial_targets(model, args.d), ledgers=False)
    for r in recs:
        exact = (1 / math.sqrt(2)) / (1 + float(np.dot(r.z, r.z)))
        print(f"d={r.d:<5g} |Rc|(z)={r.ric_at_z:.6e} exact={exact:.6e} d(z,y)={r.dist_z_y:.4f} "
              f"K_ratio={r.K_ratio:.4f}")
    s = liminf_summary(recs)
    print(f"K fitted at d={s.distances[0]:g}: {s.K_first:.4f}; bound ok: {s.bound_ok}; envelope: {s.envelope}")
    write_decay_csv(os.path.join(args.out, "decay.csv"), recs)
    write_decay_json(os.path.join(args.out, "decay_summary.json"), [s], c_window_check(recs))


if __name__ == "__main__":
    main()
