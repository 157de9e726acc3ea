"""Curvature ledgers on radial minimisers for the three soliton models."""

import argparse
import os

from solitonlab.decay import decay_run, radial_targets
from solitonlab.models import ModelSpec, build_model
from solitonlab.variation import closed_bound, write_ledger_csv

MODELS = {
    "cigar": (ModelSpec("cigar"), 0.0),
    "cigar_x_R1": (ModelSpec("cigar_product", k=1), 0.5235987755982988),
    "bryant3": (ModelSpec("bryant", n=3), 0.0),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--models", nargs="+", default=list(MODELS), choices=list(MODELS))
    ap.add_argument("--c", type=float, nargs="+", default=[0.05, 0.25, 1.0])
    ap.add_argument("--d", type=float, nargs="+", default=[5.0, 10.0, 20.0, 40.0])
    ap.add_argument("--out", default="out/ledgers")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    by_name = {}
    for key in args.models:
        spec, angle = MODELS[key]
        model = build_model(spec)
        targets = radial_targets(model, args.d, angle)
        for c in args.c:
            for r in decay_run(model, c, [0.0] * model.dim, targets):
                worst = min(led.slack for led in r.ledgers.values())
                print(f"{model.name:<11} c={c:<5} d={r.d:<6.3g} C={r.C:.6f} worst slack={worst:.3e} "
                      f"rc rhs={r.ledgers['rc_bound'].rhs:.4f} < {closed_bound(model.dim, c):.4f}")
                for name, led in r.ledgers.items():
                    by_name.setdefault(name, []).append(led)
    for name, leds in sorted(by_name.items()):
        write_ledger_csv(os.path.join(args.out, f"ledgers_{name}.csv"), leds)


if __name__ == "__main__":
    main()
