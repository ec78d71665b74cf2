"""Sweep the two-node rate frontier R(delta) for a problem spec.

Writes one CSV row per grid radius and prints a short table. The spec file
follows the same JSON schema as the CLI; by default the shipped
uniform-binary identity spec is used.

    python3 scripts/region_sweep.py --spec scripts/specs/two_node_identity.json \
        --points 21 --out /tmp/sweep.csv
"""

import argparse
import csv
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from coordlab import prob_core as pc
from coordlab import region_solver as rs
from coordlab.cli import load_problem_spec

DEFAULT_SPEC = pathlib.Path(__file__).parent / "specs" / "two_node_identity.json"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--spec", default=str(DEFAULT_SPEC))
    ap.add_argument("--points", type=int, default=17, help="grid size on [0, delta*]")
    ap.add_argument("--out", default=None, help="CSV path (default: stdout only)")
    args = ap.parse_args(argv)

    spec = load_problem_spec(args.spec)
    if spec.network != "two_node":
        ap.error("this sweep handles two_node specs; use the CLI for cascades")
    ds = rs.delta_star(spec.source, spec.target)
    joint = pc.compose(spec.source, spec.target)
    print(f"I(X;Y) = {pc.mutual_information(joint):.6f} bits, delta* = {ds:.6f}")

    rows = []
    for d in np.linspace(0.0, ds, args.points):
        pt = rs.solve_two_node(spec.source, spec.target, float(d), spec.solver)
        rows.append((pt.delta, pt.R1, pt.certificate))
        print(f"  delta {pt.delta:8.5f}  R {pt.R1:10.6f}  gap {pt.certificate:.1e}")

    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["delta", "R1", "gap"])
            w.writerows(rows)
        print(f"wrote {len(rows)} rows to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
