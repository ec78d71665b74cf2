"""Exhaustively search small codes for rate/distortion pairs that would
undercut the solver frontier.

Every deterministic code up to the blocklength cap is enumerated; for each
radius on the grid, the cheapest code achieving it is compared against the
frontier rate at the TV it actually reached. Deficits are fitted with a
c/sqrt(n) envelope and any row breaking the fit is flagged.

    python3 scripts/converse_scan.py --n 1 2 3 --deltas 0 0.1 0.25 0.5 1
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from coordlab.cli import load_problem_spec
from coordlab.oracle import theorem_consistency_scan

DEFAULT_SPEC = pathlib.Path(__file__).parent / "specs" / "two_node_identity.json"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--spec", default=str(DEFAULT_SPEC))
    ap.add_argument("--n", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument(
        "--deltas", type=float, nargs="+", default=[0.0, 0.1, 0.25, 0.5, 1.0]
    )
    ap.add_argument("--budget", type=int, default=2_000_000)
    args = ap.parse_args(argv)

    spec = load_problem_spec(args.spec)
    if spec.network != "two_node":
        ap.error("the exhaustive scan handles two_node specs")
    out = theorem_consistency_scan(
        spec.source,
        spec.target,
        n_grid=args.n,
        delta_grid=args.deltas,
        budget=args.budget,
        config=spec.solver,
    )

    print(f"{'n':>3} {'delta':>6} {'frontier':>9} {'best code':>9} {'deficit':>9}")
    for row in out["rows"]:
        ex = "-" if row["exhaustive_rate"] is None else f"{row['exhaustive_rate']:.4f}"
        de = "-" if row["deficit"] is None else f"{row['deficit']:.2e}"
        mark = "  <-- FLAG" if row["flagged"] else ""
        print(
            f"{row['n']:>3} {row['delta']:>6.2f} {row['frontier_rate']:>9.4f} "
            f"{ex:>9} {de:>9}{mark}"
        )
    print(
        f"{out['evaluated_codes']} codes enumerated, slack fit c = "
        f"{out['slack_coefficient']:.3g}, {out['flag_count']} flag(s)"
        + (", scan truncated by budget" if out["partial"] else "")
    )
    return 1 if out["flag_count"] else 0


if __name__ == "__main__":
    raise SystemExit(main())
