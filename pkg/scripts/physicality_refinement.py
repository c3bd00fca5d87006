#!/usr/bin/env python3
"""Eigenvalue-margin stability of defect minimizers under grid refinement.

For each anisotropic coefficient pair (l1, l5) — optionally with a chiral
l4 — a winding-2 disk defect is minimized at a sequence of resolutions via
grid continuation, and the minimum eigenvalue margin over all nodes is
recorded.  A minimizer family whose margin stays bounded away from zero as
h shrinks is strictly physical in the refinement limit; collapsing margins
would flag a loss of physicality.

Writes refinement.csv with one row per (coefficients, resolution):

    l1,l5,l4,resolution,iterations,total,min_margin,seconds

Example:
    python3 scripts/physicality_refinement.py --out out/refinement \
        --pairs "1,2;1,-1" --l4 0,0.5 --resolutions 64,128
"""

from __future__ import annotations

import argparse
import csv
import pathlib
import sys
import time

from qtensor2d.elastic import thm3, validate
from qtensor2d.fields import disk_grid, make_defect_bc, resample_field
from qtensor2d.minimize import SolveConfig, initial_field, minimize
from qtensor2d.potential import BatchDualSolver, make_bulk_params
from qtensor2d.sphere import build_rule

COARSE_LADDER = (17, 33)


def margin_ladder(
    coeffs,
    resolutions: list[int],
    radius: float,
    strength: float,
    winding: int,
    params,
    rule,
    solver,
    grad_tol: float,
    max_iters: int,
):
    """Yield per-resolution records, warm-starting each level from the last."""
    ladder = [n for n in COARSE_LADDER if n < min(resolutions)] + sorted(resolutions)
    field = None
    for n in ladder:
        grid = disk_grid(n, 2.0 * radius / (n - 1))
        bc = make_defect_bc(grid, strength, winding)
        start = (
            initial_field(grid, bc)
            if field is None
            else resample_field(field, grid, bc)
        )
        t0 = time.monotonic()
        field, trace = minimize(
            start,
            coeffs,
            params,
            rule,
            SolveConfig(max_iters=max_iters, grad_tol=grad_tol),
            solver=solver,
        )
        last = trace.rows[-1]
        if n in resolutions:
            yield {
                "resolution": n,
                "iterations": last.iteration,
                "total": last.total,
                "min_margin": last.min_margin,
                "seconds": round(time.monotonic() - t0, 1),
            }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="out/refinement", help="study directory")
    parser.add_argument(
        "--pairs",
        default="1,2;1,-1;1,2.9",
        help="semicolon-separated l1,l5 pairs",
    )
    parser.add_argument("--l4", default="0,0.5", help="comma-separated l4 values")
    parser.add_argument("--resolutions", default="64,128")
    parser.add_argument("--radius", type=float, default=0.5)
    parser.add_argument("--strength", type=float, default=0.3)
    parser.add_argument("--winding", type=int, default=2)
    parser.add_argument("--kappa", type=float, default=0.0)
    parser.add_argument("--grad-tol", type=float, default=1e-4)
    parser.add_argument("--max-iters", type=int, default=8000)
    parser.add_argument("--quad-order", type=int, default=20)
    args = parser.parse_args(argv)

    pairs = [
        tuple(float(v) for v in chunk.split(","))
        for chunk in args.pairs.split(";")
        if chunk
    ]
    l4_values = [float(v) for v in args.l4.split(",") if v != ""]
    resolutions = sorted(int(n) for n in args.resolutions.split(","))

    rule = build_rule(args.quad_order)
    solver = BatchDualSolver(rule)
    params = make_bulk_params(args.kappa, rule)
    out_root = pathlib.Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)

    rows = []
    for l1, l5 in pairs:
        for l4 in l4_values:
            coeffs = thm3(l1, l4, l5)
            report = validate(coeffs)
            if not report.valid:
                print(
                    f"skipping l1={l1} l5={l5} l4={l4}: "
                    + "; ".join(report.failures)
                )
                continue
            for rec in margin_ladder(
                coeffs,
                resolutions,
                args.radius,
                args.strength,
                args.winding,
                params,
                rule,
                solver,
                args.grad_tol,
                args.max_iters,
            ):
                row = {"l1": l1, "l5": l5, "l4": l4, **rec}
                rows.append(row)
                print(
                    f"l1={l1} l5={l5} l4={l4} n={rec['resolution']}: "
                    f"min_margin={rec['min_margin']:.4f} "
                    f"iters={rec['iterations']} ({rec['seconds']}s)"
                )

    if not rows:
        print("no valid coefficient sets; nothing to write")
        return 1
    with open(out_root / "refinement.csv", "w", newline="\n") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"summary: {out_root / 'refinement.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
