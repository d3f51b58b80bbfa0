"""Loop-defect scaling: flat material connections versus the WRY family.

Prints the defect of square loops of shrinking side.  For holonomic placements
the defect vanishes at the integrator order; for WRY it follows ``c * side^2``
with ``c`` the curvature norm in the loop plane.

    python3 scripts/holonomy_scaling.py --a 0.3
"""
import argparse

import numpy as np

from microkin import BodyGrid, builtin_placement, random_placement
from microkin.holonomy import area_scaling_fit, convergence_order, loop_defect
from microkin.pullback import material_connection


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--a", type=float, default=0.3, help="WRY amplitude")
    ap.add_argument("--steps", type=int, default=16)
    args = ap.parse_args()

    grid = BodyGrid.cube()
    center = np.full(3, 0.5)
    sides = np.array([0.8, 0.4, 0.2, 0.1])

    print("flat material connections, plane (0, 1), defect = |M - I| + |b|")
    for label, F in [("TWIST", builtin_placement("TWIST", grid=grid)), ("random holonomic", random_placement(grid, 1, holonomic=True))]:
        conn = material_connection(F)
        defects = [loop_defect(conn, center, (0, 1), s, args.steps, grid) for s in sides]
        vals = [d.linear_norm + d.translation_norm for d in defects]
        print(f"  {label:<17} " + "  ".join(f"{v:.2e}" for v in vals) + f"   order {convergence_order(sides, vals):.2f}")

    wry = builtin_placement("WRY", {"a": args.a}, grid)
    conn = material_connection(wry)
    small = np.array([0.05, 0.1, 0.2, 0.3])
    print(f"\nWRY(a={args.a}), |M - I| versus side")
    for plane in ((0, 1), (0, 2), (1, 2)):
        vals = [loop_defect(conn, center, plane, s, args.steps, grid).linear_norm for s in small]
        c, r2 = area_scaling_fit(small, vals)
        print(f"  plane {plane}: " + "  ".join(f"{v:.3e}" for v in vals) + f"   c = {c:.4f}, R^2 = {r2:.8f}")


if __name__ == "__main__":
    main()
