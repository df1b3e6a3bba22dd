"""Pressure of the ideal electron/nucleus gas on [0, L] for four boundary
conditions, extrapolated to L -> infinity.

    python3 demos/bc_independence.py [outdir]
"""
import os
import sys

from bclab.geometry import interval
from bclab.harness import SweepSpec, pressure_sweep

BCS = ["dirichlet", "neumann", "robin:-1", "periodic"]


def main(out="demo_out"):
    spec = SweepSpec(interval(1.0), [8, 16, 32, 64], BCS, beta=1.0, mu=(0.0, -1.0))
    table = pressure_sweep(spec)
    print(f"{'L':>5}" + "".join(f"{bc:>14}" for bc in BCS))
    for L in spec.scales:
        vals = {r["bc"]: r["value"] for r in table.rows if r["L"] == L}
        print(f"{L:5.0f}" + "".join(f"{vals[bc]:14.8f}" for bc in BCS))
    print(f"{'inf':>5}" + "".join(f"{table.limits[bc]:14.8f}" for bc in BCS))
    d = table.difference("neumann", "dirichlet")
    print(f"\nspread of limits {table.spread:.2e} (largest fit error {table.max_se:.2e})")
    print(f"p_N - p_D ~ {d['c']:.4f} / L, worst relative residual {d['residual']:.1e}")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "pressure.svg"), "w") as f:
        f.write(table.to_svg())
    with open(os.path.join(out, "pressure.csv"), "w") as f:
        f.write(table.to_csv())


if __name__ == "__main__":
    main(*sys.argv[1:])
