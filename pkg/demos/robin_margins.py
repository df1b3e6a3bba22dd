"""Margins of lambda_k(Robin sigma) >= tau lambda_k(Neumann) - C on the unit
interval (exact levels) and the unit square (Richardson over two grids)."""
import numpy as np

from bclab.geometry import box, interval
from bclab.laplacian import BCSpec, Grid, Robin
from bclab.robin import (build_inward_field, robin_lower_bound_params, verify_robin_bound_1d,
                         verify_robin_bound_extrapolated)

grids = [Grid(h, np.ones((int(1 / h),) * 2, bool)) for h in (1 / 16, 1 / 32)]
for sigma in (-0.5, -1.0, -2.0):
    p1 = robin_lower_bound_params(sigma, build_inward_field(interval(1.0)))
    p2 = robin_lower_bound_params(sigma, build_inward_field(box([1.0, 1.0])))
    m1 = verify_robin_bound_1d(1.0, sigma, p1, 20)["worst_margin"]
    m2 = verify_robin_bound_extrapolated(grids, BCSpec.uniform(Robin(sigma)), p2, 20)["worst_margin"]
    print(f"sigma={sigma:5.1f}  1D: tau={p1.tau} C={p1.C:6.2f} worst margin {m1:8.4f}   "
          f"2D: C={p2.C:6.2f} worst margin {m2:8.4f}")
