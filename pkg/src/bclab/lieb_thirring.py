"""Negative-eigenvalue sums of Schroedinger operators and Lieb-Thirring ratios."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import gamma

from .errors import ConfigurationError, ConvergenceError
from .laplacian import BCSpec, Dirichlet, Grid, Neumann, assemble, eigenvalues, reflect_extend

__all__ = [
    "RieszSum",
    "negative_riesz_sum",
    "lt_ratio",
    "classical_constant",
    "lt_constant",
    "mixed_constant",
    "square_well_levels",
    "reflected_ratio_check",
    "LT_RATIO_TO_CLASSICAL",
    "lt_audit",
]

# Best published upper bound on the ratio of the gamma = 1 constant to its
# semiclassical value, valid in every dimension.  External input.
LT_RATIO_TO_CLASSICAL = 1.456


def classical_constant(d: int) -> float:
    """Semiclassical constant ``L^cl_{1,d} = 1 / ((4 pi)^(d/2) Gamma(2 + d/2))``."""
    return 1.0 / ((4 * math.pi) ** (d / 2) * gamma(2 + d / 2))


def lt_constant(d: int, ratio: float = LT_RATIO_TO_CLASSICAL) -> float:
    """Configured Lieb-Thirring constant for ``gamma = 1`` in dimension ``d``."""
    return ratio * classical_constant(d)


def mixed_constant(C_Lambda: float, reflections: int, C_LT: float) -> float:
    """``2^(reflections + 1) C_Lambda^(-3/2) C_LT``."""
    if not C_Lambda > 0:
        raise ConfigurationError("C_Lambda must be positive")
    if reflections not in (1, 2, 3):
        raise ConfigurationError("reflections must be 1, 2 or 3")
    return 2 ** (reflections + 1) * C_Lambda ** -1.5 * C_LT


@dataclass
class RieszSum:
    value: float  # sum of |negative eigenvalues|
    count: int
    residual: float
    eigenvalues: np.ndarray


def negative_riesz_sum(grid: Grid, bc: BCSpec, V) -> RieszSum:
    """``Tr(-Lap^bc + V)_-`` on the grid."""
    op = assemble(grid, bc, V)
    n = grid.size
    count = n if n <= 4096 else 64
    while True:
        spec = eigenvalues(op, count)
        if spec.values[-1] >= 0 or count >= n:
            break
        count = min(n, 2 * count)
    if spec.values[-1] < 0 and count < n:
        raise ConvergenceError("negative spectrum not exhausted", residuals=spec.residuals.tolist())
    neg = spec.values[spec.values < 0]
    res = float(spec.residuals[: len(neg)].max()) if len(neg) else 0.0
    return RieszSum(float(-math.fsum(neg)), len(neg), res, neg)


def _potential_values(grid: Grid, V) -> np.ndarray:
    return np.asarray(V(grid.centres()) if callable(V) else V, float)


def lt_ratio(grid: Grid, bc: BCSpec, V) -> dict:
    """``Tr(-Lap + V)_- / int |V_-|^(1 + d/2)``, same quadrature as the operator."""
    v = _potential_values(grid, V)
    den = float(np.sum(np.maximum(-v, 0.0) ** (1 + grid.d / 2)) * grid.cell_volume)
    if den <= 0:
        raise ConfigurationError("potential has no negative part")
    num = negative_riesz_sum(grid, bc, v)
    return {"numerator": num.value, "denominator": den, "ratio": num.value / den,
            "count": num.count, "exponent": 1 + grid.d / 2}


def reflected_ratio_check(grid: Grid, mixed: BCSpec, V) -> dict:
    """Mixed ratio against ``2^p`` times the Dirichlet ratio of the reflected problem.

    ``V`` is a callable; it is sampled on the reflected grid, so it should be
    symmetric under the reflection planes.
    """
    refl = reflect_extend(grid, mixed)
    p = len(refl.planes)
    m = lt_ratio(grid, mixed, V)
    dd = lt_ratio(refl.grid, refl.bc, V)
    bound = 2**p * dd["ratio"]
    return {"mixed": m, "doubled": dd, "planes": p, "bound": bound, "margin": bound - m["ratio"]}


# -- 1D square well oracle ---------------------------------------------------


def square_well_levels(V0: float, a: float, B: float, samples: int = 4000) -> np.ndarray:
    """Negative eigenvalues of ``-u'' - V0 1_{|x| < a/2}`` on ``(-B, B)`` with Dirichlet ends."""
    if not (V0 > 0 and 0 < a / 2 <= B):
        raise ConfigurationError("need V0 > 0 and a/2 <= B")
    c = B - a / 2

    # Matching conditions at |x| = a/2 with u ~ sinh(kappa (B - |x|)) outside,
    # divided by kappa cosh(kappa c) so they stay finite as E -> 0 and c -> inf.
    def parts(E):
        k = math.sqrt(V0 + E)
        kap = math.sqrt(-E)
        x = 2 * kap * c
        tanh_over = c if x < 1e-12 else -math.expm1(-x) / (kap * (1 + math.exp(-x)))
        return k, tanh_over

    def even(E):
        k, th = parts(E)
        return k * math.sin(k * a / 2) * th - math.cos(k * a / 2)

    def odd(E):
        k, th = parts(E)
        return k * math.cos(k * a / 2) * th + math.sin(k * a / 2)

    levels = []
    grid = -V0 + V0 * (1 - np.cos(np.linspace(0, np.pi / 2, samples)))  # denser near -V0
    grid = np.unique(np.concatenate([grid, np.linspace(-V0, 0, samples)]))
    grid = grid[(grid > -V0) & (grid < 0)]
    for f in (even, odd):
        vals = np.array([f(E) for E in grid])
        for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
            levels.append(brentq(f, grid[i], grid[i + 1], xtol=1e-14 * V0, rtol=1e-15))
    return np.sort(np.array(levels))


# -- random-well audit ---------------------------------------------------------


def _random_well(rng, d: int, side: float):
    """Sum of Gaussian wells centred inside ``[0, side]^d``."""
    m = int(rng.integers(1, 4))
    depth = rng.uniform(5.0, 40.0, m)
    width = rng.uniform(0.15, 0.4, m) * side
    centre = rng.uniform(0.2, 0.8, (m, d)) * side

    def V(x):
        x = np.atleast_2d(x)
        r2 = ((x[:, None, :] - centre[None]) ** 2).sum(-1)
        return -(depth * np.exp(-r2 / width**2)).sum(-1)

    return V, {"depth": depth.tolist(), "width": width.tolist(), "centre": centre.tolist()}


def _extrapolated(f, h):
    a, b = f(h), f(h / 2)
    return (4 * b - a) / 3, a, b


def lt_audit(cases: int = 50, seed: int = 0, dims=(1, 2), h1: float = 1 / 32, h2: float = 1 / 8,
             C_Lambda: float = 1.0) -> dict:
    """Random wells on boxes; Dirichlet ratios against the configured constant and
    mixed (one reflected face per case) ratios against the mixed constant.

    Ratios are Richardson-extrapolated from grids at ``h`` and ``h/2``.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(cases):
        d = int(dims[i % len(dims)])
        side = 0.25 * int(rng.integers(6, 13))  # a multiple of every grid step
        h = h1 if d == 1 else h2
        V, params = _random_well(rng, d, side)
        r = int(rng.integers(1, d + 1))
        planes = [f"{'xyz'[ax]}-" for ax in range(r)]

        def sym(x, r=r):
            x = np.array(np.atleast_2d(x), float)
            x[:, :r] = np.abs(x[:, :r])
            return V(x)

        def dir_ratio(hh):
            return lt_ratio(Grid.box([0.0] * d, [side] * d, hh), BCSpec.uniform(Dirichlet()), V)["ratio"]

        mixed = BCSpec({p: Neumann() for p in planes}, Dirichlet())

        def mix_ratio(hh):
            return lt_ratio(Grid.box([0.0] * d, [side] * d, hh), mixed, sym)["ratio"]

        rd, rd1, rd2 = _extrapolated(dir_ratio, h)
        rm, rm1, rm2 = _extrapolated(mix_ratio, h)
        cd = lt_constant(d)
        cm = mixed_constant(C_Lambda, r, cd)
        rows.append({"case": i, "d": d, "side": side, "reflections": r, "well": params,
                     "dirichlet_ratio": rd, "dirichlet_raw": [rd1, rd2], "constant": cd,
                     "mixed_ratio": rm, "mixed_raw": [rm1, rm2], "mixed_constant": cm,
                     "ok": bool(rd <= cd and rm <= cm)})
    return {"rows": rows, "violations": [r["case"] for r in rows if not r["ok"]],
            "max_dirichlet_fraction": max(r["dirichlet_ratio"] / r["constant"] for r in rows),
            "max_mixed_fraction": max(r["mixed_ratio"] / r["mixed_constant"] for r in rows)}
