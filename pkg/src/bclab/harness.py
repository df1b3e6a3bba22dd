"""Finite-size scaling sweeps for the ideal gas and the shrinking-ball example.

Scaled domains ``L * base`` are swept over a list of boundary conditions;
each sweep cell yields a pressure, ground-state or free-energy density and
the per-condition sequences are extrapolated with ``p_inf + c1/L (+ c2/L^2)``.
All results are for non-interacting particles; the interacting limits are
out of reach numerically.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import spherical_jn

from .errors import BoseCondensationError, ConfigurationError
from .geometry import Domain, interval
from .io import rows_to_csv, svg_lines, worker_count
from .laplacian import BCSpec, Dirichlet, Grid, Neumann, Periodic, Robin, assemble, eigenvalues
from .robin import robin_spectrum_1d
from .statmech import (NeutralLine, electrons, free_energy_density, grand_pressure,
                       ground_state_grand, nuclei)

__all__ = [
    "SweepSpec",
    "Fit",
    "ConvergenceTable",
    "parse_bc",
    "interval_spectrum",
    "sweep_spectrum",
    "fit_surface",
    "pressure_sweep",
    "ground_state_sweep",
    "free_energy_sweep",
    "neutral_sequence",
    "convexity_check",
    "ordering_check",
    "mean_inverse_distance",
    "ball_dirichlet_levels",
    "counterexample_run",
    "NOTE",
]

NOTE = "ideal-gas surrogate: non-interacting electrons and nuclei on exact or discrete spectra"

# Boltzmann factors below exp(-CUT) are dropped from the spectra.
CUT = 45.0


def parse_bc(label: str):
    """``dirichlet``, ``neumann``, ``periodic``, ``robin:<sigma>`` or ``mixed``."""
    s = label.strip().lower()
    if s in ("d", "dirichlet"):
        return "dirichlet", None
    if s in ("n", "neumann"):
        return "neumann", None
    if s in ("p", "periodic"):
        return "periodic", None
    if s in ("mixed", "m"):
        return "mixed", None
    if s.startswith("robin"):
        try:
            return "robin", float(s.split(":", 1)[1])
        except (IndexError, ValueError):
            raise ConfigurationError(f"robin needs a value, e.g. robin:-1 (got {label!r})") from None
    raise ConfigurationError(f"unknown boundary condition {label!r}")


def interval_spectrum(length: float, label: str, emax: float) -> np.ndarray:
    """Exact ``-u''`` eigenvalues on ``[0, length]`` up to at least ``emax``."""
    kind, sigma = parse_bc(label)
    K = int(math.ceil(length * math.sqrt(max(emax, 0.0)) / math.pi)) + 2
    k = np.arange(K + 1, dtype=float)
    if kind == "dirichlet":
        return (k[1:] * math.pi / length) ** 2
    if kind == "neumann":
        return (k * math.pi / length) ** 2
    if kind == "mixed":
        return ((k + 0.5) * math.pi / length) ** 2
    if kind == "periodic":
        q = (2 * math.pi / length) * np.concatenate([[0.0], np.repeat(k[1:K // 2 + 2], 2)])
        return np.sort(q**2)
    return robin_spectrum_1d(length, sigma, sigma, K + 2)


def _grid_bc(label: str, d: int) -> BCSpec:
    kind, sigma = parse_bc(label)
    if kind == "dirichlet":
        return BCSpec.uniform(Dirichlet())
    if kind == "neumann":
        return BCSpec.uniform(Neumann())
    if kind == "periodic":
        return BCSpec.periodic(d)
    if kind == "robin":
        return BCSpec.uniform(Robin(sigma))
    return BCSpec({"x-": Dirichlet()}, Neumann())


@dataclass
class SweepSpec:
    """Scaled-domain sweep.  ``resolution`` is ``"exact"`` (1D intervals) or a
    number of cells per unit length for the discrete solver."""

    base: Domain
    scales: list
    bcs: list
    beta: float
    mu: tuple | None = None
    rho: float | None = None
    z: Fraction | float = 1
    M: float = 10.0
    resolution: object = "exact"
    workers: int | None = None

    def __post_init__(self):
        self.scales = sorted(float(L) for L in self.scales)
        if len(self.scales) < 3:
            raise ConfigurationError("at least three scales are needed for extrapolation")
        if self.scales[0] <= 0:
            raise ConfigurationError("scales must be positive")
        if not self.beta > 0 or not math.isfinite(self.beta):
            raise ConfigurationError("beta must be positive and finite")
        for b in self.bcs:
            parse_bc(b)
        if self.resolution == "exact":
            if self.base.kind != "interval":
                raise ConfigurationError("exact spectra are only available for intervals")
        elif not float(self.resolution) > 0:
            raise ConfigurationError("resolution must be 'exact' or cells per unit length")

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "scales": self.scales, "bcs": list(self.bcs),
                "beta": self.beta, "mu": None if self.mu is None else list(self.mu),
                "rho": self.rho, "z": str(self.z), "M": self.M, "resolution": self.resolution}


def sweep_spectrum(spec: SweepSpec, L: float, label: str, emax: float) -> np.ndarray:
    dom = spec.base.scaled(L)
    if spec.resolution == "exact":
        return interval_spectrum(float(dom.hi[0] - dom.lo[0]), label, emax)
    h = 1.0 / float(spec.resolution)
    grid = Grid.from_domain(dom, h)
    op = assemble(grid, _grid_bc(label, dom.dim))
    return eigenvalues(op, grid.size).values


@dataclass
class Fit:
    p_inf: float
    coeffs: list
    se: float
    stat_se: float
    holdout: float
    residual: float
    points: int
    terms: int

    def predict(self, L):
        L = np.asarray(L, float)
        return sum(c * L**-i for i, c in enumerate(self.coeffs))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("p_inf", "coeffs", "se", "stat_se", "holdout",
                                              "residual", "points", "terms")}


def _lstsq(L, y, terms):
    X = np.stack([L**-i for i in range(terms)], 1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    dof = len(y) - terms
    if dof > 0:
        s2 = float(r @ r) / dof
        cov = s2 * np.linalg.inv(X.T @ X)
        se = math.sqrt(max(cov[0, 0], 0.0))
    else:
        se = 0.0
    return coef, r, se


def fit_surface(Ls, values, terms: int = 2) -> Fit:
    """Fit ``sum_i c_i L^-i`` (``i < terms``).

    The reported error ``se`` is the largest of the regression standard
    error, the shift of ``p_inf`` when the smallest scale is dropped, and a
    floating-point floor.  Exact sequences have vanishing regression error,
    so the hold-out shift is what keeps the comparison honest.
    """
    L = np.asarray(Ls, float)
    y = np.asarray(values, float)
    if len(L) < terms:
        raise ConfigurationError("not enough points for the fit")
    coef, r, se = _lstsq(L, y, terms)
    holdout = 0.0
    if len(L) - 1 >= terms:
        c2, _, _ = _lstsq(L[1:], y[1:], terms)
        holdout = abs(float(c2[0] - coef[0]))
    scale = max(float(np.max(np.abs(y))), 1e-300)
    floor = 1e-12 * scale
    resid = float(np.max(np.abs(r)) / scale)
    return Fit(float(coef[0]), [float(c) for c in coef], max(se, holdout, floor), se, holdout,
               resid, len(L), terms)


@dataclass
class ConvergenceTable:
    kind: str
    spec: SweepSpec
    rows: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    terms: int = 2

    def series(self, bc: str):
        rs = [r for r in self.rows if r["bc"] == bc and not r["flagged"]]
        return np.array([r["L"] for r in rs]), np.array([r["value"] for r in rs])

    def fit(self, terms: int | None = None) -> "ConvergenceTable":
        terms = terms or self.terms
        self.terms = terms
        self.fits = {}
        for bc in self.spec.bcs:
            L, v = self.series(bc)
            if len(L) >= terms and np.all(np.isfinite(v)):
                self.fits[bc] = fit_surface(L, v, terms)
        return self

    @property
    def limits(self) -> dict:
        return {bc: f.p_inf for bc, f in self.fits.items()}

    @property
    def spread(self) -> float:
        v = list(self.limits.values())
        return float(max(v) - min(v)) if v else float("nan")

    @property
    def relative_spread(self) -> float:
        v = np.array(list(self.limits.values()))
        return float(self.spread / np.max(np.abs(v))) if len(v) else float("nan")

    @property
    def max_se(self) -> float:
        return max((f.se for f in self.fits.values()), default=float("nan"))

    def agreement(self, factor: float = 3.0) -> bool:
        return bool(self.spread <= factor * self.max_se)

    def difference(self, a: str = "neumann", b: str = "dirichlet") -> dict:
        """``|v_a - v_b|`` against ``c / L`` (one-parameter fit)."""
        La, va = self.series(a)
        Lb, vb = self.series(b)
        common = sorted(set(La) & set(Lb))
        da = dict(zip(La, va))
        db = dict(zip(Lb, vb))
        L = np.array(common)
        d = np.abs(np.array([da[x] - db[x] for x in common]))
        c = float(np.sum(d / L) / np.sum(1 / L**2))
        rel = np.abs(d - c / L) / np.where(d > 0, d, 1.0)
        return {"L": L.tolist(), "diff": d.tolist(), "c": c, "residual": float(rel.max()),
                "monotone": bool(np.all(np.diff(d) < 0))}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "note": NOTE, "spec": self.spec.to_dict(), "rows": self.rows,
                "fits": {bc: f.to_dict() for bc, f in self.fits.items()},
                "limits": self.limits, "spread": self.spread, "relative_spread": self.relative_spread,
                "max_se": self.max_se}

    def to_csv(self) -> str:
        return rows_to_csv(self.rows, ["kind", "bc", "L", "volume", "value", "flagged",
                                       "truncation_bound", "modes"])

    def to_svg(self, timestamp: str | None = None) -> str:
        series = []
        for bc in self.spec.bcs:
            L, v = self.series(bc)
            s = {"label": bc, "x": (1 / L).tolist(), "y": v.tolist()}
            if bc in self.fits:
                xs = np.linspace(0, 1 / L.min(), 50)
                with np.errstate(divide="ignore"):
                    Ls = np.where(xs > 0, 1 / np.where(xs > 0, xs, 1), np.inf)
                s["fit_x"] = xs.tolist()
                s["fit_y"] = [self.fits[bc].p_inf if not math.isfinite(x) else float(self.fits[bc].predict(x))
                              for x in Ls]
            series.append(s)
        return svg_lines(series, f"{self.kind} vs 1/L", "1/L", self.kind, timestamp)


def _run_cells(spec: SweepSpec, job):
    cells = [(bc, L) for bc in spec.bcs for L in spec.scales]
    n = worker_count(spec.workers)
    if n == 1:
        return [job(bc, L) for bc, L in cells]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(lambda c: job(*c), cells))  # map keeps input order


def _emax(spec: SweepSpec, mu_n: float, mu_k: float) -> float:
    return max(mu_n + CUT / spec.beta, spec.M * (mu_k + CUT / spec.beta), 1.0)


def pressure_sweep(spec: SweepSpec, terms: int = 2) -> ConvergenceTable:
    if spec.mu is None:
        raise ConfigurationError("pressure sweep needs mu")
    mu_n, mu_k = map(float, spec.mu)

    def job(bc, L):
        vol = spec.base.scaled(L).volume
        eigs = sweep_spectrum(spec, L, bc, _emax(spec, mu_n, mu_k))
        row = {"kind": "p", "bc": bc, "L": L, "volume": vol, "modes": len(eigs)}
        try:
            r = grand_pressure(electrons(eigs), nuclei(eigs, spec.M), spec.beta, (mu_n, mu_k), vol)
            row.update(value=r.value, flagged=False, truncation_bound=r.truncation_bound)
        except BoseCondensationError as exc:
            row.update(value=float("nan"), flagged=True, truncation_bound=float("nan"), reason=str(exc))
        return row

    return ConvergenceTable("p", spec, _run_cells(spec, job), terms=terms).fit()


def ground_state_sweep(spec: SweepSpec, terms: int = 3) -> ConvergenceTable:
    if spec.mu is None:
        raise ConfigurationError("ground-state sweep needs mu")
    mu_n, mu_k = map(float, spec.mu)

    def job(bc, L):
        vol = spec.base.scaled(L).volume
        eigs = sweep_spectrum(spec, L, bc, max(mu_n, spec.M * mu_k, 0.0) + 1.0)
        r = ground_state_grand(electrons(eigs), nuclei(eigs, spec.M), (mu_n, mu_k), vol)
        flagged = bool(r.extra["unbounded"])
        return {"kind": "g", "bc": bc, "L": L, "volume": vol, "modes": len(eigs),
                "value": float("nan") if flagged else r.extra["g"], "flagged": flagged,
                "truncation_bound": 0.0}

    return ConvergenceTable("g", spec, _run_cells(spec, job), terms=terms).fit()


def neutral_sequence(line: NeutralLine | Fraction | float, volumes, rho_e: float) -> list:
    """``(n_L, k_L)`` with ``n_L = q round(rho_e |Lambda_L| / q)`` and ``k_L = z n_L``."""
    if not isinstance(line, NeutralLine):
        line = NeutralLine(line)
    if rho_e < 0 or not math.isfinite(rho_e):
        raise ConfigurationError("density must be nonnegative")
    q = line.step
    out = []
    for V in volumes:
        n = q * int(round(rho_e * V / q))
        out.append((n, line.partner(n)))
    return out


def free_energy_sweep(spec: SweepSpec, terms: int = 3) -> ConvergenceTable:
    if spec.rho is None:
        raise ConfigurationError("free-energy sweep needs rho")
    line = NeutralLine(spec.z)

    def job(bc, L):
        vol = spec.base.scaled(L).volume
        n, k = neutral_sequence(line, [vol], spec.rho)[0]
        kf = math.pi * max(spec.rho, 1.0)
        eigs = sweep_spectrum(spec, L, bc, kf**2 + spec.M * CUT / spec.beta)
        e, nuc = electrons(eigs), nuclei(eigs, spec.M)
        r = free_energy_density(e, nuc, n, line.z, spec.beta, vol)
        return {"kind": "f", "bc": bc, "L": L, "volume": vol, "modes": len(eigs), "N": [n, k],
                "value": r.value, "flagged": not r.extra["feasible"], "truncation_bound": 0.0}

    return ConvergenceTable("f", spec, _run_cells(spec, job), terms=terms).fit()


def convexity_check(spec: SweepSpec, mus, L: float, bc: str, species: int = 0) -> dict:
    """Second differences of ``p`` along a uniform grid of one chemical potential."""
    mus = np.asarray(mus, float)
    if len(mus) < 3 or not np.allclose(np.diff(mus), mus[1] - mus[0]):
        raise ConfigurationError("need a uniform grid of at least three values")
    base = list(map(float, spec.mu))
    vol = spec.base.scaled(L).volume
    top = [base[0], base[1]]
    top[species] = float(mus.max())
    eigs = sweep_spectrum(spec, L, bc, _emax(spec, *top))
    vals = []
    for m in mus:
        mu = list(base)
        mu[species] = float(m)
        vals.append(grand_pressure(electrons(eigs), nuclei(eigs, spec.M), spec.beta, mu, vol).value)
    second = np.diff(vals, 2)
    return {"values": vals, "second_differences": second.tolist(), "min": float(second.min())}


def ordering_check(table: ConvergenceTable, lower: str, middle: str, upper: str) -> dict:
    """Count scales where ``lower <= middle <= upper`` fails (flagged cells skipped)."""
    val = {(r["bc"], r["L"]): r["value"] for r in table.rows if not r["flagged"]}
    bad = []
    for L in table.spec.scales:
        try:
            a, b, c = val[(lower, L)], val[(middle, L)], val[(upper, L)]
        except KeyError:
            continue
        tol = 1e-12 * max(abs(a), abs(b), abs(c), 1.0)
        if not (a <= b + tol and b <= c + tol):
            bad.append(L)
    return {"violations": bad, "holds": not bad}


# -- shrinking-ball example ----------------------------------------------------


def mean_inverse_distance(r: float) -> float:
    """``|B_r|^-2 int int |x - y|^-1`` over a ball of radius ``r`` in 3D."""
    return 1.2 / r


def ball_dirichlet_levels(R: float, kmax: float):
    """Dirichlet levels ``(j_{l,m} / R)^2`` below ``kmax^2`` with multiplicities ``2l + 1``."""
    X = kmax * R
    levels, mult = [], []
    ell = 0
    while True:
        # first zero of j_l exceeds l + 1
        if ell + 1.0 > X:
            break
        x = np.arange(max(ell, 1e-3), X + 0.1, 0.05)
        f = spherical_jn(ell, x)
        idx = np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]
        a, b = x[idx], x[idx + 1]
        fa = f[idx]
        for _ in range(50):  # vectorised bisection
            m = 0.5 * (a + b)
            fm = spherical_jn(ell, m)
            left = np.sign(fm) == np.sign(fa)
            a = np.where(left, m, a)
            fa = np.where(left, fm, fa)
            b = np.where(left, b, m)
        roots = 0.5 * (a + b)
        roots = roots[roots <= X]
        found = len(roots) > 0
        levels.extend((roots / R) ** 2)
        mult.extend([2 * ell + 1] * len(roots))
        if not found and ell > 0:
            break
        ell += 1
    order = np.argsort(levels)
    return np.array(levels)[order], np.array(mult)[order]


def _fermi_fill(levels, mult, n: int, g_s: int = 2) -> float:
    """Ground-state energy of ``n`` fermions filling degenerate levels."""
    E, left = 0.0, n
    for lam, m in zip(levels, mult):
        take = min(left, g_s * int(m))
        E += take * lam
        left -= take
        if left == 0:
            return E
    raise ConfigurationError("not enough levels to place all particles")


def fermi_energy_density(rho: float, g_s: int = 2) -> float:
    """Infinite-volume ideal Fermi ground-state energy density for ``-Lap`` in 3D."""
    kf = (6 * math.pi**2 * rho / g_s) ** (1 / 3)
    return g_s * kf**5 / (10 * math.pi**2)


def counterexample_run(ls, rho: float, z=1, M: float = 1.0) -> dict:
    """Upper-bound sequence for a large ball joined to a ball of radius ``l^-4``.

    The first term is the ideal Dirichlet ground-state energy of
    ``N - (1, 1)`` particles in the large ball (a stand-in for the
    interacting energy; only its boundedness matters).  The second term is
    the exact self-energy of one unit charge smeared over the small ball.
    """
    ls = sorted(float(l) for l in ls)
    if any(l < 2 for l in ls):
        raise ConfigurationError("l must be at least 2")
    line = NeutralLine(z)
    rows = []
    for l in ls:
        vol = (4 * math.pi / 3) * (l**3 + l**-12)
        n, k = neutral_sequence(line, [vol], rho)[0]
        ne, nk = max(n - 1, 0), max(k - 1, 0)
        kf = (3 * math.pi**2 * max(rho, 1e-12)) ** (1 / 3)
        kmax = kf * 1.3 + 8.0 / l
        while True:
            lev, mult = ball_dirichlet_levels(l, kmax)
            if 2 * int(mult.sum()) >= ne and len(lev):
                break
            kmax *= 1.3
        E1 = _fermi_fill(lev, mult, ne) + nk * lev[0] / M
        t1 = E1 / vol
        t2 = -mean_inverse_distance(l**-4) / vol
        rows.append({"l": l, "volume": vol, "N": [n, k], "term1": t1, "term2": t2, "total": t1 + t2})
    l_arr = np.array(ls)
    t2 = np.array([r["term2"] for r in rows])
    t1 = np.array([r["term1"] for r in rows])
    slope = float(np.polyfit(l_arr, t2, 1)[0])
    expected = -9 / (10 * math.pi)
    f1 = fit_surface(l_arr, t1, 2) if len(ls) >= 2 else None
    lim = f1.p_inf if f1 else float("nan")
    dev = float(np.max(np.abs(t1 - lim)) / abs(lim)) if f1 else float("nan")
    totals = np.array([r["total"] for r in rows])
    return {"rows": rows, "slope": slope, "expected_slope": expected,
            "slope_error": abs(slope - expected) / abs(expected),
            "term1_limit": lim, "term1_max_deviation": dev,
            "term1_reference": fermi_energy_density(rho),
            "total_decreasing": bool(np.all(np.diff(totals) < 0)), "note": NOTE}
