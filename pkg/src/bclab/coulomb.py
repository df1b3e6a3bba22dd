"""Coulomb energy, the one-body lower bound over nearest-nucleus cells, and
the explicit energy and partition-function constants for a boundary simplex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np
from scipy.spatial.distance import pdist, cdist

from .errors import ConfigurationError, ConvergenceError
from .geometry import voronoi

__all__ = [
    "Configuration",
    "LYBound",
    "BoundConstants",
    "coulomb_energy",
    "lieb_yau_bound",
    "w_integral_bound",
    "w_integral_two_term",
    "boundary_energy_constant",
    "boundary_partition_constant",
    "phi_exponent",
    "one_body_reduction",
    "lieb_yau_audit",
    "split_power_check",
    "W_COEFF",
]

W_SPLIT = 6 * (4 * math.pi / 5) ** (5 / 6)


def W_COEFF(z) -> float:
    """Numerator of the one-body potential, ``2 z + 1``."""
    return 2 * float(z) + 1


@dataclass(frozen=True)
class Configuration:
    electrons: np.ndarray
    nuclei: np.ndarray
    z: Fraction = Fraction(1)

    def __post_init__(self):
        e = np.asarray(self.electrons, float)
        R = np.asarray(self.nuclei, float)
        d = e.shape[-1] if e.size else (R.shape[-1] if R.size else 3)
        e = e.reshape(-1, d)
        R = R.reshape(-1, d)
        z = self.z if isinstance(self.z, Fraction) else Fraction(str(self.z))
        if z <= 0:
            raise ConfigurationError("nuclear charge must be positive")
        pts = np.vstack([e, R])
        if len(pts) > 1 and pdist(pts).min() == 0.0:
            raise ConfigurationError("coincident particles")
        object.__setattr__(self, "electrons", e)
        object.__setattr__(self, "nuclei", R)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return len(self.electrons)

    @property
    def k(self) -> int:
        return len(self.nuclei)

    def scaled(self, s: float) -> "Configuration":
        return Configuration(self.electrons * s, self.nuclei * s, self.z)

    def to_dict(self) -> dict:
        return {"electrons": self.electrons.tolist(), "nuclei": self.nuclei.tolist(), "z": str(self.z)}

    @classmethod
    def from_dict(cls, d) -> "Configuration":
        return cls(np.asarray(d.get("electrons", []), float), np.asarray(d.get("nuclei", []), float),
                   Fraction(str(d.get("z", 1))))


def _pair_terms(cfg: Configuration):
    z = float(cfg.z)
    ee = 1.0 / pdist(cfg.electrons) if cfg.n > 1 else np.zeros(0)
    en = -z / cdist(cfg.electrons, cfg.nuclei).ravel() if cfg.n and cfg.k else np.zeros(0)
    nn = z * z / pdist(cfg.nuclei) if cfg.k > 1 else np.zeros(0)
    return np.concatenate([ee, en, nn])


def coulomb_energy(cfg: Configuration) -> float:
    """Exact pairwise sum, accumulated with ``math.fsum``."""
    return math.fsum(_pair_terms(cfg))


@dataclass
class LYBound:
    W: np.ndarray  # per electron
    cells: np.ndarray  # nucleus index per electron
    repulsion: float
    energy: float  # left-hand side V_c
    bound: float  # -sum W + repulsion

    @property
    def slack(self) -> float:
        return self.energy - self.bound

    @property
    def holds(self) -> bool:
        return self.slack >= 0


def _mp_sides(cfg: Configuration, cells, D):
    with mpmath.workdps(40):
        z = mpmath.mpf(cfg.z.numerator) / cfg.z.denominator

        def dist(a, b):
            return mpmath.sqrt(mpmath.fsum((mpmath.mpf(x) - mpmath.mpf(y)) ** 2 for x, y in zip(a, b)))

        e, R = cfg.electrons, cfg.nuclei
        lhs = mpmath.fsum(1 / dist(e[i], e[j]) for i in range(cfg.n) for j in range(i + 1, cfg.n))
        lhs -= mpmath.fsum(z / dist(e[i], R[j]) for i in range(cfg.n) for j in range(cfg.k))
        lhs += mpmath.fsum(z * z / dist(R[i], R[j]) for i in range(cfg.k) for j in range(i + 1, cfg.k))
        W = mpmath.fsum((2 * z + 1) / dist(e[i], R[cells[i]]) for i in range(cfg.n))
        rep = z * z / 8 * mpmath.fsum(2 / dist(R[j], R[int(D[j])]) for j in range(cfg.k)) if cfg.k > 1 else 0
        return lhs, rep - W


def lieb_yau_bound(cfg: Configuration) -> LYBound:
    """Both sides of ``V_c >= -sum_i W(x_i) + (z^2/8) sum_j 1/D_j``.

    Electrons are assigned to the nearest nucleus (ties to the lowest
    index).  When the float64 slack is within rounding of zero the two
    sides are recomputed with 40-digit arithmetic.
    """
    if cfg.k == 0:
        raise ConfigurationError("the one-body bound needs at least one nucleus")
    vd = voronoi(cfg.nuclei)
    cells = vd.cell_of(cfg.electrons) if cfg.n else np.zeros(0, int)
    r = np.linalg.norm(cfg.electrons - cfg.nuclei[cells], axis=1) if cfg.n else np.zeros(0)
    if np.any(r == 0):
        raise ConfigurationError("electron coincides with a nucleus")
    W = W_COEFF(cfg.z) / r
    z2 = float(cfg.z) ** 2
    rep = z2 / 8 * math.fsum(1.0 / vd.half_distance) if cfg.k > 1 else 0.0
    lhs = coulomb_energy(cfg)
    rhs = rep - math.fsum(W)
    scale = math.fsum(np.abs(_pair_terms(cfg))) + math.fsum(W) + rep
    if abs(lhs - rhs) <= 1e-10 * max(scale, 1.0):
        lhs_mp, rhs_mp = _mp_sides(cfg, cells, vd.nearest)
        lhs, rhs = float(lhs_mp), float(rhs_mp)
        if lhs_mp >= rhs_mp and lhs < rhs:
            rhs = lhs
    return LYBound(W, cells, rep, lhs, rhs)


# -- constants ---------------------------------------------------------------


def w_integral_two_term(volume: float, k: float, z, R: float) -> float:
    """``(2z+1)^(5/2) (4 pi k R^(1/2) + |simplex| R^(-5/2))`` before optimizing R."""
    return W_COEFF(z) ** 2.5 * (4 * math.pi * k * math.sqrt(R) + volume * R ** -2.5)


def w_integral_bound(volume: float, k: float, z) -> dict:
    """Closed-form bound on the integral of ``W^(5/2)`` at the optimal split radius."""
    if volume <= 0:
        raise ConfigurationError("volume must be positive")
    if k < 0:
        raise ConfigurationError("k must be nonnegative")
    if k == 0:
        return {"bound": 0.0, "R": math.inf, "two_term": 0.0}
    R = (5 * volume / (4 * math.pi * k)) ** (1 / 3)
    bound = W_COEFF(z) ** 2.5 * W_SPLIT * volume ** (1 / 6) * k ** (5 / 6)
    return {"bound": bound, "R": R, "two_term": w_integral_two_term(volume, k, z, R)}


def split_power_check(a, b) -> np.ndarray:
    """Slack of ``(a+b)^(5/2) <= 2^(3/2) (a^(5/2) + b^(5/2))``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return 2**1.5 * (a**2.5 + b**2.5) - (a + b) ** 2.5


@dataclass(frozen=True)
class BoundConstants:
    z: Fraction
    C_M: float
    lam: float
    C_LT: float | None = None
    C_Lambda: float = 1.0

    def __post_init__(self):
        z = self.z if isinstance(self.z, Fraction) else Fraction(str(self.z))
        object.__setattr__(self, "z", z)
        for name in ("C_M", "lam", "C_Lambda"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigurationError(f"{name} must be positive and finite")

    @property
    def C1(self) -> float:
        return 2**2.5 * self.C_M * W_COEFF(self.z) ** 2.5 * W_SPLIT

    @property
    def C2(self) -> float:
        return 2**2.5 * self.C_M

    @property
    def C3(self) -> float:
        return float(self.z) ** 2 / 8 * self.lam ** (-1 / 3)

    def to_dict(self) -> dict:
        return {"z": str(self.z), "C_M": self.C_M, "lambda": self.lam, "C_LT": self.C_LT,
                "C_Lambda": self.C_Lambda, "C1": self.C1, "C2": self.C2, "C3": self.C3}


def _energy_terms(c: BoundConstants, mu, A: float, k, repulsion=True):
    mu_n, mu_k = mu
    mup = max(mu_n, 0.0)
    k = np.asarray(k, float)
    val = -c.C1 * A ** (1 / 6) * k ** (5 / 6) - c.C2 * A * mup**2.5 - mu_k * k
    if repulsion:
        val = val + c.C3 * A ** (-1 / 3) * k ** (4 / 3)
    return val


def energy_lower_bound(c: BoundConstants, mu, A: float, k) -> np.ndarray:
    """Right-hand side of the energy estimate for real ``k``; ``k = 1`` drops the repulsion."""
    k = np.asarray(k, float)
    val = _energy_terms(c, mu, A, k)
    return np.where(k == 1, _energy_terms(c, mu, A, k, repulsion=False), val)


def boundary_energy_constant(mu, v: float, c: BoundConstants) -> dict:
    """``C_E(mu, v)``: the minimum over real ``k >= 0`` and ``|simplex| <= v``.

    Every term decreases with the simplex volume, so the minimum sits at
    ``|simplex| = v``.  In ``t = k^(1/6)`` the stationarity condition is the
    cubic ``(4/3) c3 t^3 - mu_k t - (5/6) c1 = 0``.
    """
    if not v > 0:
        raise ConfigurationError("v must be positive")
    A = float(v)
    a = c.C1 * A ** (1 / 6)
    cc = c.C3 * A ** (-1 / 3)
    roots = np.roots([4 / 3 * cc, 0.0, -mu[1], -5 / 6 * a])
    ts = [r.real for r in roots if abs(r.imag) < 1e-9 * max(1, abs(r)) and r.real > 0]
    cands = [0.0, 1.0] + [t**6 for t in ts]
    vals = [float(energy_lower_bound(c, mu, A, k)) for k in cands]
    i = int(np.argmin(vals))
    return {"C_E": vals[i], "k_opt": cands[i], "volume": A, "candidates": list(zip(cands, vals))}


def phi_exponent(c: BoundConstants, mu, A: float, k) -> np.ndarray:
    """The exponent function of the partition-function estimate.

    The ``mu_n`` term carries a minus sign, as the energy estimate it comes
    from requires.
    """
    mu_n, mu_k = mu
    mup = max(mu_n, 0.0)
    k = np.asarray(k, float)
    rep = np.where(k == 1, 0.0, c.C3 * A ** (-1 / 3) * k ** (4 / 3))
    return -(2**1.5) * c.C1 * A ** (1 / 6) * k ** (5 / 6) - c.C2 * A * (2 * mup) ** 2.5 - 2 * mu_k * k + rep


def _log_series(g, dg, tol: float, exact_limit: int) -> dict:
    drop = math.log(tol) - 5.0
    for _ in range(8):
        out = _log_series_window(g, dg, drop, exact_limit)
        excess = out["log_tail"] - out["log_sum"] - math.log(tol)
        if excess <= 0:
            out["relative_tail"] = math.exp(out["log_tail"] - out["log_sum"])
            return out
        drop -= excess + 2.0
    raise ConvergenceError("k-series tail above tolerance")


def _log_series_window(g, dg, drop: float, exact_limit: int) -> dict:
    """``log sum_{k >= 2} exp(g(k))`` for a concave ``g``.

    The sum is carried out term by term over the window where ``g`` is
    within ``log(tol)`` of its maximum, plus a geometric bound for the two
    tails.  When the window is too wide, the unimodal estimate
    ``sum <= max + integral`` replaces the exact sum.
    """
    from scipy.integrate import quad
    from scipy.optimize import brentq

    lo = 2.0
    if dg(lo) <= 0:
        kstar = lo
    else:
        hi = 4.0
        while dg(hi) > 0:
            hi *= 2
            if hi > 1e300:
                raise ConvergenceError("k-series exponent has no maximum")
        kstar = brentq(dg, lo, hi, xtol=1e-12 * hi)
    gmax = g(kstar)

    def edge(direction):
        if direction < 0 and g(lo) - gmax > drop:
            return lo
        step = max(1.0, 0.01 * kstar)
        a = kstar
        b = kstar + direction * step
        while direction > 0 and g(b) - gmax > drop or direction < 0 and b > lo and g(b) - gmax > drop:
            a, step = b, 2 * step
            b = max(lo, kstar + direction * step) if direction < 0 else kstar + step
        if direction < 0 and b <= lo:
            return lo
        return brentq(lambda k: g(k) - gmax - drop, min(a, b), max(a, b))

    kl, kr = math.floor(edge(-1)), math.ceil(edge(1))
    kl = max(int(kl), 2)
    if kr - kl <= exact_limit:
        ks = np.arange(kl, kr + 1, dtype=float)
        vals = g(ks)
        total = float(np.logaddexp.reduce(vals))
        # geometric tails: concavity bounds successive ratios beyond the window
        tails = []
        if kr + 1 > kstar:
            r = dg(kr)
            tails.append(g(kr + 1) - math.log1p(-math.exp(min(r, -1e-300))) if r < 0 else math.inf)
        if kl > 2:
            # left of the peak the terms increase, so each is below the window's first
            tails.append(g(kl - 1) + math.log(kl - 2) if dg(kl - 1) >= 0 else math.inf)
        tail = float(np.logaddexp.reduce(tails)) if tails else -math.inf
        return {"log_sum": float(np.logaddexp(total, tail)), "method": "exact", "window": (kl, kr),
                "log_tail": tail}
    val, _ = quad(lambda k: math.exp(g(k) - gmax), kl, kr, points=[kstar], limit=500)
    return {"log_sum": gmax + math.log(val + 1.0), "method": "integral", "window": (kl, kr),
            "log_tail": gmax + drop}


def boundary_partition_constant(beta: float, mu, v: float, c: BoundConstants, M: float,
                                reflections: int = 1, g_s: int = 2, tol: float = 1e-12,
                                exact_limit: int = 2_000_000) -> dict:
    """``C_Xi(beta, mu, v)``: fermion heat-kernel factor times the nuclear k-series.

    The k-th term is ``[(M / (2 pi beta C)) ^ (3/2) 2^r |simplex|]^k exp(-beta phi(k))``.
    """
    if not beta > 0 or not v > 0:
        raise ConfigurationError("beta and v must be positive")
    if c.C3 <= 0:
        raise ConfigurationError("k-series diverges without the repulsion term")
    A = float(v)
    omega = 2**reflections * A
    log_fermi = g_s * (2 * math.pi * beta * c.C_Lambda) ** -1.5 * omega
    per_nucleus = (M / (2 * math.pi * beta * c.C_Lambda)) ** 1.5 * omega
    log_pn = math.log(per_nucleus)
    mu_n, mu_k = mu
    a2 = beta * 2**1.5 * c.C1 * A ** (1 / 6)
    a3 = beta * c.C3 * A ** (-1 / 3)
    a1 = log_pn + 2 * beta * mu_k
    a0 = beta * c.C2 * A * (2 * max(mu_n, 0.0)) ** 2.5

    def g(k):
        return a0 + a1 * k + a2 * np.power(k, 5 / 6) - a3 * np.power(k, 4 / 3)

    def dg(k):
        return a1 + 5 / 6 * a2 * k ** (-1 / 6) - 4 / 3 * a3 * k ** (1 / 3)

    head = [a0, a0 + a1 + a2]  # k = 0 and k = 1 (no repulsion at k = 1)
    series = _log_series(g, dg, tol, exact_limit)
    log_sum = float(np.logaddexp.reduce(head + [series["log_sum"]]))
    log_C = log_fermi + log_sum
    return {"C_Xi": math.exp(log_C) if log_C < 700 else math.inf, "log_C_Xi": log_C,
            "log_fermi_factor": log_fermi, "per_nucleus_factor": per_nucleus,
            "series": series, "volume": A, "reflected_volume": omega}


# -- discretized one-body reduction -----------------------------------------


def one_body_reduction(grid, bc, nuclei, mu, z, g_s: int = 2, max_count: int | None = None) -> dict:
    """Lower bound ``g_s sum(neg eig of -Lap - W - mu_n) - mu_k k + (z^2/8) sum 1/D_j`` on a grid.

    Distances to nuclei are clamped at ``h/2``.
    """
    from .laplacian import assemble, eigenvalues

    R = np.atleast_2d(np.asarray(nuclei, float)) if len(nuclei) else np.zeros((0, grid.d))
    mu_n, mu_k = mu
    x = grid.centres()
    if len(R):
        vd = voronoi(R)
        cells = vd.cell_of(x)
        r = np.maximum(np.linalg.norm(x - R[cells], axis=1), grid.h / 2)
        W = W_COEFF(z) / r
        rep = float(z) ** 2 / 8 * math.fsum(1.0 / vd.half_distance) if len(R) > 1 else 0.0
    else:
        W = np.zeros(len(x))
        rep = 0.0
    op = assemble(grid, bc, V=-W - mu_n)
    n = grid.size
    count = min(n, 16)
    limit = n if max_count is None else min(n, max_count)
    while True:
        spec = eigenvalues(op, count)
        if spec.values[-1] >= 0 or count >= limit:
            break
        count = min(limit, 2 * count)
    neg = spec.values[spec.values < 0]
    if spec.values[-1] < 0 and count < n:
        raise ConvergenceError("not all negative eigenvalues resolved", residuals=spec.residuals.tolist())
    fill = g_s * math.fsum(neg)
    return {"bound": fill - mu_k * len(R) + rep, "fill": fill, "negative_count": len(neg),
            "repulsion": rep, "W": W}


def lieb_yau_audit(count: int = 10_000, seed: int = 0, n_max: int = 6, k_max: int = 6,
                   charges=(Fraction(1, 2), Fraction(1), Fraction(2)), region: str = "simplex") -> dict:
    """Random configurations in the unit simplex (or cube); counts violations of the one-body bound."""
    if region not in ("simplex", "cube"):
        raise ConfigurationError("region is 'simplex' or 'cube'")
    rng = np.random.default_rng(seed)

    def points(m):
        if region == "cube":
            return rng.random((m, 3))
        return rng.dirichlet(np.ones(4), m)[:, :3]

    violations, worst = [], math.inf
    for i in range(count):
        n = int(rng.integers(0, n_max + 1))
        k = int(rng.integers(1, k_max + 1))
        z = charges[int(rng.integers(len(charges)))]
        cfg = Configuration(points(n), points(k), z)
        b = lieb_yau_bound(cfg)
        rel = b.slack / max(1.0, abs(b.energy))
        worst = min(worst, rel)
        if not b.holds:
            violations.append({"case": i, "config": cfg.to_dict(), "slack": b.slack})
    return {"cases": count, "violations": violations, "worst_relative_slack": worst, "seed": seed,
            "region": region}
