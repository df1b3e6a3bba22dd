"""Ideal-gas thermodynamics of electrons (spin 1/2 fermions) and nuclei (spinless bosons).

Everything is computed from one-particle spectra.  Canonical partition
functions are elementary (Fermi) or complete (Bose) symmetric polynomials of
the Boltzmann factors.  Fermions use a log-domain product expansion; bosons
use the occupation-number recursion, whose terms are all positive.  The
signed recursion for fermions is kept as an alternative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import logsumexp

from .errors import BoseCondensationError, ConfigurationError

__all__ = [
    "SpeciesSpectrum",
    "ChemPot",
    "ThermoResult",
    "NeutralLine",
    "CanonicalZ",
    "electrons",
    "nuclei",
    "log_grand_partition",
    "grand_pressure",
    "canonical_Z",
    "canonical_table",
    "free_energy_density",
    "ground_state_grand",
    "legendre_gap",
    "legendre_check",
    "one_mode_gap",
    "BOSE_MARGIN",
    "TAIL_BOUND",
]

BOSE_MARGIN = 1e-6
TAIL_BOUND = 1e-14


@dataclass(frozen=True)
class SpeciesSpectrum:
    eigenvalues: np.ndarray  # of -Laplacian
    statistics: str  # "fermi" or "bose"
    g_s: int = 1
    mass_factor: float = 1.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        ev = np.sort(np.asarray(self.eigenvalues, float).ravel())
        object.__setattr__(self, "eigenvalues", ev)
        if self.statistics not in ("fermi", "bose"):
            raise ConfigurationError("statistics must be 'fermi' or 'bose'")
        if self.g_s not in (1, 2):
            raise ConfigurationError("spin degeneracy must be 1 or 2")
        if not self.mass_factor > 0:
            raise ConfigurationError("mass factor must be positive")

    @property
    def energies(self) -> np.ndarray:
        return self.mass_factor * self.eigenvalues

    @property
    def fermi(self) -> bool:
        return self.statistics == "fermi"

    def __len__(self):
        return len(self.eigenvalues)


def electrons(eigs, provenance=None) -> SpeciesSpectrum:
    return SpeciesSpectrum(eigs, "fermi", 2, 1.0, provenance or {})


def nuclei(eigs, M: float, provenance=None) -> SpeciesSpectrum:
    return SpeciesSpectrum(eigs, "bose", 1, 1.0 / M, provenance or {})


@dataclass(frozen=True)
class ChemPot:
    mu_n: float  # electrons
    mu_k: float  # nuclei

    def __iter__(self):
        return iter((self.mu_n, self.mu_k))


def _chempot(mu) -> ChemPot:
    return mu if isinstance(mu, ChemPot) else ChemPot(*map(float, mu))


@dataclass
class ThermoResult:
    kind: str
    value: float
    beta: float | None = None
    mu: tuple | None = None
    N: tuple | None = None
    volume: float | None = None
    truncation_bound: float = 0.0
    provenance: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("kind", "value", "beta", "mu", "N", "volume", "truncation_bound")}
        out["provenance"] = self.provenance
        out.update(self.extra)
        return out


@dataclass(frozen=True)
class NeutralLine:
    """Neutral densities ``rho_k = z rho_e`` with rational ``z = p / q``."""

    z: Fraction

    def __post_init__(self):
        z = Fraction(str(self.z)) if not isinstance(self.z, Fraction) else self.z
        if z <= 0:
            raise ConfigurationError("charge must be positive")
        object.__setattr__(self, "z", z)

    @property
    def step(self) -> int:
        """Smallest electron number with an integer nuclear partner."""
        return self.z.denominator

    def partner(self, n: int) -> int:
        k = self.z * n
        if k.denominator != 1:
            raise ConfigurationError(f"z*n = {k} is not an integer")
        return int(k)

    def densities(self, n: int, volume: float) -> tuple[float, float]:
        return n / volume, self.partner(n) / volume


# -- grand canonical ---------------------------------------------------------


def _species_log_xi(s: SpeciesSpectrum, beta: float, mu: float) -> tuple[float, float]:
    """(log Xi contribution, truncation tail bound)."""
    if len(s) == 0:
        return 0.0, 0.0
    eps = s.energies
    if s.fermi:
        terms = s.g_s * np.log1p(np.exp(-beta * (eps - mu)))
    else:
        if eps[0] - mu < BOSE_MARGIN:
            raise BoseCondensationError(
                f"Bose condensation threshold violated: mu_k={mu} vs ground mode {eps[0]}")
        terms = -s.g_s * np.log1p(-np.exp(-beta * (eps - mu)))
    tail = float(np.exp(-beta * (eps[-1] - mu)))
    return math.fsum(terms), tail


def log_grand_partition(e: SpeciesSpectrum | None, nuc: SpeciesSpectrum | None, beta: float, mu) -> tuple[float, float]:
    """``log Xi`` and the declared truncation tail bound."""
    if not beta > 0:
        raise ConfigurationError("beta must be positive")
    mu = _chempot(mu)
    a, ta = _species_log_xi(e, beta, mu.mu_n) if e is not None else (0.0, 0.0)
    b, tb = _species_log_xi(nuc, beta, mu.mu_k) if nuc is not None else (0.0, 0.0)
    return a + b, max(ta, tb)


def grand_pressure(e, nuc, beta: float, mu, vol: float, provenance=None) -> ThermoResult:
    """``p = log Xi / (beta |Lambda|)``."""
    lx, tail = log_grand_partition(e, nuc, beta, mu)
    mu = _chempot(mu)
    return ThermoResult("p", lx / (beta * vol), beta, tuple(mu), None, vol, tail, provenance or {},
                        {"log_xi": lx, "truncation_ok": tail <= TAIL_BOUND})


# -- canonical ---------------------------------------------------------------


@dataclass(frozen=True)
class CanonicalZ:
    N: int
    log_value: float
    feasible: bool

    @property
    def value(self) -> float:
        return math.exp(self.log_value) if self.feasible else 0.0


def _log_elementary(logx: np.ndarray, N: int) -> np.ndarray:
    """log e_n of the values exp(logx), n = 0..N."""
    L = np.full(N + 1, -np.inf)
    L[0] = 0.0
    for lx in logx:
        L[1:] = np.logaddexp(L[1:], lx + L[:-1])
    return L


def canonical_table(s: SpeciesSpectrum, N: int, beta: float, method: str = "dp") -> np.ndarray:
    """``log Z_n`` for n = 0..N (``-inf`` where infeasible)."""
    if N < 0:
        raise ConfigurationError("N must be nonnegative")
    if not beta > 0:
        raise ConfigurationError("beta must be positive")
    logx = -beta * s.energies
    if method == "dp":
        if not s.fermi:
            # the Newton recursion has only positive terms for bosons
            return _recursion(s, N, beta)
        return _log_elementary(np.repeat(logx, s.g_s), N)
    if method == "recursion":
        return _recursion(s, N, beta)
    raise ConfigurationError(f"unknown method {method!r}")


def _recursion(s: SpeciesSpectrum, N: int, beta: float) -> np.ndarray:
    """``Z_N = (1/N) sum_m sign^(m+1) z1(m beta) Z_{N-m}`` with signs tracked in log form."""
    sgn = -1.0 if s.fermi else 1.0
    eps = s.energies
    shift = eps[0] if len(eps) else 0.0
    # z1(m beta) * exp(m beta shift), kept finite by the shift
    logz1 = [None] + [math.log(s.g_s) + logsumexp(-m * beta * (eps - shift)) if len(eps) else -np.inf
                      for m in range(1, N + 1)]
    logZ = np.full(N + 1, -np.inf)
    sign = np.zeros(N + 1)
    logZ[0], sign[0] = 0.0, 1.0
    for n in range(1, N + 1):
        terms = np.array([logz1[m] + logZ[n - m] for m in range(1, n + 1)])
        signs = np.array([sgn ** (m + 1) * sign[n - m] for m in range(1, n + 1)])
        val, sg = logsumexp(terms, b=signs, return_sign=True)
        logZ[n] = val - math.log(n)
        sign[n] = sg
    # undo the shift; cancellation can leave tiny negative values for infeasible N
    out = logZ - beta * shift * np.arange(N + 1)
    out[sign <= 0] = -np.inf
    return out


def canonical_Z(s: SpeciesSpectrum, N: int, beta: float, method: str = "dp") -> CanonicalZ:
    if s.fermi and N > s.g_s * len(s):
        return CanonicalZ(N, -np.inf, False)
    lz = float(canonical_table(s, N, beta, method)[N])
    return CanonicalZ(N, lz, bool(np.isfinite(lz)))


def free_energy_density(e, nuc, n: int, z, beta: float, vol: float, provenance=None) -> ThermoResult:
    """Neutral canonical free energy density with ``k = z n`` nuclei."""
    line = NeutralLine(z)
    k = line.partner(n)
    ze = canonical_Z(e, n, beta)
    zk = canonical_Z(nuc, k, beta) if nuc is not None else CanonicalZ(k, 0.0 if k == 0 else -np.inf, k == 0)
    feasible = ze.feasible and zk.feasible
    f = -(ze.log_value + zk.log_value) / (beta * vol) if feasible else np.inf
    return ThermoResult("f", f, beta, None, (n, k), vol, 0.0, provenance or {},
                        {"feasible": feasible, "log_Z": ze.log_value + zk.log_value})


# -- ground state ------------------------------------------------------------


def ground_state_grand(e, nuc, mu, vol: float | None = None, provenance=None) -> ThermoResult:
    """``G = inf spec(H - mu N)`` for the ideal gas; ``-inf`` when bosons run away."""
    mu = _chempot(mu)
    G = 0.0
    if e is not None and len(e):
        G = e.g_s * math.fsum(np.minimum(0.0, e.energies - mu.mu_n))
    unbounded = nuc is not None and len(nuc) > 0 and mu.mu_k > nuc.energies[0]
    if unbounded:
        G = -np.inf
    extra = {"unbounded": bool(unbounded)}
    if vol is not None:
        extra["g"] = G / vol
    return ThermoResult("G", G, None, tuple(mu), None, vol, 0.0, provenance or {}, extra)


# -- Legendre duality --------------------------------------------------------


def one_mode_gap(x: float, beta: float, vol: float) -> float:
    """Grand minus best canonical term for one spin-1/2 mode with fugacity factor ``x``."""
    return (2 * math.log1p(x) - math.log(max(1.0, 2 * x, x * x))) / (beta * vol)


def legendre_gap(e, nuc, beta: float, mu, vol: float, z=None, n_max: int | None = None,
                 mode: str = "neutral") -> dict:
    """``sup_rho (rho.mu - f) - p`` at one volume.

    ``mode="neutral"`` restricts both sides to neutral particle numbers
    ``(n, z n)``; ``mode="free"`` uses all ``(n, k)`` and the ordinary
    grand pressure.  The difference is never positive.
    """
    mu = _chempot(mu)
    ne = (e.g_s * len(e)) if e is not None else 0
    if n_max is None:
        n_max = ne
    logZe = canonical_table(e, n_max, beta) if e is not None else np.array([0.0])
    if mode == "neutral":
        line = NeutralLine(1 if z is None else z)
        ns = np.arange(0, len(logZe), line.step)
        ks = np.array([line.partner(int(n)) for n in ns])
        logZk = canonical_table(nuc, int(ks.max()), beta) if nuc is not None else np.where(np.arange(ks.max() + 1) == 0, 0.0, -np.inf)
        terms = logZe[ns] + logZk[ks] + beta * (ns * mu.mu_n + ks * mu.mu_k)
        log_xi = logsumexp(terms)
        best = int(np.argmax(terms))
        rho = (ns[best] / vol, ks[best] / vol)
    elif mode == "free":
        kmax = n_max if nuc is not None else 0
        logZk = canonical_table(nuc, kmax, beta) if nuc is not None else np.array([0.0])
        te = logZe + beta * mu.mu_n * np.arange(len(logZe))
        tk = logZk + beta * mu.mu_k * np.arange(len(logZk))
        log_xi, _ = log_grand_partition(e, nuc, beta, mu)
        ie, ik = int(np.argmax(te)), int(np.argmax(tk))
        terms = np.array([te[ie] + tk[ik]])
        best = 0
        rho = (ie / vol, ik / vol)
    else:
        raise ConfigurationError("mode is 'neutral' or 'free'")
    sup = terms[best] / (beta * vol)
    p = log_xi / (beta * vol)
    return {"volume": vol, "sup": float(sup), "p": float(p), "difference": float(sup - p),
            "gap": float(p - sup), "optimizer": rho}


def legendre_check(beta: float, mus, family, z=1, mode: str = "neutral") -> dict:
    """Duality gaps over a chemical-potential grid for a family of volumes.

    ``family`` holds ``(electrons, nuclei, volume)`` triples.  The worst gap
    per volume is extrapolated to infinite volume with the ansatz
    ``a + b log(V) / V``.
    """
    rows = []
    for e, nuc, vol in family:
        gaps = [legendre_gap(e, nuc, beta, mu, vol, z, mode=mode) for mu in mus]
        rows.append({"volume": vol, "gaps": [g["gap"] for g in gaps],
                     "optimizers": [g["optimizer"] for g in gaps],
                     "worst_gap": max(g["gap"] for g in gaps)})
    V = np.array([r["volume"] for r in rows], float)
    w = np.array([r["worst_gap"] for r in rows])
    if len(V) >= 2:
        X = np.stack([np.ones_like(V), np.log(V) / V], 1)
        coef, *_ = np.linalg.lstsq(X, w, rcond=None)
        a = float(coef[0])
    else:
        a = float("nan")
    ref = float(w[np.argmin(V)])
    return {"rows": rows, "extrapolated_gap": a, "reference_gap": ref,
            "relative_extrapolated_gap": abs(a) / ref if ref > 0 else 0.0}
