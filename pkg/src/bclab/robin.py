"""Elastic (Robin) boundary conditions: inward fields, the Robin-to-Neumann
form bound and its spectral checks.

Convention: elasticity ``sigma`` enters the quadratic form as
``sigma * int_boundary |u|^2``.  In one dimension this is ``u' = sigma u`` at
the left end and ``u' = -sigma u`` at the right end (derivative along the
inward normal equals ``sigma u``).  Larger ``sigma`` means a larger form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, linprog
from scipy.spatial import ConvexHull

from .errors import ConfigurationError, ConvergenceError
from .geometry import Domain
from .laplacian import BCSpec, Dirichlet, Grid, Neumann, Robin, assemble, eigenvalues

__all__ = [
    "VectorField",
    "RobinParams",
    "build_inward_field",
    "robin_lower_bound_params",
    "robin_spectrum_1d",
    "surface_estimate_1d",
    "verify_robin_bound",
    "verify_robin_bound_1d",
    "verify_robin_bound_extrapolated",
    "robin_partition_constant",
]


@dataclass(frozen=True)
class VectorField:
    """Affine field ``xi(x) = G (x / L - c)`` on the scaled domain ``L * base``.

    ``sup_xi`` and ``grad_base`` refer to the unscaled field.  ``grad_base``
    bounds ``|div xi|``, the quantity the Gauss identity puts in front of
    ``|phi|^2``; the scaled bound is ``grad_base / L``.
    """

    base: Domain
    L: float
    G: np.ndarray  # constant Jacobian of the unscaled field
    c: np.ndarray
    sup_xi: float
    grad_base: float

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        return (x / self.L - self.c) @ self.G.T

    def jacobian(self) -> np.ndarray:
        return self.G / self.L

    @property
    def sup_grad(self) -> float:
        return self.grad_base / self.L

    def boundary_samples(self, n: int = 1000, seed: int = 0):
        """Points on the boundary of ``L * base`` with inward unit normals."""
        rng = np.random.default_rng(seed)
        dom = self.base
        d = dom.dim
        if dom.kind == "ball":
            v = rng.standard_normal((n, d))
            v /= np.linalg.norm(v, axis=1)[:, None]
            pts = dom.ball_center + dom.ball_radius * v
            return self.L * pts, -v
        A, b = _facets(dom)
        if d == 1:
            lo, hi = -b[1], b[0]
            side = rng.integers(0, 2, n)
            pts = np.where(side == 0, hi, lo)[:, None]
            nrm = np.where(side == 0, -1.0, 1.0)[:, None]
            return self.L * pts, nrm
        V = dom.vertex_array
        pts, nrm = [], []
        per = max(1, n // len(A))
        for a, bi in zip(A, b):
            on = np.abs(V @ a - bi) < 1e-9 * max(1.0, abs(bi))
            F = V[on]
            w = rng.dirichlet(np.ones(len(F)), size=per)
            pts.append(w @ F)
            nrm.append(np.tile(-a, (per, 1)))
        return self.L * np.vstack(pts), np.vstack(nrm)

    def check(self, n: int = 1000, seed: int = 0) -> float:
        """Smallest ``-n . xi`` over sampled boundary points (should be >= 1)."""
        x, nrm = self.boundary_samples(n, seed)
        return float(np.min(-np.sum(nrm * self(x), axis=1)))


def _facets(dom: Domain):
    A, b = dom.halfspaces()
    keep = []
    for i in range(len(A)):
        if not any(np.allclose(A[i], A[j]) and math.isclose(b[i], b[j], abs_tol=1e-12) for j in keep):
            keep.append(i)
    return A[keep], b[keep]


def build_inward_field(domain: Domain, L: float = 1.0) -> VectorField:
    """Field with ``n . xi <= -1`` on the boundary of ``L * domain`` (``n`` inward)."""
    if not L > 0:
        raise ConfigurationError("L must be positive")
    d = domain.dim
    if domain.kind in ("interval", "box"):
        lo, hi = domain.lo, domain.hi
        a = hi - lo
        G = np.diag(2 / a)
        c = (lo + hi) / 2
        return VectorField(domain, L, G, c, math.sqrt(d), float(np.sum(2 / a)))
    if domain.kind == "ball":
        R = domain.ball_radius
        return VectorField(domain, L, np.eye(d) / R, domain.ball_center, 1.0, d / R)
    if domain.kind == "polytope":
        A, b = _facets(domain)
        # Chebyshev centre: maximise the distance rho to every facet
        res = linprog(np.r_[np.zeros(d), -1.0], A_ub=np.c_[A, np.ones(len(A))], b_ub=b,
                      bounds=[(None, None)] * d + [(0, None)])
        if not res.success:
            raise ConfigurationError("could not place a centre inside the polytope")
        c, rho = res.x[:d], res.x[d]
        sup = float(np.max(np.linalg.norm(domain.vertex_array - c, axis=1)) / rho)
        return VectorField(domain, L, np.eye(d) / rho, c, sup, d / rho)
    raise ConfigurationError(f"no inward field for {domain.kind}")


@dataclass(frozen=True)
class RobinParams:
    sigma: float
    eps: float | None
    tau: float
    C: float


def robin_lower_bound_params(sigma: float, field: VectorField, eps: float | None = None) -> RobinParams:
    """``(tau, C)`` with ``-Lap^sigma >= tau (-Lap^N) - C``."""
    if sigma >= 0:
        return RobinParams(sigma, eps, 1.0, 0.0)
    s = abs(sigma)
    eps = 2 * s if eps is None else float(eps)
    if eps <= s:
        raise ConfigurationError("eps must exceed |sigma| so that tau > 0")
    tau = 1 - s / eps
    C = s * (eps * field.sup_xi**2 + field.sup_grad)
    return RobinParams(sigma, eps, tau, C)


def surface_estimate_1d(field: VectorField, phi, dphi, eps: float) -> dict:
    """Both sides of ``|phi(0)|^2 + |phi(l)|^2 <= int (|phi'|^2/eps + eps |xi phi|^2 + |xi'| |phi|^2)``."""
    lo = float(field.L * field.base.lo[0])
    hi = float(field.L * field.base.hi[0])
    g = float(abs(field.jacobian()[0, 0]))

    def integrand(x):
        xi = float(field(np.array([[x]]))[0, 0])
        return dphi(x) ** 2 / eps + eps * (xi * phi(x)) ** 2 + g * phi(x) ** 2

    rhs, _ = quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
    lhs = phi(lo) ** 2 + phi(hi) ** 2
    return {"lhs": lhs, "rhs": rhs, "slack": rhs - lhs}


# -- 1D analytic spectrum ----------------------------------------------------


def _end(bc):
    """``(p, q)`` with ``p u + q du/dn_out = 0``."""
    if bc is None or (isinstance(bc, str) and bc.lower() == "dirichlet") or bc == math.inf:
        return 1.0, 0.0
    return float(bc), 1.0


def robin_spectrum_1d(length: float, sigma_left, sigma_right, count: int) -> np.ndarray:
    """Lowest ``count`` eigenvalues of ``-u''`` on ``[0, length]``.

    Each end takes a real elasticity or ``"dirichlet"``.  Roots of the
    exact matching conditions are bracketed on a fine scan and refined by
    Brent's method.
    """
    if count < 1:
        raise ConfigurationError("count must be at least 1")
    ell = float(length)
    end = _end(sigma_left)
    if end == _end(sigma_right) and end[1] == 1.0 and end[0] < 0:
        # symmetric ends: even and odd modes live on the half interval, which
        # keeps the exponentially close pair of surface states apart
        even = robin_spectrum_1d(ell / 2, sigma_left, 0.0, count)
        odd = robin_spectrum_1d(ell / 2, sigma_left, "dirichlet", count)
        return np.sort(np.concatenate([even, odd]))[:count]
    pL, qL = _end(sigma_left)
    pR, qR = _end(sigma_right)

    # u = qL cos(kx) + pL sin(kx)/k satisfies the left condition
    def F(k):
        c, s = math.cos(k * ell), math.sin(k * ell)
        u = qL * c + pL * s / k
        du = -qL * k * s + pL * c
        return pR * u + qR * du

    # lambda = -kappa^2; scaled by exp(-kappa l)
    def Gn(kap):
        e = math.exp(-2 * kap * ell)
        ch, sh = (1 + e) / 2, (1 - e) / 2
        u = qL * ch + pL * sh / kap
        du = qL * kap * sh + pL * ch
        return pR * u + qR * du

    values = []
    zero = pR * (qL + pL * ell) + qR * pL
    has_zero = abs(zero) < 1e-12 * (1 + abs(pR) + abs(qR)) * (1 + abs(pL) * ell + abs(qL))
    if has_zero:
        values.append(0.0)
    # near a zero mode both branches vanish to second order at the origin
    start = 1e-6 / ell if has_zero else 1e-9 / ell
    smax = max(abs(pL / qL) if qL else 0.0, abs(pR / qR) if qR else 0.0)
    if smax > 0:
        kmax = 2 * smax + 10.0 / ell
        grid = np.linspace(start, kmax, 20000)
        vals = np.array([Gn(x) for x in grid])
        for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
            kap = brentq(Gn, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15)
            values.append(-kap * kap)
    step = math.pi / (ell * 40)
    k0 = start
    f0 = F(k0)
    while len(values) < count:
        k1 = k0 + step
        f1 = F(k1)
        if f0 == 0.0:
            values.append(k0 * k0)
        elif f0 * f1 < 0:
            k = brentq(F, k0, k1, xtol=1e-15, rtol=1e-15)
            values.append(k * k)
        k0, f0 = k1, f1
        if k0 > 1e8 / ell:
            raise ConvergenceError("root bracketing failed")
    return np.sort(np.array(values))[:count]


# -- spectral verification ---------------------------------------------------


def _neumannized(bc: BCSpec) -> BCSpec:
    swap = lambda b: Neumann() if isinstance(b, Robin) else b  # noqa: E731
    return BCSpec({k: swap(v) for k, v in bc.pieces.items()}, swap(bc.default))


def _margin_rows(lam_s, lam_n, params):
    rows = []
    for k, (a, b) in enumerate(zip(lam_s, lam_n), 1):
        rhs = params.tau * b - params.C
        rows.append({"k": k, "lambda_sigma": float(a), "bound": float(rhs), "margin": float(a - rhs)})
    return rows


def verify_robin_bound(grid: Grid, bc: BCSpec, params: RobinParams, count: int) -> dict:
    """Check ``lambda_k^sigma >= tau lambda_k^N - C`` on one grid.

    ``bc`` carries the Robin pieces; the Neumann comparison replaces each
    Robin piece by Neumann and keeps the rest.
    """
    ls = eigenvalues(assemble(grid, bc), count).values
    ln = eigenvalues(assemble(grid, _neumannized(bc)), count).values
    rows = _margin_rows(ls, ln, params)
    return {"rows": rows, "worst_margin": min(r["margin"] for r in rows), "h": grid.h}


def verify_robin_bound_extrapolated(grids, bc: BCSpec, params: RobinParams, count: int) -> dict:
    """Richardson-extrapolated margins from grids at ``h`` and ``h/2``."""
    g1, g2 = grids
    s1 = eigenvalues(assemble(g1, bc), count).values
    s2 = eigenvalues(assemble(g2, bc), count).values
    n1 = eigenvalues(assemble(g1, _neumannized(bc)), count).values
    n2 = eigenvalues(assemble(g2, _neumannized(bc)), count).values
    ls = (4 * s2 - s1) / 3
    ln = (4 * n2 - n1) / 3
    rows = _margin_rows(ls, ln, params)
    raw = _margin_rows(s2, n2, params)
    return {"rows": rows, "worst_margin": min(r["margin"] for r in rows),
            "worst_raw_margin": min(r["margin"] for r in raw), "h": (g1.h, g2.h)}


def verify_robin_bound_1d(length: float, sigma: float, params: RobinParams, count: int) -> dict:
    """Margins from the exact 1D spectra (Robin at both ends vs Neumann)."""
    ls = robin_spectrum_1d(length, sigma, sigma, count)
    ln = robin_spectrum_1d(length, 0.0, 0.0, count)
    rows = _margin_rows(ls, ln, params)
    return {"rows": rows, "worst_margin": min(r["margin"] for r in rows)}


def robin_partition_constant(beta: float, mu, v: float, params: RobinParams, constants, M: float, **kw) -> dict:
    """``C_Xi(beta / tau, tau (mu + (C, C)), v / tau^3)`` for elastic boundaries."""
    from .coulomb import boundary_partition_constant

    t = params.tau
    mu2 = (t * (mu[0] + params.C), t * (mu[1] + params.C))
    return boundary_partition_constant(beta / t, mu2, v / t**3, constants, M, **kw)
