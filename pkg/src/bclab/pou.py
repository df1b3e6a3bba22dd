"""Smoothed partition of unity subordinate to the simplex tiling.

``j_alpha = (chi_alpha * phi^2)^(1/2)`` where ``phi^2`` is a radial bump of
width ``eta`` with unit integral.  ``j_alpha(x)^2`` is the mass of the bump
centred at ``x`` that falls into the simplex.  The mass is reduced to
one-dimensional integrals along the facets: the simplex is a signed sum of
cones from ``x`` over its facets, and in each cone only the radial profile
enters.  Facets farther than ``eta / 2`` contribute pure solid angles.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.integrate import quad

from .errors import ConfigurationError
from .geometry import SimplexGrid

__all__ = [
    "Mollifier",
    "PartitionOfUnity",
    "cell_defect_density",
    "fit_inverse_l",
    "mollifier_constant",
    "simplex_mass",
    "sliding_defect",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_PANELS = 4
# partial steps of a cumulative table are short, so fewer nodes suffice
_SHORT_X, _SHORT_W = np.polynomial.legendre.leggauss(6)
_SPHERE = {1: 2.0, 2: 2 * math.pi, 3: 4 * math.pi}


def _bump_sq(u):
    """exp(-2 / (1 - 4 u^2)) on |u| < 1/2, zero elsewhere."""
    u = np.abs(np.asarray(u, float))
    out = np.zeros_like(u)
    m = u < 0.5
    out[m] = np.exp(-2.0 / (1.0 - 4.0 * u[m] ** 2))
    return out


def mollifier_constant(d: int) -> float:
    """c such that phi_0 = c exp(-1/(1-4|x|^2)) has unit L^2 norm in R^d."""
    val, _ = quad(lambda r: float(_bump_sq(r)) * r ** (d - 1), 0, 0.5, epsabs=1e-15, epsrel=1e-13)
    return 1.0 / math.sqrt(_SPHERE[d] * val)


def _gl_integrate(f, a, b, panels=_PANELS):
    """Composite Gauss-Legendre integral of a vectorised f over [a, b] (arrays)."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    total = np.zeros(np.broadcast(a, b).shape)
    edges = np.linspace(0.0, 1.0, panels + 1)
    for k in range(panels):
        lo = a + (b - a) * edges[k]
        hi = a + (b - a) * edges[k + 1]
        half = (hi - lo) / 2
        mid = (hi + lo) / 2
        t = mid[..., None] + half[..., None] * _GL_X
        total += half * np.sum(_GL_W * f(t), axis=-1)
    return total


_GRADING = np.array([0.0, 0.25, 1.0, 4.0, 16.0, 64.0])


def _graded_integrate(f, lo, hi, width):
    """Integral of f over [lo, hi] with panels graded around a peak of given width at 0."""
    sign = np.where(hi < lo, -1.0, 1.0)
    a, b = np.minimum(lo, hi), np.maximum(lo, hi)
    cuts = np.concatenate([-_GRADING[:0:-1], _GRADING])[None] * width[:, None]
    cuts = np.sort(np.hstack([a[:, None], np.clip(cuts, a[:, None], b[:, None]), b[:, None]]), 1)
    total = np.zeros(len(lo))
    for k in range(cuts.shape[1] - 1):
        total += _gl_integrate(f, cuts[:, k], cuts[:, k + 1], panels=1)
    return sign * total


class _Cumulative:
    """T(u) = int_0^u g for u in [0, 1/2], saturating beyond 1/2."""

    def __init__(self, g, n=256):
        self.g = g
        self.nodes = np.linspace(0.0, 0.5, n + 1)
        pieces = _gl_integrate(g, self.nodes[:-1], self.nodes[1:], panels=1)
        self.cum = np.concatenate([[0.0], np.cumsum(pieces)])
        self.step = 0.5 / n
        self.total = self.cum[-1]

    def __call__(self, u):
        u = np.clip(np.asarray(u, float), 0.0, 0.5)
        i = np.minimum((u / self.step).astype(int), len(self.nodes) - 2)
        lo = self.nodes[i]
        half = (u - lo) / 2
        t = (lo + half)[..., None] + half[..., None] * _SHORT_X
        return self.cum[i] + half * np.sum(_SHORT_W * self.g(t), axis=-1)


class Mollifier:
    """Radial density psi(u) = phi_0(u)^2 with unit integral over R^d (unit width)."""

    def __init__(self, d: int, c: float | None = None):
        self.d = d
        norm = mollifier_constant(d)
        if c is None:
            c = norm
        elif abs(c / norm - 1.0) > 1e-8:
            raise ConfigurationError(f"mollifier not normalized: c={c}, need {norm}")
        self.c = c
        c2 = c * c
        self.psi = lambda u: c2 * _bump_sq(u)
        if d == 1:
            self.T = _Cumulative(self.psi)
        elif d == 2:
            self.F = _Cumulative(lambda s: self.psi(s) * s)
            self.F_inf = 1.0 / (2 * math.pi)
        else:
            self.G = _Cumulative(lambda s: self.psi(s) * s * s)
            self.G_inf = 1.0 / (4 * math.pi)
            self.K = _Cumulative(lambda s: self.G(s) / np.maximum(s * s, 1e-300))
            self.Q = _Cumulative(lambda s: self.psi(s) * s)

    def phi0(self, x) -> np.ndarray:
        r = np.linalg.norm(np.atleast_2d(x), axis=-1)
        return self.c * np.sqrt(_bump_sq(r))


def _angle(t1, t2, q):
    """Signed angle swept along a line at signed distance q, from t1 to t2."""
    return np.arctan(t2 / q) - np.arctan(t1 / q)


# -- two dimensions ---------------------------------------------------------


def _edge_geometry(a, b):
    ab = b - a
    e = ab / np.linalg.norm(ab, axis=-1)[:, None]
    return e, np.sum(a * e, -1), np.sum(b * e, -1)


def _edge_mass_2d(mol, a, b):
    """Signed cone integral over the edge a->b seen from the origin (unit width)."""
    e, ta, tb = _edge_geometry(a, b)
    p = a[:, 0] * e[:, 1] - a[:, 1] * e[:, 0]
    ap = np.abs(p)
    out = np.zeros(len(a))
    nz = ap > 0
    if not np.any(nz):
        return out
    p, ap, ta, tb = p[nz], ap[nz], ta[nz], tb[nz]
    Fp = mol.F(ap)
    full = _angle(ta, tb, p)
    res = Fp * full
    near = ap < 0.5
    if np.any(near):
        T = np.sqrt(0.25 - ap[near] ** 2)
        lo = np.clip(ta[near], -T, T)
        hi = np.clip(tb[near], -T, T)
        pn, Fn = p[near], Fp[near]
        inner = _angle(lo, hi, pn)
        # beyond |t| = T the profile has saturated
        res[near] += (mol.F_inf - Fn) * (full[near] - inner)

        def f(t):
            r2 = pn[:, None] ** 2 + t * t
            return (mol.F(np.sqrt(r2)) - Fn[:, None]) * pn[:, None] / r2

        res[near] += _gl_integrate(f, lo, hi)
    out[nz] = res
    return out


def _edge_profile_2d(mol, a, b):
    """int over the segment a->b of psi(|y|) dS (unit width)."""
    e, ta, tb = _edge_geometry(a, b)
    p = np.abs(a[:, 0] * e[:, 1] - a[:, 1] * e[:, 0])
    out = np.zeros(len(a))
    near = p < 0.5
    if np.any(near):
        T = np.sqrt(0.25 - p[near] ** 2)
        lo = np.clip(ta[near], -T, T)
        hi = np.clip(tb[near], -T, T)
        pn = p[near]
        out[near] = _gl_integrate(lambda t: mol.psi(np.sqrt(pn[:, None] ** 2 + t * t)), lo, hi)
    return out


# -- three dimensions -------------------------------------------------------


def _edge_sweep_3d(H, h_out, g_out, p, a, b, foot, nrm):
    """int dtheta [H(R) - H(|p|)] over the in-plane wedge from the foot to edge a->b.

    R is the distance from the origin to the edge point.  Beyond R = 1/2 the
    primitive is ``H(R) = h_out - g_out / R``.
    """
    e, _, _ = _edge_geometry(a, b)
    ra = a - foot
    ta = np.sum(ra * e, -1)
    tb = np.sum((b - foot) * e, -1)
    q = np.sum(np.cross(ra, e) * nrm, -1)
    out = np.zeros(len(a))
    nz = np.abs(q) > 1e-300
    if not np.any(nz):
        return out
    q, ta, tb, ap = q[nz], ta[nz], tb[nz], np.abs(p[nz])

    def Hf(r):
        return np.where(r < 0.5, H(r), h_out - g_out / np.maximum(r, 0.5))

    R0 = np.sqrt(ap ** 2 + q ** 2)
    H0 = Hf(R0)
    full = _angle(ta, tb, q)
    res = (H0 - Hf(ap)) * full
    near = R0 < 0.5
    T = np.sqrt(np.where(near, 0.25 - R0 ** 2, 0.0))
    lo = np.where(near, np.clip(ta, -T, T), ta)
    hi = np.where(near, np.clip(tb, -T, T), ta)
    outer_ang = full - np.where(near, _angle(lo, hi, q), 0.0)
    res += (h_out - H0) * outer_ang
    if g_out:
        def I(t):
            R = np.sqrt(R0 ** 2 + t * t)
            safe = np.where(ap > 0, ap, 1.0)
            return np.where(ap > 0, np.arctan(safe * t / (q * R)) / safe, t / (q * R))

        res -= g_out * ((I(tb) - I(hi)) + (I(lo) - I(ta)))
    if np.any(near):
        qn, R0n, H0n = q[near], R0[near], H0[near]

        def f(t):
            s2 = qn[:, None] ** 2 + t * t
            return (H(np.sqrt(R0n[:, None] ** 2 + t * t)) - H0n[:, None]) * qn[:, None] / s2

        res[near] += _graded_integrate(f, lo[near], hi[near], np.abs(qn))
    out[nz] = res
    return out


def _face_sweep_3d(H, h_out, g_out, F, nrm):
    p = np.sum(F[:, 0] * nrm, -1)
    foot = p[:, None] * nrm
    total = np.zeros(len(F))
    for i, k in ((0, 1), (1, 2), (2, 0)):
        total += _edge_sweep_3d(H, h_out, g_out, p, F[:, i], F[:, k], foot, nrm)
    return p, total


def _face_mass_3d(mol, F, nrm):
    """Signed mass of the cone from the origin over an outward face."""
    p, total = _face_sweep_3d(mol.K, mol.K.total + 2 * mol.G_inf, mol.G_inf, F, nrm)
    return p * total


def _face_profile_3d(mol, F, nrm):
    """int over the planar triangle of psi(|y|) dA."""
    _, total = _face_sweep_3d(mol.Q, mol.Q.total, 0.0, F, nrm)
    return total


# -- public evaluation ------------------------------------------------------


def _oriented_facets(S):
    """Facets of simplices S (m, d+1, d) with outward unit normals."""
    m, k, d = S.shape
    cen = S.mean(axis=1)
    out = []
    for i in range(k):
        F = np.delete(S, i, axis=1)
        if d == 1:
            nrm = np.sign(F[:, 0, :] - cen)
            out.append((F, nrm))
            continue
        if d == 2:
            t = F[:, 1] - F[:, 0]
            nrm = np.stack([t[:, 1], -t[:, 0]], -1)
        else:
            nrm = np.cross(F[:, 1] - F[:, 0], F[:, 2] - F[:, 0])
        nrm /= np.linalg.norm(nrm, axis=-1)[:, None]
        flip = np.sum((F[:, 0] - cen) * nrm, -1) < 0
        nrm[flip] *= -1
        if d == 2:
            F[flip] = F[flip][:, ::-1]
        else:
            F[flip] = F[flip][:, [0, 2, 1]]
        out.append((F, nrm))
    return out


def simplex_mass(mol: Mollifier, S: np.ndarray, with_grad: bool = True):
    """Mass of the unit-width bump centred at the origin inside each simplex.

    ``S`` holds simplices in units of the bump width, shape ``(m, d+1, d)``.
    Returns the mass and its gradient with respect to the bump centre.
    """
    S = np.asarray(S, float)
    m, _, d = S.shape
    mass = np.zeros(m)
    grad = np.zeros((m, d))
    for F, nrm in _oriented_facets(S):
        if d == 1:
            pos = F[:, 0, 0]
            s = nrm[:, 0]
            # mass = P(b) - P(a); contributes sign * (P(pos) - 1/2)
            Pv = np.sign(pos) * mol.T(np.abs(pos))
            mass += s * Pv
            if with_grad:
                grad[:, 0] -= s * mol.psi(pos)
            continue
        if d == 2:
            mass += _edge_mass_2d(mol, F[:, 0], F[:, 1])
            if with_grad:
                grad -= nrm * _edge_profile_2d(mol, F[:, 0], F[:, 1])[:, None]
        else:
            mass += _face_mass_3d(mol, F, nrm)
            if with_grad:
                grad -= nrm * _face_profile_3d(mol, F, nrm)[:, None]
    if d == 1:
        mass = np.clip(mass, 0.0, None)
    return mass, grad


class PartitionOfUnity:
    """Functions ``j_alpha`` on the unit simplex lattice with mollifier width ``eta``.

    ``quadrature_tolerance`` is the declared per-point accuracy of
    ``sum_alpha j_alpha^2``.
    """

    quadrature_tolerance = 1e-8

    def __init__(self, d: int, eta: float, c: float | None = None):
        if not eta > 0:
            raise ConfigurationError("eta must be positive")
        self.d = d
        self.eta = float(eta)
        self.mollifier = Mollifier(d, c)
        self.grid = SimplexGrid(d, self.eta)
        self._offsets = np.array(list(itertools.product((-1, 0, 1), repeat=d)))
        base = self.grid.base
        plus = self.grid.enlarged_base()
        # barycentric maps of the enlarged simplices
        self._plus_T = np.linalg.inv(np.swapaxes(plus[:, 1:] - plus[:, :1], 1, 2))
        self._plus_0 = plus[:, 0]
        self._base = base

    def _in_plus(self, u: np.ndarray, n: np.ndarray) -> np.ndarray:
        lam = np.einsum("mij,mj->mi", self._plus_T[n], u - self._plus_0[n])
        return np.all(lam > 0, axis=1) & (lam.sum(1) < 1)

    def evaluate(self, alpha, x):
        """``(j_alpha(x), grad j_alpha(x))`` for one index ``alpha = (z, n)``."""
        z, n = alpha
        x = np.atleast_2d(np.asarray(x, float))
        S = (np.asarray(z, float) + self._base[n])[None] - x[:, None, :]
        mass, grad = simplex_mass(self.mollifier, S / self.eta)
        # the support is exactly the enlarged simplex; drop round-off outside it
        inside = self._in_plus(x - np.asarray(z, float), np.full(len(x), n))
        return self._root(np.where(inside, mass, 0.0), np.where(inside[:, None], grad, 0.0) / self.eta)

    @staticmethod
    def _root(mass, grad):
        mass = np.clip(mass, 0.0, 1.0)
        j = np.sqrt(mass)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(j[:, None] > 0, grad / (2 * j[:, None]), 0.0)
        return j, g

    def evaluate_all(self, x):
        """All nonzero ``j_alpha`` at the points ``x``.

        Returns ``(point_index, alpha_rows, j, grad)`` where alpha rows are
        ``(z_1..z_d, n)``.
        """
        x = np.atleast_2d(np.asarray(x, float))
        d = self.d
        cell = np.floor(x).astype(int)
        nsimp = len(self._base)
        cand_z = cell[:, None, :] + self._offsets[None]  # (N, 3^d, d)
        N = len(x)
        pi = np.repeat(np.arange(N), len(self._offsets) * nsimp)
        zz = np.repeat(cand_z.reshape(-1, d), nsimp, axis=0)
        nn = np.tile(np.arange(nsimp), N * len(self._offsets))
        u = x[pi] - zz
        keep = self._in_plus(u, nn)
        pi, zz, nn, u = pi[keep], zz[keep], nn[keep], u[keep]
        S = (self._base[nn] - u[:, None, :]) / self.eta
        mass, grad = simplex_mass(self.mollifier, S)
        j, g = self._root(mass, grad / self.eta)
        nz = j > 0
        rows = np.hstack([zz, nn[:, None]])
        return pi[nz], rows[nz], j[nz], g[nz]

    def sum_squares(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        pi, _, j, _ = self.evaluate_all(x)
        return np.bincount(pi, weights=j * j, minlength=len(x))

    def gradient_energy(self, x) -> np.ndarray:
        """``sum_alpha |grad j_alpha(x)|^2`` (unit-lattice coordinates)."""
        x = np.atleast_2d(np.asarray(x, float))
        pi, _, _, g = self.evaluate_all(x)
        return np.bincount(pi, weights=np.sum(g * g, 1), minlength=len(x))


def physical_gradient_energy(pou: PartitionOfUnity, x, l: float, frame) -> np.ndarray:
    """``sum_alpha |grad_x j_alpha(x / l - y)|^2`` in the frame ``(y, R)``."""
    u = frame.to_frame(x, l) / l
    return pou.gradient_energy(u) / (l * l)


def cell_defect_density(d: int, eta: float, samples: int = 4096, seed: int = 0) -> float:
    """Unit-cell average of ``sum_alpha |grad j_alpha|^2`` (quasi Monte Carlo).

    This is the translation average of the defect at any fixed point; the
    rotation average leaves it unchanged because the integrand is summed
    over a full lattice cell.
    """
    from scipy.stats import qmc

    pou = PartitionOfUnity(d, eta)
    pts = qmc.Sobol(d, scramble=True, seed=seed).random(samples)
    return float(pou.gradient_energy(pts).mean())


def sliding_defect(d: int, l: float, frames, points, eta: float | None = None) -> dict:
    """Frame-averaged physical defect at ``points`` and its supremum.

    ``eta`` defaults to ``1 / l``.
    """
    eta = 1.0 / l if eta is None else eta
    pou = PartitionOfUnity(d, eta)
    points = np.atleast_2d(np.asarray(points, float))
    per_frame = np.array([physical_gradient_energy(pou, points, l, f) for f in frames])
    avg = per_frame.mean(axis=0)
    return {
        "l": float(l),
        "eta": eta,
        "frames": len(frames),
        "average": avg,
        "sup_average": float(avg.max()),
        "sampling_error": float(per_frame.std(axis=0).max() / np.sqrt(len(frames))),
    }


def fit_inverse_l(ls, values) -> tuple[float, float]:
    """Least-squares ``values ~ c / l``; returns ``(c, max relative residual)``."""
    ls = np.asarray(ls, float)
    v = np.asarray(values, float)
    basis = 1.0 / ls
    c = float(basis @ v / (basis @ basis))
    return c, float(np.max(np.abs(v - c * basis) / np.abs(v)))
