"""Volume-preserving charts that flatten a boundary piece.

A chart maps a neighbourhood of the piece onto a neighbourhood in which the
domain becomes ``{y_d < 0}`` (a face), ``{y_{d-1}, y_d < 0}`` (an edge) or
the negative octant (a corner).  ``Dphi`` is the derivative ``dy/dx``.  For
``f = g o phi`` the Dirichlet form transforms with the matrix
``Dphi Dphi^T``, so the metric constant is its smallest eigenvalue.
"""
from __future__ import annotations

import numpy as np

from .errors import ChartNotImplementedError
from .geometry import Domain

__all__ = ["AffineChart", "DiskChart", "BallChart", "boundary_chart", "polyhedral_facets"]


class _Chart:
    domain: Domain
    constrained: int  # number of coordinates restricted to be negative
    C: float

    def forward(self, x) -> np.ndarray:
        raise NotImplementedError

    def inverse(self, y) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x) -> np.ndarray:
        """``dy/dx`` at each point, shape ``(m, d, d)``."""
        raise NotImplementedError

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        """Points of the chart neighbourhood on both sides of the piece."""
        raise NotImplementedError

    def determinant(self, x) -> np.ndarray:
        return np.linalg.det(self.jacobian(x))

    def metric_eigmin(self, x) -> np.ndarray:
        J = self.jacobian(x)
        return np.linalg.eigvalsh(J @ np.swapaxes(J, 1, 2))[:, 0]

    def fd_jacobian(self, x, step: float = 1e-6) -> np.ndarray:
        """Central-difference Jacobian, for cross-checking ``jacobian``."""
        x = np.atleast_2d(np.asarray(x, float))
        d = x.shape[1]
        out = np.empty((len(x), d, d))
        for k in range(d):
            dx = np.zeros(d)
            dx[k] = step
            out[:, :, k] = (self.forward(x + dx) - self.forward(x - dx)) / (2 * step)
        return out

    def flat_region(self, y) -> np.ndarray:
        """Membership of chart points in the flattened domain."""
        y = np.atleast_2d(y)
        return np.all(y[:, y.shape[1] - self.constrained:] < 0, axis=1)


def polyhedral_facets(domain: Domain, tol: float = 1e-9):
    """Distinct facet halfspaces ``(normals, offsets)`` of a box or polytope."""
    A, b = domain.halfspaces()
    keep = []
    for i in range(len(A)):
        if not any(np.allclose(A[i], A[j], atol=tol) and abs(b[i] - b[j]) < tol * max(1, abs(b[i]))
                   for j in keep):
            keep.append(i)
    return A[keep], b[keep]


class AffineChart(_Chart):
    """``y = M (x - p)`` with ``det M = 1``; rigid for orthogonal facets."""

    def __init__(self, domain: Domain, piece, normals, offsets, width):
        d = domain.dim
        k = len(normals)
        N = np.asarray(normals, float)
        # the point where the chosen facets meet, nearest to the domain centroid
        lo, hi = domain.bounding_box()
        centre = (lo + hi) / 2
        P, *_ = np.linalg.lstsq(N, offsets - N @ centre, rcond=None)
        self.p = centre + P
        if k < d:
            # tangential directions: orthonormal complement of the facet normals
            Q, _ = np.linalg.qr(np.vstack([N, np.eye(d)]).T)
            T = Q[:, k:d].T
            M = np.vstack([T, N])
        else:
            M = N.copy()
        det = np.linalg.det(M)
        if abs(det) < 1e-12:
            raise ChartNotImplementedError("degenerate facet configuration")
        det = abs(det)  # orientation is irrelevant for volume preservation
        if k < d:
            M[: d - k] /= det  # only the tangential rows absorb the scaling
        else:
            M /= det ** (1.0 / d)
        self.M = M
        self.Minv = np.linalg.inv(M)
        self.domain = domain
        self.piece = piece
        self.constrained = k
        self.width = float(width)
        self.C = float(np.linalg.eigvalsh(M @ M.T)[0])
        self.rigid = bool(np.allclose(M @ M.T, np.eye(d), atol=1e-12))

    def forward(self, x):
        return (np.atleast_2d(x) - self.p) @ self.M.T

    def inverse(self, y):
        return np.atleast_2d(y) @ self.Minv.T + self.p

    def jacobian(self, x):
        x = np.atleast_2d(x)
        return np.broadcast_to(self.M, (len(x),) + self.M.shape).copy()

    def sample(self, n, seed=0):
        rng = np.random.default_rng(seed)
        d = self.domain.dim
        return self.p + rng.uniform(-self.width, self.width, size=(n, d))


class DiskChart(_Chart):
    """Polar flattening of a disk: ``y1 = R (theta - theta0)``, ``y2 = (r^2 - R^2) / (2R)``."""

    def __init__(self, domain: Domain, theta0: float, width: float):
        self.domain = domain
        self.piece = float(theta0)
        self.c = domain.ball_center
        self.R = domain.ball_radius
        self.theta0 = float(theta0)
        if not 0 < width < self.R:
            raise ValueError("chart width must lie in (0, R)")
        self.width = float(width)
        self.constrained = 1
        R, w = self.R, self.width
        # eigenvalues of Dphi Dphi^T are (r/R)^2 and (R/r)^2 on the annulus
        self.C = min(((R - w) / R) ** 2, (R / (R + w)) ** 2)

    def _polar(self, x):
        v = np.atleast_2d(x) - self.c
        r = np.linalg.norm(v, axis=1)
        th = np.angle(np.exp(1j * (np.arctan2(v[:, 1], v[:, 0]) - self.theta0)))
        return r, th

    def forward(self, x):
        r, th = self._polar(x)
        return np.stack([self.R * th, (r * r - self.R ** 2) / (2 * self.R)], axis=1)

    def inverse(self, y):
        y = np.atleast_2d(y)
        th = y[:, 0] / self.R + self.theta0
        r = np.sqrt(self.R ** 2 + 2 * self.R * y[:, 1])
        return self.c + np.stack([r * np.cos(th), r * np.sin(th)], axis=1)

    def jacobian(self, x):
        v = np.atleast_2d(x) - self.c
        r2 = np.sum(v * v, axis=1)
        R = self.R
        J = np.empty((len(v), 2, 2))
        # d theta / dx = (-v2, v1) / r^2 ; d(r^2)/dx = 2 v
        J[:, 0, 0] = -R * v[:, 1] / r2
        J[:, 0, 1] = R * v[:, 0] / r2
        J[:, 1, 0] = v[:, 0] / R
        J[:, 1, 1] = v[:, 1] / R
        return J

    def sample(self, n, seed=0):
        rng = np.random.default_rng(seed)
        r = rng.uniform(self.R - self.width, self.R + self.width, n)
        th = self.theta0 + rng.uniform(-0.5, 0.5, n) * self.width / self.R
        return self.c + np.stack([r * np.cos(th), r * np.sin(th)], axis=1)


class BallChart(_Chart):
    """Flattening of a 3-ball around the boundary point ``c + R p``.

    Spherical angles use a polar axis ``a`` perpendicular to ``p`` so the
    piece sits on the equator: ``y1 = R phi``, ``y2 = -R cos(theta)``,
    ``y3 = (r^3 - R^3) / (3 R^2)``.
    """

    def __init__(self, domain: Domain, direction, width: float, polar_width: float = 0.5):
        self.domain = domain
        p = np.asarray(direction, float)
        p = p / np.linalg.norm(p)
        self.piece = tuple(p)
        helper = np.eye(3)[np.argmin(np.abs(p))]
        a = np.cross(p, helper)
        a /= np.linalg.norm(a)
        self.basis = np.stack([p, np.cross(a, p), a])  # rows: e_x, e_y, e_z of the local frame
        self.c = domain.ball_center
        self.R = domain.ball_radius
        if not 0 < width < self.R:
            raise ValueError("chart width must lie in (0, R)")
        self.width = float(width)
        self.polar_width = float(polar_width)
        self.constrained = 1
        R, w = self.R, self.width
        smin = np.cos(self.polar_width)
        self.C = min(((R - w) / R) ** 4, (smin * R / (R + w)) ** 2, (R / (R + w)) ** 2)

    def _local(self, x):
        return (np.atleast_2d(x) - self.c) @ self.basis.T

    def forward(self, x):
        v = self._local(x)
        r = np.linalg.norm(v, axis=1)
        R = self.R
        return np.stack([R * np.arctan2(v[:, 1], v[:, 0]), -R * v[:, 2] / r,
                         (r ** 3 - R ** 3) / (3 * R * R)], axis=1)

    def inverse(self, y):
        y = np.atleast_2d(y)
        R = self.R
        r = np.cbrt(R ** 3 + 3 * R * R * y[:, 2])
        ct = -y[:, 1] / R
        st = np.sqrt(1 - ct * ct)
        ph = y[:, 0] / R
        v = np.stack([r * st * np.cos(ph), r * st * np.sin(ph), r * ct], axis=1)
        return self.c + v @ self.basis

    def jacobian(self, x):
        v = self._local(x)
        r = np.linalg.norm(v, axis=1)
        R = self.R
        rho2 = v[:, 0] ** 2 + v[:, 1] ** 2
        J = np.zeros((len(v), 3, 3))
        J[:, 0, 0] = -R * v[:, 1] / rho2
        J[:, 0, 1] = R * v[:, 0] / rho2
        # y2 = -R v3 / r
        J[:, 1, :] = R * v[:, 2, None] * v / r[:, None] ** 3
        J[:, 1, 2] -= R / r
        J[:, 2, :] = r[:, None] * v / (R * R)
        return J @ self.basis

    def sample(self, n, seed=0):
        rng = np.random.default_rng(seed)
        r = rng.uniform(self.R - self.width, self.R + self.width, n)
        lat = rng.uniform(-self.polar_width, self.polar_width, n)
        ph = rng.uniform(-0.5, 0.5, n) * self.width / self.R
        v = np.stack([r * np.cos(lat) * np.cos(ph), r * np.cos(lat) * np.sin(ph), r * np.sin(lat)], 1)
        return self.c + v @ self.basis


def boundary_chart(domain: Domain, piece, width: float | None = None):
    """Chart flattening ``piece`` of ``domain``.

    For boxes and polytopes ``piece`` is a facet index or a tuple of facet
    indices (see ``polyhedral_facets``) meeting along an edge or corner.
    For disks it is the boundary angle; for 3-balls a boundary direction.
    """
    if domain.kind in ("box", "interval", "polytope"):
        A, b = polyhedral_facets(domain)
        idx = (piece,) if np.isscalar(piece) else tuple(piece)
        if not 1 <= len(idx) <= domain.dim:
            raise ChartNotImplementedError("a piece meets between 1 and d facets")
        if width is None:
            lo, hi = domain.bounding_box()
            width = 0.1 * float(np.min(hi - lo))
        return AffineChart(domain, idx, A[list(idx)], b[list(idx)], width)
    if domain.kind == "ball":
        if width is None:
            width = 0.25 * domain.ball_radius
        if domain.dim == 2:
            return DiskChart(domain, float(piece), width)
        if domain.dim == 3:
            return BallChart(domain, piece, width)
    raise ChartNotImplementedError(f"chart not implemented for {domain.kind} in d={domain.dim}")
