"""Domains, the simplex tiling of space, sliding frames and Voronoi data.

All geometry is parametric in the dimension ``d`` in {1, 2, 3}.  The unit
cube ``[0, 1]^d`` is cut into congruent simplices (2 half intervals, 8
triangles or 24 tetrahedra) which are translated over the integer lattice.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog, nnls
from scipy.spatial import ConvexHull, HalfspaceIntersection, cKDTree
from scipy.stats import qmc

from .errors import ConfigurationError

__all__ = [
    "Domain",
    "interval",
    "box",
    "ball",
    "polytope",
    "union",
    "SlidingFrame",
    "sample_frames",
    "decompose_unit_cube",
    "simplex_volume",
    "SimplexGrid",
    "Classification",
    "classify_simplices",
    "VoronoiDiagram",
    "voronoi",
    "packing_constant",
    "point_simplex_distance",
    "minimal_enclosing_ball",
    "regular_sequence_check",
]


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """A bounded open region ``L * base``.

    ``kind`` is one of ``interval``, ``box``, ``ball``, ``polytope``,
    ``union``.  Geometric parameters describe the base shape; ``scale``
    multiplies every coordinate, so the volume scales as ``scale**dim``.
    """

    kind: str
    dim: int
    scale: float = 1.0
    origin: tuple = ()
    sides: tuple = ()
    center: tuple = ()
    radius: float = 0.0
    vertices: tuple = ()
    members: tuple = ()

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ConfigurationError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if not self.scale > 0:
            raise ConfigurationError("scale must be positive")
        if self.kind in ("interval", "box") and min(self.sides) <= 0:
            raise ConfigurationError("box sides must be positive")
        if self.kind == "ball" and self.radius <= 0:
            raise ConfigurationError("ball radius must be positive")
        if self.kind == "union":
            if not self.members:
                raise ConfigurationError("empty union")
            if any(m.dim != self.dim for m in self.members):
                raise ConfigurationError("union members must share the dimension")
            for a, b in itertools.combinations(self.members, 2):
                if _member_distance(a, b) <= 0:
                    raise ConfigurationError("union members must be pairwise disjoint")
        if self.volume <= 0:
            raise ConfigurationError("domain has zero volume")

    # -- construction helpers ------------------------------------------------
    def scaled(self, L: float) -> "Domain":
        """The domain ``L * self``."""
        if self.kind == "union":
            return Domain("union", self.dim, members=tuple(m.scaled(L) for m in self.members))
        return Domain(
            self.kind, self.dim, self.scale * L, self.origin, self.sides,
            self.center, self.radius, self.vertices,
        )

    # -- scaled geometric data -----------------------------------------------
    @property
    def lo(self) -> np.ndarray:
        return self.scale * np.asarray(self.origin, float)

    @property
    def hi(self) -> np.ndarray:
        return self.scale * (np.asarray(self.origin, float) + np.asarray(self.sides, float))

    @property
    def ball_center(self) -> np.ndarray:
        return self.scale * np.asarray(self.center, float)

    @property
    def ball_radius(self) -> float:
        return self.scale * self.radius

    @property
    def vertex_array(self) -> np.ndarray:
        if self.kind in ("interval", "box"):
            lo, hi = self.lo, self.hi
            return np.array([[(hi if bit else lo)[i] for i, bit in enumerate(bits)]
                             for bits in itertools.product((0, 1), repeat=self.dim)])
        if self.kind == "polytope":
            return self.scale * np.asarray(self.vertices, float)
        raise TypeError(f"{self.kind} has no vertex list")

    @property
    def is_convex(self) -> bool:
        return self.kind != "union"

    @property
    def volume(self) -> float:
        if self.kind in ("interval", "box"):
            return float(np.prod(self.hi - self.lo))
        if self.kind == "ball":
            return unit_ball_volume(self.dim) * self.ball_radius ** self.dim
        if self.kind == "polytope":
            v = self.vertex_array
            if self.dim == 1:
                return float(v.max() - v.min())
            return float(ConvexHull(v).volume)
        return float(sum(m.volume for m in self.members))

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit-normal halfspace form ``A x <= b`` of a convex polyhedral domain."""
        if self.kind in ("interval", "box"):
            eye = np.eye(self.dim)
            return np.vstack([eye, -eye]), np.concatenate([self.hi, -self.lo])
        if self.kind == "polytope":
            v = self.vertex_array
            if self.dim == 1:
                return np.array([[1.0], [-1.0]]), np.array([v.max(), -v.min()])
            eq = ConvexHull(v).equations
            return eq[:, :-1], -eq[:, -1]
        raise TypeError(f"{self.kind} is not polyhedral")

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "ball":
            return self.ball_center - self.ball_radius, self.ball_center + self.ball_radius
        if self.kind == "union":
            boxes = [m.bounding_box() for m in self.members]
            return np.min([b[0] for b in boxes], 0), np.max([b[1] for b in boxes], 0)
        v = self.vertex_array
        return v.min(0), v.max(0)

    def contains(self, x) -> np.ndarray:
        """Membership of the points ``x`` (shape ``(m, d)``) in the open domain."""
        x = np.atleast_2d(np.asarray(x, float))
        if self.kind == "ball":
            return np.linalg.norm(x - self.ball_center, axis=1) < self.ball_radius
        if self.kind == "union":
            return np.any([m.contains(x) for m in self.members], axis=0)
        A, b = self.halfspaces()
        return np.all(x @ A.T < b, axis=1)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "dim": self.dim, "scale": self.scale}
        if self.kind in ("interval", "box"):
            d.update(origin=list(self.origin), sides=list(self.sides))
        elif self.kind == "ball":
            d.update(center=list(self.center), radius=self.radius)
        elif self.kind == "polytope":
            d.update(vertices=[list(v) for v in self.vertices])
        else:
            d.update(members=[m.to_dict() for m in self.members])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Domain":
        kind = d["kind"]
        if kind == "union":
            return union([cls.from_dict(m) for m in d["members"]])
        if kind == "interval":
            base = interval(d["sides"][0], origin=d["origin"][0])
        elif kind == "box":
            base = box(d["sides"], origin=d["origin"])
        elif kind == "ball":
            base = ball(d["dim"], d["radius"], center=d["center"])
        elif kind == "polytope":
            base = polytope(d["vertices"])
        else:
            raise ConfigurationError(f"unknown domain kind {kind!r}")
        return base.scaled(d.get("scale", 1.0))


def interval(length: float, origin: float = 0.0) -> Domain:
    return Domain("interval", 1, origin=(float(origin),), sides=(float(length),))


def box(sides, origin=None) -> Domain:
    sides = tuple(float(s) for s in sides)
    origin = tuple(float(o) for o in (origin if origin is not None else [0.0] * len(sides)))
    if len(sides) == 1:
        return Domain("interval", 1, origin=origin, sides=sides)
    return Domain("box", len(sides), origin=origin, sides=sides)


def ball(dim: int, radius: float, center=None) -> Domain:
    center = tuple(float(c) for c in (center if center is not None else [0.0] * dim))
    if len(center) != dim:
        raise ConfigurationError("center has wrong dimension")
    return Domain("ball", dim, center=center, radius=float(radius))


def polytope(vertices) -> Domain:
    v = np.atleast_2d(np.asarray(vertices, float))
    return Domain("polytope", v.shape[1], vertices=tuple(map(tuple, v)))


def union(members) -> Domain:
    members = tuple(members)
    return Domain("union", members[0].dim, members=members)


def point_hull_distance(p, vertices) -> float:
    """Euclidean distance from ``p`` to the convex hull of ``vertices``."""
    v = np.asarray(vertices, float)
    p = np.asarray(p, float)
    w = 1e4 * (1.0 + np.abs(v).max() + np.abs(p).max())
    A = np.vstack([v.T, w * np.ones(len(v))])
    rhs = np.concatenate([p, [w]])
    lam, _ = nnls(A, rhs)
    lam /= lam.sum()
    return float(np.linalg.norm(lam @ v - p))


def _member_distance(a: Domain, b: Domain) -> float:
    """Distance between two convex union members (0 when they touch)."""
    if a.kind == "union" or b.kind == "union":
        return min(_member_distance(m, n) for m in _flat(a) for n in _flat(b))
    if a.kind == "ball" and b.kind == "ball":
        gap = np.linalg.norm(a.ball_center - b.ball_center) - a.ball_radius - b.ball_radius
        return max(float(gap), 0.0)
    if a.kind == "ball" or b.kind == "ball":
        bl, pl = (a, b) if a.kind == "ball" else (b, a)
        return max(point_hull_distance(bl.ball_center, pl.vertex_array) - bl.ball_radius, 0.0)
    # two polyhedra: intersection of closures is an LP feasibility problem
    A1, b1 = a.halfspaces()
    A2, b2 = b.halfspaces()
    res = linprog(np.zeros(a.dim), A_ub=np.vstack([A1, A2]), b_ub=np.concatenate([b1, b2]),
                  bounds=[(None, None)] * a.dim, method="highs")
    return 0.0 if res.status == 0 else 1.0


def _flat(dom: Domain):
    return dom.members if dom.kind == "union" else (dom,)


# ---------------------------------------------------------------------------
# Simplex tiling
# ---------------------------------------------------------------------------


def decompose_unit_cube(d: int = 3) -> np.ndarray:
    """Congruent simplices tiling ``[0, 1]^d``, shape ``(count, d + 1, d)``.

    d = 3: every tetrahedron is the hull of the cube centre, a face centre
    and the two corners of one edge of that face (6 faces x 4 edges = 24).
    d = 2: centre, edge midpoint and one corner of that edge (8 triangles).
    d = 1: the two half intervals.
    """
    if d == 1:
        return np.array([[[0.0], [0.5]], [[0.5], [1.0]]])
    c = np.full(d, 0.5)
    out = []
    if d == 2:
        for axis in range(2):
            for side in (0.0, 1.0):
                mid = c.copy()
                mid[axis] = side
                for corner_t in (0.0, 1.0):
                    corner = mid.copy()
                    corner[1 - axis] = corner_t
                    out.append([c, mid, corner])
        return np.array(out)
    if d == 3:
        for axis in range(3):
            for side in (0.0, 1.0):
                fc = c.copy()
                fc[axis] = side
                others = [i for i in range(3) if i != axis]
                corners = []
                for a, b in ((0, 0), (1, 0), (1, 1), (0, 1)):
                    p = np.empty(3)
                    p[axis] = side
                    p[others[0]], p[others[1]] = a, b
                    corners.append(p)
                for i in range(4):
                    out.append([c, fc, corners[i], corners[(i + 1) % 4]])
        return np.array(out)
    raise ConfigurationError("d must be 1, 2 or 3")


def simplex_volume(verts) -> np.ndarray:
    """Volumes of simplices given as ``(..., d + 1, d)`` vertex arrays."""
    v = np.asarray(verts, float)
    edges = v[..., 1:, :] - v[..., :1, :]
    d = v.shape[-1]
    return np.abs(np.linalg.det(edges)) / math.factorial(d)


def _heights(verts: np.ndarray) -> np.ndarray:
    """Distance from each vertex to the opposite facet, shape ``(..., d + 1)``."""
    d = verts.shape[-1]
    vol = simplex_volume(verts)
    out = []
    for i in range(d + 1):
        facet = np.delete(verts, i, axis=-2)
        if d == 1:
            area = np.ones(vol.shape)
        else:
            area = _facet_measure(facet)
        out.append(d * vol / area)
    return np.stack(out, -1)


def _facet_measure(facet: np.ndarray) -> np.ndarray:
    """(d-1)-measure of simplices with d vertices embedded in R^d."""
    e = facet[..., 1:, :] - facet[..., :1, :]
    gram = e @ np.swapaxes(e, -1, -2)
    k = e.shape[-2]
    return np.sqrt(np.abs(np.linalg.det(gram))) / math.factorial(k)


@dataclass(frozen=True)
class SimplexGrid:
    """Lattice of simplices ``l * (z + simplex_n)`` and their enlargements.

    The enlarged simplex is the dilation about the centroid by
    ``enlargement`` which is the smallest factor whose image contains the
    Minkowski sum of the simplex with a ball of radius ``eta / 2`` (the
    support of the smoothed indicator).
    """

    d: int
    eta: float
    base: np.ndarray = field(init=False, repr=False)
    enlargement: float = field(init=False)

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigurationError("eta must be positive")
        base = decompose_unit_cube(self.d)
        h_min = float(_heights(base[:1])[0].min())
        # centroid-to-facet distance is height / (d + 1)
        factor = 1.0 + (self.d + 1) * self.eta / (2.0 * h_min)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "enlargement", factor)

    @property
    def count(self) -> int:
        return len(self.base)

    @property
    def volume_ratio(self) -> float:
        """``|simplex^+| / |simplex|``."""
        return self.enlargement ** self.d

    def enlarged_base(self) -> np.ndarray:
        cen = self.base.mean(axis=1, keepdims=True)
        return cen + self.enlargement * (self.base - cen)

    def simplex(self, z, n: int, l: float = 1.0, enlarged: bool = False) -> np.ndarray:
        verts = self.enlarged_base()[n] if enlarged else self.base[n]
        return l * (np.asarray(z, float) + verts)


# ---------------------------------------------------------------------------
# Sliding frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlidingFrame:
    """Translation ``y`` in the unit cube and rotation ``R`` in SO(d)."""

    y: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, float).reshape(-1)
        R = np.asarray(self.R, float).reshape(len(y), len(y))
        if np.abs(R @ R.T - np.eye(len(y))).max() > 1e-12:
            raise ConfigurationError("rotation is not orthogonal")
        if abs(np.linalg.det(R) - 1.0) > 1e-12:
            raise ConfigurationError("rotation must have determinant one")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "R", R)

    @classmethod
    def identity(cls, d: int) -> "SlidingFrame":
        return cls(np.zeros(d), np.eye(d))

    def to_frame(self, x, l: float) -> np.ndarray:
        """Map physical points into frame coordinates ``R^{-1} x - l y``."""
        return np.atleast_2d(x) @ self.R - l * self.y

    def from_frame(self, p, l: float) -> np.ndarray:
        return (np.atleast_2d(p) + l * self.y) @ self.R.T


def _rotation_from_uniform(u: np.ndarray, d: int) -> np.ndarray:
    if d == 1:
        return np.eye(1)
    if d == 2:
        t = 2 * np.pi * u[0]
        return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    # Shoemake's uniform quaternion
    u1, u2, u3 = u[:3]
    q = np.array([
        np.sqrt(1 - u1) * np.sin(2 * np.pi * u2),
        np.sqrt(1 - u1) * np.cos(2 * np.pi * u2),
        np.sqrt(u1) * np.sin(2 * np.pi * u3),
        np.sqrt(u1) * np.cos(2 * np.pi * u3),
    ])
    x, y, z, w = q
    R = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
    # re-orthonormalise to push rounding below 1e-12
    U, _, Vt = np.linalg.svd(R)
    return U @ Vt


def sample_frames(d: int, count: int = 64, seed: int = 0, rotate: bool = True) -> list[SlidingFrame]:
    """Low-discrepancy (scrambled Sobol) frames standing in for the Haar average."""
    n_rot = {1: 0, 2: 1, 3: 3}[d] if rotate else 0
    sampler = qmc.Sobol(d + max(n_rot, 1), scramble=True, seed=seed)
    pts = sampler.random(count)
    return [SlidingFrame(p[:d], _rotation_from_uniform(p[d:], d) if n_rot else np.eye(d))
            for p in pts]


# ---------------------------------------------------------------------------
# Classification of enlarged simplices against a domain
# ---------------------------------------------------------------------------


def point_simplex_distance(p, simplices) -> np.ndarray:
    """Distance from ``p`` to each simplex in ``simplices`` (``(m, d+1, d)``)."""
    return np.array([point_hull_distance(p, s) for s in np.asarray(simplices)])


@dataclass
class Classification:
    interior: np.ndarray  # (m_int, d+1) index rows (z..., n)
    boundary: np.ndarray
    exterior_count: int
    interior_fraction: float
    boundary_fraction: float
    simplex_volume: float
    enlargement: float


def _framed_pieces(dom: Domain, frame: SlidingFrame, l: float):
    """Convex pieces of ``R^{-1} dom - l y`` as ('ball', c, r) / ('poly', A, b)."""
    out = []
    for m in _flat(dom):
        if m.kind == "ball":
            out.append(("ball", m.ball_center @ frame.R - l * frame.y, m.ball_radius))
        else:
            A, b = m.halfspaces()
            AR = A @ frame.R
            out.append(("poly", AR, b - AR @ (l * frame.y)))
    return out


def _simplex_vs_piece(piece, S: np.ndarray):
    """Return (inside, intersects) boolean arrays for simplices ``S``."""
    kind = piece[0]
    m = len(S)
    if kind == "ball":
        _, c, r = piece
        dv = np.linalg.norm(S - c, axis=2)
        inside = np.all(dv < r, axis=1)
        cen = S.mean(axis=1)
        circ = np.linalg.norm(S - cen[:, None, :], axis=2).max(axis=1)
        far = np.linalg.norm(cen - c, axis=1) - circ >= r
        meets = inside | np.any(dv < r, axis=1)
        todo = np.flatnonzero(~meets & ~far)
        for i in todo:
            meets[i] = point_hull_distance(c, S[i]) < r
        return inside, meets
    _, A, b = piece
    vals = S @ A.T - b  # (m, d+1, facets)
    inside = np.all(vals < 0, axis=(1, 2))
    separated = np.any(np.all(vals >= 0, axis=1), axis=1)
    meets = ~separated & np.any(np.all(vals < 0, axis=2), axis=1)
    todo = np.flatnonzero(~separated & ~meets)
    d = S.shape[2]
    for i in todo:
        # seek a point of the simplex strictly inside the polytope
        k = d + 1
        c = np.zeros(k + 1)
        c[-1] = -1.0
        A_ub = np.hstack([(S[i] @ A.T).T, np.ones((len(b), 1))])
        res = linprog(c, A_ub=A_ub, b_ub=b, A_eq=np.r_[np.ones(k), 0.0][None], b_eq=[1.0],
                      bounds=[(0, None)] * k + [(None, 1.0)], method="highs")
        meets[i] = res.status == 0 and -res.fun > 1e-14
    return inside, meets


def classify_simplices(domain: Domain, frame: SlidingFrame, l: float, eta: float | None = None,
                       grid: SimplexGrid | None = None) -> Classification:
    """Split the enlarged simplices ``l * simplex^+`` meeting ``domain`` in frame coordinates.

    A simplex is interior when it lies inside the framed domain and boundary
    when it meets the domain without lying inside (it then meets the
    boundary, being connected).  Returns index rows ``(z_1..z_d, n)``.
    """
    if not l > 0:
        raise ConfigurationError("l must be positive")
    d = domain.dim
    grid = grid or SimplexGrid(d, eta if eta is not None else 1.0 / l)
    pieces = _framed_pieces(domain, frame, l)
    # bounding box of the framed domain
    corners = []
    for m in _flat(domain):
        lo, hi = m.bounding_box()
        cube = np.array(list(itertools.product(*zip(lo, hi))))
        corners.append(frame.to_frame(cube, l))
    pts = np.vstack(corners)
    # rotated bounding boxes of balls overestimate, which is harmless
    zlo = np.floor(pts.min(0) / l).astype(int) - 1
    zhi = np.ceil(pts.max(0) / l).astype(int) + 1
    axes = [np.arange(a, b + 1) for a, b in zip(zlo, zhi)]
    Z = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    base = grid.enlarged_base()
    nsimp = len(base)
    S = l * (Z[:, None, None, :] + base[None]).reshape(-1, d + 1, d)
    idx = np.hstack([np.repeat(Z, nsimp, axis=0), np.tile(np.arange(nsimp), len(Z))[:, None]])
    inside = np.zeros(len(S), bool)
    meets = np.zeros(len(S), bool)
    for piece in pieces:
        i, m = _simplex_vs_piece(piece, S)
        inside |= i
        meets |= m
    boundary = meets & ~inside
    vol_plus = float(simplex_volume(base[0]) * l ** d)
    vol = domain.volume
    return Classification(
        interior=idx[inside],
        boundary=idx[boundary],
        exterior_count=int((~meets).sum()),
        interior_fraction=float(inside.sum() * vol_plus / vol),
        boundary_fraction=float(boundary.sum() / vol),
        simplex_volume=vol_plus,
        enlargement=grid.enlargement,
    )


# ---------------------------------------------------------------------------
# Voronoi data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VoronoiDiagram:
    sites: np.ndarray
    nearest: np.ndarray  # index of the nearest other site (-1 when k = 1)
    nn_distance: np.ndarray
    half_distance: np.ndarray  # D_j, NaN when undefined

    @property
    def defined(self) -> bool:
        return len(self.sites) >= 2

    def cell_of(self, x) -> np.ndarray:
        """Index of the nearest site for each point, ties to the lowest index."""
        x = np.atleast_2d(x)
        dist = np.linalg.norm(x[:, None, :] - self.sites[None], axis=2)
        return np.argmin(dist, axis=1)


def voronoi(sites, region: Domain | None = None) -> VoronoiDiagram:
    sites = np.atleast_2d(np.asarray(sites, float))
    k = len(sites)
    if k == 0:
        raise ConfigurationError("need at least one site")
    if region is not None and not np.all(region.contains(sites)):
        raise ConfigurationError("sites must lie inside the region")
    if k == 1:
        return VoronoiDiagram(sites, np.array([-1]), np.array([np.inf]), np.array([np.nan]))
    dist, ind = cKDTree(sites).query(sites, k=2)
    if np.any(dist[:, 1] == 0):
        raise ConfigurationError("duplicate sites")
    nn = ind[:, 1]
    d = np.array([_dist_down(a, b) for a, b in zip(sites, sites[nn])])
    return VoronoiDiagram(sites, nn, d, d / 2)


def _dist_down(a, b) -> float:
    """|a - b| rounded towards zero, so sums of half distances never overshoot."""
    q = sum((Fraction(float(x)) - Fraction(float(y))) ** 2 for x, y in zip(a, b))
    r = math.sqrt(float(q))
    while r > 0 and Fraction(r) ** 2 > q:
        r = math.nextafter(r, 0.0)
    while Fraction(math.nextafter(r, math.inf)) ** 2 <= q:
        r = math.nextafter(r, math.inf)
    return r


def packing_constant(simplex) -> float:
    """lambda with sum_j D_j^d <= lambda |simplex| for sites inside the simplex.

    The balls B(R_j, D_j) have disjoint interiors and lie in the parallel
    body of the simplex at distance diam / 2, whose volume is given by the
    Steiner formula.
    """
    S = np.asarray(simplex, float)
    d = S.shape[1]
    vol = float(simplex_volume(S))
    diam = max(np.linalg.norm(a - b) for a, b in itertools.combinations(S, 2))
    r = diam / 2
    if d == 1:
        par = vol + 2 * r
    elif d == 2:
        perim = sum(np.linalg.norm(S[i] - S[(i + 1) % 3]) for i in range(3))
        par = vol + perim * r + np.pi * r * r
    else:
        normals = []
        area = 0.0
        cen = S.mean(0)
        for i in range(4):
            f = np.delete(S, i, 0)
            n = np.cross(f[1] - f[0], f[2] - f[0])
            area += np.linalg.norm(n) / 2
            n /= np.linalg.norm(n)
            if np.dot(n, f[0] - cen) < 0:
                n = -n
            normals.append(n)
        mean_term = 0.0
        for i, j in itertools.combinations(range(4), 2):
            # edge shared by the facets opposite the two remaining vertices
            k, m = [t for t in range(4) if t not in (i, j)]
            ext = math.acos(np.clip(np.dot(normals[k], normals[m]), -1, 1))
            mean_term += np.linalg.norm(S[i] - S[j]) * ext / 2
        par = vol + area * r + mean_term * r * r + 4 * np.pi / 3 * r ** 3
    return float(par / (unit_ball_volume(d) * vol))


# ---------------------------------------------------------------------------
# Regular sequences of domains
# ---------------------------------------------------------------------------


def _circumsphere(pts: np.ndarray):
    if len(pts) == 0:
        return None, -1.0
    p0 = pts[0]
    if len(pts) == 1:
        return p0.copy(), 0.0
    E = pts[1:] - p0
    G = E @ E.T
    rhs = 0.5 * np.sum(E * E, axis=1)
    coef = np.linalg.lstsq(G, rhs, rcond=None)[0]
    c = p0 + coef @ E
    return c, float(np.linalg.norm(pts - c, axis=1).max())


def minimal_enclosing_ball(points) -> tuple[np.ndarray, float]:
    """Smallest ball containing ``points`` (Welzl's algorithm, move-to-front)."""
    P = [np.asarray(p, float) for p in np.atleast_2d(points)]
    d = len(P[0])
    eps = 1e-12

    def welzl(n, R):
        c, r = _circumsphere(np.array(R)) if R else (None, -1.0)
        if len(R) == d + 1:
            return c, r
        for i in range(n):
            if c is None or np.linalg.norm(P[i] - c) > r * (1 + eps) + eps:
                c, r = welzl(i, R + [P[i]])
        return c, r

    c, r = welzl(len(P), [])
    return c, r


def _enclosing_radius(dom: Domain) -> tuple[float, bool]:
    """Radius of the smallest enclosing ball and whether it is exact."""
    if dom.kind == "ball":
        return dom.ball_radius, True
    if dom.kind in ("interval", "box", "polytope"):
        return minimal_enclosing_ball(dom.vertex_array)[1], True
    members = _flat(dom)
    if all(m.kind == "ball" for m in members) and len(members) == 2:
        a, b = members
        sep = float(np.linalg.norm(a.ball_center - b.ball_center))
        ra, rb = a.ball_radius, b.ball_radius
        return max(ra, rb, (sep + ra + rb) / 2), True
    pts = []
    for m in members:
        if m.kind == "ball":
            u = np.random.default_rng(0).normal(size=(2000, dom.dim))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            pts.append(m.ball_center + m.ball_radius * u)
        else:
            pts.append(m.vertex_array)
    return minimal_enclosing_ball(np.vstack(pts))[1], False


def _collars(dom: Domain, h: float) -> tuple[float, float]:
    """Volumes of the inner and outer h-collars of a convex domain."""
    d = dom.dim
    if dom.kind == "ball":
        r = dom.ball_radius
        w = unit_ball_volume(d)
        return w * (r ** d - max(r - h, 0.0) ** d), w * ((r + h) ** d - r ** d)
    sides = None
    if dom.kind in ("interval", "box"):
        sides = dom.hi - dom.lo
        inner = dom.volume - float(np.prod(np.maximum(sides - 2 * h, 0.0)))
    else:
        A, b = dom.halfspaces()
        shrunk = b - h
        v = dom.vertex_array
        if d == 1:
            inner = dom.volume - max(0.0, v.max() - v.min() - 2 * h)
        else:
            c = v.mean(0)
            slack = shrunk - A @ c
            if np.all(slack > 0):
                hs = HalfspaceIntersection(np.hstack([A, -shrunk[:, None]]), c)
                inner_body = ConvexHull(hs.intersections).volume
            else:
                # the centroid may fail to be interior although the body is not empty
                res = linprog(np.r_[np.zeros(d), -1.0], A_ub=np.hstack([A, np.ones((len(b), 1))]),
                              b_ub=shrunk, bounds=[(None, None)] * d + [(0, None)], method="highs")
                if res.status == 0 and -res.fun > 1e-12:
                    hs = HalfspaceIntersection(np.hstack([A, -shrunk[:, None]]), res.x[:d])
                    inner_body = ConvexHull(hs.intersections).volume
                else:
                    inner_body = 0.0
            inner = dom.volume - inner_body
    # outer collar from the Steiner formula of the convex body
    if d == 1:
        outer = 2 * h
    elif d == 2:
        v = dom.vertex_array
        perim = ConvexHull(v).area if sides is None else 2 * float(sides.sum())
        outer = perim * h + np.pi * h * h
    else:
        if sides is not None:
            a, b_, c = sides
            outer = 2 * (a * b_ + b_ * c + a * c) * h + np.pi * (a + b_ + c) * h * h + 4 * np.pi / 3 * h ** 3
        else:
            hull = ConvexHull(dom.vertex_array)
            outer = hull.area * h + _mean_curvature_integral(hull) * h * h + 4 * np.pi / 3 * h ** 3
    return inner, outer


def _mean_curvature_integral(hull: ConvexHull) -> float:
    """Sum over edges of length * exterior dihedral angle / 2 for a 3-polytope."""
    eq = hull.equations
    edges = {}
    for f, simplex in enumerate(hull.simplices):
        for a, b in itertools.combinations(sorted(simplex), 2):
            edges.setdefault((a, b), []).append(f)
    total = 0.0
    for (a, b), faces in edges.items():
        if len(faces) != 2:
            continue
        n1, n2 = eq[faces[0], :3], eq[faces[1], :3]
        ang = math.acos(np.clip(np.dot(n1, n2), -1, 1))
        if ang < 1e-9:
            continue  # coplanar triangulation facets
        total += np.linalg.norm(hull.points[a] - hull.points[b]) * ang / 2
    return total


def regular_sequence_check(domains, h: float, delta: float = 1e-2, growth: float = 2.0) -> dict:
    """Diagnostics for the three conditions defining a regular sequence.

    (i) volumes tend to infinity, judged as strictly increasing with total
    growth at least ``growth``; (ii) inner and outer ``h``-collar fractions
    are nonincreasing and end below their first value; (iii) the volume to
    enclosing-ball ratio stays above ``delta``.
    """
    if h < 0:
        raise ConfigurationError("h must be nonnegative")
    rows = []
    for dom in domains:
        vol = dom.volume
        inner = outer = 0.0
        exact = True
        for m in _flat(dom):
            i, o = _collars(m, h)
            inner += i
            outer += o
        if dom.kind == "union":
            gaps = [_member_distance(a, b) for a, b in itertools.combinations(dom.members, 2)]
            exact = min(gaps) > 2 * h if all(m.kind == "ball" for m in dom.members) else False
        radius, exact_ball = _enclosing_radius(dom)
        rows.append({
            "volume": vol,
            "inner_collar_fraction": inner / vol,
            "outer_collar_fraction": outer / vol,
            "enclosing_ball_ratio": vol / (unit_ball_volume(dom.dim) * radius ** dom.dim),
            "collars_exact": exact,
            "enclosing_ball_exact": exact_ball,
        })
    vols = np.array([r["volume"] for r in rows])
    inner = np.array([r["inner_collar_fraction"] for r in rows])
    outer = np.array([r["outer_collar_fraction"] for r in rows])
    ratio = np.array([r["enclosing_ball_ratio"] for r in rows])
    crit_i = bool(np.all(np.diff(vols) > 0) and vols[-1] >= growth * vols[0])
    crit_ii = bool(
        np.all(np.diff(inner) <= 1e-15) and np.all(np.diff(outer) <= 1e-15)
        and (h == 0 or (inner[-1] < inner[0] and outer[-1] < outer[0]))
    )
    crit_iii = bool(ratio.min() >= delta)
    return {"rows": rows, "criterion_i": crit_i, "criterion_ii": crit_ii,
            "criterion_iii": crit_iii, "regular": crit_i and crit_ii and crit_iii}
