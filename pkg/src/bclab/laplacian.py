"""Finite-difference -Laplacian on masked cell-centred grids.

Cells have side ``h``; cell ``i`` has centre ``origin + (i + 1/2) h``.  The
boundary of the active region consists of cell faces, tagged ``"x-"``,
``"x+"``, ``"y-"`` ... on the faces of the index box and ``"mask"`` on faces
shared with inactive cells.  Each boundary face adds to the diagonal of its
cell:

* Neumann (mirror ghost) adds 0;
* Dirichlet on the face (ghost ``-u``) adds ``2/h^2``;
* Dirichlet at the ghost node (row/column elimination) adds ``1/h^2``;
* Robin with form term ``sigma |u|^2`` on the face adds ``2 sigma / (h (2 + sigma h))``.

All quadratic forms are sums of nonnegative face terms, so the orderings
N <= Robin(sigma >= 0) <= D and N <= periodic <= D hold exactly.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .errors import ConfigurationError, ConvergenceError

__all__ = [
    "Dirichlet",
    "Neumann",
    "Robin",
    "Periodic",
    "BCSpec",
    "Grid",
    "OperatorMatrix",
    "Spectrum",
    "assemble",
    "eigenvalues",
    "reflect_extend",
    "ims_defect",
    "metric_bound_check",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 4096
AXES = "xyz"


# -- boundary conditions -----------------------------------------------------


@dataclass(frozen=True)
class Dirichlet:
    placement: str = "face"  # or "node": the boundary passes through the ghost centre

    def __post_init__(self):
        if self.placement not in ("face", "node"):
            raise ConfigurationError("Dirichlet placement is 'face' or 'node'")

    def diagonal(self, h: float) -> float:
        return 2.0 / h**2 if self.placement == "face" else 1.0 / h**2


@dataclass(frozen=True)
class Neumann:
    def diagonal(self, h: float) -> float:
        return 0.0


@dataclass(frozen=True)
class Robin:
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.sigma):
            raise ConfigurationError("Robin sigma must be finite")

    def diagonal(self, h: float) -> float:
        s = self.sigma
        if 2 + s * h <= 0:
            raise ConfigurationError(f"Robin sigma={s} needs h < {2 / abs(s)}")
        return 2 * s / (h * (2 + s * h))


@dataclass(frozen=True)
class Periodic:
    pass


def bc_from_dict(d) -> object:
    kind = d["type"].lower()
    if kind == "dirichlet":
        return Dirichlet(d.get("placement", "face"))
    if kind == "neumann":
        return Neumann()
    if kind == "robin":
        return Robin(float(d["sigma"]))
    if kind == "periodic":
        return Periodic()
    raise ConfigurationError(f"unknown boundary condition {kind!r}")


def bc_to_dict(bc) -> dict:
    if isinstance(bc, Dirichlet):
        return {"type": "dirichlet", "placement": bc.placement}
    if isinstance(bc, Robin):
        return {"type": "robin", "sigma": bc.sigma}
    return {"type": type(bc).__name__.lower()}


@dataclass(frozen=True)
class BCSpec:
    """Boundary condition per face tag, with a default for untagged pieces."""

    pieces: dict = field(default_factory=dict)
    default: object = Dirichlet()

    def __getitem__(self, tag):
        return self.pieces.get(tag, self.default)

    @classmethod
    def uniform(cls, bc) -> "BCSpec":
        return cls({}, bc)

    @classmethod
    def periodic(cls, d: int) -> "BCSpec":
        return cls({f"{a}{s}": Periodic() for a in AXES[:d] for s in "-+"}, Dirichlet())

    def to_dict(self) -> dict:
        return {"default": bc_to_dict(self.default), "pieces": {k: bc_to_dict(v) for k, v in self.pieces.items()}}

    @classmethod
    def from_dict(cls, d) -> "BCSpec":
        return cls({k: bc_from_dict(v) for k, v in d.get("pieces", {}).items()},
                   bc_from_dict(d.get("default", {"type": "dirichlet"})))


# -- grids -------------------------------------------------------------------


def face_tag(axis: int, side: int) -> str:
    return AXES[axis] + ("-" if side < 0 else "+")


class Grid:
    """Active cells of a Cartesian index box."""

    def __init__(self, h: float, mask, origin=None):
        mask = np.asarray(mask, bool)
        if not h > 0:
            raise ConfigurationError("grid spacing must be positive")
        if mask.ndim not in (1, 2, 3):
            raise ConfigurationError("grids are 1-, 2- or 3-dimensional")
        if not mask.any():
            raise ConfigurationError("empty mask")
        self.h = float(h)
        self.mask = mask
        self.mask.setflags(write=False)
        self.d = mask.ndim
        self.shape = mask.shape
        self.origin = np.zeros(self.d) if origin is None else np.asarray(origin, float)
        self.size = int(mask.sum())
        labels, ncomp = ndimage.label(mask)
        if ncomp > 1:
            sizes = np.bincount(labels.ravel())[1:]
            if sizes.min() == 1:
                raise ConfigurationError("mask has isolated cells")
            raise ConfigurationError("mask is not connected")
        index = -np.ones(self.shape, dtype=np.int64)
        index[mask] = np.arange(self.size)
        self.index = index
        self.index.setflags(write=False)

    @classmethod
    def box(cls, lo, hi, h: float) -> "Grid":
        lo = np.atleast_1d(np.asarray(lo, float))
        hi = np.atleast_1d(np.asarray(hi, float))
        n = np.rint((hi - lo) / h).astype(int)
        if np.any(np.abs(n * h - (hi - lo)) > 1e-9 * np.maximum(1, hi - lo)):
            raise ConfigurationError("box sides must be multiples of h")
        return cls(h, np.ones(tuple(n), bool), lo)

    @classmethod
    def from_domain(cls, domain, h: float, pad: int = 0) -> "Grid":
        """Rasterize by cell-centre membership."""
        lo, hi = domain.bounding_box()
        n = np.ceil((hi - lo) / h - 1e-9).astype(int) + 2 * pad
        origin = lo - pad * h - (n * h - (hi - lo) - 2 * pad * h) / 2
        g = cls(h, np.ones(tuple(n), bool), origin)
        mask = domain.contains(g.all_centres()).reshape(tuple(n))
        return cls(h, mask, origin)

    def all_centres(self) -> np.ndarray:
        axes = [self.origin[k] + (np.arange(self.shape[k]) + 0.5) * self.h for k in range(self.d)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, self.d)

    def centres(self) -> np.ndarray:
        """Centres of the active cells, in index order."""
        return self.all_centres()[self.mask.ravel()]

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def faces(self):
        """Boundary faces: ``(cell, axis, side, tag)`` rows."""
        out = []
        for ax in range(self.d):
            for side in (-1, 1):
                shifted = np.zeros_like(self.mask)
                src = [slice(None)] * self.d
                dst = [slice(None)] * self.d
                if side > 0:
                    src[ax], dst[ax] = slice(1, None), slice(None, -1)
                else:
                    src[ax], dst[ax] = slice(None, -1), slice(1, None)
                shifted[tuple(dst)] = self.mask[tuple(src)]  # neighbour active?
                edge = np.zeros_like(self.mask)
                sl = [slice(None)] * self.d
                sl[ax] = -1 if side > 0 else 0
                edge[tuple(sl)] = True
                for cond, tag in ((self.mask & edge, face_tag(ax, side)),
                                  (self.mask & ~edge & ~shifted, "mask")):
                    cells = self.index[cond]
                    out.extend((int(c), ax, side, tag) for c in cells)
        return out

    def face_counts(self) -> dict:
        counts: dict = {}
        for *_, tag in self.faces():
            counts[tag] = counts.get(tag, 0) + 1
        return counts

    def to_dict(self) -> dict:
        return {"h": self.h, "shape": list(self.shape), "origin": self.origin.tolist(), "active": self.size}


# -- assembly ----------------------------------------------------------------


@dataclass(frozen=True)
class OperatorMatrix:
    matrix: sp.csr_matrix
    grid: Grid
    bc: BCSpec
    V: np.ndarray | None = None

    @property
    def norm(self) -> float:
        return float(abs(self.matrix).sum(axis=1).max())

    def form(self, u) -> float:
        """``<u, A u>`` in the cell-volume weighted inner product."""
        u = np.asarray(u)
        return float(np.real(np.vdot(u, self.matrix @ u)) * self.grid.cell_volume)


def _neighbour_pairs(grid: Grid, ax: int, periodic: bool):
    idx = grid.index
    lo = [slice(None)] * grid.d
    hi = [slice(None)] * grid.d
    lo[ax], hi[ax] = slice(None, -1), slice(1, None)
    a, b = idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()
    keep = (a >= 0) & (b >= 0)
    a, b = a[keep], b[keep]
    if periodic:
        first = np.take(idx, 0, axis=ax).ravel()
        last = np.take(idx, -1, axis=ax).ravel()
        if np.any((first >= 0) != (last >= 0)):
            raise ConfigurationError(f"periodic pair {AXES[ax]}-/{AXES[ax]}+ faces are not congruent")
        ok = first >= 0
        a = np.concatenate([a, last[ok]])
        b = np.concatenate([b, first[ok]])
    return a, b


def assemble(grid: Grid, bc: BCSpec, V=None) -> OperatorMatrix:
    """Sparse symmetric matrix of ``-Laplacian + V``."""
    h2 = grid.h**2
    rows, cols, vals = [], [], []
    diag = np.zeros(grid.size)
    periodic_axes = set()
    for ax in range(grid.d):
        lo, hi = bc[face_tag(ax, -1)], bc[face_tag(ax, 1)]
        if isinstance(lo, Periodic) != isinstance(hi, Periodic):
            raise ConfigurationError(f"periodic face {AXES[ax]} has no partner")
        if isinstance(lo, Periodic):
            periodic_axes.add(ax)
        a, b = _neighbour_pairs(grid, ax, ax in periodic_axes)
        rows += [a, b]
        cols += [b, a]
        vals += [np.full(len(a), -1.0 / h2)] * 2
        np.add.at(diag, a, 1.0 / h2)
        np.add.at(diag, b, 1.0 / h2)
    if isinstance(bc["mask"], Periodic):
        raise ConfigurationError("mask faces cannot be periodic")
    for cell, ax, side, tag in grid.faces():
        if ax in periodic_axes and tag != "mask":
            continue
        diag[cell] += bc[tag].diagonal(grid.h)
    if V is not None:
        V = np.asarray(V(grid.centres()) if callable(V) else V, float)
        if V.shape != (grid.size,):
            raise ConfigurationError("potential must have one value per active cell")
        diag = diag + V
    n = grid.size
    A = sp.coo_matrix((np.concatenate(vals + [diag]),
                       (np.concatenate(rows + [np.arange(n)]), np.concatenate(cols + [np.arange(n)]))),
                      shape=(n, n)).tocsr()
    A.sum_duplicates()
    return OperatorMatrix(A, grid, bc, V)


# -- spectra -----------------------------------------------------------------


@dataclass
class Spectrum:
    values: np.ndarray
    multiplicities: np.ndarray
    residuals: np.ndarray
    metadata: dict
    vectors: np.ndarray | None = None

    def __len__(self):
        return len(self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "multiplicity", "residual"])
        for i, (v, m, r) in enumerate(zip(self.values, self.multiplicities, self.residuals), 1):
            w.writerow([i, repr(float(v)), int(m), f"{r:.3e}"])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "metadata": self.metadata,
            "eigenvalues": [float(v) for v in self.values],
            "multiplicities": [int(m) for m in self.multiplicities],
            "residuals": [float(r) for r in self.residuals],
        }, indent=2, sort_keys=True)


def group_multiplicities(values, rtol: float = 1e-8) -> np.ndarray:
    """Multiplicity of each eigenvalue's cluster (consecutive gaps below rtol)."""
    values = np.asarray(values)
    if len(values) == 0:
        return np.zeros(0, int)
    scale = max(float(np.max(np.abs(values))), 1e-300)
    breaks = np.diff(values) > rtol * np.maximum(np.abs(values[1:]), scale * 1e-6)
    group = np.concatenate([[0], np.cumsum(breaks)])
    return np.bincount(group)[group]


def eigenvalues(op: OperatorMatrix, count: int, vectors: bool = False,
                maxiter: int | None = None, seed: int = 0) -> Spectrum:
    """Smallest ``count`` eigenvalues, ascending."""
    A = op.matrix
    n = A.shape[0]
    if count < 1:
        raise ConfigurationError("count must be at least 1")
    count = min(count, n)
    norm = op.norm
    if n <= DENSE_LIMIT:
        w, v = scipy.linalg.eigh(A.toarray(), subset_by_index=[0, count - 1])
        method = "dense"
    else:
        diag = A.diagonal()
        off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
        sigma = float(np.min(diag - off)) - 1e-3 * max(norm, 1.0) / n
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            w, v = spla.eigsh(A, k=count, sigma=sigma, which="LM", v0=v0,
                              maxiter=maxiter or 50 * n, tol=1e-12)
        except spla.ArpackNoConvergence as exc:
            res = [float(np.linalg.norm(A @ exc.eigenvectors[:, i] - exc.eigenvalues[i] * exc.eigenvectors[:, i]))
                   for i in range(len(exc.eigenvalues))]
            raise ConvergenceError("eigensolver did not converge", residuals=res) from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        method = "shift-invert"
    res = np.linalg.norm(A @ v - v * w, axis=0)
    if np.any(res > 1e-8 * max(norm, 1.0)):
        raise ConvergenceError("eigenvector residuals exceed 1e-8 ||A||", residuals=res.tolist())
    meta = {"grid": op.grid.to_dict(), "bc": op.bc.to_dict(), "h": op.grid.h, "count": count,
            "method": method, "norm": norm, "potential": op.V is not None}
    return Spectrum(w, group_multiplicities(w), res, meta, v if vectors else None)


# -- reflections -------------------------------------------------------------


@dataclass
class Reflection:
    grid: Grid
    bc: BCSpec
    isometry: sp.csr_matrix  # doubled cells x original cells, J^T J = I
    planes: list


def reflect_extend(grid: Grid, mixed: BCSpec) -> Reflection:
    """Mirror the grid across its Neumann box faces.

    The doubled problem carries no Neumann pieces.  ``isometry`` maps a
    vector of the mixed problem to the symmetric vector of the doubled one,
    scaled by ``2^(-p/2)`` for ``p`` planes, so that ``J^T A_doubled J`` is
    the mixed operator.
    """
    if isinstance(mixed["mask"], Neumann) and grid.face_counts().get("mask"):
        raise ConfigurationError("Neumann piece is not aligned with a grid hyperplane; flatten it with a chart first")
    mask = np.asarray(grid.mask)
    index = np.asarray(grid.index)
    origin = grid.origin.copy()
    pieces = dict(mixed.pieces)
    planes = []
    for ax in range(grid.d):
        lo, hi = mixed[face_tag(ax, -1)], mixed[face_tag(ax, 1)]
        if isinstance(lo, Periodic) or isinstance(hi, Periodic):
            if isinstance(lo, Neumann) or isinstance(hi, Neumann):
                raise ConfigurationError("cannot reflect across a periodic axis")
            continue
        if isinstance(lo, Neumann) and isinstance(hi, Neumann):
            raise ConfigurationError(f"both {AXES[ax]} faces are Neumann; at most one plane per axis")
        if isinstance(lo, Neumann):
            mask = np.concatenate([np.flip(mask, ax), mask], axis=ax)
            index = np.concatenate([np.flip(index, ax), index], axis=ax)
            origin[ax] -= grid.shape[ax] * grid.h
            pieces[face_tag(ax, -1)] = hi
            planes.append(face_tag(ax, -1))
        elif isinstance(hi, Neumann):
            mask = np.concatenate([mask, np.flip(mask, ax)], axis=ax)
            index = np.concatenate([index, np.flip(index, ax)], axis=ax)
            pieces[face_tag(ax, 1)] = lo
            planes.append(face_tag(ax, 1))
    if isinstance(mixed.default, Neumann):
        raise ConfigurationError("a Neumann default cannot be reflected away")
    doubled = Grid(grid.h, mask, origin)
    src = index[mask]
    J = sp.csr_matrix((np.full(len(src), 2.0 ** (-len(planes) / 2)), (np.arange(len(src)), src)),
                      shape=(doubled.size, grid.size))
    return Reflection(doubled, BCSpec(pieces, mixed.default), J, planes)


# -- localization ------------------------------------------------------------


def ims_defect(pou, grid: Grid, l: float, frame, psi, bc: BCSpec | None = None) -> dict:
    """Localized kinetic energy and localization defect of ``psi``.

    ``pou=None`` stands for the trivial partition ``j = 1``.  The PoU
    functions are ``j_alpha(x / l - y)`` in the rotated frame.
    """
    bc = BCSpec.uniform(Neumann()) if bc is None else bc
    op = assemble(grid, bc)
    psi = np.asarray(psi)
    dv = grid.cell_volume
    energy = op.form(psi)
    if pou is None:
        return {"energy": energy, "localized": energy, "defect": 0.0, "residual": 0.0, "patches": 1}
    u = frame.to_frame(grid.centres(), l) / l
    pi, rows, j, g = pou.evaluate_all(u)
    grad_sq = np.sum(g * g, axis=1) / l**2  # rotation leaves the norm unchanged
    defect = float(np.sum(grad_sq * np.abs(psi[pi]) ** 2) * dv)
    # group the rows by patch
    _, patch = np.unique(rows, axis=0, return_inverse=True)
    patch = patch.ravel()
    npatch = int(patch.max()) + 1
    W = sp.csr_matrix((j, (patch, pi)), shape=(npatch, grid.size))
    localized = 0.0
    for k in range(npatch):
        jk = W.getrow(k).toarray().ravel()
        v = jk * psi
        localized += op.form(v)
    return {"energy": energy, "localized": localized, "defect": defect,
            "residual": abs(localized - defect - energy), "patches": npatch}


# -- metric comparison -------------------------------------------------------


def _test_function(rng, d, rho, constrained):
    """Smooth function supported in ``|y_i| < rho``; random oscillation."""
    k = rng.normal(size=d) * 2.0 / rho
    ph = rng.uniform(0, 2 * np.pi)
    a = rng.uniform(0.2, 0.8)
    shift = np.zeros(d)
    shift[: d - constrained] = rng.uniform(-0.2, 0.2, d - constrained) * rho

    def g(y):
        t = (np.atleast_2d(y) - shift) / rho
        inside = np.all(np.abs(t) < 1, axis=1)
        out = np.zeros(len(t))
        tt = t[inside]
        out[inside] = np.exp(np.sum(-1.0 / (1.0 - tt**2), axis=1) + d) * (1 + a * np.sin(np.atleast_2d(y)[inside] @ k + ph))
        return out

    return g


def metric_bound_check(chart, h: float, samples: int = 20, seed: int = 0, rho: float | None = None) -> dict:
    """Compare ``<f, -Lap f>`` on the domain with ``C <g, -Lap g>`` on the flat side, ``f = g o phi``.

    Both forms are Neumann finite-difference forms on rasterized regions.
    Returns the worst ratio, the worst margin and the per-sample values.
    """
    d = chart.domain.dim
    rho = 0.5 * chart.width if rho is None else rho
    rng = np.random.default_rng(seed)
    k = chart.constrained
    # flat side: a box holding the shifted supports, cut at y_i = 0 for constrained i
    lo_y = -1.5 * rho * np.ones(d)
    hi_y = 1.5 * rho * np.ones(d)
    hi_y[d - k:] = 0.0
    ny = np.ceil((hi_y - lo_y) / h).astype(int)
    gy = Grid(h, np.ones(tuple(ny), bool), lo_y)
    opy = assemble(gy, BCSpec.uniform(Neumann()))
    # physical side: bounding box of the preimage, rasterized by the flat region
    corners = np.array(np.meshgrid(*[np.linspace(lo_y[i], hi_y[i], 9) for i in range(d)], indexing="ij")).reshape(d, -1).T
    pre = chart.inverse(corners)
    lo_x = pre.min(0) - 2 * h
    hi_x = pre.max(0) + 2 * h
    anchor = getattr(chart, "p", None)
    if anchor is not None:
        # put the flat boundary pieces on cell faces
        lo_x = anchor - h * np.ceil((anchor - lo_x) / h)
    nx = np.ceil((hi_x - lo_x) / h).astype(int)
    full = Grid(h, np.ones(tuple(nx), bool), lo_x)
    xc = full.all_centres()
    inside = chart.domain.contains(xc)
    yc = np.full_like(xc, np.inf)
    yc[inside] = chart.forward(xc[inside])
    m = inside & np.all(np.abs(yc) < 2 * rho, axis=1)
    gx = _largest_component(h, m.reshape(tuple(nx)), lo_x)
    opx = assemble(gx, BCSpec.uniform(Neumann()))
    ratios, margins = [], []
    for _ in range(samples):
        g = _test_function(rng, d, rho, k)
        fy = g(gy.centres())
        fx = g(chart.forward(gx.centres()))
        ex = opx.form(fx)
        ey = opy.form(fy)
        ratios.append(ex / ey)
        margins.append(ex - chart.C * ey)
    return {"C": chart.C, "worst_ratio": float(min(ratios)), "worst_margin": float(min(margins)),
            "ratios": ratios, "margins": margins, "h": h}


def _largest_component(h, mask, origin) -> Grid:
    labels, n = ndimage.label(mask)
    if n > 1:
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        mask = labels == np.argmax(sizes)
    return Grid(h, mask, origin)
