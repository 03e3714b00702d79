"""Bergman metric, distance estimates, Psi-lattices and ball volumes.

With ``r = |z|^2`` and ``kp = k'/k``, ``cv = (log k)''`` evaluated at ``r``,

    beta^2(z, xi) = |xi|^2 kp + |<z, xi>|^2 cv.

In one variable ``|<z, xi>| = |z| |xi|`` and the metric is conformal,
``beta(z, xi) = lam(|z|) |xi|`` with ``lam^2 = kp + |z|^2 cv``; the graph
geodesics below rely on that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from ._numerics import gauss_legendre, loglog_slope
from .kernel import log_derivatives
from .moments import MomentTable

__all__ = [
    "MetricSample",
    "MetricField",
    "DistanceResult",
    "PolyPath",
    "GridGeometry",
    "PsiLattice",
    "BallVolume",
    "metric",
    "segment_distance",
    "ellipsoid_distance",
    "ellipsoid_distances",
    "chord_length",
    "grid_distance",
    "triangle_check",
    "distance",
    "build_lattice",
    "lattice_checks",
    "lattice_density",
    "lattice_ball_areas",
    "ball_volume",
    "save_lattice",
    "load_lattice",
]


def _as_point(z, n: int) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=complex)).ravel()
    if z.size != n:
        raise ValueError(f"point has {z.size} coordinates, table dimension is {n}")
    return z


@dataclass(frozen=True)
class MetricSample:
    z: np.ndarray
    xi: np.ndarray
    beta2: float
    alpha2: float
    ratio: float


def metric(table: MomentTable, z, xi, mode: str = "auto") -> MetricSample:
    """Series metric ``beta^2(z, xi)`` next to ``alpha^2 = |xi|^2 Psi' + |<z,xi>|^2 Psi''``."""
    n = table.n
    z, xi = _as_point(z, n), _as_point(xi, n)
    nxi = float(np.vdot(xi, xi).real)
    if nxi == 0:
        raise ValueError("direction xi must be nonzero")
    r = float(np.vdot(z, z).real)
    kp, cv = log_derivatives(table, r, mode)
    ip2 = abs(np.vdot(xi, z)) ** 2
    w = table.weight
    beta2 = nxi * kp + ip2 * cv
    alpha2 = nxi * float(w.psi1(r)) + ip2 * float(w.psi2(r))
    return MetricSample(z, xi, float(beta2), float(alpha2),
                        float(beta2 / alpha2) if alpha2 > 0 else math.nan)


class MetricField:
    """Spline model of ``kp`` and ``lam^2 = kp + rho^2 cv`` for ``0 <= rho <= rho_max``.

    Both are interpolated in log space (they are positive and may grow like
    ``exp(rho^2)``); ``cv`` is recovered as ``(lam^2 - kp)/rho^2`` only where
    it is weighted by ``|<z, xi>|^2 / rho^2 <= |xi|^2``.
    """

    def __init__(self, table: MomentTable, rho_max: float, samples: int = 513, mode: str = "auto"):
        self.table = table
        self.rho_max = float(rho_max)
        rho = np.linspace(0.0, self.rho_max, samples)
        kp = np.empty(samples)
        lam2 = np.empty(samples)
        for i, p in enumerate(rho):
            a, c = log_derivatives(table, p * p, mode)
            kp[i], lam2[i] = a, a + p * p * c
        self._lkp = CubicSpline(rho, np.log(kp))
        self._llam2 = CubicSpline(rho, np.log(lam2))
        # cumulative radial length F(rho) = int_0^rho lam
        g, wg = gauss_legendre(16)
        a, b = rho[:-1, None], rho[1:, None]
        s = 0.5 * (b - a) * g[None, :] + 0.5 * (a + b)
        seg = (0.5 * (b - a)[:, 0]) * (np.exp(0.5 * self._llam2(s)) @ wg)
        self._rho = rho
        self._F = np.concatenate([[0.0], np.cumsum(seg)])

    def _check(self, rho):
        if np.any(np.asarray(rho) > self.rho_max * (1 + 1e-12)):
            raise ValueError(f"|z| beyond metric field range {self.rho_max}")

    def kp(self, rho):
        self._check(rho)
        return np.exp(self._lkp(rho))

    def lam2(self, rho):
        self._check(rho)
        return np.exp(self._llam2(rho))

    def lam(self, rho):
        return np.sqrt(self.lam2(rho))

    def radial_length(self, a, b):
        """``|int_a^b lam(rho) d rho|`` (vectorized)."""
        a, b = np.asarray(a, float), np.asarray(b, float)
        self._check(np.maximum(a, b))
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        g, wg = gauss_legendre(16)

        def F(x):
            i = np.clip(np.searchsorted(self._rho, x, side="right") - 1, 0, self._rho.size - 2)
            x0 = self._rho[i]
            s = 0.5 * (x - x0)[..., None] * (g + 1.0) + x0[..., None]
            return self._F[i] + 0.5 * (x - x0) * (np.sqrt(self.lam2(s)) @ wg)

        return F(hi) - F(lo)

    def beta2(self, z, xi):
        """Metric for arrays of points/directions with trailing axis of length n."""
        z = np.asarray(z, complex)
        xi = np.asarray(xi, complex)
        rho2 = np.sum(np.abs(z) ** 2, axis=-1)
        rho = np.sqrt(rho2)
        nxi = np.sum(np.abs(xi) ** 2, axis=-1)
        ip2 = np.abs(np.sum(z * np.conj(xi), axis=-1)) ** 2
        kp = self.kp(rho)
        with np.errstate(invalid="ignore", divide="ignore"):
            proj = np.where(rho2 > 0, ip2 / rho2, 0.0)
        return nxi * kp + proj * (self.lam2(rho) - kp)


class DistanceResult(NamedTuple):
    rho_hat: float
    kind: str


_GL32 = gauss_legendre(32)


def _frame(z, w):
    """Split ``w`` relative to ``z``: modulus x of z, polar form of the component
    along z, and the orthogonal remainder norm."""
    x = float(np.linalg.norm(z))
    if x > 0:
        u = z / x
    else:
        nw = np.linalg.norm(w)
        u = w / nw if nw > 0 else np.eye(z.size, dtype=complex)[0]
    w1 = np.vdot(u, w)
    xi = float(np.linalg.norm(w - w1 * u))
    return x, abs(w1), float(np.angle(w1)) if abs(w1) > 0 else 0.0, xi


def segment_distance(field_: MetricField, z, w) -> float:
    """Length of the arc / radial / orthogonal curve from ``z`` to ``w``.

    The arc is traversed either at radius ``|z|`` before the radial leg or at
    radius ``|w_1|`` after it; the shorter of the two is returned.  Any curve
    length bounds the distance from above.
    """
    n = field_.table.n
    z, w = _as_point(z, n), _as_point(w, n)
    x, r, theta, xi = _frame(z, w)
    radial = float(field_.radial_length(x, r))
    arc_x = abs(theta) * x * float(field_.lam(x)) if x > 0 else 0.0
    arc_r = abs(theta) * r * float(field_.lam(r)) if r > 0 else 0.0
    length = radial + min(arc_x, arc_r)
    if xi > 0:
        g, wg = _GL32
        t = 0.5 * (g + 1.0)
        rho = np.sqrt(r * r + (t * xi) ** 2)
        kp = field_.kp(rho)
        cv_term = (t * xi * xi) ** 2 / rho**2 * (field_.lam2(rho) - kp)
        length += 0.5 * float(np.sqrt(xi * xi * kp + cv_term) @ wg)
    return length


def chord_length(field_: MetricField, z, w) -> np.ndarray:
    """Metric length of the straight segments from ``z`` to each row of ``w``."""
    z = np.asarray(z, complex)
    w = np.atleast_2d(np.asarray(w, complex))
    g, wg = _GL32
    t = 0.5 * (g + 1.0)
    step = w - z[None, :]
    pts = z[None, None, :] + t[None, :, None] * step[:, None, :]
    b2 = field_.beta2(pts, np.broadcast_to(step[:, None, :], pts.shape))
    return 0.5 * (np.sqrt(np.maximum(b2, 0.0)) @ wg)


@dataclass
class PolyPath:
    """Polyline whose length is the sum of metric chord lengths."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=complex)
        self.vertices = v[:, None] if v.ndim == 1 else v

    def length(self, field_: MetricField) -> float:
        v = self.vertices
        return float(sum(chord_length(field_, v[i], v[i + 1])[0] for i in range(len(v) - 1)))

    def refined(self) -> "PolyPath":
        """Insert the midpoint of every segment."""
        v = self.vertices
        out = np.empty((2 * len(v) - 1, v.shape[1]), complex)
        out[0::2] = v
        out[1::2] = 0.5 * (v[1:] + v[:-1])
        return PolyPath(out)


def ellipsoid_distance(table: MomentTable, z, w, symmetric: bool = False) -> float:
    """``|z - P_z w| Phi'(|z|^2)^1/2 + |w - P_z w| Psi'(|z|^2)^1/2``.

    ``P_z`` is the orthogonal projection onto the complex line through ``z``
    (the identity when ``n = 1``).  Not symmetric; ``symmetric=True`` returns
    the max over both orders.
    """
    n = table.n
    return float(ellipsoid_distances(table, z, _as_point(w, n)[None, :], symmetric)[0])


def _project(base, other, n):
    """``P_base other`` row by row; both arrays are ``(k, n)``."""
    x2 = np.sum(np.abs(base) ** 2, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.sum(np.conj(base) * other, axis=1) / x2
    p = c[:, None] * base
    at_origin = x2 == 0
    p[at_origin] = other[at_origin] if n == 1 else 0.0
    return x2, p


def ellipsoid_distances(table: MomentTable, z, ws, symmetric: bool = False) -> np.ndarray:
    """:func:`ellipsoid_distance` from ``z`` to every row of ``ws`` (shape ``(k, n)``)."""
    n = table.n
    wt = table.weight
    ws = np.asarray(ws, complex).reshape(-1, n)
    zs = np.broadcast_to(_as_point(z, n), ws.shape)

    def one_way(base, other):
        x2, p = _project(base, other, n)
        return (np.linalg.norm(base - p, axis=1) * np.sqrt(wt.phi1(x2))
                + np.linalg.norm(other - p, axis=1) * np.sqrt(wt.psi1(x2)))

    d = one_way(zs, ws)
    return np.maximum(d, one_way(ws, zs)) if symmetric else d


def _primitive_offsets(k: int):
    out = []
    for a in range(0, k + 1):
        for b in range(-k, k + 1):
            if (a, b) <= (0, 0) or math.gcd(a, abs(b)) != 1:
                continue
            out.append((a, b))
    return out


class GridGeometry:
    """Graph approximation of the one-variable metric on a square lattice.

    Nodes are ``origin + h (i + 1j * j)`` inside a disc or square; each node
    links to the neighbours at every primitive offset with entries up to
    ``stencil`` (stencil 1 is the 8-neighbour graph, 2 gives 16 directions,
    3 gives 32).  Edge weights are Simpson's rule for ``int lam |dz|`` along
    the chord.  ``extra`` points are appended as nodes joined to every grid
    node within ``1.5 * stencil * h``.
    """

    def __init__(self, field_: MetricField, origin: complex, h: float, half_width: float,
                 disc_radius: Optional[float] = None, stencil: int = 3, extra=(),
                 max_nodes: int = 3_000_000):
        if field_.table.n != 1:
            raise ValueError("grid geodesics are available for n = 1 only")
        self.field = field_
        self.h = float(h)
        self.stencil = stencil
        m = int(math.ceil(half_width / h))
        if (2 * m + 1) ** 2 > 4 * max_nodes:
            raise MemoryError(f"grid of {(2 * m + 1) ** 2} cells exceeds the node budget")
        ii, jj = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1), indexing="ij")
        pts = origin + h * (ii + 1j * jj)
        keep = np.abs(pts) <= (disc_radius if disc_radius is not None else np.inf)
        keep &= np.abs(pts) <= field_.rho_max
        if keep.sum() > max_nodes:
            raise MemoryError(f"{int(keep.sum())} grid nodes exceed the budget of {max_nodes}")
        index = np.full(ii.shape, -1, dtype=np.int64)
        index[keep] = np.arange(int(keep.sum()))
        self.points = pts[keep]
        self.grid_count = self.points.size
        rows, cols, wts = [], [], []
        side = 2 * m + 1
        for a, b in _primitive_offsets(stencil):
            i0 = slice(max(0, -a), side - max(0, a))
            j0 = slice(max(0, -b), side - max(0, b))
            i1 = slice(max(0, a), side - max(0, -a))
            j1 = slice(max(0, b), side - max(0, -b))
            src, dst = index[i0, j0], index[i1, j1]
            ok = (src >= 0) & (dst >= 0)
            p, q = self.points[src[ok]], self.points[dst[ok]]
            rows.append(src[ok])
            cols.append(dst[ok])
            wts.append(self._chord(p, q))
        extra = np.atleast_1d(np.asarray(extra, dtype=complex))
        if extra.size:
            tree = cKDTree(np.c_[self.points.real, self.points.imag])
            reach = 1.5 * stencil * h
            for k, e in enumerate(extra):
                nb = np.asarray(tree.query_ball_point([e.real, e.imag], reach), dtype=np.int64)
                if nb.size == 0:
                    raise ValueError(f"extra point {e} lies outside the grid")
                rows.append(np.full(nb.size, self.grid_count + k))
                cols.append(nb)
                wts.append(self._chord(np.full(nb.size, e), self.points[nb]))
            self.points = np.concatenate([self.points, extra])
        rows, cols, wts = map(np.concatenate, (rows, cols, wts))
        # exact zero-length chords (coincident extra points) must stay edges
        wts = np.maximum(wts, 1e-300)
        size = self.points.size
        self.graph = coo_matrix((wts, (rows, cols)), shape=(size, size)).tocsr()

    def _chord(self, p, q):
        lam = self.field.lam
        m = 0.5 * (p + q)
        return np.abs(q - p) * (lam(np.abs(p)) + 4.0 * lam(np.abs(m)) + lam(np.abs(q))) / 6.0

    def distances(self, sources, limit: float = np.inf, min_only: bool = False):
        return dijkstra(self.graph, directed=False, indices=sources, limit=limit, min_only=min_only)

    def nearest(self, z) -> int:
        return int(np.argmin(np.abs(self.points[: self.grid_count] - z)))


def grid_distance(field_: MetricField, z, w, steps: int = 48, stencil: int = 3):
    """Graph geodesic at two resolutions; returns ``(fine, coarse)``."""
    z, w = complex(np.ravel(z)[0]), complex(np.ravel(w)[0])
    sep = abs(w - z)
    if sep == 0:
        return 0.0, 0.0
    out = []
    for s in (steps, 2 * steps):
        h = sep / s
        half = 0.75 * sep + 4 * stencil * h
        g = GridGeometry(field_, 0.5 * (z + w), h, half, stencil=stencil, extra=[z, w])
        a = g.grid_count
        out.append(float(g.distances([a])[0][a + 1]))
    return out[1], out[0]


def triangle_check(field_: MetricField, triples, steps: int = 8) -> dict:
    """Triangle inequality of grid distances on ``(a, b, c)`` triples.

    Each leg is computed on its own grid at two resolutions; the allowed
    excess of ``d(a, c)`` over ``d(a, b) + d(b, c)`` is the sum of the three
    refinement gaps.
    """
    triples = np.asarray(triples, dtype=complex)
    raw = violations = 0
    worst = -math.inf
    for a, b, c in triples:
        legs = [grid_distance(field_, p, q, steps=steps) for p, q in ((a, b), (b, c), (a, c))]
        fine = [f for f, _ in legs]
        tol = sum(abs(f - g) for f, g in legs)
        excess = fine[2] - fine[0] - fine[1]
        raw += excess > 0
        violations += excess > tol
        worst = max(worst, excess - tol)
    return {"triples": int(len(triples)), "raw_violations": int(raw),
            "violations": int(violations), "max_excess_over_tolerance": float(worst)}


def distance(table: MomentTable, z, w, method: str = "segment",
             field_: Optional[MetricField] = None) -> DistanceResult:
    """Distance estimate between ``z`` and ``w``.

    ``segment`` integrates the metric along the arc/radial/orthogonal curve
    (an upper bound); ``grid`` runs a graph geodesic (one variable only;
    converges from above as the grid is refined); ``ellipsoid`` is the
    local quasi-distance ``|z - P_z w| Phi'^1/2 + |w - P_z w| Psi'^1/2``.
    """
    if method == "ellipsoid":
        return DistanceResult(ellipsoid_distance(table, z, w), "approx")
    n = table.n
    zz, ww = _as_point(z, n), _as_point(w, n)
    if np.array_equal(zz, ww):
        return DistanceResult(0.0, "upper" if method == "segment" else "approx")
    if method not in ("segment", "grid"):
        raise ValueError(f"unknown method {method!r}")
    if method == "grid" and n != 1:
        raise ValueError("grid distance is available for n = 1 only")
    if field_ is None:
        reach = max(np.linalg.norm(zz), np.linalg.norm(ww))
        if method == "grid":
            reach += 0.75 * abs(ww[0] - zz[0]) + 1e-9
        field_ = MetricField(table, 1.05 * reach + 1e-12)
    if method == "segment":
        return DistanceResult(segment_distance(field_, zz, ww), "upper")
    return DistanceResult(grid_distance(field_, zz, ww)[0], "approx")


_CHUNK = 32


@dataclass
class PsiLattice:
    points: np.ndarray
    covering_radius: float
    backend: str
    domain_radius: float
    resolution: float
    geometry: Optional[GridGeometry] = field(default=None, repr=False)
    candidates: Optional[np.ndarray] = field(default=None, repr=False)
    lattice_nodes: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self):
        return len(self.points)


def _ring_seeds(fld: MetricField, R: float, r: float, shrink: float) -> np.ndarray:
    """Staggered rings of points spaced about ``sqrt(3) r`` in the metric.

    Ring ``k`` sits at radial metric distance ``1.5 k r`` from the origin
    and carries enough points for arc steps of ``sqrt(3) r``; odd rings are
    rotated by half a step.  Both spacings are scaled by ``shrink`` so the
    misfit between neighbouring rings leaves no holes of size ``r``.
    """
    rho = np.linspace(0.0, R, 4001)
    lam = fld.lam(rho)
    u = np.concatenate([[0.0], np.cumsum(0.5 * (lam[1:] + lam[:-1]) * np.diff(rho))])
    row, step = 1.5 * r * shrink, math.sqrt(3.0) * r * shrink
    seeds = [np.zeros(1, complex)]
    for k in range(1, int(u[-1] / row) + 1):
        rk = float(np.interp(k * row, u, rho))
        m = max(1, math.ceil(2.0 * math.pi * rk * float(fld.lam(rk)) / step))
        phase = 0.5 * (k % 2) + np.arange(m)
        seeds.append(rk * np.exp(2j * math.pi * phase / m))
    return np.concatenate(seeds)


def build_lattice(table: MomentTable, R: float, r: float, backend: str = "grid",
                  stencil: int = 2, layout: str = "rings", shrink: float = 0.9,
                  max_nodes: int = 2_000_000) -> PsiLattice:
    """Psi-lattice on the disc ``|z| <= R`` with covering radius ``r``.

    Candidates form a square grid with spacing 1/8 of the smallest local
    ball semi-axis ``r / lam`` over the disc.  A candidate is accepted
    unless it lies within distance ``< r`` of an accepted point, so the
    result is r-separated and, once every candidate has been visited,
    covers the disc with radius ``r``.

    ``layout="greedy"`` visits candidates by increasing ``|z|``; this packs
    points about ``r`` apart.  ``layout="rings"`` (grid backend only) first
    offers the sparser staggered rings of ``_ring_seeds`` and then fills
    the remaining holes greedily, which roughly halves the number of
    points and the overlap of the doubled balls.  ``grid`` measures
    distance by graph geodesics (n = 1), ``ellipsoid`` by the symmetrized
    quasi-distance.
    """
    if r <= 0 or R <= 0:
        raise ValueError("need r > 0 and R > 0")
    if layout not in ("rings", "greedy"):
        raise ValueError(f"unknown layout {layout!r}")
    n = table.n
    if backend == "grid":
        if n != 1:
            raise ValueError("grid backend needs n = 1; use backend='ellipsoid'")
        fld = MetricField(table, R * 1.02)
        lam_max = float(fld.lam(np.linspace(0, R, 401)).max())
        h = r / (8.0 * lam_max)
        geo = GridGeometry(fld, 0j, h, R, disc_radius=R, stencil=stencil, max_nodes=max_nodes)
        pts = geo.points
        order = np.argsort(np.abs(pts), kind="stable")
        if layout == "rings":
            seeds = _ring_seeds(fld, R, r, shrink)
            tree = cKDTree(np.c_[pts.real, pts.imag])
            first = tree.query(np.c_[seeds.real, seeds.imag])[1]
            order = np.concatenate([first, order])
        near = np.full(pts.size, np.inf)
        chosen = []
        for i in order:
            if near[i] < r:
                continue
            chosen.append(i)
            near = np.minimum(near, geo.distances([i], limit=r)[0])
        chosen = np.asarray(chosen)
        return PsiLattice(pts[chosen], float(r), "grid", float(R), h, geo, pts, chosen)
    if backend != "ellipsoid":
        raise ValueError(f"unknown backend {backend!r}")
    w = table.weight
    rho = np.linspace(0, R, 401)
    semi = np.sqrt(np.maximum(w.phi1(rho**2), w.psi1(rho**2)))
    h = r / (8.0 * float(semi.max()))
    m = int(math.ceil(R / h))
    axes = [np.arange(-m, m + 1) * h] * (2 * n)
    if (2 * m + 1) ** (2 * n) > 8 * max_nodes:
        raise MemoryError("ellipsoid candidate grid exceeds the node budget")
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2 * n)
    grid = grid[np.linalg.norm(grid, axis=1) <= R]
    if grid.shape[0] > max_nodes:
        raise MemoryError(f"{grid.shape[0]} candidates exceed the budget of {max_nodes}")
    cand = grid[:, 0::2] + 1j * grid[:, 1::2]
    tree = cKDTree(grid)
    order = np.argsort(np.linalg.norm(grid, axis=1), kind="stable")
    covered = np.zeros(len(cand), bool)
    chosen = []
    floor = np.sqrt(np.minimum(w.phi1(rho**2), w.psi1(rho**2)))
    for i in order:
        if covered[i]:
            continue
        chosen.append(i)
        a = cand[i]
        lam_lo = float(floor[min(400, int(np.linalg.norm(a) / R * 400))])
        reach = min(2 * R, r / lam_lo) if lam_lo > 0 else 2 * R
        near = np.asarray(tree.query_ball_point(grid[i], reach * (1 + 1e-9) + h), dtype=int)
        near = near[~covered[near]]
        if near.size:
            covered[near[ellipsoid_distances(table, a, cand[near], symmetric=True) < r]] = True
    chosen = np.asarray(chosen)
    pts = cand[chosen]
    return PsiLattice(pts[:, 0] if n == 1 else pts, float(r), "ellipsoid", float(R), h, None,
                      cand, chosen)


def lattice_checks(lat: PsiLattice, table: Optional[MomentTable] = None) -> dict:
    """Separation, covering and doubled-ball multiplicity measured on the candidates.

    ``min_separation`` is the smallest distance between distinct lattice
    points (``>= r`` required), ``max_cover`` the largest distance from a
    candidate to its nearest lattice point (``< r`` required) and
    ``multiplicity`` the largest number of balls ``B(a_k, 2r)`` sharing a
    candidate.
    """
    r = lat.covering_radius
    nodes = lat.lattice_nodes
    if lat.backend == "grid":
        geo = lat.geometry
        counts = np.zeros(geo.points.size, dtype=np.int64)
        reached = np.zeros(geo.points.size, bool)
        sep_min = math.inf
        for start in range(0, len(nodes), _CHUNK):
            block = nodes[start:start + _CHUNK]
            near = geo.distances(block, limit=2 * r)
            counts += (near < 2 * r).sum(axis=0)
            reached |= np.isfinite(near).any(axis=0)
            sep = near[:, nodes]
            sep[np.arange(block.size), np.arange(start, start + block.size)] = np.inf
            sep_min = min(sep_min, float(sep.min()))
        cover = geo.distances(nodes, min_only=True)
        return {
            "points": int(len(nodes)),
            "min_separation": sep_min,
            "max_cover": float(cover.max()),
            "multiplicity": int(counts.max()),
            "reachable_fraction": float(reached.mean()),
        }
    if table is None:
        raise ValueError("ellipsoid lattice checks need the moment table")
    cand = lat.candidates
    pts = cand[nodes]
    d = np.array([ellipsoid_distances(table, a, cand, symmetric=True) for a in pts])
    sep = d[:, nodes]
    np.fill_diagonal(sep, np.inf)
    return {
        "points": int(len(nodes)),
        "min_separation": float(sep.min()) if len(nodes) > 1 else math.inf,
        "max_cover": float(d.min(axis=0).max()),
        "multiplicity": int((d < 2 * r).sum(axis=0).max()),
        "reachable_fraction": 1.0,
    }


def lattice_ball_areas(lat: PsiLattice):
    """Areas of ``B(a_k, r)`` from node counts on the lattice grid.

    Returns ``(areas, interior)``; balls that touch the edge of the disc are
    cut off and flagged ``False`` in ``interior``.
    """
    if lat.backend != "grid":
        raise ValueError("ball areas need the grid backend")
    geo = lat.geometry
    r, h = lat.covering_radius, lat.resolution
    nodes = lat.lattice_nodes
    areas = np.empty(len(nodes))
    interior = np.empty(len(nodes), bool)
    mod = np.abs(geo.points)
    for start in range(0, len(nodes), _CHUNK):
        block = nodes[start:start + _CHUNK]
        inside = geo.distances(block, limit=r) < r
        areas[start:start + block.size] = inside.sum(axis=1) * h * h
        far = np.where(inside, mod[None, :], 0.0).max(axis=1)
        interior[start:start + block.size] = far < lat.domain_radius - 2 * h
    return areas, interior


def lattice_density(lat: PsiLattice, bins: int = 8, inner: float = 0.25) -> dict:
    """Point counts in annuli and fitted log-log slopes against the annulus radius.

    ``area_slope`` is the slope of points per unit area; ``linear_slope`` (half
    of it) is the slope of the inverse spacing.  Annuli inside ``inner * R``
    are skipped because the count there is a handful of points.
    """
    R = lat.domain_radius
    rho = np.linalg.norm(lat.points, axis=1) if lat.points.ndim > 1 else np.abs(lat.points)
    edges = np.linspace(inner * R, R, bins + 1)
    counts, _ = np.histogram(rho, edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    area = math.pi * (edges[1:] ** 2 - edges[:-1] ** 2)
    dens = counts / area
    slope = loglog_slope(mid, dens)
    return {"radii": mid.tolist(), "counts": counts.tolist(), "area_density": dens.tolist(),
            "area_slope": slope, "linear_slope": 0.5 * slope}


@dataclass(frozen=True)
class BallVolume:
    measured: float
    std_error: float
    stated_estimate: float
    model_estimate: float
    samples: int
    sampler: str


def ball_volume(table: MomentTable, z, r: float, sampler: str = "grid", seed: int = 0,
                budget: int = 100_000, cells: int = 60) -> BallVolume:
    """Euclidean volume of ``{w : rho_hat(z, w) < r}``.

    ``sampler="grid"`` (one variable) counts graph-geodesic cells of size
    ``h^2``; ``sampler="mc"`` samples uniformly in the box around the model
    ellipsoid of radius ``2Mr`` (``M`` doubles while accepted samples touch the
    box) using the graph distance field for ``n = 1`` and the straight-chord
    length (an upper bound for the distance) for ``n = 2``.  The two reference scales are
    ``Phi'(|z|^2)^-1/2 Psi'(|z|^2)^((n-1)/2)`` and
    ``Phi'(|z|^2)^-1 Psi'(|z|^2)^-(n-1)``.
    """
    n = table.n
    if n not in (1, 2):
        raise ValueError("ball volumes are measured for n in {1, 2}")
    z = _as_point(z, n)
    w = table.weight
    x2 = float(np.vdot(z, z).real)
    p1, q1 = float(w.phi1(x2)), float(w.psi1(x2))
    stated = p1**-0.5 * q1 ** ((n - 1) / 2)
    model = p1**-1.0 * q1 ** (-(n - 1))
    rng = np.random.default_rng(seed)

    # Euclidean semi-axes of the model ellipsoid D(z, r)
    fld = None
    for M in (2.0, 4.0, 8.0, 16.0):
        ax_par = M * r / math.sqrt(max(p1, 1e-300))
        ax_perp = M * r / math.sqrt(max(q1, 1e-300))
        if n == 1:
            reach = abs(z[0]) + ax_par
            fld = MetricField(table, 1.05 * reach)
            lam_min = float(fld.lam(np.linspace(max(0, abs(z[0]) - ax_par), reach, 101)).min())
            half = min(ax_par, r / lam_min * 1.5) if lam_min > 0 else ax_par
            h = half / cells
            geo = GridGeometry(fld, complex(z[0]), h, half, stencil=3)
            src = geo.nearest(complex(z[0]))
            dist = geo.distances([src])[0]
            inside = dist < r
            edge = np.abs(geo.points.real - z[0].real).max(), np.abs(geo.points.imag - z[0].imag).max()
            on_edge = inside & ((np.abs(geo.points.real - z[0].real) > 0.95 * edge[0])
                                | (np.abs(geo.points.imag - z[0].imag) > 0.95 * edge[1]))
            if on_edge.any():
                continue
            if sampler == "grid":
                area = float(inside.sum()) * h * h
                # half a cell along the boundary of the equivalent disc
                err = 0.5 * h * 2.0 * math.sqrt(math.pi * area)
                return BallVolume(area, err, stated, model, int(geo.points.size), "grid")
            if sampler != "mc":
                raise ValueError(f"unknown sampler {sampler!r}")
            from scipy.interpolate import LinearNDInterpolator

            interp = LinearNDInterpolator(np.c_[geo.points.real, geo.points.imag], dist)
            u = rng.uniform(-half, half, size=(budget, 2))
            d = interp(u[:, 0] + z[0].real, u[:, 1] + z[0].imag)
            hit = d < r
            box = (2 * half) ** 2
            frac = hit.mean()
            return BallVolume(frac * box, box * math.sqrt(frac * (1 - frac) / budget), stated, model,
                              budget, "mc")
        # n == 2: Monte Carlo in the frame (radial complex line, orthogonal line)
        scale = np.array([ax_par, ax_par, ax_perp, ax_perp])
        fld = MetricField(table, 1.05 * (math.sqrt(x2) + float(np.linalg.norm(scale))))
        u = rng.uniform(-1, 1, size=(budget, 4)) * scale
        x = math.sqrt(x2)
        e1 = z / x if x > 0 else np.array([1, 0], complex)
        e2 = np.array([-np.conj(e1[1]), np.conj(e1[0])])
        pts = (z[None, :] + (u[:, 0] + 1j * u[:, 1])[:, None] * e1
               + (u[:, 2] + 1j * u[:, 3])[:, None] * e2)
        d = chord_length(fld, z, pts)
        hit = d < r
        if np.any(hit & (np.abs(u) > 0.95 * scale).any(axis=1)):
            continue
        box = float(np.prod(2 * scale))
        frac = hit.mean()
        return BallVolume(frac * box, box * math.sqrt(frac * (1 - frac) / budget), stated, model,
                          budget, "mc")
    raise RuntimeError("sampling box never contained the ball; budget exhausted")


def save_lattice(lat: PsiLattice, path) -> Path:
    """CSV with columns ``index,re,im`` (``re1,im1,re2,im2,...`` for n > 1)."""
    path = Path(path)
    pts = lat.points if lat.points.ndim > 1 else lat.points[:, None]
    n = pts.shape[1]
    head = "index," + ",".join(f"re{k},im{k}" if n > 1 else "re,im" for k in range(1, n + 1))
    lines = [head]
    for i, p in enumerate(pts):
        lines.append(f"{i}," + ",".join(f"{c.real:.17g},{c.imag:.17g}" for c in p))
    path.write_text("\n".join(lines) + "\n")
    return path


def load_lattice(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    vals = data[:, 1::2] + 1j * data[:, 2::2]
    return vals[:, 0] if vals.shape[1] == 1 else vals
