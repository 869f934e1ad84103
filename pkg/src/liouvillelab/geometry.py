"""Domains, triangulations, quadrature and Green's functions.

Meshes are conforming P1 triangulations built from a boundary sampling on the
true curve plus a triangular lattice in the interior.  Refinement splits every
triangle 1->4 and pushes new boundary midpoints back onto the curve, so curved
domains converge at O(h^2) in area.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import Delaunay, cKDTree

from .errors import (
    BoundaryDataError,
    DegenerateDomainError,
    NegativeStrengthError,
    PoleOnBoundaryError,
)

SHAPES = ("disk", "ellipse", "rectangle", "polygon", "annulus")


class Line(NamedTuple):
    point: tuple[float, float]
    direction: tuple[float, float]

    def reflect(self, pts: np.ndarray) -> np.ndarray:
        p = np.asarray(self.point, dtype=float)
        d = np.asarray(self.direction, dtype=float)
        d = d / np.linalg.norm(d)
        rel = np.asarray(pts, dtype=float) - p
        along = rel @ d
        return p + 2.0 * along[..., None] * d - rel


X_AXIS = Line((0.0, 0.0), (1.0, 0.0))
Y_AXIS = Line((0.0, 0.0), (0.0, 1.0))


def _polygon_signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _point_segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(pts - proj, axis=1)


@dataclass(frozen=True)
class DomainSpec:
    """A bounded planar domain.

    ``params`` depends on ``shape``: ``(R,)`` for a disk, ``(a, b)`` semi-axes
    for an ellipse, ``(w, h, x0, y0)`` for a rectangle with lower-left corner
    ``(x0, y0)``, a tuple of vertex pairs for a polygon and ``(r_in, r_out)``
    for an annulus.  Disks, ellipses and annuli are centred at the origin.
    """

    shape: str
    params: tuple
    symmetry_axis: Line | None = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise DegenerateDomainError(f"unknown shape {self.shape!r}")
        if self.shape == "polygon":
            v = np.asarray(self.params, dtype=float)
            if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
                raise DegenerateDomainError("polygon needs at least 3 vertices")
            area = _polygon_signed_area(v)
            if abs(area) < 1e-14:
                raise DegenerateDomainError("polygon has zero area")
            if area < 0:
                raise DegenerateDomainError("polygon vertices must be counterclockwise")
            n = len(v)
            for i in range(n):
                for j in range(i + 1, n):
                    if j == i + 1 or (i == 0 and j == n - 1):
                        continue
                    if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                        raise DegenerateDomainError("polygon is self-intersecting")
        else:
            vals = [float(p) for p in self.params[:2]]
            if any(not math.isfinite(p) or p <= 0 for p in vals):
                raise DegenerateDomainError(f"{self.shape} needs positive dimensions")
            if self.shape == "annulus" and vals[0] >= vals[1]:
                raise DegenerateDomainError("annulus needs r_in < r_out")

    # constructors -------------------------------------------------------
    @classmethod
    def unit_disk(cls) -> "DomainSpec":
        return cls("disk", (1.0,))

    @classmethod
    def disk(cls, R: float) -> "DomainSpec":
        return cls("disk", (float(R),))

    @classmethod
    def ellipse(cls, a: float, b: float) -> "DomainSpec":
        return cls("ellipse", (float(a), float(b)))

    @classmethod
    def rectangle(cls, w: float, h: float, x0: float = 0.0, y0: float = 0.0) -> "DomainSpec":
        return cls("rectangle", (float(w), float(h), float(x0), float(y0)))

    @classmethod
    def polygon(cls, vertices: Sequence[Sequence[float]]) -> "DomainSpec":
        return cls("polygon", tuple(tuple(map(float, p)) for p in vertices))

    @classmethod
    def annulus(cls, r_in: float, r_out: float) -> "DomainSpec":
        return cls("annulus", (float(r_in), float(r_out)))

    # geometry -----------------------------------------------------------
    @property
    def is_curved(self) -> bool:
        return self.shape in ("disk", "ellipse", "annulus")

    @property
    def simply_connected(self) -> bool:
        return self.shape != "annulus"

    def vertices(self) -> np.ndarray:
        if self.shape == "polygon":
            return np.asarray(self.params, dtype=float)
        if self.shape == "rectangle":
            w, h, x0, y0 = self.params
            return np.array([[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]])
        raise ValueError(f"{self.shape} has no vertices")

    def area(self) -> float:
        if self.shape == "disk":
            return math.pi * self.params[0] ** 2
        if self.shape == "ellipse":
            return math.pi * self.params[0] * self.params[1]
        if self.shape == "annulus":
            return math.pi * (self.params[1] ** 2 - self.params[0] ** 2)
        return _polygon_signed_area(self.vertices())

    def center(self) -> np.ndarray:
        if self.is_curved:
            return np.zeros(2)
        v = self.vertices()
        if self.shape == "rectangle":
            return v.mean(axis=0)
        x, y = v[:, 0], v[:, 1]
        cross = x * np.roll(y, -1) - np.roll(x, -1) * y
        a = 0.5 * cross.sum()
        cx = np.sum((x + np.roll(x, -1)) * cross) / (6 * a)
        cy = np.sum((y + np.roll(y, -1)) * cross) / (6 * a)
        return np.array([cx, cy])

    def natural_axes(self) -> list[Line]:
        """Symmetry lines the shape has by construction."""
        if self.symmetry_axis is not None:
            return [self.symmetry_axis]
        if self.shape in ("disk", "ellipse", "annulus"):
            return [X_AXIS, Y_AXIS]
        if self.shape == "rectangle":
            c = tuple(self.center())
            return [Line(c, (1.0, 0.0)), Line(c, (0.0, 1.0))]
        return []

    def _ellipse_param(self, n: int) -> np.ndarray:
        # equal arc-length nodes; n is a multiple of 4 so both axes are mirror lines
        a, b = self.params[:2]
        s = np.linspace(0.0, 2 * math.pi, 4096 + 1)
        dl = np.hypot(a * np.sin(s), b * np.cos(s))
        arc = np.concatenate([[0.0], np.cumsum(0.5 * (dl[1:] + dl[:-1]) * np.diff(s))])
        target = np.linspace(0.0, arc[-1], n + 1)[:-1]
        th = np.interp(target, arc, s)
        return np.column_stack([a * np.cos(th), b * np.sin(th)])

    def perimeter(self) -> float:
        if self.shape == "disk":
            return 2 * math.pi * self.params[0]
        if self.shape == "annulus":
            return 2 * math.pi * (self.params[0] + self.params[1])
        if self.shape == "ellipse":
            p = self._ellipse_param(4096)
            return float(np.sum(np.linalg.norm(p - np.roll(p, -1, axis=0), axis=1)))
        v = self.vertices()
        return float(np.sum(np.linalg.norm(v - np.roll(v, -1, axis=0), axis=1)))

    def boundary_loops(self, h: float) -> list[np.ndarray]:
        """Boundary nodes on the true curve with spacing at most ``h``."""

        def circle(R):
            n = max(8, 4 * math.ceil(2 * math.pi * R / h / 4))
            th = 2 * math.pi * np.arange(n) / n
            return np.column_stack([R * np.cos(th), R * np.sin(th)])

        if self.shape == "disk":
            return [circle(self.params[0])]
        if self.shape == "annulus":
            return [circle(self.params[1]), circle(self.params[0])[::-1]]
        if self.shape == "ellipse":
            n = max(8, 4 * math.ceil(self.perimeter() / h / 4))
            return [self._ellipse_param(n)]
        v = self.vertices()
        pts = []
        for i in range(len(v)):
            a, b = v[i], v[(i + 1) % len(v)]
            k = max(1, math.ceil(np.linalg.norm(b - a) / h))
            s = np.arange(k) / k
            pts.append(a + s[:, None] * (b - a))
        return [np.vstack(pts)]

    def _dense_boundary(self) -> np.ndarray:
        return np.vstack(self.boundary_loops(self.perimeter() / 20000.0))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        if self.shape == "disk":
            return x**2 + y**2 < self.params[0] ** 2
        if self.shape == "annulus":
            r2 = x**2 + y**2
            return (r2 > self.params[0] ** 2) & (r2 < self.params[1] ** 2)
        if self.shape == "ellipse":
            a, b = self.params[:2]
            return (x / a) ** 2 + (y / b) ** 2 < 1.0
        v = self.vertices()
        inside = np.zeros(len(pts), dtype=bool)
        n = len(v)
        for i in range(n):
            xa, ya = v[i]
            xb, yb = v[(i + 1) % n]
            cond = (ya > y) != (yb > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xi = xa + (y - ya) * (xb - xa) / (yb - ya)
            inside ^= cond & (x < xi)
        return inside

    def boundary_distance(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        if self.shape == "disk":
            return np.abs(self.params[0] - r)
        if self.shape == "annulus":
            return np.minimum(np.abs(self.params[1] - r), np.abs(r - self.params[0]))
        if self.shape == "ellipse":
            d, _ = cKDTree(self._dense_boundary()).query(pts)
            return d
        v = self.vertices()
        return np.min(
            [_point_segment_distance(pts, v[i], v[(i + 1) % len(v)]) for i in range(len(v))],
            axis=0,
        )

    def project(self, pts: np.ndarray) -> np.ndarray:
        """Move points (near the boundary) onto the true boundary curve."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if not self.is_curved:
            return pts.copy()
        r = np.hypot(pts[:, 0], pts[:, 1])
        if self.shape == "disk":
            return pts * (self.params[0] / r)[:, None]
        if self.shape == "annulus":
            r_in, r_out = self.params[:2]
            target = np.where(np.abs(r - r_out) < np.abs(r - r_in), r_out, r_in)
            return pts * (target / r)[:, None]
        a, b = self.params[:2]
        s = np.sqrt((pts[:, 0] / a) ** 2 + (pts[:, 1] / b) ** 2)
        return pts / s[:, None]

    def to_dict(self) -> dict:
        d = {"shape": self.shape, "params": [list(p) if isinstance(p, tuple) else p for p in self.params]}
        if self.symmetry_axis is not None:
            d["symmetry_axis"] = {"point": list(self.symmetry_axis.point),
                                  "direction": list(self.symmetry_axis.direction)}
        return d

    @classmethod
    def from_dict(cls, d: dict | str) -> "DomainSpec":
        if isinstance(d, str):
            d = {"shape": d}
        shape = d["shape"]
        if shape == "unit-disk":
            return cls.unit_disk()
        params = d.get("params", [])
        if shape == "polygon":
            params = tuple(tuple(map(float, p)) for p in params)
        elif shape == "rectangle" and len(params) == 2:
            params = (float(params[0]), float(params[1]), 0.0, 0.0)
        else:
            params = tuple(float(p) for p in params)
        axis = d.get("symmetry_axis")
        if axis is not None:
            axis = Line(tuple(axis["point"]), tuple(axis["direction"]))
        return cls(shape, params, axis)


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet data: a constant or one value per boundary node."""

    kind: str = "constant"
    value: float = 0.0
    values: tuple[float, ...] | None = None
    nonneg: bool = True

    def __post_init__(self):
        if self.kind not in ("constant", "values"):
            raise BoundaryDataError(f"unknown boundary data kind {self.kind!r}")
        if self.kind == "values" and self.values is None:
            raise BoundaryDataError("per-node boundary data needs values")
        if self.nonneg:
            vals = [self.value] if self.kind == "constant" else list(self.values)
            if min(vals) < 0:
                raise BoundaryDataError("nonneg flag set but boundary data is negative")

    @classmethod
    def constant(cls, c: float = 0.0, nonneg: bool | None = None) -> "BoundaryData":
        return cls("constant", float(c), None, c >= 0 if nonneg is None else nonneg)

    @classmethod
    def from_values(cls, vals, nonneg: bool | None = None) -> "BoundaryData":
        vals = tuple(float(v) for v in vals)
        return cls("values", 0.0, vals, min(vals) >= 0 if nonneg is None else nonneg)

    @property
    def is_constant(self) -> bool:
        if self.kind == "constant":
            return True
        v = np.asarray(self.values)
        return bool(np.all(v == v[0]))

    def nodal(self, mesh: "Mesh") -> np.ndarray:
        """Boundary values in the order of ``mesh.boundary``."""
        if self.kind == "constant":
            return np.full(len(mesh.boundary), self.value)
        v = np.asarray(self.values, dtype=float)
        if len(v) != len(mesh.boundary):
            raise BoundaryDataError(
                f"{len(v)} boundary values for {len(mesh.boundary)} boundary nodes")
        return v

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        return {"kind": "values", "values": list(self.values)}

    @classmethod
    def from_dict(cls, d: dict | float | None) -> "BoundaryData":
        if d is None:
            return cls.constant(0.0)
        if isinstance(d, (int, float)):
            return cls.constant(float(d))
        if d.get("kind", "constant") == "constant":
            return cls.constant(float(d.get("value", 0.0)))
        return cls.from_values(d["values"])


# --------------------------------------------------------------------- quadrature
def quadrature(order: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points and weights (summing to 1) on the reference triangle.

    ``order=2`` is the 3-point rule, ``order=5`` the 7-point rule.
    """
    if order <= 2:
        a, b = 2.0 / 3.0, 1.0 / 6.0
        pts = np.array([[a, b, b], [b, a, b], [b, b, a]])
        return pts, np.full(3, 1.0 / 3.0)
    a1 = 0.059715871789770
    b1 = 0.470142064105115
    a2 = 0.797426985353087
    b2 = 0.101286507323456
    w0, w1, w2 = 0.225, 0.132394152788506, 0.125939180544827
    pts = np.array([
        [1 / 3, 1 / 3, 1 / 3],
        [a1, b1, b1], [b1, a1, b1], [b1, b1, a1],
        [a2, b2, b2], [b2, a2, b2], [b2, b2, a2],
    ])
    return pts, np.array([w0, w1, w1, w1, w2, w2, w2])


# --------------------------------------------------------------------------- mesh
@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    domain: DomainSpec | None = field(default=None)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        tris = np.array(self.triangles, dtype=np.int64)
        bnd = np.unique(np.asarray(self.boundary, dtype=np.int64))
        for arr in (nodes, tris, bnd):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary", bnd)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        t = self.triangles
        e = np.sort(np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq[counts == 1]

    @property
    def h_max(self) -> float:
        p = self.nodes[self.edges]
        return float(np.max(np.linalg.norm(p[:, 1] - p[:, 0], axis=1)))

    @cached_property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary] = False
        return np.flatnonzero(mask)

    @cached_property
    def gradients(self) -> np.ndarray:
        """Constant gradients of the three hat functions, shape (nt, 3, 2)."""
        p = self.nodes[self.triangles]
        two_a = 2.0 * self.signed_areas
        g = np.empty((len(p), 3, 2))
        for k in range(3):
            i, j = (k + 1) % 3, (k + 2) % 3
            g[:, k, 0] = (p[:, i, 1] - p[:, j, 1]) / two_a
            g[:, k, 1] = (p[:, j, 0] - p[:, i, 0]) / two_a
        return g

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        g = self.gradients
        local = np.einsum("tid,tjd->tij", g, g) * self.areas[:, None, None]
        rows = np.repeat(self.triangles, 3, axis=1).ravel()
        cols = np.tile(self.triangles, (1, 3)).ravel()
        K = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(self.n_nodes,) * 2).tocsr()
        K.sum_duplicates()
        return K

    @cached_property
    def mass_matrix(self) -> sp.csr_matrix:
        ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
        local = self.areas[:, None, None] * ref[None]
        rows = np.repeat(self.triangles, 3, axis=1).ravel()
        cols = np.tile(self.triangles, (1, 3)).ravel()
        return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(self.n_nodes,) * 2).tocsr()

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        return np.bincount(self.triangles.ravel(), weights=np.repeat(self.areas / 3.0, 3),
                           minlength=self.n_nodes)

    def quad_points(self, order: int = 2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Physical quadrature points (nt, nq, 2), weights (nt, nq) and basis values (nq, 3)."""
        bary, w = quadrature(order)
        p = self.nodes[self.triangles]
        pts = np.einsum("qk,tkd->tqd", bary, p)
        return pts, self.areas[:, None] * w[None, :], bary

    @cached_property
    def _centroid_tree(self) -> cKDTree:
        return cKDTree(self.nodes[self.triangles].mean(axis=1))

    def barycentric(self, tri: np.ndarray, pts: np.ndarray) -> np.ndarray:
        p = self.nodes[self.triangles[tri]]
        v0, v1 = p[..., 1, :] - p[..., 0, :], p[..., 2, :] - p[..., 0, :]
        r = pts - p[..., 0, :]
        det = v0[..., 0] * v1[..., 1] - v0[..., 1] * v1[..., 0]
        l1 = (r[..., 0] * v1[..., 1] - r[..., 1] * v1[..., 0]) / det
        l2 = (v0[..., 0] * r[..., 1] - v0[..., 1] * r[..., 0]) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)

    def locate(self, pts: np.ndarray, k: int = 12) -> tuple[np.ndarray, np.ndarray]:
        """Containing triangle and barycentric coordinates for each point.

        Points outside the mesh get the least-violating triangle, so values
        there are linear extrapolations.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        k = min(k, len(self.triangles))
        _, cand = self._centroid_tree.query(pts, k=k)
        cand = np.atleast_2d(cand).reshape(len(pts), k)
        bary = self.barycentric(cand, np.repeat(pts[:, None, :], k, axis=1))
        score = bary.min(axis=2)
        best = np.argmax(score, axis=1)
        tri = cand[np.arange(len(pts)), best]
        lam = bary[np.arange(len(pts)), best]
        bad = np.flatnonzero(lam.min(axis=1) < -1e-10)
        for i in bad:
            all_b = self.barycentric(np.arange(len(self.triangles)),
                                     np.broadcast_to(pts[i], (len(self.triangles), 2)))
            j = int(np.argmax(all_b.min(axis=1)))
            tri[i], lam[i] = j, all_b[j]
        return tri, lam

    def interpolate(self, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
        tri, lam = self.locate(pts)
        return np.einsum("pk,pk->p", lam, np.asarray(values)[self.triangles[tri]])

    def inradius_at(self, c: np.ndarray) -> float:
        bpts = self.nodes[self.boundary]
        return float(np.min(np.linalg.norm(bpts - np.asarray(c), axis=1)))

    def to_dict(self) -> dict:
        d = {
            "nodes": self.nodes.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary": self.boundary.tolist(),
        }
        if self.domain is not None:
            d["domain"] = self.domain.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Mesh":
        dom = DomainSpec.from_dict(d["domain"]) if "domain" in d else None
        return cls(np.asarray(d["nodes"], float), np.asarray(d["triangles"], np.int64),
                   np.asarray(d["boundary"], np.int64), dom)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_json(cls, path) -> "Mesh":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _lattice(center: np.ndarray, lo: np.ndarray, hi: np.ndarray, h: float) -> np.ndarray:
    dy = h * math.sqrt(3.0) / 2.0
    k0 = math.floor((lo[1] - center[1]) / dy) - 1
    k1 = math.ceil((hi[1] - center[1]) / dy) + 1
    j0 = math.floor((lo[0] - center[0]) / h) - 1
    j1 = math.ceil((hi[0] - center[0]) / h) + 1
    rows = []
    for k in range(k0, k1 + 1):
        off = 0.5 * (abs(k) % 2)
        x = center[0] + (np.arange(j0, j1 + 1) + off) * h
        rows.append(np.column_stack([x, np.full_like(x, center[1] + k * dy)]))
    return np.vstack(rows)


_SMOOTHING_SWEEPS = 3


def _clipped_delaunay(spec: DomainSpec, pts: np.ndarray, h: float) -> np.ndarray:
    tri = Delaunay(pts).simplices
    p = pts[tri]
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    return tri[spec.contains(p.mean(axis=1)) & (np.abs(area) > 1e-10 * h**2)]


def build_mesh(spec: DomainSpec, target_h: float) -> Mesh:
    """Triangulate ``spec`` with edge lengths close to ``target_h``."""
    if not (target_h > 0 and math.isfinite(target_h)):
        raise ValueError("target_h must be positive")
    if spec.area() <= 0:
        raise DegenerateDomainError("domain has zero area")
    loops = spec.boundary_loops(target_h)
    bpts = np.vstack(loops)
    lo, hi = bpts.min(axis=0), bpts.max(axis=0)
    lat = _lattice(spec.center(), lo, hi, target_h)
    keep = spec.contains(lat)
    lat = lat[keep]
    lat = lat[spec.boundary_distance(lat) > 0.55 * target_h]
    pts = np.vstack([bpts, lat]).astype(float)
    nb = len(bpts)

    tri = _clipped_delaunay(spec, pts, target_h)
    # a few Laplacian sweeps even out the boundary layer left by the lattice cut
    for _ in range(_SMOOTHING_SWEEPS):
        e = np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        e = np.vstack([e, e[:, ::-1]])
        deg = np.bincount(e[:, 0], minlength=len(pts)).astype(float)
        acc = np.zeros_like(pts)
        np.add.at(acc, e[:, 0], pts[e[:, 1]])
        free = np.arange(nb, len(pts))
        free = free[deg[free] > 0]
        pts[free] = acc[free] / deg[free][:, None]
        tri = _clipped_delaunay(spec, pts, target_h)
    p = pts[tri]
    area = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]

    used = np.unique(tri)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    nodes = pts[used]
    tri = remap[tri]
    boundary = remap[np.arange(nb)]
    boundary = boundary[boundary >= 0]
    mesh = Mesh(nodes, tri, boundary, spec)
    if len(mesh.interior) < 3:
        raise DegenerateDomainError("target_h too coarse: fewer than 3 interior nodes")
    return mesh


def refine_mesh(m: Mesh) -> Mesh:
    """Uniform 1->4 refinement; curved boundary midpoints go back on the curve."""
    edges = m.edges
    n = m.n_nodes
    mid = 0.5 * (m.nodes[edges[:, 0]] + m.nodes[edges[:, 1]])
    key = edges[:, 0] * n + edges[:, 1]
    order = np.argsort(key)
    skey = key[order]

    def mid_index(a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        return n + order[np.searchsorted(skey, lo * n + hi)]

    bkey = m.boundary_edges[:, 0] * n + m.boundary_edges[:, 1]
    bmid = order[np.searchsorted(skey, bkey)]
    if m.domain is not None and m.domain.is_curved:
        mid[bmid] = m.domain.project(mid[bmid])
    t = m.triangles
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    ab, bc, ca = mid_index(a, b), mid_index(b, c), mid_index(c, a)
    tris = np.vstack([
        np.column_stack([a, ab, ca]),
        np.column_stack([b, bc, ab]),
        np.column_stack([c, ca, bc]),
        np.column_stack([ab, bc, ca]),
    ])
    nodes = np.vstack([m.nodes, mid])
    boundary = np.concatenate([m.boundary, n + bmid])
    return Mesh(nodes, tris, boundary, m.domain)


# ---------------------------------------------------------------- Green's function
@dataclass(frozen=True, eq=False)
class GreenFunction:
    """Dirichlet Green's function G(x) = -ln|x - pole|/(2 pi) + H(x).

    Only the smooth part H is stored (``regular``, nodal).  At a node sitting
    on the pole the logarithmic part is dropped, so nodal arrays stay finite.
    """

    mesh: Mesh
    pole: np.ndarray
    regular: np.ndarray
    analytic: bool

    def _closed_regular(self, pts: np.ndarray) -> np.ndarray:
        R = self.mesh.domain.params[0]
        p = self.pole
        rp = float(np.hypot(*p))
        if rp < 1e-300:
            return np.full(len(pts), math.log(R) / (2 * math.pi))
        star = p * (R * R / rp**2)
        d = np.linalg.norm(pts - star, axis=1)
        return np.log(rp * d / R) / (2 * math.pi)

    def regular_at(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.analytic:
            return self._closed_regular(pts)
        return self.mesh.interpolate(self.regular, pts)

    def at(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = np.linalg.norm(pts - self.pole, axis=1)
        with np.errstate(divide="ignore"):
            return -np.log(r) / (2 * math.pi) + self.regular_at(pts)

    @property
    def pole_nodes(self) -> np.ndarray:
        r = np.linalg.norm(self.mesh.nodes - self.pole, axis=1)
        return np.flatnonzero(r < 1e-12)

    @property
    def values(self) -> np.ndarray:
        """Nodal G with the logarithm dropped at pole nodes (finite everywhere)."""
        r = np.linalg.norm(self.mesh.nodes - self.pole, axis=1)
        sing = np.zeros_like(r)
        nz = r >= 1e-12
        sing[nz] = -np.log(r[nz]) / (2 * math.pi)
        return sing + self.regular

    def weight_at(self, pts: np.ndarray, strength: float) -> np.ndarray:
        """exp(-4 pi s G) = |x - pole|^(2s) exp(-4 pi s H), finite at the pole."""
        pts = np.asarray(pts, dtype=float)
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, 2)
        if strength == 0:
            return np.ones(shape)
        r = np.linalg.norm(flat - self.pole, axis=1)
        w = r ** (2.0 * strength) * np.exp(-4 * math.pi * strength * self.regular_at(flat))
        return w.reshape(shape)


def green_function(m: Mesh, pole=(0.0, 0.0), method: str = "auto") -> GreenFunction:
    """Green's function of -Delta with Dirichlet data, pole strictly inside.

    On disks the closed form (image charge) is used unless ``method`` is
    ``"numeric"``; elsewhere the regular part is the discrete harmonic
    extension of ln|x - pole|/(2 pi) from the boundary.
    """
    pole = np.asarray(pole, dtype=float)
    dom = m.domain
    if dom is not None:
        inside = bool(dom.contains(pole[None])[0]) and dom.boundary_distance(pole[None])[0] > 1e-12
    else:
        tri, lam = m.locate(pole[None])
        inside = lam.min() > -1e-12 and np.min(np.linalg.norm(m.nodes[m.boundary] - pole, axis=1)) > 1e-12
    if not inside:
        raise PoleOnBoundaryError(f"pole {pole.tolist()} is not strictly interior")
    use_closed = method == "analytic" or (method == "auto" and dom is not None and dom.shape == "disk")
    if use_closed:
        if dom is None or dom.shape != "disk":
            raise ValueError("closed form only available on disks")
        g = GreenFunction(m, pole, np.empty(0), True)
        reg = g._closed_regular(m.nodes)
        reg.setflags(write=False)
        return GreenFunction(m, pole, reg, True)
    K = m.stiffness
    b, i = m.boundary, m.interior
    H = np.zeros(m.n_nodes)
    H[b] = np.log(np.linalg.norm(m.nodes[b] - pole, axis=1)) / (2 * math.pi)
    rhs = -K[i][:, b] @ H[b]
    H[i] = spla.spsolve(K[i][:, i].tocsc(), rhs)
    H.setflags(write=False)
    return GreenFunction(m, pole, H, False)


def singular_weight(G: GreenFunction, strength: float):
    """Nodal field h = exp(-4 pi strength G); zero at a pole node when strength > 0."""
    from .field import ScalarField

    if strength < 0:
        raise NegativeStrengthError("strength must be non-negative")
    return ScalarField(G.mesh, G.weight_at(G.mesh.nodes, strength))
