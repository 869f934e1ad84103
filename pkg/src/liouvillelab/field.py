"""Nodal P1 fields and the integral / level-set services built on them.

Level sets are the exact polygonal level lines of the linear interpolant.
Integrals of ``exp(linear)`` use the 3-point rule on each (sub)triangle, so
the superlevel masses below reduce to :func:`weighted_mass` when the level
drops below the field minimum.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import AsymmetricDomainError, MassOverflowError, OpenPolylineError, PlateauError
from .geometry import Line, Mesh, quadrature

EXP_LIMIT = 700.0
_GL2 = (np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)]), np.array([0.5, 0.5]))
_GL3 = (np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)]),
        np.array([5.0, 8.0, 5.0]) / 18.0)


@dataclass(frozen=True, eq=False)
class ScalarField:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n_nodes,):
            raise ValueError(f"expected {self.mesh.n_nodes} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, mesh: Mesh, fn) -> "ScalarField":
        return cls(mesh, fn(mesh.nodes[:, 0], mesh.nodes[:, 1]))

    @classmethod
    def constant(cls, mesh: Mesh, c: float) -> "ScalarField":
        return cls(mesh, np.full(mesh.n_nodes, float(c)))

    def __add__(self, other):
        o = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.mesh, self.values + o)

    def __sub__(self, other):
        o = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.mesh, self.values - o)

    def __neg__(self):
        return ScalarField(self.mesh, -self.values)

    def __mul__(self, c: float):
        return ScalarField(self.mesh, self.values * c)

    __rmul__ = __mul__

    def at(self, pts) -> np.ndarray:
        return self.mesh.interpolate(self.values, pts)

    def l2_norm(self) -> float:
        v = self.values
        return math.sqrt(max(float(v @ (self.mesh.mass_matrix @ v)), 0.0))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def mean(self) -> float:
        return float(self.mesh.lumped_mass @ self.values / self.mesh.lumped_mass.sum())

    def to_dict(self, mesh_ref: str = "mesh.json") -> dict:
        return {"mesh_ref": mesh_ref, "values": self.values.tolist()}

    def to_json(self, path, mesh_ref: str = "mesh.json") -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(mesh_ref), fh)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["node", "x", "y", "value"])
            for i, ((x, y), v) in enumerate(zip(self.mesh.nodes, self.values)):
                wr.writerow([i, repr(float(x)), repr(float(y)), repr(float(v))])


def _check_exponent(u: np.ndarray, scale: float) -> None:
    top = float(np.max(scale * u)) if len(u) else 0.0
    if top > EXP_LIMIT:
        raise MassOverflowError(f"scale*max(u) = {top:.1f} exceeds {EXP_LIMIT}")


def _gauss3_exp(area, a, b, c):
    """3-point rule for exp of a linear function with vertex values a, b, c."""
    s = 2.0 / 3.0
    t = 1.0 / 6.0
    return area / 3.0 * (np.exp(s * a + t * b + t * c) + np.exp(t * a + s * b + t * c)
                         + np.exp(t * a + t * b + s * c))


def weighted_mass(u: ScalarField, scale: float = 1.0, weight: ScalarField | None = None) -> float:
    """Integral of exp(scale*u) (times an optional nodal weight) over the mesh."""
    _check_exponent(u.values, scale)
    m = u.mesh
    if weight is None:
        vt = scale * u.values[m.triangles]
        return float(np.sum(_gauss3_exp(m.areas, vt[:, 0], vt[:, 1], vt[:, 2])))
    _, wq, bary = m.quad_points(2)
    uq = (scale * u.values[m.triangles]) @ bary.T
    hq = weight.values[m.triangles] @ bary.T
    return float(np.sum(wq * hq * np.exp(uq)))


# ------------------------------------------------------------------ level sets
class Segments(NamedTuple):
    """Level-line pieces: owning triangle, endpoints (m, 2, 2), barycentrics (m, 2, 3)."""

    tri: np.ndarray
    points: np.ndarray
    bary: np.ndarray

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.points[:, 1] - self.points[:, 0], axis=1)


def _cut_geometry(vals: np.ndarray, t: np.ndarray):
    """Per-triangle cut data for {phi > t}.

    Returns the number of vertices above ``t``, the apex vertex (the lone
    vertex on its side) and the fractions along the two apex edges where the
    interpolant crosses ``t``.
    """
    above = vals > t[:, None]
    cnt = above.sum(axis=1)
    lone_above = cnt == 1
    lone = np.where(lone_above, np.argmax(above, axis=1), np.argmin(above, axis=1))
    i = (lone + 1) % 3
    j = (lone + 2) % 3
    r = np.arange(len(vals))
    vk, vi, vj = vals[r, lone], vals[r, i], vals[r, j]
    with np.errstate(divide="ignore", invalid="ignore"):
        si = np.where(vi != vk, (t - vk) / (vi - vk), 0.0)
        sj = np.where(vj != vk, (t - vk) / (vj - vk), 0.0)
    return cnt, lone, i, j, np.clip(si, 0.0, 1.0), np.clip(sj, 0.0, 1.0)


def _superlevel_pieces(vals, wv, areas, t):
    """Mass of {phi > t} with density exp(w) in each listed triangle."""
    cnt, k, i, j, si, sj = _cut_geometry(vals, t)
    r = np.arange(len(vals))
    wk, wi, wj = wv[r, k], wv[r, i], wv[r, j]
    full = _gauss3_exp(areas, wv[:, 0], wv[:, 1], wv[:, 2])
    corner = _gauss3_exp(si * sj * areas, wk, wk + si * (wi - wk), wk + sj * (wj - wk))
    out = np.where(cnt == 3, full, 0.0)
    out = np.where(cnt == 1, corner, out)
    out = np.where(cnt == 2, full - corner, out)
    return out


def superlevel_mass(phi: ScalarField, w: ScalarField | None, t: float) -> float:
    """Integral of exp(w) over {phi > t}, cutting triangles along the level line."""
    m = phi.mesh
    if w is not None and w.mesh is not m:
        raise ValueError("phi and w must share a mesh")
    vals = phi.values[m.triangles]
    wv = np.zeros_like(vals) if w is None else w.values[m.triangles]
    if w is not None:
        _check_exponent(w.values, 1.0)
    sel = vals.max(axis=1) > t
    if not np.any(sel):
        return 0.0
    tt = np.full(int(sel.sum()), float(t))
    return float(np.sum(_superlevel_pieces(vals[sel], wv[sel], m.areas[sel], tt)))


def level_segments(phi: ScalarField, t: float) -> Segments:
    m = phi.mesh
    vals = phi.values[m.triangles]
    flat = np.all(vals == t, axis=1)
    if np.any(flat):
        raise PlateauError(f"{int(flat.sum())} triangles lie exactly on level {t!r}")
    tt = np.full(len(vals), float(t))
    cnt, k, i, j, si, sj = _cut_geometry(vals, tt)
    cut = (cnt == 1) | (cnt == 2)
    tri = np.flatnonzero(cut)
    k, i, j, si, sj = k[cut], i[cut], j[cut], si[cut], sj[cut]
    n = len(tri)
    bary = np.zeros((n, 2, 3))
    r = np.arange(n)
    bary[r, 0, k] = 1.0 - si
    bary[r, 0, i] = si
    bary[r, 1, k] = 1.0 - sj
    bary[r, 1, j] = sj
    p = m.nodes[m.triangles[tri]]
    pts = np.einsum("mek,mkd->med", bary, p)
    return Segments(tri, pts, bary)


def coarea_flux(phi: ScalarField, t: float) -> float:
    """Integral of |grad phi| over the level line {phi = t}."""
    seg = level_segments(phi, t)
    if len(seg.tri) == 0:
        return 0.0
    m = phi.mesh
    g = np.einsum("mk,mkd->md", phi.values[m.triangles[seg.tri]], m.gradients[seg.tri])
    return float(np.sum(np.linalg.norm(g, axis=1) * seg.lengths))


def level_inverse_flux(phi: ScalarField, w: ScalarField | None, t: float) -> float:
    """Integral of exp(w)/|grad phi| over {phi = t}; equals -d/dt superlevel_mass."""
    seg = level_segments(phi, t)
    if len(seg.tri) == 0:
        return 0.0
    m = phi.mesh
    g = np.einsum("mk,mkd->md", phi.values[m.triangles[seg.tri]], m.gradients[seg.tri])
    gn = np.linalg.norm(g, axis=1)
    wv = np.zeros((len(seg.tri), 3)) if w is None else w.values[m.triangles[seg.tri]]
    we = np.einsum("mek,mk->me", seg.bary, wv)
    x, wts = _GL2
    acc = np.zeros(len(seg.tri))
    for s, c in zip(x, wts):
        acc += c * np.exp((1 - s) * we[:, 0] + s * we[:, 1])
    return float(np.sum(acc * seg.lengths / gn))


# ----------------------------------------------------------------- layer cake
@dataclass(frozen=True, eq=False)
class LayerCake:
    """Superlevel masses mu(t) = int_{phi > t} exp(w) at every nodal level."""

    thresholds: np.ndarray
    masses: np.ndarray

    @property
    def total(self) -> float:
        return float(self.masses[0])

    def mass_at(self, t) -> np.ndarray:
        """Piecewise-linear interpolation of mu, zero above the top level."""
        return np.interp(t, self.thresholds, self.masses, left=self.masses[0], right=0.0)

    def level_for_mass(self, mass) -> np.ndarray:
        """Inverse of ``mass_at`` on [0, total]: the level whose superlevel mass is ``mass``."""
        # masses are non-increasing in t; flip for np.interp
        return np.interp(mass, self.masses[::-1], self.thresholds[::-1])


def layer_cake(phi: ScalarField, w: ScalarField | None = None, floor: float | None = None,
               chunk: int = 1_000_000) -> LayerCake:
    """Build mu at all nodal levels >= ``floor`` (default: min phi)."""
    m = phi.mesh
    if w is not None:
        if w.mesh is not m:
            raise ValueError("phi and w must share a mesh")
        _check_exponent(w.values, 1.0)
    levels = np.unique(phi.values)
    if floor is not None:
        levels = np.unique(np.concatenate([[float(floor)], levels[levels > floor]]))
    vals = phi.values[m.triangles]
    wv = np.zeros_like(vals) if w is None else w.values[m.triangles]
    areas = m.areas
    full = _gauss3_exp(areas, wv[:, 0], wv[:, 1], wv[:, 2])
    vmin, vmax = vals.min(axis=1), vals.max(axis=1)

    # triangles entirely above t contribute in full
    order = np.argsort(vmin)
    csum = np.concatenate([[0.0], np.cumsum(full[order][::-1])])
    n_above = len(vmin) - np.searchsorted(vmin[order], levels, side="right")
    masses = csum[n_above]

    # straddling triangles: vmin <= t < vmax
    lo = np.searchsorted(levels, vmin, side="left")
    hi = np.searchsorted(levels, vmax, side="left")
    span = hi - lo
    tri_ids = np.flatnonzero(span > 0)
    start = 0
    while start < len(tri_ids):
        csz = np.cumsum(span[tri_ids[start:]])
        stop = start + max(1, int(np.searchsorted(csz, chunk, side="right")))
        blk = tri_ids[start:stop]
        reps = span[blk]
        rep_tri = np.repeat(blk, reps)
        offs = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
        lev_idx = np.repeat(lo[blk], reps) + offs
        part = _superlevel_pieces(vals[rep_tri], wv[rep_tri], areas[rep_tri], levels[lev_idx])
        masses = masses + np.bincount(lev_idx, weights=part, minlength=len(levels))
        start = stop
    if levels[0] <= vmin.min():
        # at the minimum the superlevel set is the whole domain (up to a null set)
        masses[0] = full.sum()
    masses = np.minimum.accumulate(masses)
    masses.setflags(write=False)
    levels.setflags(write=False)
    return LayerCake(levels, masses)


# ----------------------------------------------------------- line integrals
def _as_segments(mesh: Mesh, region_boundary) -> tuple[np.ndarray, np.ndarray | None]:
    if isinstance(region_boundary, Segments):
        return region_boundary.points, region_boundary
    arr = np.asarray(region_boundary, dtype=float)
    if arr.ndim == 3:
        return arr, None
    if arr.ndim != 2 or len(arr) < 4 or not np.allclose(arr[0], arr[-1], atol=1e-12, rtol=0):
        raise OpenPolylineError("polyline must be closed (first vertex repeated at the end)")
    return np.stack([arr[:-1], arr[1:]], axis=1), None


def _check_closed(points: np.ndarray, scale: float) -> None:
    if len(points) == 0:
        return
    ends = np.round(points.reshape(-1, 2) / (1e-9 * scale)).astype(np.int64)
    _, counts = np.unique(ends, axis=0, return_counts=True)
    if np.any(counts % 2):
        raise OpenPolylineError("segment set has dangling endpoints")


def boundary_exp_half_integral(u: ScalarField, region_boundary) -> float:
    """Line integral of exp(u/2) along a closed polyline or set of level segments."""
    m = u.mesh
    pts, seg = _as_segments(m, region_boundary)
    scale = max(float(np.ptp(m.nodes)), 1.0)
    if seg is None:
        _check_closed(pts, scale)
    x, wts = _GL3
    lengths = np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1)
    if seg is not None:
        ue = np.einsum("mek,mk->me", seg.bary, u.values[m.triangles[seg.tri]])
        vals = [(1 - s) * ue[:, 0] + s * ue[:, 1] for s in x]
    else:
        qp = np.concatenate([(1 - s) * pts[:, 0] + s * pts[:, 1] for s in x])
        vals = np.split(m.interpolate(u.values, qp), len(x))
    total = sum(c * np.exp(0.5 * v) for c, v in zip(wts, vals))
    return float(np.sum(total * lengths))


def mesh_boundary_polyline(mesh: Mesh) -> np.ndarray:
    """Boundary edges of the mesh as a segment set (m, 2, 2)."""
    return mesh.nodes[mesh.boundary_edges]


def circle_polyline(center, r: float, n: int = 2048) -> np.ndarray:
    th = np.linspace(0.0, 2 * math.pi, n + 1)
    th[-1] = 0.0
    return np.column_stack([center[0] + r * np.cos(th), center[1] + r * np.sin(th)])


# ------------------------------------------------------------------- symmetry
def _check_symmetric(mesh: Mesh, axis: Line) -> None:
    dom = mesh.domain
    if dom is not None:
        dense = np.vstack(dom.boundary_loops(dom.perimeter() / 2000.0))
        d = dom.boundary_distance(axis.reflect(dense))
        if np.max(d) > 1e-6 * dom.perimeter():
            raise AsymmetricDomainError(f"domain is not symmetric about {axis}")
        return
    ref = axis.reflect(mesh.nodes[mesh.boundary])
    _, lam = mesh.locate(ref)
    if lam.min() < -0.25:
        raise AsymmetricDomainError(f"mesh is not symmetric about {axis}")


def symmetry_defect(u: ScalarField, axis: Line, eps0: float = 1e-12) -> float:
    """Relative L2 distance between u and its mirror image across ``axis``.

    Both norms use the 3-point rule; the mirror image is evaluated at the
    reflected quadrature points by point location.  Normalised by the L2 norm
    of u minus its mean, so adding a constant to u leaves the defect unchanged.
    """
    m = u.mesh
    _check_symmetric(m, axis)
    if np.ptp(u.values) == 0.0:
        return 0.0
    q, wq, bary = m.quad_points(2)
    uq = u.values[m.triangles] @ bary.T
    mirrored = m.interpolate(u.values, axis.reflect(q.reshape(-1, 2))).reshape(uq.shape)
    num = math.sqrt(float(np.sum(wq * (uq - mirrored) ** 2)))
    mean = float(np.sum(wq * uq) / np.sum(wq))
    den = math.sqrt(float(np.sum(wq * (uq - mean) ** 2)))
    return num / max(den, eps0)


def qp_values(u: ScalarField, order: int = 2) -> np.ndarray:
    """Interpolant values at quadrature points, shape (nt, nq)."""
    bary, _ = quadrature(order)
    return u.values[u.mesh.triangles] @ bary.T
