"""Radial comparison functions and rearrangement against a reference bubble.

The bubbles ``U_lam(r) = -2 ln(1 + lam^2 r^2 / 8) + 2 ln lam`` solve
``Delta U + e^U = 0`` in the plane.  Everything radial in this module is a
function of r = |x| on a ball centred at the origin.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DegeneratePairError, MassExceedsError, MeasureMismatchError, NeitherBranchError, PreconditionError
from .field import ScalarField, coarea_flux, layer_cake, level_inverse_flux, superlevel_mass
from .geometry import quadrature

EIGHT_PI = 8.0 * math.pi


# ------------------------------------------------------------------- bubbles
@dataclass(frozen=True)
class BubbleParam:
    """Concentration parameter of the bubble U_lam."""

    lam: float

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be positive and finite, got {self.lam!r}")

    def value(self, r):
        return bubble_value(self, r)

    def mass(self, r):
        return bubble_mass(self, r)

    def slope(self, r):
        """dU/dr (non-positive)."""
        lam2 = self.lam * self.lam
        r = np.asarray(r, dtype=float)
        return -4.0 * lam2 * r / (8.0 + lam2 * r * r)

    def field(self, mesh, center=(0.0, 0.0)) -> ScalarField:
        r = np.linalg.norm(mesh.nodes - np.asarray(center, dtype=float), axis=1)
        return ScalarField(mesh, bubble_value(self, r))


def _lam(b) -> float:
    return b.lam if isinstance(b, BubbleParam) else float(b)


def bubble_value(b: BubbleParam | float, r):
    lam = _lam(b)
    r = np.asarray(r, dtype=float)
    out = -2.0 * np.log1p(lam * lam * r * r / 8.0) + 2.0 * math.log(lam)
    return float(out) if out.ndim == 0 else out


def bubble_mass(b: BubbleParam | float, r):
    """Integral of e^{U_lam} over the ball of radius r."""
    lam = _lam(b)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    q = lam * lam * r * r
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(np.isinf(q), EIGHT_PI, EIGHT_PI * q / (8.0 + q))
    return float(out) if out.ndim == 0 else out


def bubble_radius(b: BubbleParam | float, mass):
    """Radius of the ball on which e^{U_lam} has the given mass (< 8 pi)."""
    lam = _lam(b)
    m = np.asarray(mass, dtype=float)
    if np.any(m < 0) or np.any(m >= EIGHT_PI):
        raise MeasureMismatchError(f"mass must lie in [0, 8 pi); got max {float(np.max(m)):.6g}")
    out = np.sqrt(8.0 * m / (lam * lam * (EIGHT_PI - m)))
    return float(out) if out.ndim == 0 else out


def bubble_pair(lam1: BubbleParam | float, R: float) -> BubbleParam:
    """The other bubble that agrees with U_lam1 on the circle of radius R.

    U_a(R) = U_b(R) with a != b forces a*b*R^2 = 8, so the two masses on B_R
    add up to 8 pi.
    """
    lam1 = _lam(lam1)
    if not (lam1 > 0 and R > 0):
        raise ValueError("lam1 and R must be positive")
    prod = lam1 * R * R
    if abs(lam1 * prod - 8.0) <= 1e-12 * 8.0:
        raise DegeneratePairError(f"lam1^2*R^2 = {lam1 * prod!r} equals 8; the pair collapses onto lam1")
    return BubbleParam(8.0 / prod)


# ------------------------------------------------------------- radial profile
@dataclass(frozen=True, eq=False)
class RadialProfile:
    """A radial function psi(r) sampled on 0 = r_0 < r_1 < ... < r_n.

    Between samples the profile is linear.  ``func`` / ``deriv`` optionally
    hold the exact function and its r-derivative; the radial checks then
    integrate those with adaptive quadrature instead of the samples.
    """

    radii: np.ndarray
    values: np.ndarray
    decreasing: bool = False
    func: Callable | None = field(default=None, repr=False)
    deriv: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        r = np.array(self.radii, dtype=float)
        v = np.array(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
            raise ValueError("radii and values must be 1-D arrays of equal length >= 2")
        if r[0] != 0.0:
            raise ValueError("radii must start at 0")
        if np.any(np.diff(r) <= 0):
            raise ValueError("radii must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("profile values must be finite")
        if self.decreasing and np.any(np.diff(v) >= 0):
            raise ValueError("profile flagged strictly decreasing but is not")
        r.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, fn, R: float, n: int = 513, deriv=None, decreasing: bool = False):
        r = np.linspace(0.0, R, n)
        return cls(r, fn(r), decreasing, fn, deriv)

    @classmethod
    def bubble(cls, b: BubbleParam | float, R: float, n: int = 513) -> "RadialProfile":
        b = b if isinstance(b, BubbleParam) else BubbleParam(float(b))
        return cls.from_function(b.value, R, n, b.slope, decreasing=True)

    @property
    def R(self) -> float:
        return float(self.radii[-1])

    def at(self, r):
        if self.func is not None:
            return self.func(np.asarray(r, dtype=float))
        return np.interp(r, self.radii, self.values)

    def shifted(self, other: "RadialProfile") -> "RadialProfile":
        """Pointwise sum on the union of both radius grids (clipped to the shorter range)."""
        R = min(self.R, other.R)
        r = np.union1d(self.radii[self.radii <= R], other.radii[other.radii <= R])
        return RadialProfile(r, np.interp(r, self.radii, self.values) + np.interp(r, other.radii, other.values))

    def mass(self, r: float | None = None) -> float:
        """Integral of e^psi over the ball of radius r (default: the full range)."""
        r = self.R if r is None else float(r)
        if self.func is not None:
            val, _ = integrate.quad(lambda s: 2 * math.pi * s * math.exp(float(self.func(s))),
                                    0.0, r, epsabs=0.0, epsrel=1e-13, limit=200)
            return val
        return float(self._cumulative_mass(np.array([r]))[0])

    def _cumulative_mass(self, rs: np.ndarray) -> np.ndarray:
        """Radial mass of the piecewise-linear profile up to each r in ``rs``."""
        x, wts = np.polynomial.legendre.leggauss(6)
        x, wts = 0.5 * (x + 1.0), 0.5 * wts
        knots = self.radii
        r0, r1 = knots[:-1], knots[1:]
        v0, v1 = self.values[:-1], self.values[1:]
        seg = np.zeros(len(r0))
        for s, c in zip(x, wts):
            rr = r0 + s * (r1 - r0)
            seg += c * rr * np.exp(v0 + s * (v1 - v0))
        seg *= 2 * math.pi * (r1 - r0)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        out = np.empty(len(rs))
        for i, rq in enumerate(rs):
            k = int(np.clip(np.searchsorted(knots, rq, side="right") - 1, 0, len(r0) - 1))
            if rq <= knots[k]:
                out[i] = cum[k]
                continue
            a, b = knots[k], min(rq, knots[k + 1])
            va = v0[k]
            slope = (v1[k] - v0[k]) / (r1[k] - r0[k])
            part = 0.0
            for s, c in zip(x, wts):
                rr = a + s * (b - a)
                part += c * rr * math.exp(va + slope * (rr - a))
            out[i] = cum[k] + 2 * math.pi * (b - a) * part
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["r", "value"])
            for r, v in zip(self.radii, self.values):
                wr.writerow([repr(float(r)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "RadialProfile":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([float(r["r"]) for r in rows]), np.array([float(r["value"]) for r in rows]))


@dataclass(frozen=True, eq=False)
class Rearrangement:
    """Rearranged profile together with the data it was built from."""

    profile: RadialProfile
    bubble: BubbleParam
    total_mass: float
    radius: float
    cake: object
    floor: float

    def radius_for_level(self, t):
        """Radius of {phi* > t} (the mass-matched ball)."""
        return bubble_radius(self.bubble, np.minimum(self.cake.mass_at(t), self.total_mass))


# --------------------------------------------------------------- reports
@dataclass(frozen=True)
class CheckReport:
    """Outcome of a numerical check: pass flag, worst margin and named details."""

    name: str
    passed: bool
    margin: float
    details: dict

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "margin": float(self.margin),
                "details": self.details}


# ---------------------------------------------------------- subsolution test
def subsolution_defect(w: ScalarField) -> np.ndarray:
    """Per-interior-node weak value of Delta w + e^w, divided by the lumped mass.

    The load uses the same 3-point rule as the nonlinear solver, so a field
    that solves Delta w + e^w = f discretely returns the nodal average of f.
    """
    m = w.mesh
    bary, wq = quadrature(2)
    ew = np.exp(w.values[m.triangles] @ bary.T)
    load = np.zeros(m.n_nodes)
    contrib = (m.areas[:, None] * wq[None, :] * ew) @ bary
    np.add.at(load, m.triangles, contrib)
    lap = -(m.stiffness @ w.values)
    i = m.interior
    return (lap[i] + load[i]) / m.lumped_mass[i]


def subsolution_violation(w: ScalarField) -> float:
    """Area-normalized lumped-L2 norm of the negative part of Delta w + e^w.

    Nodal values of the weak defect are O(1) at a handful of nodes next to a
    curved boundary even for exact solutions, so a pointwise minimum does not
    converge under refinement; this norm does.
    """
    d = subsolution_defect(w)
    lm = w.mesh.lumped_mass[w.mesh.interior]
    return math.sqrt(float(np.sum(lm * np.minimum(d, 0.0) ** 2) / np.sum(lm)))


def rearrange(phi: ScalarField, w: ScalarField | None, lam1: BubbleParam | float,
              floor: float | None = None, slack: float | None = None) -> Rearrangement:
    """Radial non-increasing profile equimeasurable with phi.

    The superlevel sets of phi carry the measure e^w dx; the profile lives on
    the ball carrying the same e^{U_lam1} mass.  ``floor`` restricts the
    construction to {phi > floor}.  When ``slack`` is given, w must satisfy
    Delta w + e^w >= 0 up to ``slack``, measured as the area-normalized
    L2 norm of the negative part of the weak defect (see
    :func:`subsolution_violation`).
    """
    b = lam1 if isinstance(lam1, BubbleParam) else BubbleParam(float(lam1))
    if w is not None and slack is not None:
        worst = subsolution_violation(w)
        if worst > slack:
            raise PreconditionError(f"negative part of Delta w + e^w has size {worst:.3e} > {slack:.3e}")
    cake = layer_cake(phi, w, floor)
    total = cake.total
    if total >= EIGHT_PI:
        raise MeasureMismatchError(f"total mass {total:.6g} >= 8 pi cannot be matched by any ball")
    masses = cake.masses[::-1]
    levels = cake.thresholds[::-1]
    radii = bubble_radius(b, np.clip(masses, 0.0, None))
    radii = np.atleast_1d(radii)
    # equal masses give equal radii; keep the highest level at each radius
    keep = np.concatenate([[True], np.diff(radii) > 0])
    radii, levels = radii[keep], levels[keep]
    if radii[0] != 0.0:
        radii = np.concatenate([[0.0], radii])
        levels = np.concatenate([[levels[0]], levels])
    if len(radii) == 1:
        # constant phi: the whole mass sits on one level
        R = bubble_radius(b, total)
        radii = np.array([0.0, max(R, 1e-300)])
        levels = np.array([levels[0], levels[0]])
    prof = RadialProfile(radii, levels)
    lo = float(cake.thresholds[0])
    return Rearrangement(prof, b, total, float(radii[-1]), cake, lo)


def quantile_levels(phi: ScalarField, w: ScalarField | None, n: int = 64,
                    floor: float | None = None, shift: float = 1e-9) -> np.ndarray:
    """n levels splitting the e^w mass of {phi > floor} into n+1 equal parts."""
    cake = layer_cake(phi, w, floor)
    fr = np.arange(1, n + 1) / (n + 1)
    return cake.level_for_mass(cake.total * fr) + shift


def equimeasurability_defect(phi: ScalarField, w: ScalarField | None, rearr: Rearrangement,
                             t_samples=None) -> float:
    """sup_t |mu*(t) - mu(t)| / mu(min phi) over sampled thresholds.

    mu(t) is the exact e^w mass of {phi > t} on the mesh; mu*(t) is the
    e^{U_lam1} mass of the ball where the profile exceeds t, read off the
    profile itself (not from the layer cake it was built from).
    """
    if t_samples is None:
        t_samples = quantile_levels(phi, w, 64, rearr.floor if np.ptp(phi.values) > 0 else None)
    prof = rearr.profile
    r, v = prof.radii, prof.values
    ref = superlevel_mass(phi, w, float(phi.values.min()) - 1.0)
    worst = 0.0
    for t in np.asarray(t_samples, dtype=float):
        above = np.flatnonzero(v > t)
        if len(above) == 0:
            rt = 0.0
        elif above[-1] == len(v) - 1:
            rt = r[-1]
        else:
            k = above[-1]
            # linear crossing between knots k and k+1
            rt = r[k] + (r[k + 1] - r[k]) * (v[k] - t) / (v[k] - v[k + 1])
        mu_star = float(bubble_mass(rearr.bubble, rt))
        worst = max(worst, abs(mu_star - superlevel_mass(phi, w, float(t))) / ref)
    return worst


def gradient_comparison_check(phi: ScalarField, w: ScalarField | None, rearr: Rearrangement,
                              t_samples=None, slack: float = 1e-2) -> CheckReport:
    """Level-line gradient flux of phi* against that of phi, sample by sample.

    The flux of phi* across {phi* = t} is 2 pi r |phi*'(r)|, and equimeasurability
    fixes |phi*'| = (2 pi r e^{U(r)}) / (-mu'(t)) with mu the superlevel mass
    of phi.  -mu'(t) is evaluated exactly from the level line of phi.  A sample
    passes when lhs <= rhs * (1 + slack).
    """
    m = phi.mesh
    bvals = phi.values[m.boundary]
    floor = None
    if np.ptp(bvals) > 0:
        # on a level line that reaches the boundary the comparison is not claimed
        floor = float(bvals.max())
    if t_samples is None:
        t_samples = quantile_levels(phi, w, 64, floor if floor is not None else rearr.floor)
    t_samples = np.asarray(t_samples, dtype=float)
    rows = []
    passed = True
    worst = math.inf
    lo, hi = float(phi.values.min()), float(phi.values.max())
    for t in t_samples:
        if t <= lo or t >= hi:
            rows.append({"t": float(t), "lhs": 0.0, "rhs": 0.0, "slack": 0.0})
            continue
        mu = superlevel_mass(phi, w, t)
        r = bubble_radius(rearr.bubble, mu)
        dmu = level_inverse_flux(phi, w, t)
        lhs = (2 * math.pi * r) ** 2 * math.exp(bubble_value(rearr.bubble, r)) / dmu if dmu > 0 else 0.0
        rhs = coarea_flux(phi, t)
        margin = rhs * (1.0 + slack) - lhs
        worst = min(worst, margin)
        passed &= margin >= 0
        rows.append({"t": float(t), "lhs": lhs, "rhs": rhs, "slack": rhs - lhs})
    if worst == math.inf:
        worst = 0.0
    return CheckReport("gradient_comparison", bool(passed), float(worst),
                       {"samples": rows, "boundary_floor": floor})


def _profile_slopes(psi: RadialProfile, rs: np.ndarray) -> np.ndarray:
    if psi.deriv is not None:
        return np.asarray(psi.deriv(rs), dtype=float)
    if psi.func is not None:
        h = 1e-6 * max(psi.R, 1.0)
        lo = np.maximum(rs - h, 0.0)
        return (psi.func(rs + h) - psi.func(lo)) / (rs + h - lo)
    k = np.clip(np.searchsorted(psi.radii, rs, side="right") - 1, 0, len(psi.radii) - 2)
    return (psi.values[k + 1] - psi.values[k]) / (psi.radii[k + 1] - psi.radii[k])


def radial_bol_check(psi: RadialProfile, R: float | None = None, n_samples: int = 200,
                     tol: float = 1e-10) -> CheckReport:
    """Radial Bol test: flux hypothesis on every sampled circle, then the conclusion.

    hypothesis margin(r) = int_{B_r} e^psi - 2 pi r |psi'(r)|  (>= 0 required)
    conclusion margin    = (2 pi R e^{psi(R)/2})^2 - m (8 pi - m) / 2
    """
    R = psi.R if R is None else float(R)
    m_tot = psi.mass(R)
    if m_tot > EIGHT_PI * (1 + tol):
        raise MassExceedsError(f"radial mass {m_tot:.6g} exceeds 8 pi")
    if psi.func is not None:
        rs = np.linspace(0.0, R, n_samples + 1)[1:]
        masses = np.array([psi.mass(r) for r in rs])
    else:
        knots = psi.radii[psi.radii <= R]
        rs = 0.5 * (knots[:-1] + knots[1:])
        masses = psi._cumulative_mass(rs)
    flux = 2 * math.pi * rs * np.abs(_profile_slopes(psi, rs))
    hyp = masses - flux
    scale = np.maximum(masses, 1e-300)
    hyp_ok = bool(np.all(hyp >= -tol * scale))
    lhs = (2 * math.pi * R * math.exp(0.5 * float(psi.at(R)))) ** 2
    rhs = 0.5 * m_tot * (EIGHT_PI - m_tot)
    concl = lhs - rhs
    return CheckReport(
        "radial_bol", hyp_ok and concl >= -tol * max(lhs, 1.0), float(concl),
        {"hypothesis_min_margin": float(np.min(hyp)) if len(hyp) else 0.0,
         "hypothesis_min_relative": float(np.min(hyp / scale)) if len(hyp) else 0.0,
         "hypothesis_holds": hyp_ok, "lhs": lhs, "rhs": rhs, "mass": m_tot,
         "relative_margin": concl / max(lhs, rhs, 1e-300)})


def mass_dichotomy_check(psi: RadialProfile, lam1: BubbleParam | float, R: float,
                         tol: float = 1e-10, boundary_tol: float = 1e-6) -> CheckReport:
    """Which side of the paired-bubble mass gap the radial mass of e^psi falls on.

    branch "first": m <= bubble_mass(lam1, R); branch "second":
    m >= bubble_mass(lam2, R) with lam2 the paired bubble.  Anything strictly
    inside the gap (beyond ``tol`` relative to 8 pi) raises NeitherBranchError.
    """
    b1 = lam1 if isinstance(lam1, BubbleParam) else BubbleParam(float(lam1))
    edge = float(psi.at(R))
    if abs(edge - bubble_value(b1, R)) > boundary_tol * max(1.0, abs(edge)):
        raise PreconditionError(f"psi(R) = {edge:.9g} differs from U_lam1(R) = {bubble_value(b1, R):.9g}")
    b2 = bubble_pair(b1, R)
    m = psi.mass(R)
    m1, m2 = bubble_mass(b1, R), bubble_mass(b2, R)
    first = m1 - m
    second = m - m2
    slack = tol * EIGHT_PI
    if first >= -slack:
        branch, margin = "first", first
    elif second >= -slack:
        branch, margin = "second", second
    else:
        raise NeitherBranchError(f"mass {m:.9g} lies strictly between {m1:.9g} and {m2:.9g}")
    return CheckReport("mass_dichotomy", True, float(margin),
                       {"branch": branch, "mass": m, "mass_lam1": m1, "mass_lam2": m2,
                        "lam1": b1.lam, "lam2": b2.lam})
