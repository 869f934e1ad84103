"""Catalogue of Liouville-type equation families and their discretization.

Every family is written as a sum of exponential terms.  Equation ``k`` reads

    -Delta u_k = s * sum_j c_j h_j(x) exp(e_j u_{comp_j})

where ``s = rho / Z(u)`` for normalized families (Z is the denominator
integral) and ``s = 1`` otherwise, and ``h_j = exp(-4 pi N_j G)`` is a
singular weight built from the Green's function with pole ``p.pole``.

:class:`DiscreteProblem` turns a :class:`ProblemSpec` plus a mesh into a
Galerkin residual and Jacobian with Dirichlet data eliminated.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import BoundaryDataError, ConditionViolatedError, NegativeStrengthError, VariantWithoutTransformError
from .field import EXP_LIMIT, ScalarField
from .geometry import BoundaryData, DomainSpec, GreenFunction, Mesh, green_function, quadrature

PI = math.pi


class Term(NamedTuple):
    eq: int
    comp: int
    coef: float
    expo: float
    strength: float = 0.0


# ------------------------------------------------------------------ variants
@dataclass(frozen=True)
class MeanField:
    """-Delta u = rho e^u / int e^u."""

    rho: float
    name = "mean_field"
    n_components = 1
    normalized = True

    def terms(self):
        return [Term(0, 0, 1.0, 1.0)]

    def denominator(self):
        return [(0, 1.0)]


@dataclass(frozen=True)
class SinhGordonPositive:
    """-Delta u = rho (e^u + sum_i e^{a_i u}) / int (e^u + sum_i e^{a_i u}), a_i > 0."""

    rho: float
    exponents: tuple = (0.5,)
    name = "sinh_gordon_positive"
    n_components = 1
    normalized = True

    def __post_init__(self):
        object.__setattr__(self, "exponents", tuple(float(a) for a in np.atleast_1d(self.exponents)))

    @property
    def a_max(self) -> float:
        return max([1.0, *self.exponents])

    def terms(self):
        return [Term(0, 0, 1.0, 1.0)] + [Term(0, 0, 1.0, a) for a in self.exponents]

    def denominator(self):
        return [(0, 1.0)] + [(0, a) for a in self.exponents]


@dataclass(frozen=True)
class SinhGordonSigned:
    """-Delta u = rho (e^u - e^{-a u}) / int (e^u + e^{-a u}), u = 0 on the boundary."""

    rho: float
    a: float = 1.0
    name = "sinh_gordon_signed"
    n_components = 1
    normalized = True

    def terms(self):
        return [Term(0, 0, 1.0, 1.0), Term(0, 0, -1.0, -self.a)]

    def denominator(self):
        return [(0, 1.0), (0, -self.a)]


@dataclass(frozen=True)
class NonNormalized:
    """-Delta u = e^u + sign(alpha) e^{alpha u}."""

    alpha: float
    name = "non_normalized"
    n_components = 1
    normalized = False

    def terms(self):
        return [Term(0, 0, 1.0, 1.0), Term(0, 0, math.copysign(1.0, self.alpha), self.alpha)]

    def denominator(self):
        return []


@dataclass(frozen=True)
class CosmicString:
    """-Delta u = sum_i h_i e^{a_i u} with h_i = exp(-4 pi N_i G).

    The two-term equation e^{au} + h e^u is ``terms=((a, 0), (1, N))``.
    """

    terms_: tuple = ((1.0, 0.0), (1.0, 1.0))
    name = "cosmic_string"
    n_components = 1
    normalized = False

    def __post_init__(self):
        object.__setattr__(self, "terms_", tuple((float(a), float(n)) for a, n in self.terms_))

    @classmethod
    def two_term(cls, a: float, N: float) -> "CosmicString":
        return cls(((a, 0.0), (1.0, N)))

    @property
    def a_max(self) -> float:
        return max(a for a, _ in self.terms_)

    def terms(self):
        return [Term(0, 0, 1.0, a, n) for a, n in self.terms_]

    def denominator(self):
        return []


@dataclass(frozen=True)
class TodaSystem:
    """-Delta u1 = A e^{u1} - B e^{u2};  -Delta u2 = B' e^{u2} - A' e^{u1}."""

    A: float
    A_prime: float
    B: float
    B_prime: float
    name = "toda"
    n_components = 2
    normalized = False

    @property
    def alpha_strength(self) -> float:
        return 0.0

    def terms(self):
        s = self.alpha_strength
        return [Term(0, 0, self.A, 1.0, s), Term(0, 1, -self.B, 1.0, s),
                Term(1, 1, self.B_prime, 1.0, s), Term(1, 0, -self.A_prime, 1.0, s)]

    def denominator(self):
        return []


@dataclass(frozen=True)
class SingularToda(TodaSystem):
    """Toda-type system with a Dirac source 4 pi alpha at the pole, in desingularized form.

    The unknowns are u~_i = u_i + 4 pi alpha G, which solve the system with
    every exponential multiplied by h = exp(-4 pi alpha G).
    """

    alpha: float = 0.0
    name = "singular_toda"

    @property
    def alpha_strength(self) -> float:
        return self.alpha


@dataclass(frozen=True)
class Gelfand:
    """-Delta u = rho h e^u with h = exp(-4 pi alpha G) (h = 1 for alpha = 0)."""

    rho: float
    alpha: float = 0.0
    name = "gelfand"
    n_components = 1
    normalized = False

    def terms(self):
        return [Term(0, 0, self.rho, 1.0, self.alpha)]

    def denominator(self):
        return []


VARIANTS = {cls.name: cls for cls in (MeanField, SinhGordonPositive, SinhGordonSigned, NonNormalized,
                                      CosmicString, TodaSystem, SingularToda, Gelfand)}


def variant_to_dict(v) -> dict:
    d = {"name": v.name}
    for k, val in asdict(v).items():
        key = "terms" if k == "terms_" else k
        d[key] = [list(t) for t in val] if key == "terms" else (list(val) if isinstance(val, tuple) else val)
    return d


def variant_from_dict(d: dict):
    d = dict(d)
    name = d.pop("name")
    if name not in VARIANTS:
        raise ConditionViolatedError(f"unknown problem variant {name!r}")
    cls = VARIANTS[name]
    if "terms" in d:
        d["terms_"] = tuple(tuple(t) for t in d.pop("terms"))
    if "exponents" in d:
        d["exponents"] = tuple(d["exponents"])
    for k in ("A'", "B'"):
        if k in d:
            d[k[0] + "_prime"] = d.pop(k)
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConditionViolatedError(f"bad parameters for {name}: {exc}") from None


@dataclass(frozen=True)
class ProblemSpec:
    variant: object
    boundary: BoundaryData = field(default_factory=BoundaryData)
    pole: tuple = (0.0, 0.0)

    @property
    def n_components(self) -> int:
        return self.variant.n_components

    @property
    def name(self) -> str:
        return self.variant.name

    @property
    def uses_pole(self) -> bool:
        return any(t.strength > 0 for t in self.variant.terms())

    def with_param(self, name: str, value: float) -> "ProblemSpec":
        """Copy with one variant parameter replaced (``a`` addresses the first exponent where needed)."""
        v = self.variant
        if name == "a" and isinstance(v, SinhGordonPositive):
            return replace(self, variant=replace(v, exponents=(float(value), *v.exponents[1:])))
        if name in ("a", "N") and isinstance(v, CosmicString):
            terms = list(v.terms_)
            if name == "a":
                terms[0] = (float(value), terms[0][1])
            else:
                terms[-1] = (terms[-1][0], float(value))
            return replace(self, variant=replace(v, terms_=tuple(terms)))
        return replace(self, variant=replace(v, **{name: float(value)}))

    def param(self, name: str) -> float:
        v = self.variant
        if name == "a" and isinstance(v, SinhGordonPositive):
            return v.exponents[0]
        if name == "a" and isinstance(v, CosmicString):
            return v.terms_[0][0]
        if name == "N" and isinstance(v, CosmicString):
            return v.terms_[-1][1]
        return float(getattr(v, name))

    def to_dict(self) -> dict:
        return {"variant": variant_to_dict(self.variant), "boundary": self.boundary.to_dict(),
                "pole": list(self.pole)}

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        return cls(variant_from_dict(d["variant"]), BoundaryData.from_dict(d.get("boundary")),
                   tuple(d.get("pole", (0.0, 0.0))))


# ------------------------------------------------------------ validation
@dataclass(frozen=True)
class DerivedConstants:
    """Constants implied by a problem: system balance and the theorem thresholds.

    ``threshold`` bounds ``rho`` when ``threshold_kind == "rho"`` and the mass
    functional named ``mass_name`` otherwise.  ``pair_threshold`` bounds the
    sum of that functional over two solutions (no-intersection statements).
    """

    M: float | None
    D: float | None
    threshold: float
    threshold_kind: str
    mass_name: str
    pair_threshold: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _thresholds(v):
    if isinstance(v, MeanField):
        return 8 * PI, "rho", "Z", None
    if isinstance(v, SinhGordonPositive):
        n = len(v.exponents) + 1
        return 8 * PI / (n * v.a_max), "rho", "Z", None
    if isinstance(v, SinhGordonSigned):
        return 8 * PI / (1 + v.a), "rho", "Z", None
    if isinstance(v, NonNormalized):
        if v.alpha > 0:
            return 4 * PI, "mass", "mass_exp1", 8 * PI
        return 8 * PI / (1 - v.alpha), "mass", "total", None
    if isinstance(v, CosmicString):
        n = len(v.terms_)
        return 8 * PI / (v.a_max * n), "mass", "gamma", 16 * PI / (v.a_max * n)
    if isinstance(v, TodaSystem):
        M = v.A + v.A_prime
        return 8 * PI / M, "mass", "pair", None
    if isinstance(v, Gelfand):
        return 4 * PI, "mass", "mass", 8 * PI
    raise ConditionViolatedError(f"unknown variant {v!r}")


def validate(p: ProblemSpec, domain: DomainSpec | None = None) -> DerivedConstants:
    """Check every coefficient/boundary hypothesis of ``p``; return derived constants."""
    v = p.variant
    bad = []
    g = p.boundary
    if domain is not None and not domain.simply_connected and not g.is_constant:
        bad.append("multiply-connected domain requires constant boundary data")
    rho = getattr(v, "rho", None)
    if rho is not None and not rho > 0:
        bad.append(f"rho must be positive (got {rho})")
    if isinstance(v, SinhGordonPositive):
        if not v.exponents or any(a <= 0 for a in v.exponents):
            bad.append("exponents must be positive")
    if isinstance(v, (SinhGordonPositive, CosmicString)) and not g.nonneg:
        bad.append("boundary data must be flagged non-negative")
    if isinstance(v, SinhGordonSigned):
        if not v.a > 0:
            bad.append(f"a must be positive (got {v.a})")
        if not (g.is_constant and (g.kind == "constant" and g.value == 0.0 or
                                   g.kind == "values" and all(x == 0.0 for x in g.values))):
            bad.append("signed sinh-Gordon requires zero boundary data")
    if isinstance(v, NonNormalized):
        if not (-1.0 <= v.alpha < 1.0) or v.alpha == 0.0:
            bad.append(f"alpha must lie in [-1, 1) minus 0 (got {v.alpha})")
        if v.alpha > 0 and not g.nonneg:
            bad.append("boundary data must be flagged non-negative")
    if isinstance(v, CosmicString):
        if not v.terms_:
            bad.append("cosmic string needs at least one term")
        for a, n in v.terms_:
            if not a > 0:
                bad.append(f"term exponent must be positive (got {a})")
            if n < 0:
                bad.append(f"term multiplicity must be non-negative (got {n})")
    M = D = None
    if isinstance(v, TodaSystem):
        coeffs = {"A": v.A, "A'": v.A_prime, "B": v.B, "B'": v.B_prime}
        neg = [k for k, c in coeffs.items() if c < 0]
        if neg:
            bad.append("negative coefficients: " + ", ".join(neg))
        M1, M2 = v.A + v.A_prime, v.B + v.B_prime
        if not math.isclose(M1, M2, rel_tol=1e-12, abs_tol=1e-12):
            bad.append(f"A+A' = {M1:g} differs from B+B' = {M2:g}")
        if not M1 > 0:
            bad.append("A+A' must be positive")
        if isinstance(v, SingularToda) and v.alpha < 0:
            bad.append(f"alpha must be non-negative (got {v.alpha})")
        M, D = M1, v.A - v.B
        if not bad:
            assert math.isclose(D, v.B_prime - v.A_prime, rel_tol=1e-12, abs_tol=1e-12)
    if isinstance(v, Gelfand) and v.alpha < 0:
        bad.append(f"alpha must be non-negative (got {v.alpha})")
    if bad:
        raise ConditionViolatedError(bad)
    thr, kind, name, pair = _thresholds(v)
    return DerivedConstants(M, D, thr, kind, name, pair)


# ----------------------------------------------------------- discretization
class DiscreteProblem:
    """Galerkin residual/Jacobian of ``spec`` on ``mesh`` with Dirichlet data eliminated.

    Unknown vector layout: interior values of component 0, then component 1.
    """

    def __init__(self, spec: ProblemSpec, mesh: Mesh, green: GreenFunction | None = None):
        self.spec = spec
        self.mesh = mesh
        self.terms = spec.variant.terms()
        self.nc = spec.n_components
        self.normalized = spec.variant.normalized
        self.rho = getattr(spec.variant, "rho", 1.0)
        strengths = sorted({t.strength for t in self.terms if t.strength > 0})
        # a singular weight has a kink at the pole; the 7-point rule controls it
        self.order = 5 if strengths else 2
        bary, w = quadrature(self.order)
        self.bary = bary
        self.qw = mesh.areas[:, None] * w[None, :]
        self.green = green
        if strengths and self.green is None:
            self.green = green_function(mesh, spec.pole)
        self.weights = {0.0: None}
        if strengths:
            qp = np.einsum("qk,tkd->tqd", bary, mesh.nodes[mesh.triangles])
            for s in strengths:
                self.weights[s] = self.green.weight_at(qp, s)
        self.interior = mesh.interior
        self.n_int = len(self.interior)
        self.gvals = spec.boundary.nodal(mesh)
        self._pos = -np.ones(mesh.n_nodes, dtype=np.int64)
        self._pos[self.interior] = np.arange(self.n_int)
        t = mesh.triangles
        self._rows = np.repeat(t, 3, axis=1).ravel()
        self._cols = np.tile(t, (1, 3)).ravel()
        self._bb = np.einsum("qi,qj->qij", bary, bary)
        K = mesh.stiffness
        self.K_ii = K[self.interior][:, self.interior].tocsc()
        self.K_full = K

    # -- field plumbing
    def full(self, x: np.ndarray) -> np.ndarray:
        """Nodal arrays (nc, n) from the interior unknown vector."""
        out = np.empty((self.nc, self.mesh.n_nodes))
        for c in range(self.nc):
            out[c, self.mesh.boundary] = self.gvals
            out[c, self.interior] = x[c * self.n_int:(c + 1) * self.n_int]
        return out

    def pack(self, U: np.ndarray) -> np.ndarray:
        U = np.atleast_2d(U)
        return np.concatenate([U[c, self.interior] for c in range(self.nc)])

    def qp(self, U: np.ndarray) -> np.ndarray:
        """Values at quadrature points, shape (nc, nt, nq)."""
        return np.stack([U[c][self.mesh.triangles] @ self.bary.T for c in range(self.nc)])

    def integrate(self, vals_q: np.ndarray) -> float:
        return float(np.sum(self.qw * vals_q))

    def load(self, vals_q: np.ndarray) -> np.ndarray:
        """Nodal vector int phi_i * f for f given at quadrature points."""
        contrib = (self.qw * vals_q) @ self.bary
        return np.bincount(self.mesh.triangles.ravel(), weights=contrib.ravel(), minlength=self.mesh.n_nodes)

    def weight(self, strength: float):
        return self.weights.get(strength) if strength > 0 else None

    def _exp_q(self, uq: np.ndarray, expo: float, strength: float) -> np.ndarray:
        top = float(np.max(expo * uq))
        if top > EXP_LIMIT:
            from .errors import MassOverflowError

            raise MassOverflowError(f"exponent {top:.1f} exceeds {EXP_LIMIT}")
        e = np.exp(expo * uq)
        h = self.weight(strength)
        return e if h is None else e * h

    # -- integrals
    def denominator(self, Uq: np.ndarray) -> float:
        return sum(self.integrate(self._exp_q(Uq[c], e, 0.0)) for c, e in self.spec.variant.denominator())

    def functional(self, U, parts: Sequence[tuple]) -> float:
        """int sum coef * h_s e^{e u_c} for parts (coef, comp, expo, strength)."""
        Uq = self.qp(np.atleast_2d(U))
        return sum(k * self.integrate(self._exp_q(Uq[c], e, s)) for k, c, e, s in parts)

    # -- residual / Jacobian
    def _scale(self, Uq):
        if not self.normalized:
            return 1.0, None
        Z = self.denominator(Uq)
        return self.rho / Z, Z

    def residual_full(self, U: np.ndarray) -> np.ndarray:
        """Nodal weak residual K u - rhs, shape (nc, n); boundary rows are zeroed."""
        U = np.atleast_2d(U)
        Uq = self.qp(U)
        s, _ = self._scale(Uq)
        R = np.stack([self.K_full @ U[c] for c in range(self.nc)])
        for t in self.terms:
            R[t.eq] -= s * t.coef * self.load(self._exp_q(Uq[t.comp], t.expo, t.strength))
        R[:, self.mesh.boundary] = 0.0
        return R

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.pack(self.residual_full(self.full(x)))

    def jacobian(self, x: np.ndarray):
        """Return (A, b, c) with dF/dx = A + b c^T (b, c are None for plain problems)."""
        U = self.full(x)
        Uq = self.qp(U)
        s, Z = self._scale(Uq)
        n = self.mesh.n_nodes
        blocks = [[None] * self.nc for _ in range(self.nc)]
        for eq in range(self.nc):
            for comp in range(self.nc):
                dens = None
                for t in self.terms:
                    if t.eq == eq and t.comp == comp:
                        d = -s * t.coef * t.expo * self._exp_q(Uq[comp], t.expo, t.strength)
                        dens = d if dens is None else dens + d
                if dens is None:
                    blk = sp.csr_matrix((n, n))
                else:
                    local = np.einsum("tq,qij->tij", self.qw * dens, self._bb)
                    blk = sp.coo_matrix((local.ravel(), (self._rows, self._cols)), shape=(n, n)).tocsr()
                if eq == comp:
                    blk = blk + self.K_full
                blocks[eq][comp] = blk[self.interior][:, self.interior]
        A = sp.bmat(blocks, format="csc")
        if not self.normalized:
            return A, None, None
        Nvec = np.zeros((self.nc, n))
        for t in self.terms:
            Nvec[t.eq] += t.coef * self.load(self._exp_q(Uq[t.comp], t.expo, t.strength))
        dZ = np.zeros((self.nc, n))
        for c, e in self.spec.variant.denominator():
            dZ[c] += e * self.load(self._exp_q(Uq[c], e, 0.0))
        b = self.pack(Nvec) * (self.rho / Z ** 2)
        return A, b, self.pack(dZ)

    def density_matrix(self, dens_q: np.ndarray) -> sp.csc_matrix:
        """Interior block of the matrix int phi_i phi_j dens (dens at quadrature points)."""
        n = self.mesh.n_nodes
        local = np.einsum("tq,qij->tij", self.qw * dens_q, self._bb)
        Mx = sp.coo_matrix((local.ravel(), (self._rows, self._cols)), shape=(n, n)).tocsr()
        return Mx[self.interior][:, self.interior].tocsc()

    def source_derivatives(self, U: np.ndarray, order: int) -> np.ndarray:
        """Quadrature values of d^k/du^k of the (unnormalized) right-hand side, one component."""
        Uq = self.qp(np.atleast_2d(U))
        out = np.zeros_like(Uq[0])
        for t in self.terms:
            out += t.coef * t.expo ** order * self._exp_q(Uq[t.comp], t.expo, t.strength)
        return out

    # -- reporting
    def masses(self, U) -> dict:
        return mass_functionals(self, np.atleast_2d(U))


def _mass_parts(v) -> dict:
    """Named mass functionals as lists of (coef, comp, expo, strength)."""
    if isinstance(v, MeanField):
        return {"Z": [(1, 0, 1.0, 0.0)]}
    if isinstance(v, SinhGordonPositive):
        d = {"Z": [(1, 0, e, 0.0) for _, e in v.denominator()], "mass_exp1": [(1, 0, 1.0, 0.0)]}
        d["mass_amax"] = [(1, 0, v.a_max, 0.0)]
        return d
    if isinstance(v, SinhGordonSigned):
        return {"Z": [(1, 0, 1.0, 0.0), (1, 0, -v.a, 0.0)]}
    if isinstance(v, NonNormalized):
        return {"mass_exp1": [(1, 0, 1.0, 0.0)], "total": [(1, 0, 1.0, 0.0), (1, 0, v.alpha, 0.0)]}
    if isinstance(v, CosmicString):
        return {"gamma": [(1, 0, v.a_max, 0.0)],
                "total": [(1, 0, a, n) for a, n in v.terms_]}
    if isinstance(v, TodaSystem):
        return {"pair": [(1, 0, 1.0, 0.0), (1, 1, 1.0, 0.0)], "m1": [(1, 0, 1.0, 0.0)],
                "m2": [(1, 1, 1.0, 0.0)]}
    if isinstance(v, Gelfand):
        return {"mass": [(v.rho, 0, 1.0, v.alpha)], "mass_exp1": [(1, 0, 1.0, 0.0)]}
    raise ConditionViolatedError(f"unknown variant {v!r}")


def mass_functionals(dp: DiscreteProblem, U: np.ndarray) -> dict:
    return {k: dp.functional(U, parts) for k, parts in _mass_parts(dp.spec.variant).items()}


def _as_array(u) -> np.ndarray:
    if isinstance(u, ScalarField):
        return u.values[None, :]
    if isinstance(u, (list, tuple)):
        return np.stack([f.values if isinstance(f, ScalarField) else np.asarray(f) for f in u])
    return np.atleast_2d(np.asarray(u, dtype=float))


def _mesh_of(u) -> Mesh:
    if isinstance(u, ScalarField):
        return u.mesh
    return u[0].mesh


def residual(p: ProblemSpec, u, dp: DiscreteProblem | None = None):
    """Nodal weak residual of ``p`` at ``u`` (one field, or a pair for systems)."""
    validate(p)
    mesh = _mesh_of(u)
    dp = dp or DiscreteProblem(p, mesh)
    U = _as_array(u)
    if U.shape[0] != p.n_components:
        raise ValueError(f"{p.name} has {p.n_components} components, got {U.shape[0]}")
    gb = dp.gvals
    if np.max(np.abs(U[:, mesh.boundary] - gb)) > 1e-9 * max(1.0, float(np.max(np.abs(gb)))):
        raise BoundaryDataError("field does not satisfy the boundary data")
    R = dp.residual_full(U)
    out = [ScalarField(mesh, r) for r in R]
    return out[0] if len(out) == 1 else tuple(out)


# ----------------------------------------------------------- desingularize
def desingularize(p: ProblemSpec, u, green: GreenFunction | None = None):
    """u~ = u + 4 pi alpha G and the weight h = exp(-4 pi alpha G).

    G is taken with the logarithm dropped at a node sitting on the pole, so
    the inverse map u = u~ - 4 pi alpha G reproduces the input exactly.
    Returns (fields, h).
    """
    alpha = getattr(p.variant, "alpha", 0.0)
    if alpha < 0:
        raise NegativeStrengthError("alpha must be non-negative")
    fields = [u] if isinstance(u, ScalarField) else list(u)
    mesh = fields[0].mesh
    if alpha == 0:
        return (tuple(fields) if len(fields) > 1 else fields[0]), ScalarField.constant(mesh, 1.0)
    G = green or green_function(mesh, p.pole)
    shift = 4 * PI * alpha * G.values
    out = [f + shift for f in fields]
    h = ScalarField(mesh, G.weight_at(mesh.nodes, alpha))
    return (tuple(out) if len(out) > 1 else out[0]), h


def resingularize(p: ProblemSpec, u_tilde, green: GreenFunction | None = None):
    alpha = getattr(p.variant, "alpha", 0.0)
    fields = [u_tilde] if isinstance(u_tilde, ScalarField) else list(u_tilde)
    if alpha == 0:
        return u_tilde
    G = green or green_function(fields[0].mesh, p.pole)
    out = [f - 4 * PI * alpha * G.values for f in fields]
    return tuple(out) if len(out) > 1 else out[0]


# ------------------------------------------------------------- SCI lifting
@dataclass(frozen=True, eq=False)
class SciForm:
    """Fields w_i with Delta w_i + e^{w_i} = f_i, and how they relate to u.

    ``w_i = scale_i * u_{comp_i} + shift_i``.  ``f_q`` holds f_i at the
    quadrature points of ``dp`` so the identity can be checked exactly.
    """

    w: tuple
    f: tuple
    shifts: tuple
    scales: tuple
    comps: tuple
    f_q: tuple
    dp: DiscreteProblem

    def identity_residual(self) -> float:
        """l2 norm over interior nodes of the weak form of Delta w + e^w - f."""
        dp = self.dp
        total = 0.0
        for wi, fq in zip(self.w, self.f_q):
            wq = wi.values[dp.mesh.triangles] @ dp.bary.T
            r = -(dp.K_full @ wi.values) + dp.load(np.exp(wq)) - dp.load(fq)
            total += float(np.sum(r[dp.interior] ** 2))
        return math.sqrt(total)

    def difference_identity_residual(self) -> float:
        """Weak residual of Delta(w2 - w1) + (e^{w2} - e^{w1}) (two-field forms)."""
        dp = self.dp
        w1, w2 = self.w
        d = w2.values - w1.values
        q1 = w1.values[dp.mesh.triangles] @ dp.bary.T
        q2 = w2.values[dp.mesh.triangles] @ dp.bary.T
        r = -(dp.K_full @ d) + dp.load(np.exp(q2) - np.exp(q1)) - dp.load(self.f_q[1] - self.f_q[0])
        return float(np.linalg.norm(r[dp.interior]))

    def mass(self, i: int) -> float:
        dp = self.dp
        wq = self.w[i].values[dp.mesh.triangles] @ dp.bary.T
        return dp.integrate(np.exp(wq))


def _nodal_weight(dp: DiscreteProblem, strength: float) -> np.ndarray:
    if strength == 0:
        return np.ones(dp.mesh.n_nodes)
    return dp.green.weight_at(dp.mesh.nodes, strength)


def lift_to_sci_form(p: ProblemSpec, u, dp: DiscreteProblem | None = None) -> SciForm:
    """Change of variables turning a solution into fields with Delta w + e^w = f."""
    v = p.variant
    if isinstance(v, MeanField):
        raise VariantWithoutTransformError("the mean field equation is already in the target form")
    mesh = _mesh_of(u)
    dp = dp or DiscreteProblem(p, mesh)
    U = _as_array(u)
    Uq = dp.qp(U)
    uq, un = Uq[0], U[0]
    log = math.log

    def make(scale, comp, shift, fq, fn):
        w = ScalarField(mesh, scale * U[comp] + shift)
        return w, ScalarField(mesh, fn), shift, scale, comp, fq

    if isinstance(v, SinhGordonPositive):
        Z = dp.denominator(Uq)
        aM, n = v.a_max, len(v.exponents) + 1
        shift = log(n) + log(aM * v.rho) - log(Z)
        es = [1.0, *v.exponents]
        fq = aM * v.rho / Z * sum(np.exp(aM * uq) - np.exp(e * uq) for e in es)
        fn = aM * v.rho / Z * sum(np.exp(aM * un) - np.exp(e * un) for e in es)
        parts = [make(aM, 0, shift, fq, fn)]
    elif isinstance(v, SinhGordonSigned):
        Z = dp.denominator(Uq)
        a = v.a
        base = log(v.rho) - log(Z) + log(1 + a)
        c = v.rho / Z
        fq = c * (np.exp(-a * uq) + a * np.exp(uq))
        fn = c * (np.exp(-a * un) + a * np.exp(un))
        parts = [make(-a, 0, base, fq, fn), make(1.0, 0, base, fq, fn)]
    elif isinstance(v, NonNormalized):
        al = v.alpha
        if al > 0:
            parts = [make(1.0, 0, log(2.0), np.exp(uq) - np.exp(al * uq), np.exp(un) - np.exp(al * un))]
        else:
            a = -al
            fq = np.exp(-a * uq) + a * np.exp(uq)
            fn = np.exp(-a * un) + a * np.exp(un)
            parts = [make(-a, 0, log(1 + a), fq, fn), make(1.0, 0, log(1 + a), fq, fn)]
    elif isinstance(v, CosmicString):
        aM, n = v.a_max, len(v.terms_)
        fq = aM * sum(np.exp(aM * uq) - _qweight(dp, N) * np.exp(a * uq) for a, N in v.terms_)
        fn = aM * sum(np.exp(aM * un) - _nodal_weight(dp, N) * np.exp(a * un) for a, N in v.terms_)
        parts = [make(aM, 0, log(n * aM), fq, fn)]
    elif isinstance(v, TodaSystem):
        M = v.A + v.A_prime
        s = v.alpha_strength
        hq = _qweight(dp, s)
        hn = _nodal_weight(dp, s)
        e1q, e2q = np.exp(Uq[0]), np.exp(Uq[1])
        e1n, e2n = np.exp(U[0]), np.exp(U[1])
        f1q = (M - v.A * hq) * e1q + v.B * hq * e2q
        f2q = (M - v.B_prime * hq) * e2q + v.A_prime * hq * e1q
        f1n = (M - v.A * hn) * e1n + v.B * hn * e2n
        f2n = (M - v.B_prime * hn) * e2n + v.A_prime * hn * e1n
        parts = [make(1.0, 0, log(M), f1q, f1n), make(1.0, 1, log(M), f2q, f2n)]
    elif isinstance(v, Gelfand):
        hq = _qweight(dp, v.alpha)
        hn = _nodal_weight(dp, v.alpha)
        parts = [make(1.0, 0, log(v.rho), v.rho * (1 - hq) * np.exp(uq), v.rho * (1 - hn) * np.exp(un))]
    else:
        raise VariantWithoutTransformError(f"no transform for {v!r}")
    w, f, shifts, scales, comps, fqs = zip(*parts)
    return SciForm(tuple(w), tuple(f), tuple(shifts), tuple(scales), tuple(comps), tuple(fqs), dp)


def _qweight(dp: DiscreteProblem, strength: float):
    h = dp.weight(strength)
    return 1.0 if h is None else h
