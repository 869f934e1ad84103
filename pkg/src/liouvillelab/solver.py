"""Damped Newton, multi-start search and parameter continuation.

All solves work on the Dirichlet-eliminated Galerkin system built by
:class:`~liouvillelab.problems.DiscreteProblem`.  Normalized problems have a
dense rank-one Jacobian term which is handled with the Sherman-Morrison
formula around a sparse LU factorization.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegenerateTriangleError, MassOverflowError, StartUnsolvableError
from .field import ScalarField
from .geometry import Mesh
from .problems import DiscreteProblem, ProblemSpec, validate

ITERATIVE_THRESHOLD = 200_000


# ------------------------------------------------------------------ operator
@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """P1 stiffness matrix, lumped mass and Dirichlet mask of a mesh."""

    mesh: Mesh
    stiffness: sp.csr_matrix
    lumped_mass: np.ndarray
    boundary_mask: np.ndarray

    def energy(self, u) -> float:
        v = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
        return float(v @ (self.stiffness @ v))


def assemble(m: Mesh) -> DiscreteOperator:
    if np.any(m.signed_areas <= 0):
        raise DegenerateTriangleError(f"{int(np.sum(m.signed_areas <= 0))} triangles have non-positive area")
    mask = np.zeros(m.n_nodes, dtype=bool)
    mask[m.boundary] = True
    mask.setflags(write=False)
    return DiscreteOperator(m, m.stiffness, m.lumped_mass, mask)


# -------------------------------------------------------------------- Newton
@dataclass(frozen=True)
class NewtonConfig:
    residual_tol: float = 1e-10
    max_iters: int = 60
    backtrack: float = 0.5
    armijo: float = 1e-4
    min_step: float = 1e-8

    def __post_init__(self):
        for name in ("residual_tol", "max_iters", "backtrack", "armijo", "min_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.residual_tol < 1:
            raise ValueError("residual_tol must be < 1")


@dataclass(frozen=True, eq=False)
class SolveResult:
    fields: tuple
    converged: bool
    iterations: int
    residual: float
    masses: dict
    status: str = "converged"
    history: tuple = ()

    @property
    def field(self) -> ScalarField:
        return self.fields[0]

    @property
    def sup_norm(self) -> float:
        return max(f.sup_norm() for f in self.fields)

    def summary(self) -> dict:
        return {"converged": self.converged, "status": self.status, "iterations": self.iterations,
                "residual": self.residual, "sup_norm": self.sup_norm, "masses": dict(self.masses)}


class _Linear:
    """Factorized A (+ b c^T) solver."""

    def __init__(self, A, b, c):
        self.b, self.c = b, c
        if A.shape[0] > ITERATIVE_THRESHOLD:
            self._lu = None
            self._A = A.tocsr()
            self._diag = A.diagonal()
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                self._lu = spla.splu(A.tocsc(), permc_spec="COLAMD")
        self._z = None
        if b is not None:
            self._z = self._base(b)
            denom = 1.0 + c @ self._z
            if abs(denom) < 1e-14:
                raise np.linalg.LinAlgError("rank-one update is singular")
            self._denom = denom

    def _base(self, r):
        if self._lu is not None:
            x = self._lu.solve(r)
        else:
            M = sp.diags(1.0 / self._diag)
            x, info = spla.cg(self._A, r, M=M, rtol=1e-13, maxiter=20_000)
        if not np.all(np.isfinite(x)):
            raise np.linalg.LinAlgError("singular Jacobian")
        return x

    def solve(self, r):
        y = self._base(r)
        if self._z is None:
            return y
        return y - self._z * ((self.c @ y) / self._denom)


def _initial_vector(dp: DiscreteProblem, initial) -> np.ndarray:
    if isinstance(initial, ScalarField):
        U = initial.values[None, :]
    elif isinstance(initial, (list, tuple)):
        U = np.stack([f.values if isinstance(f, ScalarField) else np.asarray(f, float) for f in initial])
    else:
        U = np.atleast_2d(np.asarray(initial, dtype=float))
    if U.shape[0] == 1 and dp.nc == 2:
        U = np.vstack([U, U])
    return dp.pack(U)


def newton_solve(p: ProblemSpec, op: DiscreteOperator, initial=None, cfg: NewtonConfig | None = None,
                 dp: DiscreteProblem | None = None) -> SolveResult:
    """Damped Newton with Armijo backtracking.

    The sufficient-decrease test uses the simplified Newton correction
    |J(x_k)^{-1} F(x_k + t dx)|, which is invariant under rescaling of the
    equations and does not stall on the steep exponential residuals.

    ``initial`` may be a ScalarField, a tuple of fields, or a nodal array;
    its boundary values are replaced by the problem's Dirichlet data.
    Failures are reported through ``status`` rather than raised.
    """
    cfg = cfg or NewtonConfig()
    validate(p)
    dp = dp or DiscreteProblem(p, op.mesh)
    x = np.zeros(dp.nc * dp.n_int) if initial is None else _initial_vector(dp, initial)
    history = []
    status = "max-iterations"
    try:
        F = dp.residual(x)
    except MassOverflowError:
        return _result(dp, x, False, 0, math.inf, "overflow", history)
    norm = float(np.linalg.norm(F))
    best = (norm, x)
    history.append(norm)
    it = 0
    while it < cfg.max_iters:
        if norm <= cfg.residual_tol:
            status = "converged"
            break
        it += 1
        try:
            A, b, c = dp.jacobian(x)
            lin = _Linear(A, b, c)
            dx = lin.solve(-F)
        except (RuntimeError, np.linalg.LinAlgError, spla.MatrixRankWarning):
            status = "jacobian-singular"
            break
        # Armijo test on the affine-invariant merit |J^{-1} F|, reusing the factorization
        dnorm2 = float(dx @ dx)
        t = 1.0
        accepted = False
        while t >= cfg.min_step:
            xt = x + t * dx
            try:
                Ft = dp.residual(xt)
                dbar = lin.solve(-Ft)
            except MassOverflowError:
                t *= cfg.backtrack
                continue
            nt = float(np.linalg.norm(Ft))
            if not math.isfinite(nt):
                t *= cfg.backtrack
                continue
            with np.errstate(over="ignore"):
                merit = float(dbar @ dbar)
            if merit <= (1.0 - 2.0 * cfg.armijo * t) * dnorm2 or nt <= cfg.residual_tol:
                accepted = True
                break
            t *= cfg.backtrack
        if not accepted:
            status = "line-search-failed"
            break
        x, F, norm = xt, Ft, nt
        history.append(norm)
        if norm < best[0]:
            best = (norm, x)
    else:
        if norm <= cfg.residual_tol:
            status = "converged"
    converged = status == "converged"
    if not converged:
        norm, x = best
    return _result(dp, x, converged, it, norm, status, history)


def _result(dp, x, converged, it, norm, status, history):
    U = dp.full(x)
    fields = tuple(ScalarField(dp.mesh, U[c]) for c in range(dp.nc))
    try:
        masses = dp.masses(U)
    except MassOverflowError:
        masses = {}
    return SolveResult(fields, converged, it, float(norm), masses, status, tuple(history))


# --------------------------------------------------------------- multi-start
def initial_menu(p: ProblemSpec, mesh: Mesh, K: int, seed: int) -> list[np.ndarray]:
    """Deterministic starting guesses: 0, +-1, +-3, then seeded Gaussian bumps.

    Bump heights are uniform in [-4, 4], widths in [0.1, 0.5] * diameter,
    centres uniform over the domain.  Arrays have shape (nc, n_nodes).
    """
    nc = p.n_components
    n = mesh.n_nodes
    out = []
    for c in (0.0, 1.0, -1.0, 3.0, -3.0):
        if len(out) == K:
            return out
        out.append(np.full((nc, n), c))
    rng = np.random.default_rng(seed)
    lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
    diam = float(np.linalg.norm(hi - lo))
    while len(out) < K:
        U = np.zeros((nc, n))
        for comp in range(nc):
            for _ in range(1 + int(rng.integers(0, 2))):
                while True:
                    cpt = lo + rng.random(2) * (hi - lo)
                    _, lam = mesh.locate(cpt[None])
                    if lam.min() >= 0:
                        break
                height = rng.uniform(-4.0, 4.0)
                width = rng.uniform(0.1, 0.5) * diam
                d2 = np.sum((mesh.nodes - cpt) ** 2, axis=1)
                U[comp] += height * np.exp(-d2 / (2 * width * width))
        out.append(U)
    return out


@dataclass(frozen=True, eq=False)
class MultiStartResult:
    results: tuple
    clusters: tuple  # each: tuple of start indices
    representatives: tuple  # SolveResult per cluster

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)


def cluster_solutions(results, tol: float = 1e-4):
    """Group converged results by sup-norm distance (first member is the representative)."""
    clusters = []
    reps = []
    for i, r in enumerate(results):
        if not r.converged:
            continue
        U = np.stack([f.values for f in r.fields])
        for k, rep in enumerate(reps):
            if np.max(np.abs(U - rep)) <= tol:
                clusters[k].append(i)
                break
        else:
            clusters.append([i])
            reps.append(U)
    return [tuple(c) for c in clusters]


def multi_start(p: ProblemSpec, op: DiscreteOperator, K: int = 20, seed: int = 0,
                cfg: NewtonConfig | None = None, jobs: int = 1, tol: float = 1e-4) -> MultiStartResult:
    if K < 1:
        raise ValueError("K must be >= 1")
    dp = DiscreteProblem(p, op.mesh)
    starts = initial_menu(p, op.mesh, K, seed)

    def run(U0):
        return newton_solve(p, op, U0, cfg, dp)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(run, starts))
    else:
        results = [run(U0) for U0 in starts]
    clusters = cluster_solutions(results, tol)
    reps = tuple(results[c[0]] for c in clusters)
    return MultiStartResult(tuple(results), tuple(clusters), reps)


# -------------------------------------------------------------- continuation
@dataclass(frozen=True)
class StepPolicy:
    initial: float
    min_fraction: float = 1e-4
    grow: float = 1.5
    max_step: float | None = None


@dataclass(frozen=True, eq=False)
class ContinuationTrace:
    param: str
    values: tuple
    summaries: tuple
    norms: tuple
    fold: float | None = None
    stopped: str = "completed"
    results: tuple = field(default=(), repr=False)

    def to_rows(self) -> list[dict]:
        rows = []
        for v, s, nrm in zip(self.values, self.summaries, self.norms):
            row = {"param": v, "norm": nrm, "converged": s["converged"]}
            row.update({f"mass_{k}": m for k, m in sorted(s["masses"].items())})
            rows.append(row)
        return rows

    def to_csv(self, path) -> None:
        rows = self.to_rows()
        keys = ["param", "norm"] + sorted({k for r in rows for k in r if k.startswith("mass_")}) + ["converged"]
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=keys)
            wr.writeheader()
            for r in rows:
                wr.writerow({k: (repr(r[k]) if isinstance(r.get(k), float) else r.get(k)) for k in keys})


def continuation(p: ProblemSpec, op: DiscreteOperator, param: str, start: float, stop: float,
                 policy: StepPolicy | None = None, initial=None, cfg: NewtonConfig | None = None,
                 keep_results: bool = False) -> ContinuationTrace:
    """Natural-parameter continuation from ``start`` toward ``stop``.

    The predictor extrapolates linearly from the last two converged points.
    A failed step is halved; once it drops below ``min_fraction * |stop - start|``
    the run ends and the last converged value is reported as a fold.
    """
    span = stop - start
    if span == 0:
        raise ValueError("empty parameter range")
    direction = math.copysign(1.0, span)
    policy = policy or StepPolicy(abs(span) / 20)
    hmin = policy.min_fraction * abs(span)
    hmax = policy.max_step or abs(span) / 5
    cur = p.with_param(param, start)
    res = newton_solve(cur, op, initial, cfg)
    if not res.converged:
        raise StartUnsolvableError(f"no solution at {param} = {start} ({res.status})")
    vals, sums, norms, kept = [start], [res.summary()], [res.sup_norm], [res]
    prev_x = None
    x = np.stack([f.values for f in res.fields])
    lam = start
    h = min(policy.initial, hmax)
    stopped = "completed"
    fold = None
    while direction * (stop - lam) > 1e-14 * abs(span):
        step = min(h, abs(stop - lam))
        nxt = lam + direction * step
        guess = x if prev_x is None else x + (x - prev_x) * (step / prev_step)
        trial = newton_solve(p.with_param(param, nxt), op, guess, cfg)
        if trial.converged:
            prev_x, prev_step = x, step
            x = np.stack([f.values for f in trial.fields])
            lam = nxt
            vals.append(lam)
            sums.append(trial.summary())
            norms.append(trial.sup_norm)
            if keep_results:
                kept.append(trial)
            if trial.iterations <= 4:
                h = min(h * policy.grow, hmax)
            continue
        h *= 0.5
        if h < hmin:
            stopped = "fold"
            fold = lam
            break
    return ContinuationTrace(param, tuple(vals), tuple(sums), tuple(norms), fold, stopped,
                             tuple(kept) if keep_results else ())


# --------------------------------------------------------------- fold points
@dataclass(frozen=True, eq=False)
class FoldPoint:
    """Turning point of -Delta u = mu * rhs(u): the solution where the Jacobian is singular."""

    mu: float
    field: ScalarField
    null_vector: np.ndarray
    converged: bool
    iterations: int
    residual: float
    masses: dict


def fold_point(p: ProblemSpec, op: DiscreteOperator, guess, null_guess=None,
               cfg: NewtonConfig | None = None) -> FoldPoint:
    """Locate the turning point of the family obtained by scaling the right-hand side by mu.

    Newton on the extended system F(u, mu) = 0, J(u, mu) phi = 0, l.phi = 1
    (single-component, non-normalized problems).  The continuum problem at
    mu = 1 is the fold itself when its linearization is singular; the
    discrete turning point then approximates that solution at the
    discretization order, while the discrete solutions at mu = 1 split into a
    pair at distance of order sqrt(mu_h - 1).
    """
    cfg = cfg or NewtonConfig()
    validate(p)
    if p.n_components != 1 or p.variant.normalized:
        raise ValueError("fold_point handles single-component non-normalized problems")
    dp = DiscreteProblem(p, op.mesh)
    x = _initial_vector(dp, guess)
    ni = dp.n_int
    if null_guess is None:
        A, _, _ = dp.jacobian(x)
        # inverse iteration from a positive vector gives the principal mode
        lu = spla.splu(A.tocsc())
        phi = np.ones(ni)
        for _ in range(30):
            phi = lu.solve(phi)
            phi /= np.linalg.norm(phi)
    else:
        phi = _initial_vector(dp, null_guess)
        phi = phi / np.linalg.norm(phi)
    if phi.sum() < 0:
        phi = -phi
    ell = phi / (phi @ phi)
    mu = 1.0
    Kib = dp.K_full[dp.interior][:, dp.mesh.boundary]
    gb = Kib @ dp.gvals

    def full_u(xv):
        return dp.full(xv)[0]

    def system(xv, ph, m):
        U = full_u(xv)
        L = dp.load(dp.source_derivatives(U, 0))[dp.interior]
        M1 = dp.density_matrix(dp.source_derivatives(U, 1))
        J = (dp.K_ii - m * M1).tocsc()
        F = dp.K_ii @ xv + gb - m * L
        G = J @ ph
        H = ell @ ph - 1.0
        return np.concatenate([F, G, [H]]), J, L, M1, U

    res, J, L, M1, U = system(x, phi, mu)
    norm = float(np.linalg.norm(res))
    it = 0
    while it < cfg.max_iters and norm > cfg.residual_tol:
        it += 1
        phf = np.zeros(dp.mesh.n_nodes)
        phf[dp.interior] = phi
        phq = phf[dp.mesh.triangles] @ dp.bary.T
        M2 = dp.density_matrix(dp.source_derivatives(U, 2) * phq)
        big = sp.bmat([
            [J, None, -L[:, None]],
            [-mu * M2, J, -(M1 @ phi)[:, None]],
            [None, ell[None, :], None],
        ], format="csc")
        try:
            delta = spla.spsolve(big, -res)
        except RuntimeError:
            break
        if not np.all(np.isfinite(delta)):
            break
        t = 1.0
        while t >= cfg.min_step:
            xn, pn, mn = x + t * delta[:ni], phi + t * delta[ni:2 * ni], mu + t * delta[-1]
            try:
                rn, Jn, Ln, M1n, Un = system(xn, pn, mn)
            except MassOverflowError:
                t *= 0.5
                continue
            nn = float(np.linalg.norm(rn))
            if nn <= (1 - cfg.armijo * t) * norm or nn <= cfg.residual_tol:
                break
            t *= 0.5
        else:
            break
        x, phi, mu, res, J, L, M1, U, norm = xn, pn, mn, rn, Jn, Ln, M1n, Un, nn
    fieldv = ScalarField(dp.mesh, U)
    scaled = DiscreteProblem(p, op.mesh)
    masses = {k: mu * v if k in ("total", "mass") else v for k, v in scaled.masses(U[None]).items()}
    return FoldPoint(float(mu), fieldv, phi, norm <= cfg.residual_tol, it, norm, masses)
