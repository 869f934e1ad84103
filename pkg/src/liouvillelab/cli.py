"""Command line front-end: configuration, orchestration, persistence and SVG plots.

Subcommands::

    solve   one problem -> field snapshot (JSON) and radial profile (CSV)
    verify  experiments listed in the config (or one, with --experiment)
    suite   the ten-item acceptance battery
    sweep   threshold sweep along one parameter
    mesh    build / refine / export a mesh
    plot    field snapshot, profile CSV or trace CSV -> SVG

Exit codes: 0 success, 1 a verdict "violated", a failed acceptance item or a
solver/experiment error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .errors import ConfigError, LiouvilleError
from .field import ScalarField
from .geometry import DomainSpec, Line, Mesh, build_mesh, refine_mesh
from .problems import ProblemSpec, validate
from .solver import StepPolicy, assemble, continuation, newton_solve
from . import verify as V

log = logging.getLogger("liouvillelab")

SCHEMA_VERSION = "1"
EXPERIMENT_KINDS = ("uniqueness", "symmetry", "cosmic_string", "toda_collapse", "intersection", "bol", "sci",
                    "threshold_sweep", "fold", "trivial_branch", "continuation", "criterion")


# ------------------------------------------------------------------ config
@dataclass
class RunConfig:
    domain: DomainSpec
    problem: ProblemSpec | None
    target_h: float = 0.05
    refine: int = 0
    experiments: list = field(default_factory=list)
    seed: int = 0
    out: str = "out"
    jobs: int = 1
    raw: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "RunConfig":
        errs = []
        if not isinstance(d, dict):
            raise ConfigError("config root must be an object")
        known = {"domain", "problem", "mesh", "experiments", "seed", "out", "jobs", "initial"}
        for k in d:
            if k not in known:
                errs.append(f"{k}: unknown field")
        try:
            dom = DomainSpec.from_dict(d.get("domain", "unit-disk"))
        except (LiouvilleError, KeyError, TypeError, ValueError) as exc:
            errs.append(f"domain: {exc}")
            dom = None
        prob = None
        if "problem" in d:
            try:
                prob = ProblemSpec.from_dict(d["problem"])
            except (LiouvilleError, KeyError, TypeError, ValueError) as exc:
                errs.append(f"problem: {exc}")
        mesh = d.get("mesh", {})
        th = mesh.get("target_h", 0.05) if isinstance(mesh, dict) else None
        if not isinstance(th, (int, float)) or not th > 0:
            errs.append("mesh.target_h: must be a positive number")
        ref = mesh.get("refine", 0) if isinstance(mesh, dict) else None
        if not isinstance(ref, int) or ref < 0:
            errs.append("mesh.refine: must be a non-negative integer")
        if isinstance(mesh, dict) and "file" in mesh:
            path = Path(mesh["file"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            if not path.exists():
                errs.append(f"mesh.file: {path} does not exist")
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
            errs.append("seed: must be an unsigned 64-bit integer")
        jobs = d.get("jobs", 1)
        if not isinstance(jobs, int) or jobs < 1:
            errs.append("jobs: must be a positive integer")
        exps = d.get("experiments", [])
        if not isinstance(exps, list):
            errs.append("experiments: must be a list")
            exps = []
        ids = set()
        for i, e in enumerate(exps):
            if not isinstance(e, dict):
                errs.append(f"experiments[{i}]: must be an object")
                continue
            if e.get("kind") not in EXPERIMENT_KINDS:
                errs.append(f"experiments[{i}].kind: expected one of {', '.join(EXPERIMENT_KINDS)}")
            eid = e.get("id", f"{e.get('kind')}_{i}")
            if eid in ids:
                errs.append(f"experiments[{i}].id: duplicate id {eid!r}")
            ids.add(eid)
        if errs:
            raise ConfigError("invalid config:\n  " + "\n  ".join(errs))
        exps = [dict(e, id=e.get("id", f"{e['kind']}_{i}")) for i, e in enumerate(exps)]
        return cls(dom, prob, float(th), ref, exps, seed, str(d.get("out", "out")), jobs, d)


def load_config(path) -> RunConfig:
    """Parse a JSON (or, by extension, TOML) config with line-level diagnostics."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    text = path.read_text()
    if path.suffix == ".toml":
        try:
            d = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    else:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return RunConfig.from_dict(d, path.parent)


def config_mesh(cfg: RunConfig, base_dir: Path | None = None) -> Mesh:
    mesh = cfg.raw.get("mesh", {})
    if "file" in mesh:
        p = Path(mesh["file"])
        m = Mesh.from_json(p if p.is_absolute() or base_dir is None else base_dir / p)
    else:
        m = build_mesh(cfg.domain, cfg.target_h)
    for _ in range(cfg.refine):
        m = refine_mesh(m)
    return m


# ---------------------------------------------------------------- manifest
@dataclass
class RunManifest:
    config_digest: str
    version: str = __version__
    reports: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    runtimes: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    started: float = field(default_factory=time.time)

    @property
    def exit_status(self) -> int:
        bad = any(v == "violated" or v == "failed" for v in self.verdicts.values())
        return 1 if bad or self.errors else 0

    def to_dict(self) -> dict:
        return {"schema": f"liouvillelab/manifest/v{SCHEMA_VERSION}", "config_digest": self.config_digest,
                "version": self.version, "reports": self.reports, "artifacts": self.artifacts,
                "runtimes": self.runtimes, "verdicts": self.verdicts, "errors": self.errors,
                "started": self.started, "exit_status": self.exit_status}


class Writer:
    """Single funnel for every file the run produces."""

    def __init__(self, out: Path, manifest: RunManifest):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = manifest

    def text(self, name: str, content: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(content)
        return p

    def report(self, eid: str, rep: V.ExperimentReport, passed: bool | None = None) -> None:
        p = self.text(f"reports/{eid}.json", rep.to_json())
        self.manifest.reports[eid] = str(p)
        self.manifest.runtimes[eid] = rep.runtime
        self.manifest.verdicts[eid] = "failed" if passed is False else rep.verdict

    def artifact(self, eid: str, name: str, content: str) -> None:
        p = self.text(name, content)
        self.manifest.artifacts.setdefault(eid, []).append(str(p))

    def finish(self) -> Path:
        return self.text("manifest.json", json.dumps(self.manifest.to_dict(), indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------- SVG
def svg_line_plot(series, xlabel: str = "x", ylabel: str = "y", title: str = "", width: int = 640,
                  height: int = 400) -> str:
    """Static SVG with axes, ticks and one polyline per (label, xs, ys) series."""
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    allx = np.concatenate([np.asarray(s[1], float) for s in series]) if series else np.array([0.0, 1.0])
    ally = np.concatenate([np.asarray(s[2], float) for s in series]) if series else np.array([0.0, 1.0])
    ok = np.isfinite(allx) & np.isfinite(ally)
    allx, ally = (allx[ok], ally[ok]) if ok.any() else (np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    L, R, T, B = 70, 20, 30, 50
    pw, ph = width - L - R, height - T - B

    def sx(x):
        return L + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return T + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<g id="axes" stroke="black" stroke-width="1">'
           f'<line x1="{L}" y1="{T + ph}" x2="{L + pw}" y2="{T + ph}"/>'
           f'<line x1="{L}" y1="{T}" x2="{L}" y2="{T + ph}"/></g>']
    for k in range(6):
        xv = x0 + (x1 - x0) * k / 5
        yv = y0 + (y1 - y0) * k / 5
        out.append(f'<line x1="{sx(xv):.2f}" y1="{T + ph}" x2="{sx(xv):.2f}" y2="{T + ph + 5}" stroke="black"/>'
                   f'<text x="{sx(xv):.2f}" y="{T + ph + 18}" font-size="11" text-anchor="middle">{xv:.4g}</text>')
        out.append(f'<line x1="{L - 5}" y1="{sy(yv):.2f}" x2="{L}" y2="{sy(yv):.2f}" stroke="black"/>'
                   f'<text x="{L - 8}" y="{sy(yv) + 4:.2f}" font-size="11" text-anchor="end">{yv:.4g}</text>')
    out.append(f'<text x="{L + pw / 2:.1f}" y="{height - 10}" font-size="12" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="15" y="{T + ph / 2:.1f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 15 {T + ph / 2:.1f})">{ylabel}</text>')
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="18" font-size="13" text-anchor="middle">{title}</text>')
    for i, (label, xs, ys) in enumerate(series):
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y))
        c = colors[i % len(colors)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"><title>{label}</title>'
                   f'</polyline>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def field_profile(u: ScalarField, center=(0.0, 0.0)):
    """(radius, value) pairs of a field sorted by distance to ``center``."""
    r = np.linalg.norm(u.mesh.nodes - np.asarray(center), axis=1)
    order = np.lexsort((u.values, r))
    return r[order], u.values[order]


def csv_text(rows: list[dict]) -> str:
    if not rows:
        return ""
    keys = list(rows[0].keys())
    for r in rows[1:]:
        keys += [k for k in r if k not in keys]
    import io

    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    wr.writeheader()
    for r in rows:
        wr.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    return buf.getvalue()


# ------------------------------------------------------------- experiments
def _problem(cfg: RunConfig, exp: dict) -> ProblemSpec:
    if "problem" in exp:
        return ProblemSpec.from_dict(exp["problem"])
    if cfg.problem is None:
        raise ConfigError(f"experiment {exp['id']}: no problem given")
    return cfg.problem


def _axes(exp: dict, m: Mesh):
    if "axes" in exp:
        return [Line(tuple(a[0]), tuple(a[1])) for a in exp["axes"]]
    return m.domain.natural_axes() if m.domain is not None else [V.X_AXIS, V.Y_AXIS]


def run_experiment(cfg: RunConfig, exp: dict, base_dir: Path | None = None):
    """Run one configured experiment; returns (reports, artifacts) with artifacts {filename: text}."""
    kind = exp["kind"]
    eid = exp["id"]
    seed = int(exp.get("seed", cfg.seed))
    K = int(exp.get("K", 20))
    arts = {}
    if kind == "criterion":
        from . import suite

        fn = suite.CRITERIA[int(exp["number"]) - 1]
        kw = {}
        if fn in (suite.criterion_6, suite.criterion_7, suite.criterion_8, suite.criterion_9):
            kw = {"K": K, "seed": seed}
        elif fn is suite.criterion_1:
            kw = {"seed": seed}
        return [fn(**kw)], arts
    m = config_mesh(cfg, base_dir)
    if kind == "fold":
        rep = V.fold_experiment(m, exp.get("start", 0.1), exp.get("stop", 3.0))
        arts[f"traces/{eid}.csv"] = csv_text(rep.trace.to_rows())
        arts[f"plots/{eid}.svg"] = _trace_svg(rep.trace, "rho")
        return [rep], arts
    if kind == "trivial_branch":
        rep = V.trivial_branch_experiment(m, exp.get("a", 1.0), exp.get("start", 2 * math.pi),
                                          exp.get("stop", 4 * math.pi))
        arts[f"traces/{eid}.csv"] = csv_text(rep.trace.to_rows())
        return [rep], arts
    if kind == "sci":
        from .suite import gelfand_branches

        small, large = gelfand_branches(m)
        z = ScalarField(m, np.zeros(m.n_nodes))
        return [V.sci_check(small.field, large.field, z, z)], arts
    p = _problem(cfg, exp)
    if kind == "uniqueness":
        rep = V.uniqueness_experiment(p, m, K, seed)
    elif kind == "symmetry":
        rep = V.symmetry_experiment(p, m, _axes(exp, m), K, seed)
    elif kind == "cosmic_string":
        rep = V.cosmic_string_experiment(p, m, K, seed)
    elif kind == "toda_collapse":
        rep = V.toda_collapse_experiment(p, m, K, seed)
    elif kind == "intersection":
        ur = V.uniqueness_experiment(p, m, K, seed)
        sols = ur.solutions
        if not sols:
            raise LiouvilleError("no converged solution to compare")
        u1 = sols[0].field
        u2 = sols[1].field if len(sols) > 1 else sols[0].field
        rep = V.intersection_check(p, u1, u2)
    elif kind == "bol":
        res = newton_solve(p, assemble(m), exp.get("initial"))
        if not res.converged:
            raise LiouvilleError(f"solver failed: {res.status}")
        u = res.field
        if "level" in exp:
            region = V.Region.superlevel(u, float(exp["level"]))
        else:
            region = V.Region.disk(m, tuple(exp.get("center", (0.0, 0.0))), float(exp.get("radius", 0.5)))
        rep = V.bol_check(u, region)
    elif kind == "threshold_sweep":
        grid = _grid(exp)
        reps, summary = V.threshold_sweep(p, m, exp["param"], grid, K, seed)
        arts[f"traces/{eid}.csv"] = csv_text(summary["rows"])
        xs = [r["param"] for r in summary["rows"]]
        arts[f"plots/{eid}.svg"] = svg_line_plot([("clusters", xs, [r["n_clusters"] for r in summary["rows"]])],
                                                 exp["param"], "cluster count", eid)
        summary = dict(summary, schema=f"liouvillelab/sweep/v{SCHEMA_VERSION}")
        arts[f"sweeps/{eid}.json"] = json.dumps(V._clean(summary), indent=2, sort_keys=True) + "\n"
        return reps, arts
    elif kind == "continuation":
        op = assemble(m)
        trace = continuation(p, op, exp["param"], exp["start"], exp["stop"],
                             StepPolicy(exp.get("step", (exp["stop"] - exp["start"]) / 20)))
        arts[f"traces/{eid}.csv"] = csv_text(trace.to_rows())
        arts[f"plots/{eid}.svg"] = _trace_svg(trace, exp["param"])
        dc = validate(p)
        rep = V.ExperimentReport("continuation", exp.get("theorem", "T1.4"),
                                 {"problem": p.to_dict(), "param": exp["param"], "start": exp["start"],
                                  "stop": exp["stop"]}, {}, {dc.threshold_kind: dc.threshold},
                                 {"max_norm": max(trace.norms, default=0.0)}, "inconclusive",
                                 {"fold": trace.fold, "stopped": trace.stopped})
        return [rep], arts
    else:  # pragma: no cover - guarded by config validation
        raise ConfigError(f"unknown experiment kind {kind!r}")
    return [rep], arts


def _grid(exp: dict) -> list:
    if "grid" in exp:
        return [float(x) for x in exp["grid"]]
    lo, hi, step = float(exp["start"]), float(exp["stop"]), float(exp["step"])
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + k * step for k in range(n)]


def _trace_svg(trace, param: str) -> str:
    rows = trace.to_rows()
    xs = [r["param"] for r in rows]
    keys = sorted({k for r in rows for k in r if k.startswith("mass_")})
    series = [(k, xs, [r.get(k, math.nan) for r in rows]) for k in keys] or [("norm", xs, [r["norm"] for r in rows])]
    return svg_line_plot(series, param, "mass", "continuation trace")


def _run_one(args):
    cfg, exp, base_dir = args
    t0 = time.perf_counter()
    try:
        reps, arts = run_experiment(cfg, exp, base_dir)
        return exp["id"], reps, arts, None, time.perf_counter() - t0
    except (LiouvilleError, ValueError, ArithmeticError) as exc:
        return exp["id"], [], {}, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0


def run(config, out: str | None = None, seed: int | None = None, refine: int | None = None,
        jobs: int | None = None, only: str | None = None, base_dir: Path | None = None) -> RunManifest:
    """Execute the experiments of a config; every file goes through one writer."""
    cfg = config if isinstance(config, RunConfig) else load_config(config)
    if base_dir is None and not isinstance(config, RunConfig):
        base_dir = Path(config).parent
    if seed is not None:
        cfg.seed = seed
    if refine is not None:
        cfg.refine = refine
    jobs = jobs or cfg.jobs
    exps = [e for e in cfg.experiments if only is None or e["id"] == only]
    if only is not None and not exps:
        raise ConfigError(f"no experiment with id {only!r}")
    manifest = RunManifest(cfg.digest)
    writer = Writer(Path(out or cfg.out), manifest)
    tasks = [(cfg, e, base_dir) for e in exps]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    for eid, reps, arts, err, dt in results:
        if err is not None:
            manifest.errors[eid] = err
            manifest.runtimes[eid] = dt
            log.error("%s: %s", eid, err)
            continue
        for k, rep in enumerate(reps):
            rid = eid if len(reps) == 1 else f"{eid}_{k:03d}"
            ok = rep.details.get("passed") if rep.details.get("checks") is not None else None
            writer.report(rid, rep, ok)
            if rep.verdict == "violated":
                writer.artifact(rid, f"violations/{rid}.json", rep.to_json())
            log.info("%s: %s (%s)", rid, manifest.verdicts[rid], rep.theorem)
        for name, text in sorted(arts.items()):
            writer.artifact(eid, name, text)
    summary = [{"experiment": rid, "theorem": json.loads(Path(p).read_text())["theorem"],
                "margin": _first_margin(json.loads(Path(p).read_text())["margins"]),
                "verdict": manifest.verdicts[rid], "runtime": manifest.runtimes[rid]}
               for rid, p in manifest.reports.items()]
    writer.artifact("summary", "summary.csv", csv_text(summary) or "experiment,theorem,margin,verdict,runtime\n")
    writer.finish()
    return manifest


def _first_margin(margins: dict):
    for v in margins.values():
        if isinstance(v, (int, float)):
            return v
    return ""


def suite_config(seed: int = 0, K: int = 20) -> dict:
    """The acceptance battery as a config: one criterion experiment per item."""
    return {"seed": seed,
            "experiments": [{"id": f"criterion_{i:02d}", "kind": "criterion", "number": i, "K": K}
                            for i in range(1, 11)]}


# --------------------------------------------------------------- commands
def _setup_logging(quiet: bool) -> None:
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO, format="%(message)s")


def cmd_solve(a) -> int:
    cfg = load_config(a.config)
    if a.refine is not None:
        cfg.refine = a.refine
    if cfg.problem is None:
        raise ConfigError("solve needs a problem")
    m = config_mesh(cfg, Path(a.config).parent)
    validate(cfg.problem, m.domain)
    res = newton_solve(cfg.problem, assemble(m), cfg.raw.get("initial"))
    out = Path(a.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    snap = {"schema": f"liouvillelab/field/v{SCHEMA_VERSION}", "problem": cfg.problem.to_dict(),
            "mesh": m.to_dict(), "fields": [f.values.tolist() for f in res.fields], "result": res.summary()}
    (out / "field.json").write_text(json.dumps(V._clean(snap), sort_keys=True) + "\n")
    r, v = field_profile(res.fields[0], cfg.problem.pole)
    (out / "profile.csv").write_text(csv_text([{"r": float(x), "value": float(y)} for x, y in zip(r, v)]))
    log.info("%s after %d iterations, residual %.3e", res.status, res.iterations, res.residual)
    return 0 if res.converged else 1


def cmd_verify(a) -> int:
    man = run(a.config, a.out, a.seed, a.refine, a.jobs, a.experiment)
    return man.exit_status


def cmd_suite(a) -> int:
    d = suite_config(a.seed or 0)
    if a.config:
        user = json.loads(Path(a.config).read_text()) if not a.config.endswith(".toml") else load_config(a.config).raw
        d.update({k: v for k, v in user.items() if k in ("seed", "jobs", "out")})
        if a.seed is None:
            d["seed"] = user.get("seed", 0)
    cfg = RunConfig.from_dict(d)
    man = run(cfg, a.out or d.get("out", "suite_out"), a.seed, None, a.jobs)
    return man.exit_status


def cmd_sweep(a) -> int:
    cfg = load_config(a.config)
    sweeps = [e["id"] for e in cfg.experiments if e["kind"] == "threshold_sweep"]
    if not sweeps:
        raise ConfigError("config has no threshold_sweep experiment")
    status = 0
    for sid in sweeps:
        man = run(a.config, a.out, a.seed, a.refine, a.jobs, sid)
        status = max(status, man.exit_status)
    return status


def cmd_mesh(a) -> int:
    if a.config:
        cfg = load_config(a.config)
        m = config_mesh(cfg, Path(a.config).parent)
        out = Path(a.out or cfg.out)
    else:
        dom = DomainSpec.from_dict(json.loads(a.domain) if a.domain.startswith("{") else a.domain)
        m = build_mesh(dom, a.target_h)
        for _ in range(a.refine or 0):
            m = refine_mesh(m)
        out = Path(a.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "mesh.json").write_text(json.dumps(dict(m.to_dict(), schema=f"liouvillelab/mesh/v{SCHEMA_VERSION}")) + "\n")
    log.info("%d nodes, %d triangles, h_max %.4f", m.n_nodes, len(m.triangles), m.h_max)
    return 0


def cmd_plot(a) -> int:
    src = Path(a.input)
    if not src.exists():
        raise ConfigError(f"{src}: no such file")
    if src.suffix == ".json":
        snap = json.loads(src.read_text())
        m = Mesh.from_dict(snap["mesh"])
        series = []
        for i, vals in enumerate(snap["fields"]):
            r, v = field_profile(ScalarField(m, np.asarray(vals)), snap.get("problem", {}).get("pole", (0.0, 0.0)))
            series.append((f"u{i + 1}", r, v))
        svg = svg_line_plot(series, "|x|", "u", "field against radius")
    else:
        with open(src, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ConfigError(f"{src}: empty CSV")
        cols = list(rows[0].keys())
        xk = cols[0]
        ycols = [c for c in cols[1:] if _is_float(rows[0][c])]
        if a.columns:
            ycols = a.columns.split(",")
        xs = [float(r[xk]) for r in rows]
        series = [(c, xs, [float(r[c]) for r in rows]) for c in ycols]
        svg = svg_line_plot(series, xk, ", ".join(ycols), src.stem)
    out = Path(a.out) if a.out else src.with_suffix(".svg")
    if out.suffix != ".svg":
        out.mkdir(parents=True, exist_ok=True)
        out = out / (src.stem + ".svg")
    out.write_text(svg)
    log.info("wrote %s", out)
    return 0


def _is_float(s) -> bool:
    try:
        float(s)
        return True
    except (TypeError, ValueError):
        return False


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or TOML run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
    common.add_argument("--refine", type=int, help="number of uniform mesh refinements")
    common.add_argument("--quiet", action="store_true", help="only warnings and errors")
    common.add_argument("--jobs", type=int, default=None, help="experiments run in parallel")
    ap = argparse.ArgumentParser(prog="liouvillelab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve one problem").set_defaults(fn=cmd_solve, need_config=True)
    p = sub.add_parser("verify", parents=[common], help="run configured experiments")
    p.add_argument("--experiment", help="run only the experiment with this id")
    p.set_defaults(fn=cmd_verify, need_config=True)
    sub.add_parser("suite", parents=[common], help="acceptance battery").set_defaults(fn=cmd_suite, need_config=False)
    sub.add_parser("sweep", parents=[common], help="threshold sweep").set_defaults(fn=cmd_sweep, need_config=True)
    p = sub.add_parser("mesh", parents=[common], help="build / refine / export a mesh")
    p.add_argument("--domain", default="unit-disk", help="domain name or JSON object")
    p.add_argument("--target-h", type=float, default=0.1)
    p.set_defaults(fn=cmd_mesh, need_config=False)
    p = sub.add_parser("plot", parents=[common], help="field snapshot or CSV to SVG")
    p.add_argument("input", help="field.json, profile CSV or trace CSV")
    p.add_argument("--columns", help="comma-separated CSV columns to plot")
    p.set_defaults(fn=cmd_plot, need_config=False)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    _setup_logging(a.quiet)
    if a.need_config and not a.config:
        ap.error(f"{a.command} needs --config")
    if a.seed is not None and not 0 <= a.seed < 2 ** 64:
        ap.error("--seed must be an unsigned 64-bit integer")
    if a.jobs is not None and a.jobs < 1:
        ap.error("--jobs must be positive")
    try:
        return a.fn(a)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LiouvilleError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
