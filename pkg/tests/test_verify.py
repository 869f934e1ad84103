from __future__ import annotations

import json
import math
from importlib import resources

import jsonschema
import numpy as np
import pytest

from liouvillelab.comparison import BubbleParam, RadialProfile, bubble_value
from liouvillelab.errors import ConditionViolatedError, HypothesesFailError
from liouvillelab.field import ScalarField
from liouvillelab.geometry import X_AXIS
from liouvillelab.problems import (
    CosmicString, Gelfand, MeanField, ProblemSpec, SinhGordonPositive, SinhGordonSigned, TodaSystem,
)
from liouvillelab.solver import assemble, fold_point
from liouvillelab.suite import gelfand_branches
from liouvillelab.verify import (
    ExperimentReport, Region, bol_check, calibrate_slack, classify, fold_experiment, intersection_check,
    positive_components, radial_sci_check, sci_check, sci_pipeline, symmetry_experiment, threshold_sweep,
    toda_collapse_experiment, trivial_branch_experiment, uniqueness_experiment,
)

from conftest import radius

PI = math.pi
EIGHT_PI = 8 * PI


@pytest.fixture(scope="module")
def report_schema():
    return json.loads(resources.files("liouvillelab").joinpath("schemas/report.schema.json").read_text())


@pytest.fixture(scope="module")
def branches05r(disk05r):
    return gelfand_branches(disk05r)


def zero(m):
    return ScalarField.constant(m, 0.0)


# ------------------------------------------------------------------ basics
def test_classify():
    assert classify(0.0, 1e-3) == "consistent"
    assert classify(-5e-4, 1e-3) == "consistent"
    assert classify(-5e-3, 1e-3) == "inconclusive"
    assert classify(-1.1e-2, 1e-3) == "violated"


def test_report_validation(report_schema):
    with pytest.raises(ValueError):
        ExperimentReport("x", "T9.9", {})
    with pytest.raises(ValueError):
        ExperimentReport("x", "T1.1", {}, verdict="maybe")
    rep = ExperimentReport("x", "T1.1", {"a": 1.0}, margins={"m": math.inf}, verdict="consistent")
    d = json.loads(rep.to_json())
    jsonschema.validate(d, report_schema)
    assert "runtime" not in d
    assert rep.inputs_digest == ExperimentReport("y", "P2.1", {"a": 1.0}).inputs_digest


def test_calibrated_slack_shrinks_with_refinement(disk05, disk05r):
    e0, e1 = calibrate_slack(disk05), calibrate_slack(disk05r)
    assert 0 < e1 < e0
    assert e1 < 1e-3


# --------------------------------------------------------------------- Bol
def test_bol_zero_field_half_disk(disk05r):
    rep = bol_check(zero(disk05r), Region.disk(disk05r, (0, 0), 0.5))
    assert rep.margins["lhs"] == pytest.approx(PI ** 2, rel=1e-3)
    assert rep.margins["rhs"] == pytest.approx(0.5 * (PI / 4) * (EIGHT_PI - PI / 4), rel=1e-3)
    assert rep.margins["lhs"] > rep.margins["rhs"]
    assert rep.verdict == "consistent"
    assert rep.theorem == "P2.1"


def test_bol_bubble_mesh_equality(disk05r):
    lam = 2.0
    u = ScalarField(disk05r, bubble_value(lam, radius(disk05r)))
    rep = bol_check(u, Region.disk(disk05r, (0, 0), 0.6))
    assert abs(rep.margins["relative"]) <= 1e-3
    assert rep.verdict == "consistent"
    assert rep.details["hypotheses"]["subsolution_ok"]


@pytest.mark.parametrize("lam,r", [(1.0, 0.5), (2.0, 1.0), (2 * math.sqrt(2), 0.9)])
def test_bol_bubble_radial_equality(lam, r):
    rep = bol_check(RadialProfile.bubble(BubbleParam(lam), 1.0), r)
    assert abs(rep.margins["relative"]) <= 1e-6
    assert rep.verdict == "consistent"


def test_bol_tiny_region_is_trivially_consistent(disk_coarse):
    rep = bol_check(zero(disk_coarse), Region.disk(disk_coarse, (0, 0), 1e-3))
    assert rep.margins["rhs"] <= 1e-4
    assert rep.verdict == "consistent"


def test_bol_hypothesis_failure_is_inconclusive(disk_coarse):
    # -Delta u + e^u <= 0 badly violated and total mass far above 8 pi
    u = ScalarField(disk_coarse, 6 * (1 - radius(disk_coarse) ** 2) ** 8)
    rep = bol_check(u, Region.disk(disk_coarse, (0, 0), 0.5))
    assert rep.verdict == "inconclusive"
    assert not (rep.details["hypotheses"]["mass_ok"] and rep.details["hypotheses"]["subsolution_ok"])


# --------------------------------------------------------------------- SCI
@pytest.mark.parametrize("lam1,R", [(1.5, 1.0), (0.5, 2.0), (4.0, 0.5)])
def test_radial_sci_paired_bubbles(lam1, R):
    rep = radial_sci_check(lam1, R)
    assert abs(rep.margins["relative"]) <= 1e-6
    assert rep.verdict == "consistent"


def test_sci_gelfand_branches(branches05r, disk05r):
    small, large = branches05r
    f0 = zero(disk05r)
    rep = sci_check(small.field, large.field, f0, f0)
    assert rep.masses["min_mass"] == pytest.approx(EIGHT_PI, rel=2e-3)
    assert rep.inputs["n_components"] == 1
    assert not rep.details["strict_expected"]


def test_sci_identical_fields_fail(disk_coarse):
    w = ScalarField(disk_coarse, 1 - radius(disk_coarse) ** 2)
    f0 = zero(disk_coarse)
    with pytest.raises(HypothesesFailError, match="coincides"):
        sci_check(w, w, f0, f0)


def test_sci_forcing_order_enforced(disk_coarse):
    w1 = zero(disk_coarse)
    w2 = ScalarField(disk_coarse, 1 - radius(disk_coarse) ** 2)
    with pytest.raises(HypothesesFailError, match="f2 < f1"):
        sci_check(w1, w2, ScalarField.constant(disk_coarse, 1.0), zero(disk_coarse))
    with pytest.raises(HypothesesFailError, match="f1 < 0"):
        sci_check(w1, w2, ScalarField.constant(disk_coarse, -1.0), zero(disk_coarse))


def test_positive_components_counts_blobs(disk05):
    x = disk05.nodes[:, 0]
    y = disk05.nodes[:, 1]
    bump = np.exp(-((x - 0.5) ** 2 + y ** 2) / 0.02) + np.exp(-((x + 0.5) ** 2 + y ** 2) / 0.02)
    comps = positive_components(ScalarField(disk05, bump - 0.5), 0.0)
    assert len(comps) == 2
    assert sum(len(c) for c in comps) == int(np.sum(bump - 0.5 > 0))


def test_sci_pipeline_runs_on_branches(branches05r):
    small, large = branches05r
    out = sci_pipeline(small.field, large.field)
    assert out["lam1"] > 0 and out["R"] > 0
    assert out["mass_w1"] < EIGHT_PI
    dich = out["dichotomy"]
    assert dich["name"] == "mass_dichotomy" and dich["passed"]
    # the rearranged comparison recovers the paired bubble parameter 4 + 2 sqrt 2
    assert dich["details"]["lam2"] == pytest.approx(4 + 2 * math.sqrt(2), rel=1e-2)


# ------------------------------------------------------------- uniqueness
def test_uniqueness_signed_below_threshold(disk_coarse):
    rep = uniqueness_experiment(ProblemSpec(SinhGordonSigned(0.9 * 4 * PI, 1.0)), disk_coarse, K=20)
    assert rep.verdict == "consistent" and rep.theorem == "T1.4"
    assert rep.details["n_clusters"] == 1 and rep.details["zero_field"]


def test_uniqueness_positive_variant(disk_coarse):
    rep = uniqueness_experiment(ProblemSpec(SinhGordonPositive(3.9 * PI, (0.5,))), disk_coarse, K=20)
    assert rep.verdict == "consistent" and rep.theorem == "T1.1"
    assert max(len(g) for g in rep.details["equal_mass_groups"]) == 1


def test_uniqueness_cosmic_string(disk_coarse):
    rep = uniqueness_experiment(ProblemSpec(CosmicString.two_term(1.0, 1.0)), disk_coarse, K=20)
    assert rep.verdict == "consistent" and rep.theorem == "C1.8"
    gammas = [m["gamma"] for m in rep.masses["clusters"]]
    assert min(gammas) <= 4 * PI


def test_uniqueness_seed_invariance(disk_coarse):
    p = ProblemSpec(SinhGordonPositive(3.0 * PI, (0.5,)))
    verdicts = {uniqueness_experiment(p, disk_coarse, K=20, seed=s).verdict for s in (0, 1, 7)}
    assert verdicts == {"consistent"}


def test_uniqueness_refinement_invariance(disk_coarse, disk05):
    p = ProblemSpec(SinhGordonSigned(3.0 * PI, 1.0))
    assert uniqueness_experiment(p, disk_coarse, K=20).verdict == "consistent"
    assert uniqueness_experiment(p, disk05, K=20).verdict == "consistent"


def test_gelfand_pair_is_in_hypothesis_for_one_branch(disk_coarse):
    rep = uniqueness_experiment(ProblemSpec(Gelfand(1.0)), disk_coarse, K=20)
    assert rep.details["n_clusters"] == 2
    # only the small branch satisfies the mass bound 4 pi
    assert len(rep.details["in_hypothesis"]) == 1
    assert rep.verdict == "consistent"


# --------------------------------------------------------------- symmetry
def test_symmetry_mean_field(disk_coarse):
    rep = symmetry_experiment(ProblemSpec(MeanField(3.5 * PI)), disk_coarse, K=8)
    assert rep.margins["max_defect"] <= 1e-3
    assert rep.verdict == "consistent"


def test_symmetry_signed_zero_defect(disk_coarse):
    rep = symmetry_experiment(ProblemSpec(SinhGordonSigned(PI, 1.0)), disk_coarse, K=8)
    assert rep.margins["max_defect"] == 0.0
    assert rep.verdict == "consistent"


# ----------------------------------------------------------- intersection
def test_intersection_identical_fields(disk_coarse):
    p = ProblemSpec(CosmicString.two_term(1.0, 1.0))
    u = ScalarField(disk_coarse, 0.5 * (1 - radius(disk_coarse) ** 2))
    rep = intersection_check(p, u, u)
    assert rep.verdict == "consistent"
    assert not rep.details["crossing"]


def test_intersection_degenerate_solution_vs_reflection(disk05r):
    # a = 1, N = 0: -Delta u = 2 e^u on B_1, unique solution u(0) = ln 4
    p = ProblemSpec(CosmicString.two_term(1.0, 0.0))
    fp = fold_point(p, assemble(disk05r), math.log(4) * (1 - radius(disk05r) ** 2))
    assert fp.converged
    u = fp.field
    c = int(np.argmin(radius(disk05r)))
    assert u.values[c] == pytest.approx(math.log(4), rel=1e-3)
    refl = X_AXIS.reflect(disk05r.nodes)
    v = u.at(refl)
    v[disk05r.boundary] = 0.0
    rep = intersection_check(p, u, ScalarField(disk05r, v))
    assert rep.verdict == "consistent"
    assert rep.masses["pair"] == pytest.approx(4 * PI, rel=1e-3)


def test_intersection_crossing_above_bound_is_inconclusive(disk_coarse):
    p = ProblemSpec(CosmicString.two_term(1.0, 1.0))
    r2 = radius(disk_coarse) ** 2
    x = disk_coarse.nodes[:, 0]
    u1 = ScalarField(disk_coarse, (5 + x) * (1 - r2))
    u2 = ScalarField(disk_coarse, (5 - x) * (1 - r2))
    rep = intersection_check(p, u1, u2)
    assert rep.details["crossing"]
    assert rep.verdict == "inconclusive"


def test_intersection_crossing_below_bound_is_flagged(disk_coarse):
    p = ProblemSpec(CosmicString.two_term(1.0, 1.0))
    r2 = radius(disk_coarse) ** 2
    x = disk_coarse.nodes[:, 0]
    rep = intersection_check(p, ScalarField(disk_coarse, 0.2 * x * (1 - r2)),
                             ScalarField(disk_coarse, -0.2 * x * (1 - r2)))
    assert rep.verdict == "violated"


def test_intersection_requires_cosmic_string(disk_coarse):
    with pytest.raises(ConditionViolatedError):
        intersection_check(ProblemSpec(Gelfand(1.0)), zero(disk_coarse), zero(disk_coarse))


# -------------------------------------------------------------------- Toda
@pytest.mark.parametrize("coeffs,tag", [((2, 1, 1, 2), "T1.10"), ((1, 0, 0, 1), "T1.10")])
def test_toda_collapse(disk_coarse, coeffs, tag):
    rep = toda_collapse_experiment(ProblemSpec(TodaSystem(*coeffs)), disk_coarse, K=8)
    assert rep.theorem == tag
    assert rep.verdict == "consistent"
    row = next(r for r in rep.details["clusters"] if r["in_hypothesis"])
    assert row["collapsed_mass"] <= row["collapsed_bound"]


def test_toda_collapse_requires_system(disk_coarse):
    with pytest.raises(ConditionViolatedError):
        toda_collapse_experiment(ProblemSpec(Gelfand(1.0)), disk_coarse)


# ----------------------------------------------------------------- sweeps
def test_threshold_sweep_signed(disk_coarse):
    grid = [2 * PI, 3 * PI, 4 * PI, 5 * PI]
    reports, summary = threshold_sweep(ProblemSpec(SinhGordonSigned(2 * PI, 1.0)), disk_coarse, "rho", grid, K=8)
    assert len(reports) == 4
    for row in summary["rows"]:
        if row["param"] <= 4 * PI:
            assert row["n_clusters"] == 1 and row["verdict"] == "consistent"
        else:
            assert row["above_threshold"] and row["verdict"] != "violated"
    assert reports[-1].details["label"].startswith("exploratory")


def test_threshold_sweep_mean_field(disk_coarse):
    grid = [PI, 4 * PI, 7.9 * PI]
    _, summary = threshold_sweep(ProblemSpec(MeanField(PI)), disk_coarse, "rho", grid, K=8)
    assert [r["n_clusters"] for r in summary["rows"]] == [1, 1, 1]
    assert summary["first_multiple"] == "none found"


def test_fold_and_trivial_branch_experiments(disk_coarse, report_schema):
    f = fold_experiment(disk_coarse)
    assert f.verdict == "consistent" and abs(f.margins["relative_error"]) <= 0.02
    t = trivial_branch_experiment(disk_coarse)
    assert t.verdict == "consistent" and t.margins["max_sup_norm"] <= 1e-8
    for rep in (f, t):
        jsonschema.validate(json.loads(rep.to_json()), report_schema)
