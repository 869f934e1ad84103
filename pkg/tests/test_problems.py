from __future__ import annotations

import math

import numpy as np
import pytest

from liouvillelab.errors import (
    BoundaryDataError, ConditionViolatedError, NegativeStrengthError, VariantWithoutTransformError,
)
from liouvillelab.field import ScalarField, weighted_mass
from liouvillelab.geometry import BoundaryData, DomainSpec
from liouvillelab.problems import (
    CosmicString, DiscreteProblem, Gelfand, MeanField, NonNormalized, ProblemSpec, SingularToda,
    SinhGordonPositive, SinhGordonSigned, TodaSystem, desingularize, lift_to_sci_form, residual,
    resingularize, validate,
)
from liouvillelab.solver import assemble, newton_solve

from conftest import radius

PI = math.pi


@pytest.fixture(scope="module")
def gelfand_small(disk_coarse):
    res = newton_solve(ProblemSpec(Gelfand(1.0)), assemble(disk_coarse))
    assert res.converged
    return res.field


# ------------------------------------------------------------- validation
def test_validate_toda_example():
    dc = validate(ProblemSpec(TodaSystem(2, 1, 1, 2)))
    assert dc.M == 3 and dc.D == 1
    assert dc.threshold == pytest.approx(8 * PI / 3, rel=1e-15)


def test_validate_decoupled_toda():
    dc = validate(ProblemSpec(TodaSystem(1, 0, 0, 1)))
    assert (dc.M, dc.D) == (1, 1)
    assert dc.threshold == pytest.approx(8 * PI, rel=1e-15)


def test_validate_imbalanced_toda_lists_reason():
    with pytest.raises(ConditionViolatedError, match="differs"):
        validate(ProblemSpec(TodaSystem(2, 2, 1, 2)))


@pytest.mark.parametrize("A,Ap,B,Bp", [(2, 1, 1, 2), (1, 0, 0, 1), (0.5, 2.5, 1.5, 1.5), (3, 0, 1, 2)])
def test_validate_D_invariance(A, Ap, B, Bp):
    dc = validate(ProblemSpec(TodaSystem(A, Ap, B, Bp)))
    assert dc.D == pytest.approx(Bp - Ap, abs=1e-14)


@pytest.mark.parametrize("variant", [
    MeanField(-1.0), SinhGordonPositive(1.0, (-0.5,)), SinhGordonSigned(1.0, 0.0), NonNormalized(1.0),
    NonNormalized(0.0), CosmicString(((0.0, 0.0),)), CosmicString(((1.0, -1.0),)), TodaSystem(-1, 2, 0, 1),
    SingularToda(1, 0, 0, 1, alpha=-1.0), Gelfand(1.0, alpha=-0.5),
])
def test_validate_rejects_bad_coefficients(variant):
    with pytest.raises(ConditionViolatedError):
        validate(ProblemSpec(variant))


def test_validate_boundary_rules():
    with pytest.raises(ConditionViolatedError, match="zero boundary"):
        validate(ProblemSpec(SinhGordonSigned(1.0), BoundaryData.constant(1.0)))
    with pytest.raises(ConditionViolatedError, match="non-negative"):
        validate(ProblemSpec(SinhGordonPositive(1.0), BoundaryData.constant(-1.0, nonneg=False)))
    with pytest.raises(ConditionViolatedError, match="multiply-connected"):
        g = BoundaryData(kind="values", values=(0.0, 1.0))
        validate(ProblemSpec(MeanField(1.0), g), DomainSpec.annulus(0.3, 1.0))
    # constant data on an annulus is fine
    validate(ProblemSpec(MeanField(1.0)), DomainSpec.annulus(0.3, 1.0))


def test_thresholds():
    assert validate(ProblemSpec(SinhGordonSigned(1.0, 1.0))).threshold == pytest.approx(4 * PI)
    assert validate(ProblemSpec(SinhGordonPositive(1.0, (0.5,)))).threshold == pytest.approx(4 * PI)
    assert validate(ProblemSpec(SinhGordonPositive(1.0, (2.0,)))).threshold == pytest.approx(2 * PI)
    cs = validate(ProblemSpec(CosmicString.two_term(1.0, 1.0)))
    assert cs.threshold == pytest.approx(4 * PI) and cs.pair_threshold == pytest.approx(8 * PI)
    cs3 = validate(ProblemSpec(CosmicString(((2.0, 0.0), (1.0, 1.0), (0.5, 2.0)))))
    assert cs3.threshold == pytest.approx(8 * PI / 6) and cs3.pair_threshold == pytest.approx(16 * PI / 6)


# ---------------------------------------------------------------- residual
def test_residual_signed_zero_field_is_exactly_zero(disk_coarse):
    r = residual(ProblemSpec(SinhGordonSigned(2 * PI, 1.0)), ScalarField.constant(disk_coarse, 0.0))
    assert np.all(r.values == 0.0)


def test_residual_mean_field_at_solution(disk_coarse):
    p = ProblemSpec(MeanField(3.0))
    res = newton_solve(p, assemble(disk_coarse))
    assert res.converged
    r = residual(p, res.field)
    assert np.linalg.norm(r.values) <= 1e-10


def test_residual_toda_with_equal_components(gelfand_small):
    r1, r2 = residual(ProblemSpec(TodaSystem(2, 1, 1, 2)), (gelfand_small, gelfand_small))
    rg = residual(ProblemSpec(Gelfand(1.0)), gelfand_small)
    # A e^u - B e^u = e^u, B' e^u - A' e^u = e^u: both equal the Gelfand residual
    assert np.linalg.norm(r1.values - rg.values) <= 1e-12
    assert np.linalg.norm(r2.values - rg.values) <= 1e-12
    assert np.linalg.norm(r1.values) <= 1e-10


def test_residual_requires_boundary_data(disk_coarse):
    with pytest.raises(BoundaryDataError):
        residual(ProblemSpec(Gelfand(1.0)), ScalarField.constant(disk_coarse, 1.0))
    with pytest.raises(ValueError):
        residual(ProblemSpec(TodaSystem(1, 0, 0, 1)), ScalarField.constant(disk_coarse, 0.0))


def test_residual_rejects_invalid_problem(disk_coarse):
    with pytest.raises(ConditionViolatedError):
        residual(ProblemSpec(TodaSystem(2, 2, 1, 2)), (ScalarField.constant(disk_coarse, 0.0),) * 2)


def test_singular_toda_residual_matches_solve(disk_coarse):
    p = ProblemSpec(SingularToda(2, 1, 1, 2, alpha=1.0))
    res = newton_solve(p, assemble(disk_coarse))
    assert res.converged
    r = residual(p, res.fields)
    assert math.hypot(*(np.linalg.norm(ri.values) for ri in r)) == pytest.approx(res.residual, rel=1e-6, abs=1e-13)


def test_toda_difference_identity_at_solution(disk_coarse):
    p = ProblemSpec(TodaSystem(2, 1, 1, 2))
    res = newton_solve(p, assemble(disk_coarse), (ScalarField.constant(disk_coarse, 0.0),
                                                  ScalarField.from_function(disk_coarse, lambda x, y: 1 - x * x - y * y)))
    assert res.converged
    dp = DiscreteProblem(p, disk_coarse)
    R = dp.residual_full(np.stack([f.values for f in res.fields]))
    # the difference of the two equations is Delta(u2-u1) + M (e^{u2} - e^{u1}) = 0
    assert np.linalg.norm(R[1] - R[0]) <= 10 * 1e-10


# ------------------------------------------------------------ desingularize
def test_desingularize_alpha_zero_is_identity(disk_coarse):
    u = ScalarField.from_function(disk_coarse, lambda x, y: x + y)
    ut, h = desingularize(ProblemSpec(SingularToda(1, 0, 0, 1, alpha=0.0)), u)
    assert ut is u
    assert np.all(h.values == 1.0)


def test_desingularize_half_gives_abs_x(disk_coarse):
    p = ProblemSpec(SingularToda(1, 0, 0, 1, alpha=0.5))
    u = ScalarField.from_function(disk_coarse, lambda x, y: 1 - x * x - y * y)
    (u1, u2), h = desingularize(p, (u, u))
    assert np.max(np.abs(h.values - radius(disk_coarse))) <= 1e-12
    b = disk_coarse.boundary
    assert np.max(np.abs(u1.values[b] - u.values[b])) <= 1e-12
    back = resingularize(p, (u1, u2))
    assert np.max(np.abs(back[0].values - u.values)) <= 1e-14 * max(1.0, np.abs(u1.values).max())


def test_desingularize_negative_alpha(disk_coarse):
    p = ProblemSpec(SingularToda(1, 0, 0, 1, alpha=-1.0))
    with pytest.raises(NegativeStrengthError):
        desingularize(p, ScalarField.constant(disk_coarse, 0.0))


# --------------------------------------------------------------- SCI lift
def test_lift_signed_zero_field(disk_coarse):
    rho, a = 2 * PI, 1.0
    p = ProblemSpec(SinhGordonSigned(rho, a))
    sf = lift_to_sci_form(p, ScalarField.constant(disk_coarse, 0.0))
    area = float(disk_coarse.areas.sum())
    expect = math.log(1 + a) + math.log(rho) - math.log(2 * area)
    for w in sf.w:
        assert np.max(np.abs(w.values - expect)) <= 1e-13
    assert np.array_equal(sf.w[0].values, sf.w[1].values)


def test_lift_positive_variant(disk_coarse):
    p = ProblemSpec(SinhGordonPositive(3.0 * PI, (0.5,)))
    res = newton_solve(p, assemble(disk_coarse))
    assert res.converged
    sf = lift_to_sci_form(p, res.field)
    assert sf.identity_residual() <= max(1e-8, 10 * res.residual)
    pos = res.field.values > 1e-12
    assert np.all(sf.f[0].values[pos] > 0)
    assert res.field.values.min() >= -1e-12


def test_lift_toda_difference_identity(disk_coarse):
    p = ProblemSpec(TodaSystem(2, 1, 1, 2))
    res = newton_solve(p, assemble(disk_coarse))
    assert res.converged
    sf = lift_to_sci_form(p, res.fields)
    for wi, ui in zip(sf.w, res.fields):
        assert np.max(np.abs(wi.values - ui.values - math.log(3))) <= 1e-13
    assert sf.difference_identity_residual() <= 10 * max(res.residual, 1e-10)


def test_lift_mean_field_raises(disk_coarse):
    with pytest.raises(VariantWithoutTransformError):
        lift_to_sci_form(ProblemSpec(MeanField(1.0)), ScalarField.constant(disk_coarse, 0.0))


@pytest.mark.parametrize("p", [
    ProblemSpec(SinhGordonPositive(2.0 * PI, (0.5,))),
    ProblemSpec(SinhGordonPositive(1.0 * PI, (2.0, 0.7))),
    ProblemSpec(SinhGordonSigned(PI, 0.5)),
    ProblemSpec(NonNormalized(0.5)),
    ProblemSpec(NonNormalized(-0.5)),
    ProblemSpec(CosmicString.two_term(1.0, 1.0)),
    ProblemSpec(Gelfand(1.0, alpha=1.0)),
])
def test_lift_identity_and_mass_bookkeeping(disk_coarse, p):
    res = newton_solve(p, assemble(disk_coarse))
    assert res.converged
    sf = lift_to_sci_form(p, res.field)
    assert sf.identity_residual() <= max(1e-8, 10 * res.residual)
    u = res.field
    for i, (shift, scale) in enumerate(zip(sf.shifts, sf.scales)):
        direct = sf.mass(i)
        via_u = math.exp(shift) * sf.dp.integrate(np.exp(scale * sf.dp.qp(u.values[None])[0]))
        assert direct == pytest.approx(via_u, rel=1e-10)


def test_masses_match_weighted_mass(disk_coarse, gelfand_small):
    dp = DiscreteProblem(ProblemSpec(Gelfand(1.0)), disk_coarse)
    m = dp.masses(gelfand_small.values)
    assert m["mass"] == pytest.approx(weighted_mass(gelfand_small), rel=1e-3)


# ------------------------------------------------------------ serialization
@pytest.mark.parametrize("p", [
    ProblemSpec(MeanField(2.0)),
    ProblemSpec(SinhGordonPositive(1.0, (0.5, 0.25))),
    ProblemSpec(SinhGordonSigned(1.0, 0.5)),
    ProblemSpec(NonNormalized(-0.5)),
    ProblemSpec(CosmicString(((2.0, 0.0), (1.0, 1.5)))),
    ProblemSpec(TodaSystem(2, 1, 1, 2)),
    ProblemSpec(SingularToda(2, 1, 1, 2, alpha=1.0), pole=(0.1, 0.0)),
    ProblemSpec(Gelfand(1.0, 0.5), BoundaryData.constant(0.5)),
])
def test_problem_roundtrip(p):
    assert ProblemSpec.from_dict(p.to_dict()) == p


def test_unknown_variant():
    with pytest.raises(ConditionViolatedError):
        ProblemSpec.from_dict({"variant": {"name": "nope"}})
    with pytest.raises(ConditionViolatedError):
        ProblemSpec.from_dict({"variant": {"name": "gelfand", "bogus": 1}})


def test_with_param():
    p = ProblemSpec(CosmicString.two_term(1.0, 0.0))
    assert p.with_param("a", 0.8).param("a") == 0.8
    assert p.with_param("N", 2.0).param("N") == 2.0
    assert ProblemSpec(Gelfand(1.0)).with_param("rho", 1.5).variant == Gelfand(1.5)
