from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from shapely.geometry import Point, Polygon

from liouvillelab.errors import ConditionViolatedError, PoleOnBoundaryError
from liouvillelab.geometry import (
    BoundaryData, DomainSpec, Mesh, X_AXIS, build_mesh, green_function, quadrature, refine_mesh, singular_weight,
)
from liouvillelab.problems import ProblemSpec, SinhGordonSigned, validate


def test_unit_disk_area(disk05):
    assert abs(disk05.areas.sum() - math.pi) / math.pi <= 1e-3
    assert np.all(disk05.signed_areas > 0)


def test_rectangle_area_exact():
    m = build_mesh(DomainSpec.rectangle(1.0, 1.0), 0.25)
    assert abs(m.areas.sum() - 1.0) <= 1e-12


def test_polygon_area_matches_shapely():
    verts = [(0, 0), (2, 0), (2, 1), (1, 1.5), (0, 1)]
    m = build_mesh(DomainSpec.polygon(verts), 0.1)
    assert abs(m.areas.sum() - Polygon(verts).area) <= 1e-10 * Polygon(verts).area


def test_boundary_nodes_lie_on_boundary(disk05):
    r = np.linalg.norm(disk05.nodes, axis=1)
    assert np.allclose(r[disk05.boundary], 1.0, atol=1e-12)
    assert np.all(r[disk05.interior] < 1.0 - 1e-9)


def test_contains_matches_shapely():
    verts = [(0, 0), (2, 0), (2, 1), (1, 1.5), (0, 1)]
    dom = DomainSpec.polygon(verts)
    poly = Polygon(verts)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.5, 2.5, (400, 2))
    want = np.array([poly.contains(Point(p)) for p in pts])
    far = np.array([poly.exterior.distance(Point(p)) > 1e-9 for p in pts])
    assert np.array_equal(dom.contains(pts)[far], want[far])


def test_refine_counts_and_area_error():
    nodes = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]], float)
    tris = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    m = Mesh(nodes, tris, np.arange(4), DomainSpec.rectangle(1.0, 1.0))
    r = refine_mesh(m)
    assert len(r.triangles) == 16
    assert len(r.triangles) == 4 * len(m.triangles)
    assert r.n_nodes == m.n_nodes + len(m.edges)
    d = build_mesh(DomainSpec.unit_disk(), 0.1)
    e0 = abs(d.areas.sum() - math.pi)
    e1 = abs(refine_mesh(d).areas.sum() - math.pi)
    assert e1 <= e0 / 3


def test_annulus_needs_constant_boundary_data():
    dom = DomainSpec.annulus(0.5, 1.0)
    m = build_mesh(dom, 0.1)
    assert not dom.simply_connected
    vals = np.linspace(0, 1, len(m.boundary))
    p = ProblemSpec(SinhGordonSigned(1.0, 1.0), BoundaryData.from_values(vals))
    with pytest.raises(ConditionViolatedError):
        validate(p, dom)


def test_stiffness_properties(square):
    K = square.stiffness
    assert abs(K - K.T).max() <= 1e-12
    assert np.max(np.abs(K @ np.ones(square.n_nodes))) <= 1e-10
    x = square.nodes[:, 0]
    assert abs(x @ (K @ x) - 1.0) <= 1e-10
    assert abs(square.mass_matrix.sum() - 1.0) <= 1e-12


@pytest.mark.parametrize("order,degree", [(2, 2), (5, 5)])
def test_quadrature_exact_for_polynomials(order, degree):
    bary, w = quadrature(order)
    # integral of l1^i l2^j l3^k over the reference triangle (area-normalized) is 2 i! j! k! / (i+j+k+2)!
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            k = degree - i - j
            exact = 2 * math.factorial(i) * math.factorial(j) * math.factorial(k) / math.factorial(i + j + k + 2)
            got = float(np.sum(w * bary[:, 0] ** i * bary[:, 1] ** j * bary[:, 2] ** k))
            assert abs(got - exact) <= 1e-14


def test_mesh_json_roundtrip(tmp_path, disk_coarse):
    disk_coarse.to_json(tmp_path / "m.json")
    m = Mesh.from_json(tmp_path / "m.json")
    assert np.array_equal(m.nodes, disk_coarse.nodes)
    assert np.array_equal(m.triangles, disk_coarse.triangles)
    assert m.domain == disk_coarse.domain


def test_green_closed_form_values(disk05):
    G = green_function(disk05, (0.0, 0.0))
    assert abs(G.at(np.array([[1.0, 0.0]]))[0]) <= 1e-14
    assert abs(G.at(np.array([[0.5, 0.0]]))[0] - math.log(2) / (2 * math.pi)) <= 1e-12


@pytest.mark.parametrize("pole", [(0.0, 0.0), (0.3, -0.2)])
def test_green_numeric_matches_closed_form(disk05r, pole):
    closed = green_function(disk05r, pole, "analytic")
    num = green_function(disk05r, pole, "numeric")
    far = np.linalg.norm(disk05r.nodes - np.asarray(pole), axis=1) > 0.1
    assert np.max(np.abs(closed.values[far] - num.values[far])) <= 1e-3


def test_green_positive_on_square():
    m = build_mesh(DomainSpec.polygon([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]), 0.1)
    G = green_function(m, (0.0, 0.0))
    inner = np.setdiff1d(m.interior, G.pole_nodes)
    assert np.all(G.values[inner] > 0)
    assert np.all(G.at(m.nodes[inner]) > 0)


def test_green_pole_on_boundary_raises(disk_coarse):
    with pytest.raises(PoleOnBoundaryError):
        green_function(disk_coarse, (1.0, 0.0))


def test_singular_weight_closed_forms(disk05):
    G = green_function(disk05, (0.0, 0.0))
    r = np.linalg.norm(disk05.nodes, axis=1)
    assert np.all(singular_weight(G, 0.0).values == 1.0)
    for N in (0.5, 1.0, 2.0):
        assert np.max(np.abs(singular_weight(G, N).values - r ** (2 * N))) <= 1e-12
    assert abs(G.weight_at(np.array([[0.5, 0.0]]), 1.0)[0] - 0.25) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9))
def test_reflection_is_involution(x, y):
    p = np.array([[x, y]])
    assert np.allclose(X_AXIS.reflect(X_AXIS.reflect(p)), p)


def test_boundary_data_nonneg_flag():
    with pytest.raises(Exception):
        BoundaryData.from_values([-1.0, 0.0], nonneg=True)


@pytest.mark.parametrize("dom,h", [(DomainSpec.rectangle(1.0, 1.0), 0.1), (DomainSpec.unit_disk(), 0.1),
                                   (DomainSpec.ellipse(1.3, 0.8), 0.1)])
def test_refine_halves_h_max(dom, h):
    m = build_mesh(dom, h)
    assert abs(refine_mesh(m).h_max - 0.5 * m.h_max) <= 1e-12 * m.h_max
