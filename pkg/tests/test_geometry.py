import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from expander_lab.errors import (
    DegenerateImmersionError,
    InvalidArgumentError,
    StencilError,
    UndefinedPrincipalNormalError,
)
from expander_lab.geometry import charts
from expander_lab.geometry.forms import (
    A_H_spectrum,
    circ_star,
    covariant_derivatives,
    eigen_shape,
    fundamental_forms,
    oriented_unit_normal,
    principal_curvatures,
)
from expander_lab.geometry.report import (
    geometry_report,
    point_report,
    stencil_margin,
    write_report_csv,
    write_report_json,
)
from expander_lab.geometry.residuals import (
    AccuracyWarning,
    codazzi_residual,
    codazzi_residual_max,
    gauss_residual,
    gauss_residual_max,
    gauss_sides,
    halving_ratio,
    position_identity_residual,
    principal_normal_parallel_residual,
    ricci_residual,
    ricci_residual_max,
    sectional_curvature,
    simons_residual,
    simons_residual_max,
    simons_terms,
)

U_SPHERE = np.array([1.1, 0.7])
U_FLAT = np.array([0.3, -0.2])
U_TORUS = np.array([0.9, 1.3])
U_GRAPH = np.array([0.11, -0.07])


@pytest.fixture(scope="module")
def generic_graph():
    return charts.graph(charts.random_graph_coefficients(np.random.default_rng(0)))


# --- fundamental forms ------------------------------------------------------------------

@pytest.mark.parametrize("R", [0.5, 2.0])
def test_sphere_forms(R):
    f = fundamental_forms(charts.sphere(R), U_SPHERE)
    assert math.sqrt(f.normH2) == pytest.approx(2 / R, rel=1e-12)
    assert f.normA2 == pytest.approx(2 / R ** 2, rel=1e-12)
    np.testing.assert_allclose(principal_curvatures(f), [1 / R, 1 / R], rtol=1e-12)
    # the sphere is umbilic: A = g H / 2, and F is purely normal
    np.testing.assert_allclose(f.A, 0.5 * f.g[:, :, None] * f.H, atol=1e-12)
    np.testing.assert_allclose(f.F_top, 0.0, atol=1e-12)


def test_plane_forms():
    f = fundamental_forms(charts.plane(), U_FLAT)
    assert np.abs(f.A).max() < 1e-14 and np.abs(f.H).max() < 1e-14
    assert np.abs(f.F_perp).max() < 1e-14
    assert f.pinch_hyp() is None and f.pinch_AH() is None


def test_cylinder_forms():
    f = fundamental_forms(charts.cylinder(2.0), U_FLAT)
    np.testing.assert_allclose(principal_curvatures(f), [0.0, 0.5], atol=1e-12)
    assert f.pinch_hyp() == pytest.approx(1.0, abs=1e-12)


def test_torus_forms():
    a, b = 1.0, 2.0
    f = fundamental_forms(charts.torus(a, b), U_TORUS)
    assert f.normH2 == pytest.approx(1 / a ** 2 + 1 / b ** 2, rel=1e-12)
    assert f.normA2 == pytest.approx(1 / a ** 2 + 1 / b ** 2, rel=1e-12)
    assert f.normAH2 == pytest.approx(1 / a ** 4 + 1 / b ** 4, rel=1e-12)
    np.testing.assert_allclose(A_H_spectrum(f), sorted([1 / a ** 2, 1 / b ** 2]), rtol=1e-12)


def test_orthogonal_decomposition_of_position(generic_graph):
    for chart, u in ((charts.sphere(2.0), U_SPHERE), (generic_graph, U_GRAPH),
                     (charts.torus(), U_TORUS)):
        f = fundamental_forms(chart, u)
        assert np.abs(f.F_top + f.F_perp - f.F).max() < 1e-12
        assert np.abs(f.dF @ f.F_perp).max() < 1e-12


def test_normal_frame_orthonormal_and_normal(generic_graph):
    f = fundamental_forms(generic_graph, U_GRAPH)
    np.testing.assert_allclose(f.normal_frame @ f.normal_frame.T, np.eye(2), atol=1e-12)
    assert np.abs(f.normal_frame @ f.dF.T).max() < 1e-12
    assert f.A_frame.shape == (2, 2, 2)
    np.testing.assert_allclose(f.A_frame, f.A_frame.transpose(0, 2, 1), atol=1e-14)


def test_H_trace_two_ways(generic_graph, hyperplane3):
    for chart, u in ((generic_graph, U_GRAPH), (charts.sphere(1.5), U_SPHERE),
                     (hyperplane3, np.array([0.4, 0.1, -0.3]))):
        f = fundamental_forms(chart, u)
        E = f.orthonormal_basis()
        np.testing.assert_allclose(E.T @ f.g @ E, np.eye(f.m), atol=1e-12)
        H_frame = sum(np.einsum("i,j,ijn->n", E[:, k], E[:, k], f.A) for k in range(f.m))
        assert np.abs(H_frame - f.H).max() < 1e-10


def test_closed_form_and_fd_jets_agree(generic_graph):
    fd = charts.fd_chart("graph-fd", generic_graph.position, 2, 4, generic_graph.lower,
                         generic_graph.upper, generic_graph.counts, fd_step=1e-4)
    a = fundamental_forms(generic_graph, U_GRAPH)
    b = fundamental_forms(fd, U_GRAPH)
    assert fd.derivative_mode == "fd" and generic_graph.derivative_mode == "closed"
    np.testing.assert_allclose(a.g, b.g, atol=1e-8)
    np.testing.assert_allclose(a.A, b.A, atol=1e-6)
    np.testing.assert_allclose(a.H, b.H, atol=1e-6)


def test_hypersurface_AH_identity(hyperplane, generic_graph):
    for chart, u in ((hyperplane, np.array([0.5, 0.2])), (charts.sphere(3.0), U_SPHERE),
                     (charts.graph(((0, 0, 0, 1, 0, 3),)), U_GRAPH)):
        f = fundamental_forms(chart, u)
        assert f.normAH2 == pytest.approx(f.normH2 * f.normA2, rel=1e-12)
        assert f.pinch_hyp() == pytest.approx(f.pinch_AH(), rel=1e-12)
        assert f.scalar_curvature == pytest.approx(f.normH2 - f.normA2, abs=1e-14)


def test_eigen_shape_traces(hyperplane, generic_graph):
    for chart, u in ((hyperplane, np.array([-0.7, 0.3])), (generic_graph, U_GRAPH)):
        f = fundamental_forms(chart, u)
        for xi in f.normal_frame:
            vals, vecs = eigen_shape(f, xi)
            Axi = f.A_along(xi)
            assert np.all(np.diff(vals) >= 0)
            np.testing.assert_allclose(vecs.T @ f.g @ vecs, np.eye(f.m), atol=1e-10)
            assert vals.sum() == pytest.approx(float(f.H @ xi), abs=1e-10)
            assert (vals ** 2).sum() == pytest.approx(np.einsum("ij,jk,kl,li->", f.g_inv, Axi,
                                                                 f.g_inv, Axi), abs=1e-10)


def test_eigen_shape_examples(hyperplane3):
    R = 2.0
    f = fundamental_forms(charts.sphere(R), U_SPHERE)
    np.testing.assert_allclose(eigen_shape(f, -f.F / R)[0], [1 / R, 1 / R], rtol=1e-12)
    f = fundamental_forms(charts.cylinder(R), U_FLAT)
    np.testing.assert_allclose(eigen_shape(f, oriented_unit_normal(f))[0], [0, 1 / R],
                               atol=1e-12)
    f = fundamental_forms(hyperplane3, np.array([0.3, 0.5, -0.5]))
    nh = math.sqrt(f.normH2)
    vals = eigen_shape(f, f.H / nh)[0]
    np.testing.assert_allclose(vals, [0, 0, nh], atol=1e-12)
    np.testing.assert_allclose(A_H_spectrum(f), [0, 0, f.normH2], atol=1e-12)


def test_eigen_shape_guards():
    f = fundamental_forms(charts.sphere(1.0), U_SPHERE)
    with pytest.raises(InvalidArgumentError):
        eigen_shape(f, 2 * f.normal_frame[0])
    with pytest.raises(InvalidArgumentError):
        eigen_shape(f, f.dF[0] / np.linalg.norm(f.dF[0]))
    g = fundamental_forms(charts.torus(), U_TORUS)
    with pytest.raises(InvalidArgumentError):
        oriented_unit_normal(g)


def test_oriented_normal_sign(hyperplane):
    f = fundamental_forms(hyperplane, np.array([0.2, 0.0]))
    assert oriented_unit_normal(f) @ f.H > 0
    assert np.all(principal_curvatures(f) >= -1e-14)


def test_boundary_and_degenerate_guards():
    sph = charts.sphere(1.0)
    with pytest.raises(StencilError):
        gauss_residual_max(sph, sph.lower)
    with pytest.raises(InvalidArgumentError):
        fundamental_forms(sph, np.array([1.0]))
    flat = charts.Chart("pinched", 2, 3, [-1, -1], [1, 1], (3, 3),
                        lambda u: np.array([u[0], u[0], 0.0]))
    with pytest.raises(DegenerateImmersionError):
        fundamental_forms(flat, np.zeros(2))
    with pytest.raises(InvalidArgumentError):
        charts.Chart("bad", 2, 2, [0, 0], [1, 1], (3, 3), lambda u: u)
    with pytest.raises(InvalidArgumentError):
        charts.Chart("bad", 1, 2, [1], [0], (3,), lambda u: u)


def test_chart_grid_margin():
    c = charts.plane(counts=(5, 5))
    assert c.grid().shape == (25, 2)
    assert c.grid(0.4).shape == (9, 2)


def test_product_chart_structure(unit_expander):
    c0 = charts.product_with_flat(unit_expander, 0)
    assert (c0.dim_domain, c0.dim_ambient) == (1, 2)
    f = fundamental_forms(c0, np.array([0.5]))
    assert f.pinch_hyp() == pytest.approx(1.0, abs=1e-12)
    c2 = charts.product_with_flat(unit_expander, 2)
    assert (c2.dim_domain, c2.dim_ambient, c2.flat_axes) == (3, 4, (1, 2))
    with pytest.raises(InvalidArgumentError):
        charts.product_with_flat(unit_expander, -1)
    with pytest.raises(InvalidArgumentError):
        charts.product_with_flat(unit_expander, 1, s_half=10.0)


def test_product_pinching_is_one(hyperplane, hyperplane3):
    for u in hyperplane.grid():
        assert fundamental_forms(hyperplane, u).pinch_hyp() == pytest.approx(1.0, abs=1e-8)
    for u in hyperplane3.grid():
        assert fundamental_forms(hyperplane3, u).pinch_AH() == pytest.approx(1.0, abs=1e-8)


def test_graph_spec_parsing():
    assert charts.parse_graph_spec("0,0,0,1,0,3;0,1") == ((0, 0, 0, 1, 0, 3), (0, 1))
    with pytest.raises(InvalidArgumentError):
        charts.parse_graph_spec("a,b")
    with pytest.raises(InvalidArgumentError):
        charts.parse_graph_spec(" ; ")


# --- frame independence -----------------------------------------------------------------

@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_rotation_invariance(seed):
    rng = np.random.default_rng(seed)
    base = charts.graph(charts.random_graph_coefficients(np.random.default_rng(1), codim=1))
    Q = special_ortho_group.rvs(3, random_state=rng)
    a = fundamental_forms(base, U_GRAPH)
    b = fundamental_forms(base.rotated(Q), U_GRAPH)
    for name in ("normA2", "normH2", "scalar_curvature", "normAH2"):
        assert getattr(b, name) == pytest.approx(getattr(a, name), abs=1e-10)
    assert b.pinch_hyp() == pytest.approx(a.pinch_hyp(), abs=1e-10)
    np.testing.assert_allclose(principal_curvatures(b), principal_curvatures(a), atol=1e-10)


# --- circ_star ---------------------------------------------------------------------------

def test_circ_star_metric_identity(generic_graph):
    f = fundamental_forms(generic_graph, U_GRAPH)
    np.testing.assert_allclose(circ_star(f.g, f.g, f), f.g, atol=1e-12)
    with pytest.raises(InvalidArgumentError):
        circ_star(np.eye(3), f.g, f)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_circ_star_swap_symmetry(seed):
    rng = np.random.default_rng(seed)
    f = fundamental_forms(charts.sphere(1.3), U_SPHERE)
    C = rng.normal(size=(2, 2))
    D = rng.normal(size=(2, 2))
    C, D = C + C.T, D + D.T
    np.testing.assert_allclose(circ_star(C, D, f), circ_star(D, C, f).T, atol=1e-12)
    Cv = rng.normal(size=(2, 2, 3))
    Dv = rng.normal(size=(2, 2, 4))
    Cv, Dv = Cv + Cv.transpose(1, 0, 2), Dv + Dv.transpose(1, 0, 2)
    lhs = circ_star(Cv, Dv, f)
    rhs = circ_star(Dv, Cv, f).transpose(1, 0, 3, 2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def _commutator(chart, u):
    f = fundamental_forms(chart, u)
    return np.abs(circ_star(f.A_H, f.A, f) - circ_star(f.A, f.A_H, f)).max()


def test_circ_star_commutation(hyperplane3):
    for u in charts.torus().grid(0.01):
        assert _commutator(charts.torus(), u) < 1e-8
    for u in hyperplane3.grid()[::7]:
        assert _commutator(hyperplane3, u) < 1e-8
    # a generic chart fails the identity
    gen = charts.graph(charts.random_graph_coefficients(np.random.default_rng(0)))
    assert _commutator(gen, U_GRAPH) > 1e-3


def test_fully_symmetric_contraction(hyperplane):
    h = 1e-4
    for u in hyperplane.grid(0.01)[::9]:
        f = fundamental_forms(hyperplane, u)
        d = np.empty(2)
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            d[i] = (math.sqrt(fundamental_forms(hyperplane, u + e).normH2)
                    - math.sqrt(fundamental_forms(hyperplane, u - e).normH2)) / (2 * h)
        grad = f.g_inv @ d
        AA = circ_star(f.A_H, f.A_H, f)
        gap = f.normAH2 * float(d @ grad) - float(grad @ AA @ grad)
        assert abs(gap) < 1e-6


# --- Gauss ------------------------------------------------------------------------------

def test_gauss_sphere_sectional():
    R = 2.0
    intr, extr = sectional_curvature(charts.sphere(R), U_SPHERE)
    assert extr == pytest.approx(1 / R ** 2, abs=1e-12)
    assert intr == pytest.approx(1 / R ** 2, abs=1e-4)
    assert gauss_residual(charts.sphere(R), U_SPHERE, 0, 1, 0, 1) < 1e-4
    with pytest.raises(InvalidArgumentError):
        sectional_curvature(charts.sphere(R), U_SPHERE, 0, 0)
    with pytest.raises(InvalidArgumentError):
        gauss_residual(charts.sphere(R), U_SPHERE, 0, 1, 0, 2)


def test_gauss_flat_examples():
    intr, extr = gauss_sides(charts.torus(), U_TORUS)
    assert np.abs(intr).max() < 1e-6 and np.abs(extr).max() < 1e-6
    assert gauss_residual_max(charts.plane(), U_FLAT) == 0.0


@pytest.mark.parametrize("name", ["sphere", "cylinder", "torus", "plane"])
def test_structure_residuals_on_analytic_charts(name):
    chart = getattr(charts, name)()
    for u in chart.grid(0.05)[::4]:
        assert gauss_residual_max(chart, u) < 1e-4
        assert codazzi_residual_max(chart, u) < 1e-4
        assert ricci_residual_max(chart, u) < 1e-6
        assert simons_residual_max(chart, u) < 1e-3


def test_residual_order_on_sphere():
    sph = charts.sphere(1.0)
    r = halving_ratio(lambda h: gauss_residual_max(sph, U_SPHERE, h), 1e-3)
    assert 3.5 < r < 4.5
    r = halving_ratio(lambda h: codazzi_residual_max(sph, U_SPHERE, h), 1e-3)
    assert 3.5 < r < 4.5


def test_residual_order_on_generic_graph(generic_graph):
    checks = {
        "gauss": (gauss_residual_max, 1e-3),
        "codazzi": (codazzi_residual_max, 1e-3),
        "ricci": (ricci_residual_max, 1e-3),
        "simons": (simons_residual_max, 1e-3),
    }
    for name, (fn, h) in checks.items():
        r = halving_ratio(lambda hh: fn(generic_graph, U_GRAPH, hh), h)
        assert r is not None and 3.5 < r < 4.5, name


def test_roundoff_residuals_stay_at_roundoff():
    tor = charts.torus()
    assert halving_ratio(lambda h: ricci_residual_max(tor, U_TORUS, h), 1e-3) is None
    for h in (1e-3, 5e-4):
        assert ricci_residual_max(tor, U_TORUS, h) < 1e-12


# --- Codazzi / Ricci / Simons -----------------------------------------------------------

def test_codazzi_examples(unit_expander, hyperplane):
    curve_chart = charts.product_with_flat(unit_expander, 0)
    assert codazzi_residual_max(curve_chart, np.array([0.3])) == 0.0
    assert codazzi_residual(charts.sphere(1.0), U_SPHERE, 0, 1, 1) < 1e-4
    for u in hyperplane.grid(0.05)[::5]:
        assert codazzi_residual_max(hyperplane, u) < 1e-4


def test_ricci_examples(generic_graph, hyperplane):
    assert ricci_residual_max(hyperplane, np.array([0.1, 0.2])) < 1e-8
    assert ricci_residual_max(charts.sphere(1.0), U_SPHERE) < 1e-8
    assert ricci_residual(charts.torus(), U_TORUS, 0, 1, 1) < 1e-6
    assert ricci_residual_max(generic_graph, U_GRAPH) < 1e-3
    with pytest.raises(InvalidArgumentError):
        ricci_residual(hyperplane, np.array([0.1, 0.2]), 0, 1, 1)


def test_simons_terms_sphere_closed_form():
    R = 1.5
    t = simons_terms(charts.sphere(R), U_SPHERE)
    assert np.abs(t["laplacian_A"]).max() < 1e-6
    assert np.abs(t["hess_H"]).max() < 1e-6
    rhs = sum(t[k] for k in ("AH_A", "cubic_1", "cubic_2", "cubic_3", "cubic_4"))
    assert np.abs(rhs).max() < 1e-12
    assert simons_residual(charts.sphere(R), U_SPHERE, 0, 1) < 1e-3


def test_simons_on_product(hyperplane):
    for u in hyperplane.grid(0.05)[::6]:
        assert simons_residual_max(hyperplane, u) < 1e-3


def test_simons_warns_for_fd_charts():
    sph = charts.sphere(1.0)
    fd = charts.fd_chart("sphere-fd", sph.position, 2, 3, sph.lower, sph.upper, sph.counts,
                         fd_step=1e-2)
    with pytest.warns(AccuracyWarning):
        simons_terms(fd, U_SPHERE)


def test_noise_floor_warning():
    with pytest.warns(AccuracyWarning):
        gauss_residual_max(charts.plane(), U_FLAT, h=1e-7)
    with pytest.raises(InvalidArgumentError):
        gauss_residual_max(charts.plane(), U_FLAT, h=-1.0)


# --- position identities ----------------------------------------------------------------

def test_position_identities(hyperplane):
    res = position_identity_residual(charts.plane(), U_FLAT)
    assert max(res.values()) < 1e-9
    res = position_identity_residual(charts.sphere(2.0), U_SPHERE)
    assert max(res.values()) < 1e-6
    for u in hyperplane.grid(0.05)[::5]:
        assert max(position_identity_residual(hyperplane, u).values()) < 1e-5


def test_sphere_hessian_of_s_is_zero():
    # on a round sphere s is constant, and g + <F, A> = g - g = 0
    f = fundamental_forms(charts.sphere(2.0), U_SPHERE)
    np.testing.assert_allclose(f.g + np.einsum("n,ijn->ij", f.F, f.A), 0.0, atol=1e-12)


# --- parallel principal normal ----------------------------------------------------------

def test_principal_normal_parallel(hyperplane):
    for method in ("jet", "fd"):
        assert principal_normal_parallel_residual(hyperplane, np.array([0.3, 0.1]), method) < 1e-8
        assert principal_normal_parallel_residual(charts.torus(), U_TORUS, method) < 1e-6
    assert principal_normal_parallel_residual(charts.torus(eps=0.3), U_TORUS) > 1e-2
    assert principal_normal_parallel_residual(charts.torus(eps=0.3), U_TORUS, "fd") > 1e-2
    with pytest.raises(UndefinedPrincipalNormalError):
        principal_normal_parallel_residual(charts.plane(), U_FLAT)
    with pytest.raises(InvalidArgumentError):
        principal_normal_parallel_residual(charts.torus(), U_TORUS, "spline")


def test_covariant_derivative_of_A_vanishes_on_sphere():
    cd = covariant_derivatives(charts.sphere(1.0), U_SPHERE)
    assert np.abs(cd.nabla_A).max() < 1e-12 and np.abs(cd.nabla_H).max() < 1e-12


# --- report -----------------------------------------------------------------------------

def test_point_report_fields():
    rep = point_report(charts.cylinder(2.0), U_FLAT)
    assert rep.pinch_hyp == pytest.approx(1.0)
    assert rep.principal_curvatures == pytest.approx([0.0, 0.5], abs=1e-12)
    assert set(rep.residuals) == {"gauss", "codazzi", "ricci", "simons", "position"}
    assert rep.xi_parallel_residual < 1e-8
    rep = point_report(charts.plane(), U_FLAT, with_residuals=False)
    assert rep.pinch_hyp is None and rep.xi_parallel_residual is None and rep.residuals == {}


def test_geometry_report_export(tmp_path):
    import json
    chart = charts.torus(counts=(4, 4))
    rep = geometry_report(chart, threads=2)
    serial = geometry_report(chart, threads=1)
    assert [p.u for p in rep.points] == [p.u for p in serial.points]
    assert all(p.normA2 >= 0 for p in rep.points)
    assert all(p.principal_curvatures is None for p in rep.points)
    write_report_json(rep, tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert len(data["points"]) == len(rep.points)
    assert set(data["points"][0]) >= {"u", "normA2", "normH2", "pinch_hyp", "pinch_AH", "S",
                                     "principal_curvatures", "residuals"}
    write_report_csv(rep, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].startswith("u_0,u_1,normA2,normH2")
    assert "residuals_gauss" in lines[0]
    assert len(lines) == len(rep.points) + 1
    assert stencil_margin(chart) == pytest.approx(2e-3)
