import math

import numpy as np
import pytest

from expander_lab.curve import ExpanderParams, integrate_expander_curve, shoot_for_angle
from expander_lab.errors import (
    AngleMismatchError,
    EmptyWindowError,
    InvalidArgumentError,
    SelfIntersectionError,
)
from expander_lab.flow import (
    FlowConfig,
    FlowCurve,
    arc_length,
    circle,
    csf_step,
    curvature_vectors,
    expander_orbit_curve,
    find_self_intersection,
    init_cone,
    mean_radius,
    resample,
    rescaled_compare,
    run_flow,
    scale_factor,
    signed_curvature,
    straight_line,
    write_snapshots_csv,
)

TIMES = (0.5, 1.0, 2.0)


def expander_for(alpha):
    r0 = shoot_for_angle(1.0, alpha)
    return integrate_expander_curve(ExpanderParams(1.0, r0))


def cone_distances(alpha, n=400, birth_time=0.0):
    run = run_flow(init_cone(alpha, 10.0, n), FlowConfig(), TIMES[-1], TIMES)
    exp = expander_for(alpha)
    return [rescaled_compare(s, exp, 1.0, birth_time) for s in run.snapshots], run


@pytest.fixture(scope="module")
def right_angle_run():
    return cone_distances(math.pi / 2)


# --- construction -----------------------------------------------------------------------

def test_init_cone_geometry():
    c = init_cone(math.pi / 2, 10.0, 400)
    p = c.points
    assert len(c) == 401 and c.time == 0.0
    assert np.sum(np.all(p == 0.0, axis=1)) == 1
    left, right = c.ray_directions
    np.testing.assert_allclose(p[0], 10 * left, atol=1e-12)
    np.testing.assert_allclose(p[-1], 10 * right, atol=1e-12)
    np.testing.assert_allclose(left @ right, math.cos(math.pi / 2), atol=1e-15)
    np.testing.assert_allclose(p[::-1, 0], -p[:, 0], atol=1e-12)
    np.testing.assert_allclose(p[::-1, 1], p[:, 1], atol=1e-12)
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    assert seg[200] < seg[0] / 10


def test_init_cone_near_straight_and_guards():
    c = init_cone(math.pi - 1e-6, 10.0, 64)
    assert np.abs(c.points[:, 1]).max() < 1e-5
    for bad in (0.0, math.pi, 3.2, -1.0):
        with pytest.raises(InvalidArgumentError):
            init_cone(bad)
    with pytest.raises(InvalidArgumentError):
        init_cone(1.0, n_points=8)
    with pytest.raises(InvalidArgumentError):
        init_cone(1.0, far_radius=0.0)
    with pytest.raises(InvalidArgumentError):
        FlowCurve(np.zeros((2, 2)), 0.0, 1.0, 1.0)


def test_config_guards():
    for kw in ({"dt_safety": 0.0}, {"dt_safety": 0.6}, {"resample_every": -1}, {"lam": 0.0}):
        with pytest.raises(InvalidArgumentError):
            FlowConfig(**kw)


# --- discrete curvature ----------------------------------------------------------------

def test_curvature_vector_on_circle():
    c = circle(2.0, 200)
    kv = curvature_vectors(c.points, closed=True)
    np.testing.assert_allclose(np.linalg.norm(kv, axis=1), 0.5, rtol=1e-12)
    np.testing.assert_allclose(kv, -c.points / 4.0, atol=1e-12)
    np.testing.assert_allclose(signed_curvature(c.points, closed=True), 0.5, rtol=1e-12)


def test_curvature_vector_second_order_on_parabola():
    errs = []
    for n in (101, 201):
        x = np.linspace(-1, 1, n)
        p = np.column_stack([x, x ** 2])
        p = resample(FlowCurve(p, 0.0, 1.0, 1.0)).points
        k = signed_curvature(p)
        exact = 2.0 / (1 + 4 * p[:, 0] ** 2) ** 1.5
        errs.append(np.abs(k[5:-5] - exact[5:-5]).max())
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_resample_uniform_and_endpoints():
    c = init_cone(math.pi / 3, 10.0, 101)
    r = resample(c)
    seg = np.diff(arc_length(r.points))
    assert seg.std() / seg.mean() < 1e-2
    np.testing.assert_array_equal(r.points[0], c.points[0])
    np.testing.assert_array_equal(r.points[-1], c.points[-1])


# --- stepping ----------------------------------------------------------------------------

def test_straight_line_is_fixed():
    line = straight_line(10.0, 401)
    cur = line
    cfg = FlowConfig()
    for _ in range(20):
        nxt = csf_step(cur, cfg)
        assert np.abs(nxt.points - cur.points).max() < 1e-12
        cur = nxt
    assert cur.time > 0


def test_endpoints_stay_clamped():
    c = init_cone(math.pi / 2, 10.0, 101)
    for _ in range(50):
        c = csf_step(c, FlowConfig())
    left, right = c.ray_directions
    np.testing.assert_allclose(c.points[0], 10 * left, atol=1e-12)
    np.testing.assert_allclose(c.points[-1], 10 * right, atol=1e-12)


def test_time_step_cfl():
    c = init_cone(math.pi / 2, 10.0, 101)
    cfg = FlowConfig(dt_safety=0.2)
    h = np.linalg.norm(np.diff(c.points, axis=0), axis=1).min()
    nxt = csf_step(c, cfg)
    assert nxt.time == pytest.approx(0.2 * h * h, rel=1e-12)
    assert csf_step(c, cfg, dt=1e-9).time == pytest.approx(1e-9)


def test_segment_collapse_forces_resample():
    p = init_cone(math.pi / 2, 10.0, 101).points.copy()
    p[60] = p[61]
    c = FlowCurve(p, 0.0, math.pi / 2, 10.0)
    nxt = csf_step(c, FlowConfig())
    assert np.all(np.isfinite(nxt.points))
    assert nxt.time > 0


def test_circle_oracle():
    R = 1.0
    run = run_flow(circle(R, 400), FlowConfig(), R * R / 4, np.linspace(0.025, 0.25, 10))
    for snap in run.snapshots:
        assert abs(mean_radius(snap) - math.sqrt(R * R - 2 * snap.time)) < 1e-3


def test_self_intersection_detection():
    figure8 = np.array([[0, 0], [1, 1], [2, 0], [1, -1], [0, 0.5], [-0.5, 0]], dtype=float)
    assert find_self_intersection(figure8) is not None
    assert find_self_intersection(init_cone(math.pi / 2, 10.0, 101).points) is None
    assert find_self_intersection(circle(1.0, 50).points, closed=True) is None
    folded = init_cone(math.pi / 2, 10.0, 101).points.copy()
    folded[50] = [0.0, -5.0]
    folded[51] = [0.0, 5.0]
    with pytest.raises(SelfIntersectionError):
        csf_step(FlowCurve(folded, 0.0, math.pi / 2, 10.0), FlowConfig())


def test_run_flow_snapshots_and_guard(tmp_path):
    c = init_cone(math.pi / 2, 10.0, 101)
    run = run_flow(c, FlowConfig(), 0.1, [0.05, 0.5])
    assert [s.time for s in run.snapshots] == [0.05, 0.1]
    with pytest.raises(InvalidArgumentError):
        run_flow(run.snapshots[-1], FlowConfig(), 0.01)
    write_snapshots_csv(run.snapshots, tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,x,y"
    assert lines.count("") == 1
    assert len(lines) == 1 + 2 * 101 + 1


# --- comparison --------------------------------------------------------------------------

def test_scale_factor():
    assert scale_factor(0.0, 1.0) == 1.0
    assert scale_factor(1.5, 2.0) == pytest.approx(math.sqrt(7.0))
    assert scale_factor(2.0, 1.0, birth_time=0.0) == pytest.approx(2.0)
    with pytest.raises(InvalidArgumentError):
        scale_factor(0.0, 1.0, birth_time=0.0)


def test_expander_orbit_self_test(unit_expander):
    for t in (0.0, 0.7, 2.0):
        orbit = expander_orbit_curve(unit_expander, t, 10.0)
        assert rescaled_compare(orbit, unit_expander, 1.0) < 1e-8
        orbit = expander_orbit_curve(unit_expander, t + 0.5, 10.0, birth_time=0.0)
        assert rescaled_compare(orbit, unit_expander, 1.0, birth_time=0.0) < 1e-8


def test_exact_orbit_solves_the_flow(unit_expander):
    # advancing a sampled orbit by the flow stays on the orbit up to discretisation error
    orbit = expander_orbit_curve(unit_expander, 0.5, 6.0, n_points=601)
    orbit = FlowCurve(orbit.points[np.linalg.norm(orbit.points, axis=1) < 6.0], 0.5,
                      orbit.cone_angle, 6.0)
    cfg = FlowConfig()
    cur = resample(orbit)
    target = 0.55
    while cur.time < target - 1e-14:
        cur = csf_step(cur, cfg, target - cur.time)
        cur = FlowCurve(cur.points, cur.time, cur.cone_angle, 6.0)
    moved = rescaled_compare(cur, unit_expander, 1.0, window_fraction=0.3)
    assert moved < 5e-3


def test_angle_mismatch_and_empty_window(unit_expander):
    cone = init_cone(math.pi / 2, 10.0, 101)
    cone = FlowCurve(cone.points, 0.5, cone.cone_angle, cone.far_radius)
    with pytest.raises(AngleMismatchError):
        rescaled_compare(cone, expander_for(math.pi / 3), 1.0)
    with pytest.raises(EmptyWindowError):
        rescaled_compare(cone, expander_for(math.pi / 2), 1.0, window_fraction=1e-9)
    with pytest.raises(InvalidArgumentError):
        rescaled_compare(circle(), unit_expander, 1.0)


def test_right_angle_cone_converges(right_angle_run):
    dist, _ = right_angle_run
    assert dist[-1] < 5e-2
    assert dist[0] > dist[1] > dist[2]


def test_cone_run_stays_convex_in_window(right_angle_run):
    _, run = right_angle_run
    for snap in run.snapshots:
        k = signed_curvature(snap.points)
        inside = np.linalg.norm(snap.points, axis=1) < 0.5 * snap.far_radius
        assert k[1:-1][inside[1:-1]].min() > 0


def test_curvature_maximum_decreases(right_angle_run):
    _, run = right_angle_run
    kmax = np.array([k for t, k in run.max_curvature if t > 1e-3])
    assert np.all(np.diff(kmax) <= 0)


def test_mesh_refinement_stability(right_angle_run):
    coarse = right_angle_run[0][-1]
    fine = cone_distances(math.pi / 2, n=800)[0][-1]
    assert abs(fine - coarse) < 2 * coarse


@pytest.mark.parametrize("alpha", [math.pi / 3, 2 * math.pi / 3])
def test_distance_decreases_for_other_angles(alpha):
    dist, _ = cone_distances(alpha)
    assert dist[-1] < dist[0]


def test_unit_birth_rescaling_is_the_wrong_orbit(right_angle_run):
    # sqrt(1 + 2 t) passes through the expander at t = 0, not through the cone
    _, run = right_angle_run
    exp = expander_for(math.pi / 2)
    shifted = [rescaled_compare(s, exp, 1.0) for s in run.snapshots]
    assert all(d > 5e-2 for d in shifted[:2])
    assert all(a > 10 * b for a, b in zip(shifted, right_angle_run[0]))
