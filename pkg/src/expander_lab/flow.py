"""Curve shortening flow of polylines, started from cones, against expanders.

Self-similarity.  Let Gamma be unit speed with left normal xi and curvature
k = lambda <Gamma, xi>.  For X(t) = c(t) Gamma the normal speed is
c' <Gamma, xi> and the curvature is k / c = lambda <Gamma, xi> / c, so X moves
by curvature iff c c' = lambda, i.e. c(t)^2 = 2 lambda (t - t0).  With
t0 = -1/(2 lambda) the orbit passes through Gamma at t = 0
(c = sqrt(1 + 2 lambda t)); with t0 = 0 it emanates at t = 0 from the
asymptotic cone of Gamma (c = sqrt(2 lambda t)), which is the orbit a flow
started from cone data follows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .curve import ExpanderCurve, asymptotic_angle
from .errors import (AngleMismatchError, EmptyWindowError, InvalidArgumentError,
                     SelfIntersectionError)

COLLAPSE_TOL = 1e-9
FOLD_COS = -0.9


@dataclass(frozen=True, eq=False)
class FlowCurve:
    """Polyline snapshot.  Open curves have their endpoints on the cone rays."""

    points: np.ndarray
    time: float
    cone_angle: float
    far_radius: float
    closed: bool = False

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise InvalidArgumentError("a flow curve needs at least three 2-d points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    @property
    def ray_directions(self):
        a = 0.5 * self.cone_angle
        return np.array([-math.sin(a), math.cos(a)]), np.array([math.sin(a), math.cos(a)])


@dataclass(frozen=True)
class FlowConfig:
    dt_safety: float = 0.25
    resample_every: int = 10
    lam: float = 1.0

    def __post_init__(self):
        if not 0 < self.dt_safety <= 0.5:
            raise InvalidArgumentError("dt_safety must lie in (0, 0.5]")
        if self.resample_every < 0:
            raise InvalidArgumentError("resample_every must be non-negative")
        if not self.lam > 0:
            raise InvalidArgumentError("lambda must be positive")


def init_cone(alpha: float, far_radius: float = 10.0, n_points: int = 400,
              grading: float = 1.5) -> FlowCurve:
    """Boundary of the cone of opening angle alpha around the positive y-axis.

    Nodes sit at signed ray distances R * sign(t) |t|^grading for uniform t in
    [-1, 1], so they cluster at the vertex, which is a single node.
    """
    if not 0 < alpha < math.pi:
        raise InvalidArgumentError(f"cone angle must lie in (0, pi), got {alpha}")
    if not far_radius > 0:
        raise InvalidArgumentError("far radius must be positive")
    if n_points < 16:
        raise InvalidArgumentError("need at least 16 points")
    if n_points % 2 == 0:
        # an odd count puts a node exactly on the vertex
        n_points += 1
    t = np.linspace(-1.0, 1.0, n_points)
    t[n_points // 2] = 0.0
    d = far_radius * np.sign(t) * np.abs(t) ** grading
    a = 0.5 * alpha
    pts = np.column_stack([np.sin(a) * d, np.cos(a) * np.abs(d)])
    return FlowCurve(pts, 0.0, alpha, far_radius)


def straight_line(far_radius: float = 10.0, n_points: int = 401) -> FlowCurve:
    """The degenerate cone of angle pi: a segment of the x-axis."""
    x = np.linspace(-far_radius, far_radius, n_points)
    return FlowCurve(np.column_stack([x, np.zeros_like(x)]), 0.0, math.pi, far_radius)


def circle(radius: float = 1.0, n_points: int = 400) -> FlowCurve:
    """Closed test curve: a regular polygon inscribed in the circle."""
    phi = 2 * np.pi * np.arange(n_points) / n_points
    pts = radius * np.column_stack([np.cos(phi), np.sin(phi)])
    return FlowCurve(pts, 0.0, math.nan, radius, closed=True)


def curvature_vectors(points: np.ndarray, closed: bool = False) -> np.ndarray:
    """Circumscribed-circle curvature vector at each node (zero at open ends).

    For neighbours a = p_prev - p, b = p_next - p the circumcentre relative to
    p is v / D with v = (|a|^2 b_y - |b|^2 a_y, |b|^2 a_x - |a|^2 b_x) and
    D = 2 (a x b); the curvature vector is (v / D) / |v / D|^2 = v D / |v|^2.
    """
    p = np.asarray(points, dtype=float)
    if closed:
        prev, nxt, mid = np.roll(p, 1, axis=0), np.roll(p, -1, axis=0), p
    else:
        prev, nxt, mid = p[:-2], p[2:], p[1:-1]
    a = prev - mid
    b = nxt - mid
    a2 = np.einsum("ij,ij->i", a, a)
    b2 = np.einsum("ij,ij->i", b, b)
    v = np.column_stack([a2 * b[:, 1] - b2 * a[:, 1], b2 * a[:, 0] - a2 * b[:, 0]])
    D = 2.0 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    v2 = np.einsum("ij,ij->i", v, v)
    kv = v * (D / np.where(v2 > 0, v2, 1.0))[:, None]
    if closed:
        return kv
    out = np.zeros_like(p)
    out[1:-1] = kv
    return out


def signed_curvature(points: np.ndarray, closed: bool = False) -> np.ndarray:
    """Curvature with sign from the left normal of the polyline orientation."""
    p = np.asarray(points, dtype=float)
    kv = curvature_vectors(p, closed)
    tang = (np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0)) if closed else np.gradient(p, axis=0)
    left = np.column_stack([-tang[:, 1], tang[:, 0]])
    left /= np.linalg.norm(left, axis=1)[:, None]
    return np.einsum("ij,ij->i", kv, left)


def arc_length(points: np.ndarray, closed: bool = False) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if closed:
        p = np.vstack([p, p[:1]])
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample(curve: FlowCurve) -> FlowCurve:
    """Uniform arc-length resampling through a cubic spline of the nodes."""
    p = curve.points
    n = len(p)
    p = _drop_collapsed(p, curve.closed)
    if curve.closed:
        s = arc_length(p, True)
        spl = CubicSpline(s, np.vstack([p, p[:1]]), bc_type="periodic")
        new = spl(np.linspace(0.0, s[-1], n + 1)[:-1])
    else:
        s = arc_length(p)
        spl = CubicSpline(s, p, bc_type="not-a-knot")
        new = spl(np.linspace(0.0, s[-1], n))
        new[0], new[-1] = p[0], p[-1]
    return replace(curve, points=new)


def _drop_collapsed(p: np.ndarray, closed: bool) -> np.ndarray:
    """Remove nodes that sit on their predecessor; open-curve endpoints are kept."""
    seg = np.linalg.norm(np.diff(np.vstack([p, p[:1]]) if closed else p, axis=0), axis=1)
    keep = np.ones(len(p), dtype=bool)
    if closed:
        keep[1:] = seg[:-1] >= COLLAPSE_TOL
    else:
        keep[1:-1] = seg[:-1] >= COLLAPSE_TOL
        if seg[-1] < COLLAPSE_TOL and keep[-2]:
            keep[-2] = False
    return p[keep]


def min_segment(points: np.ndarray, closed: bool = False) -> float:
    p = np.vstack([points, points[:1]]) if closed else points
    return float(np.min(np.linalg.norm(np.diff(p, axis=0), axis=1)))


def _check_folds(p: np.ndarray, closed: bool, time: float):
    seg = np.diff(np.vstack([p, p[:1]]) if closed else p, axis=0)
    a, b = seg[:-1], seg[1:]
    cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
    bad = np.nonzero(cos < FOLD_COS)[0]
    if bad.size:
        raise SelfIntersectionError(
            f"polyline folds back at node {int(bad[0]) + 1} (t = {time:.6g})")


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def find_self_intersection(points: np.ndarray, closed: bool = False, tol: float = 1e-9):
    """First pair (i, j) of non-adjacent segments crossing at interior points, or None.

    Near-parallel pairs are skipped: collinear overlap would need a fold, which
    the per-step fold check catches, and exact collinearity (straight rays)
    otherwise produces round-off sign noise.
    """
    p = np.vstack([points, points[:1]]) if closed else np.asarray(points)
    A = p[:-1]
    d = p[1:] - A
    n = len(A)
    lens = np.linalg.norm(d, axis=1)
    for i in range(n - 2):
        j = np.arange(i + 2, n)
        if closed and i == 0:
            j = j[j != n - 1]
        if j.size == 0:
            continue
        denom = _cross(d[i], d[j])
        ok = np.abs(denom) > 1e-12 * lens[i] * lens[j]
        if not ok.any():
            continue
        j, denom = j[ok], denom[ok]
        w = A[j] - A[i]
        t = _cross(w, d[j]) / denom
        u = _cross(w, d[i]) / denom
        hit = np.nonzero((t > tol) & (t < 1 - tol) & (u > tol) & (u < 1 - tol))[0]
        if hit.size:
            return i, int(j[hit[0]])
    return None


def _clamp_ends(p: np.ndarray, curve: FlowCurve) -> None:
    left, right = curve.ray_directions
    p[0] = curve.far_radius * left
    p[-1] = curve.far_radius * right


def time_step(curve: FlowCurve, config: FlowConfig) -> float:
    return config.dt_safety * min_segment(curve.points, curve.closed) ** 2


def csf_step(curve: FlowCurve, config: FlowConfig, dt: float | None = None) -> FlowCurve:
    """One explicit Euler step of X_t = curvature vector.

    Open curves keep their endpoints on the cone rays at the far radius.  The
    step is dt_safety * (shortest segment)^2 unless a smaller ``dt`` is given.
    """
    if min_segment(curve.points, curve.closed) < COLLAPSE_TOL:
        curve = resample(curve)
    dt_max = time_step(curve, config)
    dt = dt_max if dt is None else min(float(dt), dt_max)
    p = curve.points + dt * curvature_vectors(curve.points, curve.closed)
    if not curve.closed:
        _clamp_ends(p, curve)
    _check_folds(p, curve.closed, curve.time + dt)
    return replace(curve, points=p, time=curve.time + dt)


@dataclass
class FlowRun:
    snapshots: list
    steps: int
    max_curvature: list  # (time, max |k|) after every resampling


def run_flow(curve: FlowCurve, config: FlowConfig, t_end: float, snapshot_times=(),
             check_intersections: bool = True) -> FlowRun:
    """Advance to t_end, landing exactly on every requested snapshot time."""
    if t_end < curve.time:
        raise InvalidArgumentError("t_end lies before the current time")
    targets = sorted({float(t) for t in snapshot_times if curve.time <= t <= t_end} | {t_end})
    snaps, kmax = [], []
    steps = 0
    for target in targets:
        while curve.time < target - 1e-14 * max(1.0, target):
            curve = csf_step(curve, config, target - curve.time)
            steps += 1
            if config.resample_every and steps % config.resample_every == 0:
                curve = resample(curve)
                kmax.append((curve.time, float(np.max(np.abs(
                    signed_curvature(curve.points, curve.closed))))))
                if check_intersections and steps % (50 * config.resample_every) == 0:
                    _raise_on_intersection(curve)
        if check_intersections:
            _raise_on_intersection(curve)
        curve = replace(curve, time=target)
        snaps.append(curve)
    return FlowRun(snaps, steps, kmax)


def _raise_on_intersection(curve: FlowCurve):
    hit = find_self_intersection(curve.points, curve.closed)
    if hit is not None:
        raise SelfIntersectionError(
            f"segments {hit[0]} and {hit[1]} cross at t = {curve.time:.6g}")


def mean_radius(curve: FlowCurve) -> float:
    return float(np.mean(np.linalg.norm(curve.points, axis=1)))


# --- comparison with the expander ------------------------------------------------------

def scale_factor(t: float, lam: float, birth_time: float | None = None) -> float:
    """c(t) = sqrt(2 lambda (t - t0)); t0 defaults to -1/(2 lambda)."""
    t0 = -1.0 / (2.0 * lam) if birth_time is None else float(birth_time)
    c2 = 2.0 * lam * (t - t0)
    if not c2 > 0:
        raise InvalidArgumentError(f"t = {t} is not after the birth time {t0}")
    return math.sqrt(c2)


def _y_axis_anchor(p: np.ndarray):
    """Arc length of the first crossing of x = 0 and the cumulative arc length."""
    s = arc_length(p)
    x = p[:, 0]
    idx = np.nonzero((x[:-1] <= 0) & (x[1:] >= 0) & (x[:-1] != x[1:]))[0]
    if idx.size == 0:
        zero = np.nonzero(x == 0)[0]
        if zero.size == 0:
            raise EmptyWindowError("curve does not cross the y-axis")
        return float(s[zero[0]]), s
    i = int(idx[0])
    w = -x[i] / (x[i + 1] - x[i])
    return float(s[i] + w * (s[i + 1] - s[i])), s


def rescaled_compare(curve: FlowCurve, expander: ExpanderCurve, lam: float,
                     birth_time: float | None = None, angle_tol: float = 1e-3,
                     window_fraction: float = 0.5, n_compare: int = 2001) -> float:
    """Max distance between the rescaled flow curve and the expander.

    The flow polyline is divided by c(t) (see ``scale_factor``); both curves
    are parametrised by arc length from their y-axis crossing and compared at
    common arc-length values whose points lie within
    window_fraction * R_far / c(t) of the origin on both curves.
    """
    if curve.closed:
        raise InvalidArgumentError("comparison needs an open cone curve")
    alpha_exp = asymptotic_angle(expander)
    if abs(alpha_exp - curve.cone_angle) >= angle_tol:
        raise AngleMismatchError(
            f"flow cone angle {curve.cone_angle:.6g} vs expander angle {alpha_exp:.6g}")
    c = scale_factor(curve.time, lam, birth_time)
    p = curve.points / c
    radius = window_fraction * curve.far_radius / c
    s0, s = _y_axis_anchor(p)
    sig_flow = s - s0
    # both curves are parametrised by polyline arc length, so chord error cancels
    e = expander.positions
    s0e, se = _y_axis_anchor(e)
    sig_exp = se - s0e
    inside_f = np.linalg.norm(p, axis=1) <= radius
    inside_e = np.linalg.norm(e, axis=1) <= radius
    if not inside_f.any() or not inside_e.any():
        raise EmptyWindowError(f"no points within radius {radius:g}")
    lo = max(sig_flow[inside_f].min(), sig_exp[inside_e].min())
    hi = min(sig_flow[inside_f].max(), sig_exp[inside_e].max())
    if not hi > lo:
        raise EmptyWindowError("comparison window is empty")
    sig = np.linspace(lo, hi, n_compare)
    pf = np.column_stack([np.interp(sig, sig_flow, p[:, 0]), np.interp(sig, sig_flow, p[:, 1])])
    pe = np.column_stack([np.interp(sig, sig_exp, e[:, 0]), np.interp(sig, sig_exp, e[:, 1])])
    keep = (np.linalg.norm(pf, axis=1) <= radius) & (np.linalg.norm(pe, axis=1) <= radius)
    if not keep.any():
        raise EmptyWindowError("comparison window is empty")
    return float(np.max(np.linalg.norm(pf[keep] - pe[keep], axis=1)))


def expander_orbit_curve(expander: ExpanderCurve, t: float, far_radius: float,
                         birth_time: float | None = None, n_points: int | None = None) -> FlowCurve:
    """The expander scaled to time t as a FlowCurve (self-test input)."""
    c = scale_factor(t, expander.lam, birth_time)
    pts = expander.positions * c
    if n_points is not None:
        idx = np.linspace(0, len(pts) - 1, n_points).round().astype(int)
        pts = pts[idx]
    return FlowCurve(pts, t, asymptotic_angle(expander), far_radius)


# --- export ----------------------------------------------------------------------------

def write_snapshots_csv(snapshots, path) -> None:
    """Blocks of t,x,y rows, one block per snapshot, separated by blank lines."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,x,y\n")
        for k, snap in enumerate(snapshots):
            if k:
                fh.write("\n")
            for x, y in snap.points:
                fh.write(f"{snap.time:.17g},{x:.17g},{y:.17g}\n")
