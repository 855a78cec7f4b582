"""Self-expanding plane curves.

A unit-speed curve Gamma(s) = (x, y) with tangent angle theta solves the
expander equation k = lambda <Gamma, xi> (xi = left unit normal) iff

    x' = cos(theta),  y' = sin(theta),  theta' = lambda (-x sin(theta) + y cos(theta)).

Differentiating the relation gives k' = -lambda k <Gamma, T>, so the curvature
can be carried as a fourth state variable with k(0) = lambda r0; the expander
relation is then a first integral of the extended system.  Carrying k keeps its
relative accuracy in the tails, where lambda <Gamma, xi> is a cancellation of
O(r) terms down to ~1e-13.

The family is normalised so that the curve passes through (0, r0) with a
horizontal tangent at s = 0.  The system is integrated with classical RK4 at a
fixed step in both arc-length directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import BracketError, InvalidArgumentError, NotAsymptoticError

DEFAULT_STEP = 1e-3
DEFAULT_DECAY_TOL = 1e-6


def default_s_max(lam: float) -> float:
    """Arc-length half-width at which the curvature has decayed far enough."""
    return 6.0 / math.sqrt(lam)


@dataclass(frozen=True)
class ExpanderParams:
    lam: float
    r0: float

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise InvalidArgumentError(f"lambda must be positive, got {self.lam}")
        if not (self.r0 >= 0 and math.isfinite(self.r0)):
            raise InvalidArgumentError(f"r0 must be non-negative, got {self.r0}")


class CurveSample(NamedTuple):
    s: float
    position: tuple[float, float]
    theta: float
    k: float
    r: float


@dataclass(frozen=True, eq=False)
class ExpanderCurve:
    """Sampled solution on s in [-s_max, s_max], stored column-wise.

    The arrays are made read-only at construction.  ``samples`` gives the
    row-wise view when that is more convenient.
    """

    params: ExpanderParams
    step: float
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        for name in ("s", "x", "y", "theta", "k"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def lam(self) -> float:
        return self.params.lam

    @property
    def r0(self) -> float:
        return self.params.r0

    @property
    def r(self) -> np.ndarray:
        return np.hypot(self.x, self.y)

    @property
    def s_max(self) -> float:
        return float(self.s[-1])

    @property
    def center(self) -> int:
        """Index of the s = 0 sample."""
        return len(self.s) // 2

    def __len__(self):
        return len(self.s)

    @property
    def samples(self) -> list[CurveSample]:
        r = self.r
        return [
            CurveSample(float(self.s[i]), (float(self.x[i]), float(self.y[i])),
                        float(self.theta[i]), float(self.k[i]), float(r[i]))
            for i in range(len(self.s))
        ]

    @property
    def positions(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])


def _rhs(lam, x, y, th, k):
    c = math.cos(th)
    sn = math.sin(th)
    return c, sn, k, -lam * k * (x * c + y * sn)


def _rk4_step(lam, x, y, th, k, h):
    a1, b1, c1, d1 = _rhs(lam, x, y, th, k)
    hh = 0.5 * h
    a2, b2, c2, d2 = _rhs(lam, x + hh * a1, y + hh * b1, th + hh * c1, k + hh * d1)
    a3, b3, c3, d3 = _rhs(lam, x + hh * a2, y + hh * b2, th + hh * c2, k + hh * d2)
    a4, b4, c4, d4 = _rhs(lam, x + h * a3, y + h * b3, th + h * c3, k + h * d3)
    h6 = h / 6.0
    return (x + h6 * (a1 + 2 * a2 + 2 * a3 + a4),
            y + h6 * (b1 + 2 * b2 + 2 * b3 + b4),
            th + h6 * (c1 + 2 * c2 + 2 * c3 + c4),
            k + h6 * (d1 + 2 * d2 + 2 * d3 + d4))


def _march(lam, r0, n_steps, h):
    xs = [0.0] * (n_steps + 1)
    ys = [0.0] * (n_steps + 1)
    ts = [0.0] * (n_steps + 1)
    ks = [0.0] * (n_steps + 1)
    x, y, th, k = 0.0, r0, 0.0, lam * r0
    ys[0] = r0
    ks[0] = k
    for i in range(1, n_steps + 1):
        x, y, th, k = _rk4_step(lam, x, y, th, k, h)
        xs[i] = x
        ys[i] = y
        ts[i] = th
        ks[i] = k
    return xs, ys, ts, ks


def _n_steps(s_max, step):
    n = int(round(s_max / step))
    if abs(n * step - s_max) > 1e-9 * max(1.0, s_max):
        raise InvalidArgumentError(
            f"s_max={s_max} is not an integer multiple of step={step}")
    return n


def integrate_expander_curve(params: ExpanderParams, s_max: float | None = None,
                             step: float = DEFAULT_STEP) -> ExpanderCurve:
    """Integrate the expander ODE on [-s_max, s_max] with a fixed RK4 step.

    ``s_max`` defaults to ``6/sqrt(lambda)`` and must be a multiple of ``step``
    so that the sample grid is exactly ``s_i = i * step``.  r0 = 0 yields the
    analytic line through the origin.
    """
    if s_max is None:
        s_max = round(default_s_max(params.lam) / step) * step
    if not (step > 0 and math.isfinite(step)):
        raise InvalidArgumentError(f"step must be positive, got {step}")
    if not (s_max > 0 and math.isfinite(s_max)):
        raise InvalidArgumentError(f"s_max must be positive, got {s_max}")
    if s_max < 10 * step:
        raise InvalidArgumentError("s_max must be at least 10 steps")
    n = _n_steps(s_max, step)
    s = np.arange(-n, n + 1) * step
    lam, r0 = params.lam, params.r0

    if r0 == 0.0:
        zeros = np.zeros_like(s)
        return ExpanderCurve(params, step, s, s.copy(), zeros, zeros, zeros)

    fx, fy, ft, fk = _march(lam, r0, n, step)
    bx, by, bt, bk = _march(lam, r0, n, -step)
    x = np.array(bx[:0:-1] + fx)
    y = np.array(by[:0:-1] + fy)
    theta = np.array(bt[:0:-1] + ft)
    k = np.array(bk[:0:-1] + fk)
    return ExpanderCurve(params, step, s, x, y, theta, k)


class InvariantCheck(NamedTuple):
    values: np.ndarray
    max_relative_deviation: float
    saturated: bool


def conserved_invariant(curve: ExpanderCurve) -> InvariantCheck:
    """Evaluate k * exp(lambda r^2 / 2) along the curve.

    The product is formed in log space so the exponential never overflows.
    Samples whose curvature underflowed to zero are reported as ``saturated``
    and excluded from the deviation.
    """
    if len(curve) == 0:
        raise InvalidArgumentError("empty curve")
    if curve.r0 == 0.0:
        return InvariantCheck(np.zeros(len(curve)), 0.0, False)
    lam = curve.lam
    expo = 0.5 * lam * curve.r ** 2
    k = curve.k
    with np.errstate(divide="ignore"):
        vals = np.sign(k) * np.exp(np.log(np.abs(k)) + expo)
    ref = lam * curve.r0 * math.exp(0.5 * lam * curve.r0 ** 2)
    live = k != 0.0
    saturated = not bool(live.all())
    dev = float(np.max(np.abs(vals[live] - ref)) / ref)
    return InvariantCheck(vals, dev, saturated)


def total_curvature(curve: ExpanderCurve) -> float:
    """Trapezoid-rule integral of k over the sampled arc length."""
    if len(curve) == 0:
        raise InvalidArgumentError("empty curve")
    return float(np.trapezoid(curve.k, curve.s))


def turning_angle(curve: ExpanderCurve) -> float:
    """theta(s_max) - theta(-s_max), the integrator's own total curvature."""
    return float(curve.theta[-1] - curve.theta[0])


def endpoint_decay(curve: ExpanderCurve) -> float:
    """max(|k(+-s_max)|) / k(0); zero for the straight line."""
    if curve.r0 == 0.0:
        return 0.0
    return max(abs(curve.k[0]), abs(curve.k[-1])) / curve.k[curve.center]


def asymptotic_angle(curve: ExpanderCurve, decay_tol: float = DEFAULT_DECAY_TOL) -> float:
    """Opening angle of the asymptotic cone, pi - (theta(s_max) - theta(-s_max)).

    Raises
    ------
    NotAsymptoticError
        if the endpoint curvature exceeds ``decay_tol * k(0)``.
    """
    if curve.r0 == 0.0:
        return math.pi
    decay = endpoint_decay(curve)
    if decay >= decay_tol:
        raise NotAsymptoticError(
            f"curve not yet asymptotic: k(s_max)/k(0) = {decay:.3e} >= {decay_tol:.1e}",
            residual=float(max(abs(curve.k[0]), abs(curve.k[-1]))))
    return math.pi - turning_angle(curve)


def curve_residual(curve: ExpanderCurve) -> float:
    """max |k_fd - lambda <Gamma, xi>| with k_fd from centred differences of theta."""
    if len(curve) < 3:
        return 0.0
    th = curve.theta
    k_fd = (th[2:] - th[:-2]) / (2.0 * curve.step)
    k_rel = curve.lam * (-curve.x * np.sin(th) + curve.y * np.cos(th))
    return float(np.max(np.abs(k_fd - k_rel[1:-1])))


def _half_angle(lam, r0, s_max, step, decay_tol):
    # forward half only: the backward branch is the exact mirror image
    n = _n_steps(s_max, step)
    x, y, th, k = 0.0, r0, 0.0, lam * r0
    for _ in range(n):
        x, y, th, k = _rk4_step(lam, x, y, th, k, step)
    if abs(k) >= decay_tol * lam * r0:
        raise NotAsymptoticError(
            f"curve not yet asymptotic at r0={r0}", residual=abs(k))
    return math.pi - 2.0 * th


def family_angle(lam: float, r0: float, s_max: float | None = None,
                 step: float = DEFAULT_STEP, decay_tol: float = DEFAULT_DECAY_TOL) -> float:
    """asymptotic_angle(integrate_expander_curve(...)) without storing samples."""
    ExpanderParams(lam, r0)
    if r0 == 0.0:
        return math.pi
    if s_max is None:
        s_max = round(default_s_max(lam) / step) * step
    return _half_angle(lam, r0, s_max, step, decay_tol)


def shoot_for_angle(lam: float, alpha_target: float, tol: float = 1e-9, *,
                    s_max: float | None = None, step: float = DEFAULT_STEP,
                    r0_max: float = 64.0) -> float:
    """Find r0 whose expander has asymptotic opening angle ``alpha_target``.

    The bracket [0, r_hi] is grown by doubling r_hi from 1 and then bisected;
    this relies on alpha(r0) being decreasing, which ``check_monotone`` verifies
    for any sweep.
    """
    if not (0.0 < alpha_target <= math.pi):
        raise InvalidArgumentError(f"alpha_target must lie in (0, pi], got {alpha_target}")
    if not tol > 0:
        raise InvalidArgumentError("tol must be positive")
    if alpha_target == math.pi:
        return 0.0

    def angle(r0):
        try:
            return family_angle(lam, r0, s_max, step)
        except NotAsymptoticError as exc:
            raise BracketError(
                f"alpha_target={alpha_target} not reachable at the configured s_max "
                f"(r0={r0} does not decay)") from exc

    lo, hi = 0.0, 1.0
    a_hi = angle(hi)
    while a_hi > alpha_target:
        lo = hi
        hi *= 2.0
        if hi > r0_max:
            raise BracketError(
                f"alpha_target={alpha_target} below the achievable range (r0 > {r0_max})")
        a_hi = angle(hi)
    if abs(a_hi - alpha_target) < tol:
        return hi

    while True:
        mid = 0.5 * (lo + hi)
        a = angle(mid)
        if abs(a - alpha_target) < tol or hi - lo < 4e-16 * hi:
            return mid
        if a > alpha_target:
            lo = mid
        else:
            hi = mid


def check_monotone(r0_values, angles) -> bool:
    """True iff angles strictly decrease along increasing r0."""
    order = np.argsort(r0_values)
    a = np.asarray(angles, dtype=float)[order]
    return bool(np.all(np.diff(a) < 0))


def curve_jet(curve: ExpanderCurve, s: float, order: int = 4) -> list[np.ndarray]:
    """Gamma and its first ``order`` arc-length derivatives at arbitrary s.

    The state is advanced from the nearest sample by a single RK4 sub-step, and
    the derivatives follow from the ODE itself:
    T' = kN, N' = -kT, k' = -lambda k <Gamma,T>, <Gamma,T>' = 1 + k^2/lambda.
    """
    i = int(round((s - curve.s[0]) / curve.step))
    if i < 0 or i >= len(curve):
        raise InvalidArgumentError(f"s={s} outside the sampled range")
    lam = curve.lam
    if curve.r0 == 0.0:
        x, y, th, k = float(s), 0.0, 0.0, 0.0
    else:
        x, y, th, k = _rk4_step(lam, float(curve.x[i]), float(curve.y[i]),
                                float(curve.theta[i]), float(curve.k[i]),
                                s - float(curve.s[i]))
    c, sn = math.cos(th), math.sin(th)
    T = np.array([c, sn])
    N = np.array([-sn, c])
    q = x * c + y * sn
    k1 = -lam * k * q
    k2 = -lam * (k1 * q + k * (1.0 + k * k / lam))
    out = [np.array([x, y]), T, k * N, k1 * N - k * k * T,
           (k2 - k ** 3) * N - 3.0 * k * k1 * T]
    return out[:order + 1]


CSV_HEADER = "s,x,y,theta,k,r,invariant"


def write_curve_csv(curve: ExpanderCurve, path) -> None:
    inv = conserved_invariant(curve).values
    table = np.column_stack([curve.s, curve.x, curve.y, curve.theta, curve.k, curve.r, inv])
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=CSV_HEADER,
               comments="", encoding="utf-8")


def read_curve_csv(path, lam: float) -> ExpanderCurve:
    """Rebuild an ExpanderCurve from ``write_curve_csv`` output."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].strip() != CSV_HEADER:
        raise InvalidArgumentError(f"{path}: unexpected header")
    table = np.loadtxt(text[1:], delimiter=",", ndmin=2)
    s, x, y, theta, k = (table[:, j] for j in range(5))
    mid = len(s) // 2
    step = float(s[1] - s[0])
    return ExpanderCurve(ExpanderParams(lam, float(y[mid])), step, s, x, y, theta, k)
