"""Parametrised immersions F: U -> R^n over an axis-aligned parameter box.

A chart supplies its derivative jet either from closed-form oracles or from
nested centred differences of the position map.  Jets are returned as a list
``[F, dF, d2F, ...]`` where ``dkF`` has shape ``(m,)*k + (n,)`` and
``dkF[i1, ..., ik]`` is the ambient vector d^k F / du_i1 ... du_ik.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from ..curve import ExpanderCurve, curve_jet
from ..errors import InvalidArgumentError, StencilError


@dataclass(frozen=True, eq=False)
class Chart:
    """A parametrised immersion with a sampling grid.

    Parameters
    ----------
    name : str
    dim_domain, dim_ambient : int
        m and n, with n > m >= 1.
    lower, upper : array_like
        Parameter box corners.
    counts : tuple of int
        Grid samples per axis (``numpy.linspace`` including both ends).
    position : callable
        u -> F(u), shape (n,).
    derivatives : callable or None
        (u, order) -> jet list up to ``order``; None selects finite differences.
    fd_step : float or None
        Default step for finite differences; None means box width / (4 samples)
        per axis, reduced to the smallest axis value.
    flat_axes : tuple of int
        Parameter axes along which the immersion is known to be a flat factor
        (used only to report that those directions contribute nothing).
    """

    name: str
    dim_domain: int
    dim_ambient: int
    lower: np.ndarray
    upper: np.ndarray
    counts: tuple
    position: Callable[[np.ndarray], np.ndarray]
    derivatives: Callable[[np.ndarray, int], list] | None = None
    fd_step: float | None = None
    flat_axes: tuple = ()
    rank_tol: float = 1e-10
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        m, n = self.dim_domain, self.dim_ambient
        if m < 1 or n <= m:
            raise InvalidArgumentError(f"need n > m >= 1, got m={m}, n={n}")
        if lo.shape != (m,) or hi.shape != (m,) or len(self.counts) != m:
            raise InvalidArgumentError("box and counts must have one entry per domain axis")
        if np.any(hi <= lo):
            raise InvalidArgumentError("degenerate parameter box")
        if any(c < 1 for c in self.counts):
            raise InvalidArgumentError("sample counts must be positive")

    @property
    def derivative_mode(self) -> str:
        return "closed" if self.derivatives is not None else "fd"

    @property
    def step(self) -> float:
        if self.fd_step is not None:
            return float(self.fd_step)
        width = self.upper - self.lower
        return float(np.min(width / (4.0 * np.asarray(self.counts))))

    def require_interior(self, u, margin: float = 0.0) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim_domain,):
            raise InvalidArgumentError(f"parameter point must have shape ({self.dim_domain},)")
        tol = 1e-12 * np.maximum(1.0, np.abs(self.upper - self.lower))
        if np.any(u < self.lower + margin - tol) or np.any(u > self.upper - margin + tol):
            raise StencilError(
                f"{self.name}: point {u.tolist()} closer than {margin:g} to the box boundary")
        return u

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, c) for a, b, c in zip(self.lower, self.upper, self.counts)]

    def grid(self, margin: float = 0.0) -> np.ndarray:
        """Grid nodes (row per point, C order) at least ``margin`` from the boundary."""
        pts = np.array(list(itertools.product(*self.axes())), dtype=float)
        keep = np.all((pts >= self.lower + margin - 1e-12) & (pts <= self.upper - margin + 1e-12),
                      axis=1)
        return pts[keep]

    def jet(self, u, order: int, h: float | None = None) -> list[np.ndarray]:
        u = np.asarray(u, dtype=float)
        if self.derivatives is not None:
            out = self.derivatives(u, order)
            return [np.asarray(d, dtype=float) for d in out[:order + 1]]
        return _fd_jet(self.position, u, order, self.step if h is None else h)

    def jet_reach(self, order: int) -> float:
        """Parameter distance touched when building a jet of ``order``."""
        return 0.0 if self.derivatives is not None else order * self.step

    def rotated(self, Q) -> "Chart":
        """The same immersion composed with an ambient orthogonal map Q."""
        Q = np.asarray(Q, dtype=float)
        base = self

        def position(u):
            return Q @ base.position(u)

        deriv = None
        if base.derivatives is not None:
            def deriv(u, order):
                return [d @ Q.T for d in base.derivatives(u, order)]

        return Chart(f"{self.name}@rot", self.dim_domain, self.dim_ambient, self.lower,
                     self.upper, self.counts, position, deriv, self.fd_step, self.flat_axes,
                     self.rank_tol, dict(self.meta))


def _fd_jet(position, u, order, h):
    m = u.shape[0]
    if order == 0:
        return [np.asarray(position(u), dtype=float)]
    lower = _fd_jet(position, u, order - 1, h)
    top = []
    for i in range(m):
        e = np.zeros(m)
        e[i] = h
        plus = _fd_jet(position, u + e, order - 1, h)[-1]
        minus = _fd_jet(position, u - e, order - 1, h)[-1]
        top.append((plus - minus) / (2.0 * h))
    return lower + [np.stack(top)]


# --- closed-form charts from symbolic expressions ------------------------------------

def symbolic_jet(exprs, symbols, max_order: int = 4):
    """Compile the derivative jet of a symbolic map into numpy callables."""
    import sympy as sp

    m, n = len(symbols), len(exprs)
    cache = {(): list(exprs)}
    compiled = []
    for order in range(max_order + 1):
        flat = []
        for idx in itertools.product(range(m), repeat=order):
            key = tuple(sorted(idx))
            if key not in cache:
                cache[key] = [sp.diff(e, symbols[key[-1]]) for e in cache[key[:-1]]]
            flat.extend(cache[key])
        fn = sp.lambdify(symbols, flat, modules="numpy")
        compiled.append((fn, (m,) * order + (n,)))

    def derivatives(u, order):
        if order > max_order:
            raise InvalidArgumentError(f"closed-form jet only available to order {max_order}")
        args = [float(v) for v in u]
        return [np.array(fn(*args), dtype=float).reshape(shape)
                for fn, shape in compiled[:order + 1]]

    def position(u):
        return derivatives(u, 0)[0]

    return position, derivatives


def symbolic_chart(name, exprs, symbols, lower, upper, counts, fd_step=None,
                   max_order=4, **kwargs) -> Chart:
    position, derivatives = symbolic_jet(exprs, symbols, max_order)
    return Chart(name, len(symbols), len(exprs), lower, upper, counts, position,
                 derivatives, fd_step, **kwargs)


def fd_chart(name, position, dim_domain, dim_ambient, lower, upper, counts,
             fd_step=None) -> Chart:
    """Chart whose derivatives come from centred differences of ``position``."""
    return Chart(name, dim_domain, dim_ambient, lower, upper, counts, position, None, fd_step)


# --- bundled analytic charts -----------------------------------------------------------

ANALYTIC_STEP = 1e-3


@lru_cache(maxsize=None)
def sphere(R: float = 1.0, counts=(9, 9)) -> Chart:
    import sympy as sp
    ph, ps = sp.symbols("phi psi")
    F = [R * sp.sin(ph) * sp.cos(ps), R * sp.sin(ph) * sp.sin(ps), R * sp.cos(ph)]
    return symbolic_chart(f"sphere(R={R:g})", F, (ph, ps), [0.5, 0.0], [np.pi - 0.5, 2.0],
                          counts, ANALYTIC_STEP, meta={"R": R})


@lru_cache(maxsize=None)
def cylinder(R: float = 1.0, counts=(9, 9)) -> Chart:
    import sympy as sp
    ph, z = sp.symbols("phi z")
    F = [R * sp.cos(ph), R * sp.sin(ph), z]
    return symbolic_chart(f"cylinder(R={R:g})", F, (ph, z), [0.0, -1.0], [2.0, 1.0],
                          counts, ANALYTIC_STEP, meta={"R": R})


@lru_cache(maxsize=None)
def plane(counts=(9, 9)) -> Chart:
    """A tilted 2-plane through the origin of R^3."""
    import sympy as sp
    a, b = sp.symbols("a b")
    e1 = [sp.Rational(1, 3), sp.Rational(2, 3), sp.Rational(2, 3)]
    e2 = [sp.Rational(2, 3), sp.Rational(1, 3), -sp.Rational(2, 3)]
    F = [a * p + b * q for p, q in zip(e1, e2)]
    return symbolic_chart("plane", F, (a, b), [-1.0, -1.0], [1.0, 1.0], counts, ANALYTIC_STEP)


@lru_cache(maxsize=None)
def torus(a: float = 1.0, b: float = 2.0, eps: float = 0.0, counts=(9, 9)) -> Chart:
    """Clifford-type torus S^1(a) x S^1(b) in R^4.

    ``eps`` != 0 modulates the second radius by ``eps*cos(phi)``, which breaks
    the parallelism of the principal normal.
    """
    import sympy as sp
    ph, ps = sp.symbols("phi psi")
    rb = b + eps * sp.cos(ph)
    F = [a * sp.cos(ph), a * sp.sin(ph), rb * sp.cos(ps), rb * sp.sin(ps)]
    name = f"torus(a={a:g},b={b:g})" if eps == 0 else f"torus(a={a:g},b={b:g},eps={eps:g})"
    return symbolic_chart(name, F, (ph, ps), [0.0, 0.0], [2.0, 2.0], counts, ANALYTIC_STEP,
                          meta={"a": a, "b": b, "eps": eps})


@lru_cache(maxsize=None)
def cone(beta: float = np.pi / 4, counts=(9, 9)) -> Chart:
    """Round cone with half-angle ``beta`` about the z-axis, vertex excluded."""
    import sympy as sp
    rho, ph = sp.symbols("rho phi")
    sb, cb = sp.sin(beta), sp.cos(beta)
    F = [rho * sb * sp.cos(ph), rho * sb * sp.sin(ph), rho * cb]
    return symbolic_chart(f"cone(beta={beta:.6g})", F, (rho, ph), [1.0, 0.0], [5.0, 2.0],
                          counts, ANALYTIC_STEP, meta={"beta": beta})


CUBIC_MONOMIALS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3))


@lru_cache(maxsize=None)
def graph(coefficients: tuple, counts=(9, 9), half_width: float = 0.5) -> Chart:
    """Graph (x, y, p_1(x, y), ..., p_q(x, y)) of cubic polynomials.

    ``coefficients`` holds one tuple per graph component, listing the
    coefficients of 1, x, y, x^2, xy, y^2, x^3, x^2 y, x y^2, y^3 (shorter
    tuples are zero padded).
    """
    import sympy as sp
    x, y = sp.symbols("x y")
    if not coefficients:
        raise InvalidArgumentError("graph needs at least one component")
    F = [x, y]
    for comp in coefficients:
        if len(comp) > len(CUBIC_MONOMIALS):
            raise InvalidArgumentError("at most 10 cubic coefficients per component")
        F.append(sum(sp.nsimplify(c) * x ** i * y ** j
                     for c, (i, j) in zip(comp, CUBIC_MONOMIALS)) + 0 * x)
    w = half_width
    return symbolic_chart(f"graph{list(map(list, coefficients))}", F, (x, y), [-w, -w], [w, w],
                          counts, ANALYTIC_STEP, meta={"coefficients": coefficients})


def parse_graph_spec(text: str) -> tuple:
    """'0,0,0,1,0,3;0,1' -> ((0,0,0,1,0,3), (0,1))."""
    try:
        comps = tuple(tuple(float(c) for c in part.split(",") if c.strip())
                      for part in text.split(";") if part.strip())
    except ValueError as exc:
        raise InvalidArgumentError(f"bad graph coefficients {text!r}") from exc
    if not comps:
        raise InvalidArgumentError("graph needs at least one component")
    return comps


def random_graph_coefficients(rng: np.random.Generator, codim: int = 2, scale: float = 0.5):
    """Generic cubic graph data, without constant and linear terms."""
    out = []
    for _ in range(codim):
        c = rng.uniform(-scale, scale, size=len(CUBIC_MONOMIALS))
        c[:3] = 0.0
        out.append(tuple(float(v) for v in c))
    return tuple(out)


# --- products with flat factors --------------------------------------------------------

def product_with_flat(curve: ExpanderCurve, extra_dims: int = 1, *, s_half: float | None = None,
                      t_half: float = 1.0, counts=None, fd_step: float = 1e-3) -> Chart:
    """Chart of Gamma x R^q in R^(q+2), (s, t_1..t_q) -> (Gamma(s), t_1..t_q).

    Derivatives in s are read off the curve ODE (see ``curve_jet``), so the
    oracles are smooth to all orders; the t-directions are exactly flat.
    """
    if len(curve) == 0:
        raise InvalidArgumentError("empty curve")
    if extra_dims < 0:
        raise InvalidArgumentError("extra_dims must be non-negative")
    q = int(extra_dims)
    m, n = q + 1, q + 2
    if s_half is None:
        s_half = min(2.0 / np.sqrt(curve.lam), 0.5 * curve.s_max)
    if s_half + 4 * fd_step > curve.s_max:
        raise InvalidArgumentError("s_half exceeds the sampled curve")
    if counts is None:
        counts = (41,) + (5,) * q

    def derivatives(u, order):
        gam = curve_jet(curve, float(u[0]), order)
        out = []
        F = np.zeros(n)
        F[:2] = gam[0]
        F[2:] = u[1:]
        out.append(F)
        for k in range(1, order + 1):
            d = np.zeros((m,) * k + (n,))
            d[(0,) * k + (slice(0, 2),)] = gam[k]
            if k == 1:
                for a in range(q):
                    d[1 + a, 2 + a] = 1.0
            out.append(d)
        return out

    def position(u):
        return derivatives(u, 0)[0]

    lower = [-s_half] + [-t_half] * q
    upper = [s_half] + [t_half] * q
    return Chart(f"product(lambda={curve.lam:g},r0={curve.r0:g},q={q})", m, n, lower, upper,
                 counts, position, derivatives, fd_step, tuple(range(1, m)),
                 meta={"lam": curve.lam, "r0": curve.r0, "extra_dims": q})
