"""Identities satisfied by self-expanders H = lambda F^perp, measured on charts.

Every identity is evaluated pointwise as (left side - right side) with the
ingredients assembled independently: first covariant derivatives of A and H
come from the chart's jet, everything one order higher (Laplacians, second
covariant derivatives, gradients of scalars) from centred differences at
neighbouring parameter points.  Scalar Laplacians and gradients are those of the
induced metric; drift terms use grad s = F^T from the tangential projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (EmptyTailError, GateRefusal, InvalidArgumentError,
                     UndefinedPrincipalNormalError)
from .geometry import residuals as geo_res
from .geometry.charts import Chart
from .geometry.forms import (EPS_H, A_H_spectrum, covariant_derivatives_from_jet,
                             fundamental_forms, tensor_norm2)
from .geometry.report import parallel_map

DEFAULT_GATE = 1e-4
DEFAULT_STEP = 1e-3
Q_STEP = 1e-4
PARALLEL_TOL = 1e-4
EIGEN_TOL = 1e-6
CONSTANCY_TOL = 1e-8


@dataclass(frozen=True)
class ExpanderCandidate:
    chart: Chart
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidArgumentError("lambda must be positive")


# --- the defining equation ---------------------------------------------------------------

def expander_residual_at(cand: ExpanderCandidate, u) -> float:
    forms = fundamental_forms(cand.chart, u)
    return float(np.linalg.norm(forms.H - cand.lam * forms.F_perp))


def _forms_margin(chart: Chart) -> float:
    return chart.jet_reach(2)


def expander_residual(cand: ExpanderCandidate, points=None) -> tuple[float, list]:
    """max over the grid of |H - lambda F^perp| and the point attaining it."""
    pts = cand.chart.grid(_forms_margin(cand.chart)) if points is None else points
    vals = [expander_residual_at(cand, u) for u in pts]
    k = int(np.argmax(vals))
    return float(vals[k]), [float(x) for x in pts[k]]


def check_gate(cand: ExpanderCandidate, gate: float = DEFAULT_GATE) -> float:
    r, _ = expander_residual(cand)
    if not r < gate:
        raise GateRefusal(f"{cand.chart.name} is not an expander for lambda={cand.lam:g}: "
                          f"max |H - lambda F^perp| = {r:.6g} >= gate {gate:g}", r)
    return r


# --- stencil sampling ----------------------------------------------------------------------

class _Stencil:
    """Pointwise geometry at u, u +- h e_i and u +- h e_i +- h e_j."""

    def __init__(self, chart: Chart, u, h: float, eps_H: float):
        self.chart, self.u, self.h, self.eps_H = chart, np.asarray(u, float), h, eps_H
        self.m = chart.dim_domain
        self._cache = {}
        self.center = self.state(())

    def state(self, key):
        if key not in self._cache:
            p = self.u.copy()
            for i, sgn in key:
                p[i] += sgn * self.h
            self._cache[key] = _point_state(self.chart, p, self.eps_H)
        return self._cache[key]

    def d1(self, name):
        """[i, ...] centred first differences of a field."""
        h = self.h
        return np.stack([(np.asarray(self.state(((i, 1),))[name])
                          - np.asarray(self.state(((i, -1),))[name])) / (2 * h)
                         for i in range(self.m)])

    def d2(self, name):
        """[i, j] centred second differences of a scalar field."""
        h, m = self.h, self.m
        f0 = self.center[name]
        out = np.empty((m, m))
        for i in range(m):
            out[i, i] = (self.state(((i, 1),))[name] - 2 * f0 + self.state(((i, -1),))[name]) / h**2
            for j in range(i + 1, m):
                out[i, j] = out[j, i] = (
                    self.state(((i, 1), (j, 1)))[name] - self.state(((i, 1), (j, -1)))[name]
                    - self.state(((i, -1), (j, 1)))[name] + self.state(((i, -1), (j, -1)))[name]
                ) / (4 * h * h)
        return out


def _point_state(chart: Chart, p, eps_H):
    cd = covariant_derivatives_from_jet(chart, p, chart.jet(p, 3))
    f = cd.forms
    h2 = f.normH2
    defined = h2 > eps_H
    absH = math.sqrt(h2)
    return {
        "forms": f,
        "H": f.H,
        "A": f.A,
        "nabla_A": cd.nabla_A,
        "nabla_H": cd.nabla_H,
        "normH2": h2,
        "normA2": f.normA2,
        "normAH2": f.normAH2,
        "absH": absH,
        "defined": defined,
        "pinch": f.normAH2 / h2**2 if defined else math.nan,
        "B": f.A_H / absH if defined else np.full((f.m, f.m), math.nan),
    }


def _laplacian(st: _Stencil, name):
    f = st.center["forms"]
    hess = st.d2(name) - np.einsum("kij,k->ij", f.christoffel, st.d1(name))
    return float(np.einsum("ij,ij->", f.g_inv, hess))


def _drift(st: _Stencil, name):
    """<grad s, grad f> = F^T(f) with F^T taken from the tangential projection."""
    return float(st.center["forms"].top_coords @ st.d1(name))


def _g_inner(f, a, b):
    """<a, b> for covectors (coordinate components)."""
    return float(a @ f.g_inv @ b)


def _rough_laplacian_A(st: _Stencil):
    f = st.center["forms"]
    Pn, gam, nA = f.P_normal, f.christoffel, st.center["nabla_A"]
    d = st.d1("nabla_A")
    hess = (np.einsum("xy,pqvwy->pqvwx", Pn, d)
            - np.einsum("lpq,lvwn->pqvwn", gam, nA)
            - np.einsum("lpv,qlwn->pqvwn", gam, nA)
            - np.einsum("lpw,qvln->pqvwn", gam, nA))
    return np.einsum("pq,pqvwn->vwn", f.g_inv, hess)


def _hess_H(st: _Stencil):
    f = st.center["forms"]
    return (np.einsum("xy,vwy->vwx", f.P_normal, st.d1("nabla_H"))
            - np.einsum("lvw,ln->vwn", f.christoffel, st.center["nabla_H"]))


def _vec_norm(f, T):
    return math.sqrt(max(tensor_norm2(T, f.g_inv), 0.0))


# --- pointwise identity residuals ------------------------------------------------------

def pointwise_identities(cand: ExpanderCandidate, u, h: float = DEFAULT_STEP,
                         eps_H: float = EPS_H) -> dict:
    """All identity residuals at u.

    Keys map to absolute residual norms; pinching identities are None where
    |H|^2 <= eps_H anywhere on the stencil.  Extra keys: ``self4_from_self3``
    (the trace of the self3 defect, to compare with ``self4``), ``self5_general``
    and ``self5_hyp`` for hypersurfaces, and ``flat_gradient`` (largest
    derivative of |H|^2, |A|^2 along the chart's flat axes).
    """
    chart, lam = cand.chart, cand.lam
    st = _Stencil(chart, u, h, eps_H)
    c = st.center
    f = c["forms"]
    Pn, gi, top, A, H = f.P_normal, f.g_inv, f.top_coords, f.A, f.H
    nA, nH = c["nabla_A"], c["nabla_H"]
    out = {"expander": float(np.linalg.norm(H - lam * f.F_perp))}

    # nabla^perp H = -lambda A(grad s, .)
    dH = st.d1("H") @ Pn.T
    e2 = dH + lam * np.einsum("k,kin->in", top, A)
    out["self2"] = _vec_norm(f, e2)

    # (nabla^perp)^2 H = -lambda A - lambda nabla_{grad s} A - A^H(v, e_k) A(w, e_k)
    AH = f.A_H
    hessH = _hess_H(st)
    dsA = np.einsum("k,kvwn->vwn", top, nA)
    e3 = hessH + lam * A + lam * dsA + np.einsum("vk,kl,wln->vwn", AH, gi, A)
    out["self3"] = _vec_norm(f, e3)

    # trace: Delta^perp H + lambda nabla_{grad s} H + A^H(e_k, e_l) A(e_k, e_l) + lambda H = 0
    lapH = np.einsum("vw,vwn->n", gi, hessH)
    e4 = lapH + lam * top @ nH + np.einsum("ab,ak,bl,kln->n", AH, gi, gi, A) + lam * H
    out["self4"] = float(np.linalg.norm(e4))
    out["self4_from_self3"] = float(np.linalg.norm(np.einsum("vw,vwn->n", gi, e3)))
    out["self4_trace_gap"] = float(np.linalg.norm(np.einsum("vw,vwn->n", gi, e3) - e4))

    # scalar identities for |H|^2 and |A|^2
    lap_H2 = _laplacian(st, "normH2")
    drift_H2 = _drift(st, "normH2")
    nH2 = tensor_norm2(nH, gi)
    base5 = lap_H2 - 2 * nH2 + lam * drift_H2 + 2 * lam * c["normH2"]
    out["self5_general"] = abs(base5 + 2 * c["normAH2"])
    if f.codim == 1:
        out["self5_hyp"] = abs(base5 + 2 * c["normA2"] * c["normH2"])
        out["self5h"] = out["self5_hyp"]
        lapA = _rough_laplacian_A(st)
        e6 = lapA + lam * dsA + (c["normA2"] + lam) * A
        out["self6h"] = _vec_norm(f, e6)
        lap_A2 = _laplacian(st, "normA2")
        nA2 = tensor_norm2(nA, gi)
        out["self6hb"] = abs(lap_A2 - 2 * nA2 + lam * _drift(st, "normA2")
                             + 2 * (c["normA2"] + lam) * c["normA2"])
    else:
        out["self5"] = out["self5_general"]

    # the pinching equation for |A^H|^2 / |H|^4, where it is defined
    stencil_defined = all(s["defined"] for s in st._cache.values())
    if stencil_defined:
        out["eq_ah"] = _eq_ah(st, lam)
    else:
        out["eq_ah"] = None

    flat = list(chart.flat_axes)
    if flat:
        g1 = np.abs(st.d1("normH2")[flat]).max()
        g2 = np.abs(st.d1("normA2")[flat]).max()
        out["flat_gradient"] = float(max(g1, g2))
    return out


def _eq_ah(st: _Stencil, lam: float) -> float:
    c = st.center
    f = c["forms"]
    gi, gam = f.g_inv, f.christoffel
    absH = c["absH"]
    lap = _laplacian(st, "pinch")
    d_pinch = st.d1("pinch")
    d_absH = st.d1("absH")
    B = c["B"]
    dB = st.d1("B")
    nB = dB - np.einsum("lij,lk->ijk", gam, B) - np.einsum("lik,jl->ijk", gam, B)
    T = np.einsum("i,jk->ijk", d_absH, B) - absH * nB
    rhs = (2.0 / absH**4 * tensor_norm2(T, gi)
           - lam * _drift(st, "pinch")
           - 2.0 / absH * _g_inner(f, d_absH, d_pinch))
    return float(abs(lap - rhs))


# --- grid-wide maps --------------------------------------------------------------------

@dataclass
class ResidualEntry:
    value: float | None
    point: list | None
    evaluated: int
    excluded: int


@dataclass
class ResidualMap:
    entries: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.entries[name]

    def value(self, name):
        return self.entries[name].value

    def to_dict(self):
        d = {k: {"max": e.value, "argmax": e.point, "evaluated": e.evaluated,
                 "excluded": e.excluded} for k, e in self.entries.items()}
        for k, why in self.skipped.items():
            d[k] = {"max": None, "argmax": None, "skipped": why}
        return d


def interior_points(chart: Chart, h: float = DEFAULT_STEP) -> np.ndarray:
    """Grid nodes whose second-level stencil of 3-jets stays inside the box."""
    margin = chart.jet_reach(3) + h
    pts = chart.grid(margin)
    if len(pts) == 0:
        raise InvalidArgumentError(f"{chart.name}: no grid points leave room for the stencil")
    return pts


def pde_residuals(cand: ExpanderCandidate, gate: float = DEFAULT_GATE, h: float = DEFAULT_STEP,
                  eps_H: float = EPS_H, threads: int = 1,
                  parallel_tol: float = PARALLEL_TOL) -> ResidualMap:
    check_gate(cand, gate)
    chart = cand.chart
    pts = interior_points(chart, h)
    per_point = parallel_map(lambda u: pointwise_identities(cand, u, h, eps_H), pts, threads)
    rmap = ResidualMap()

    parallel_ok = True
    if chart.dim_ambient - chart.dim_domain > 1:
        worst = 0.0
        for u in pts:
            try:
                worst = max(worst, geo_res.principal_normal_parallel_residual(chart, u,
                                                                               eps_H=eps_H))
            except UndefinedPrincipalNormalError:
                continue
        parallel_ok = worst < parallel_tol
        if not parallel_ok:
            rmap.skipped["eq_ah"] = (f"principal normal not parallel "
                                     f"(max |nabla xi| = {worst:.3e} >= {parallel_tol:g})")

    names = []
    for d in per_point:
        for k in d:
            if k not in names:
                names.append(k)
    for name in names:
        if name in rmap.skipped:
            continue
        best, arg, n_eval, n_excl = None, None, 0, 0
        for u, d in zip(pts, per_point):
            v = d.get(name)
            if v is None or (isinstance(v, float) and math.isnan(v)):
                n_excl += 1
                continue
            n_eval += 1
            if best is None or v > best:
                best, arg = float(v), [float(x) for x in u]
        rmap.entries[name] = ResidualEntry(best, arg, n_eval, n_excl)
    return rmap


# --- Q^2 -------------------------------------------------------------------------------

def q_squared(cand: ExpanderCandidate, u, h: float = Q_STEP, eps_H: float = EPS_H,
              method: str = "fd", report: dict | None = None) -> float:
    """Q^2 = |nabla A|^2 |H|^2 + |A|^2 |nabla H|^2 - <grad |A|^2, grad |H|^2> / 2.

    ``method='fd'`` differences A, H, |A|^2 and |H|^2 at neighbouring points;
    ``method='jet'`` takes nabla A, nabla H from the jet.  Negative round-off is
    clamped to 0; the clamped amount is stored in ``report['clamped']``.
    """
    chart = cand.chart
    if chart.dim_ambient - chart.dim_domain != 1:
        raise InvalidArgumentError("Q^2 is defined here for hypersurfaces")
    u = chart.require_interior(u, chart.jet_reach(3) + h)
    st = _Stencil(chart, u, h, eps_H)
    c = st.center
    f = c["forms"]
    if c["normH2"] <= eps_H:
        raise UndefinedPrincipalNormalError(f"|H|^2 = {c['normH2']:.3e} at {list(u)}")
    if method == "fd":
        nA = geo_res.fd_covariant_A(chart, u, h)
        nH = st.d1("H") @ f.P_normal.T
    elif method == "jet":
        nA, nH = c["nabla_A"], c["nabla_H"]
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")
    gi = f.g_inv
    q2 = (tensor_norm2(nA, gi) * c["normH2"] + c["normA2"] * tensor_norm2(nH, gi)
          - 0.5 * _g_inner(f, st.d1("normA2"), st.d1("normH2")))
    if report is not None:
        report["clamped"] = max(-q2, 0.0)
    return max(q2, 0.0)


# --- pinching at infinity --------------------------------------------------------------

def pinching_value(forms, eps_H: float = EPS_H):
    """|A|^2/|H|^2 for hypersurfaces, |A^H|^2/|H|^4 otherwise; None where |H| is small."""
    return forms.pinch_hyp(eps_H) if forms.codim == 1 else forms.pinch_AH(eps_H)


def _pinching_samples(cand: ExpanderCandidate, eps_H: float):
    chart = cand.chart
    pts = chart.grid(_forms_margin(chart))
    out = []
    for u in pts:
        f = fundamental_forms(chart, u)
        out.append((float(np.linalg.norm(f.F)), pinching_value(f, eps_H), u))
    return out


def pinching_sup_outside(cand: ExpanderCandidate, radius: float, eps_H: float = EPS_H,
                         samples=None) -> float:
    samples = _pinching_samples(cand, eps_H) if samples is None else samples
    vals = [p for r, p, _ in samples if r > radius and p is not None]
    if not vals:
        raise EmptyTailError(f"no grid points with |F| > {radius:g} and |H| > 0")
    return float(max(vals))


def mu_ladder(cand: ExpanderCandidate, radii=None, eps_H: float = EPS_H):
    """[(r, mu(r))] for an increasing radius ladder inside the sampled range."""
    samples = _pinching_samples(cand, eps_H)
    if radii is None:
        rs = sorted(r for r, p, _ in samples if p is not None)
        if not rs:
            raise EmptyTailError("pinching undefined on the whole grid")
        radii = list(np.quantile(rs, [0.0, 0.25, 0.5, 0.75]) * (1 - 1e-12))
    radii = sorted(float(r) for r in radii)
    return [(r, pinching_sup_outside(cand, r, eps_H, samples)) for r in radii]


def is_nonincreasing(ladder) -> bool:
    mus = [mu for _, mu in ladder]
    return all(b <= a for a, b in zip(mus, mus[1:]))


# --- rigidity summary ------------------------------------------------------------------

def _grid_shape(chart: Chart, margin: float):
    axes = [a[(a >= lo + margin - 1e-12) & (a <= hi - margin + 1e-12)]
            for a, lo, hi in zip(chart.axes(), chart.lower, chart.upper)]
    return tuple(len(a) for a in axes)


def interior_maximum(values: np.ndarray, tol: float = CONSTANCY_TOL) -> dict:
    """Strict 1-ring dominance at an interior node, or the constancy branch."""
    vals = np.asarray(values, dtype=float)
    finite = np.isfinite(vals)
    if not finite.any():
        return {"verdict": "undefined", "attained": False}
    lo, hi = np.nanmin(vals), np.nanmax(vals)
    if hi - lo < tol:
        return {"verdict": "constant", "attained": True}
    idx = np.unravel_index(np.nanargmax(vals), vals.shape)
    interior = all(0 < i < n - 1 for i, n in zip(idx, vals.shape))
    if interior:
        ring = vals[tuple(slice(i - 1, i + 2) for i in idx)].copy()
        ring[(1,) * vals.ndim] = -np.inf
        if np.all(vals[idx] > np.nan_to_num(ring, nan=-np.inf) + tol):
            return {"verdict": "strict interior maximum", "attained": True,
                    "index": [int(i) for i in idx]}
    return {"verdict": "no interior maximum", "attained": False}


def rigidity_report(cand: ExpanderCandidate, gate: float = DEFAULT_GATE, h: float = DEFAULT_STEP,
                    eps_H: float = EPS_H, eigen_tol: float = EIGEN_TOL,
                    constancy_tol: float = CONSTANCY_TOL, threads: int = 1,
                    radii=None) -> dict:
    chart = cand.chart
    gate_value = check_gate(cand, gate)
    rmap = pde_residuals(cand, gate, h, eps_H, threads)
    margin = _forms_margin(chart)
    pts = chart.grid(margin)
    shape = _grid_shape(chart, margin)
    pinch = np.full(len(pts), np.nan)
    counts = {}
    worst_eig_gap = 0.0
    n_undef = 0
    for k, u in enumerate(pts):
        f = fundamental_forms(chart, u)
        p = pinching_value(f, eps_H)
        if p is None:
            n_undef += 1
            continue
        pinch[k] = p
        ev = A_H_spectrum(f)
        big = ev[np.abs(ev) > eigen_tol]
        counts[len(big)] = counts.get(len(big), 0) + 1
        if len(big) == 1:
            worst_eig_gap = max(worst_eig_gap, abs(big[0] - f.normH2))
    grid_vals = pinch.reshape(shape)
    imax = interior_maximum(grid_vals, constancy_tol)
    finite = pinch[np.isfinite(pinch)]
    pmin = float(finite.min()) if finite.size else None
    pmax = float(finite.max()) if finite.size else None
    deviation = (pmax - pmin) if finite.size else None
    try:
        ladder = mu_ladder(cand, radii, eps_H)
    except EmptyTailError:
        ladder = []
    single = finite.size > 0 and set(counts) == {1} and worst_eig_gap < eigen_tol
    near_one = finite.size > 0 and abs(pmax - 1) < constancy_tol and abs(pmin - 1) < constancy_tol
    q = len(chart.flat_axes)
    if single and near_one:
        hint = f"consistent with product Gamma x R^{q}" if q else \
            "consistent with product Gamma x R^0 (a self-expanding curve)"
    elif imax["attained"]:
        hint = "pinching attains an interior maximum but is not identically 1"
    else:
        hint = "pinching below its supremum; no product structure detected"
    return {
        "chart": chart.name,
        "lambda": cand.lam,
        "gate": {"expander_residual": gate_value, "threshold": gate, "passed": True},
        "residuals": rmap.to_dict(),
        "pinching": {
            "quantity": "|A|^2/|H|^2" if chart.dim_ambient - chart.dim_domain == 1
            else "|A^H|^2/|H|^4",
            "min": pmin, "max": pmax, "deviation": deviation,
            "undefined_points": n_undef,
            "interior_maximum": imax,
            "mu_ladder": [[r, mu] for r, mu in ladder],
            "mu_nonincreasing": is_nonincreasing(ladder),
        },
        "eigen_summary": {
            "tolerance": eigen_tol,
            "nonzero_eigenvalue_counts": {str(k): v for k, v in sorted(counts.items())},
            "max_gap_to_normH2": worst_eig_gap,
        },
        "tolerances": {"gate": gate, "fd_step": h, "eps_H": eps_H, "eigen": eigen_tol,
                       "constancy": constancy_tol},
        "hint": hint,
    }
