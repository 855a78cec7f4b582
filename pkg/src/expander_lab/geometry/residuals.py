"""Residuals of the structure equations of a submanifold of euclidean space.

Each residual compares two independently assembled sides: one from finite
differences of a lower-order quantity sampled at neighbouring parameter
points, the other algebraically from the second fundamental form at the point.
Index arguments are coordinate direction indices into the chart's domain.
Curvature tensors are assembled on demand and never stored.
"""

from __future__ import annotations

import itertools
import warnings

import numpy as np
import scipy.linalg

from ..errors import InvalidArgumentError, UndefinedPrincipalNormalError
from .charts import Chart
from .forms import (EPS_H, covariant_derivatives, covariant_derivatives_from_jet,
                    fundamental_forms, forms_from_jet, tangent_projector_derivative,
                    tensor_norm2)

DEFAULT_STEPS = {
    "gauss": 1e-3,
    "codazzi": 1e-3,
    "ricci": 1e-4,
    "simons": 1e-3,
    "position": 1e-3,
    "xi_parallel": 1e-5,
}
NOISE_STEP = 1e-6


class AccuracyWarning(UserWarning):
    """Finite-difference result is likely dominated by round-off or FD noise."""


def _step(name, h):
    h = DEFAULT_STEPS[name] if h is None else float(h)
    if h <= 0:
        raise InvalidArgumentError("finite-difference step must be positive")
    if h < NOISE_STEP:
        warnings.warn(f"{name}: step {h:g} is below the round-off noise floor", AccuracyWarning,
                      stacklevel=3)
    return h


def _central(fn, u, h):
    """Stack of centred differences [(fn(u + h e_i) - fn(u - h e_i)) / 2h]_i."""
    out = []
    for i in range(u.shape[0]):
        e = np.zeros_like(u)
        e[i] = h
        out.append((np.asarray(fn(u + e)) - np.asarray(fn(u - e))) / (2.0 * h))
    return np.stack(out)


def _check_indices(chart: Chart, *idx):
    for i in idx:
        if not 0 <= int(i) < chart.dim_domain:
            raise InvalidArgumentError(f"direction index {i} out of range for m={chart.dim_domain}")


def _fd_safe_jet_reach(chart: Chart, order: int, h: float, levels: int) -> float:
    return chart.jet_reach(order) + levels * h


# --- Gauss ------------------------------------------------------------------------------

def _metric(chart: Chart, u):
    J = chart.jet(u, 1)[1]
    return J @ J.T


def _christoffel_from_metric(chart: Chart, u, h):
    """Gamma^l_ij from centred differences of g alone (intrinsic route)."""
    dg = _central(lambda p: _metric(chart, p), u, h)  # [k, i, j] = d_k g_ij
    g_inv = np.linalg.inv(_metric(chart, u))
    # Gamma_{p,ij} = (d_i g_jp + d_j g_ip - d_p g_ij) / 2
    m = u.shape[0]
    gam_low = np.empty((m, m, m))
    for p in range(m):
        for i in range(m):
            for j in range(m):
                gam_low[p, i, j] = 0.5 * (dg[i, j, p] + dg[j, i, p] - dg[p, i, j])
    return np.einsum("lp,pij->lij", g_inv, gam_low)


def intrinsic_curvature(chart: Chart, u, h: float | None = None) -> np.ndarray:
    """R(d_i, d_j, d_k, d_l) = g(R(d_i, d_j) d_l, d_k) from centred differences of g."""
    h = _step("gauss", h)
    u = chart.require_interior(u, _fd_safe_jet_reach(chart, 1, h, 2))
    gam = _christoffel_from_metric(chart, u, h)
    dgam = _central(lambda p: _christoffel_from_metric(chart, p, h), u, h)  # [i, p, j, l]
    R_up = (np.einsum("ipjl->pijl", dgam) - np.einsum("jpil->pijl", dgam)
            + np.einsum("piq,qjl->pijl", gam, gam) - np.einsum("pjq,qil->pijl", gam, gam))
    g = _metric(chart, u)
    return np.einsum("kp,pijl->ijkl", g, R_up)


def extrinsic_curvature(forms) -> np.ndarray:
    """<A(d_i, d_k), A(d_j, d_l)> - <A(d_i, d_l), A(d_j, d_k)>, indexed [i, j, k, l]."""
    A = forms.A
    return np.einsum("ikn,jln->ijkl", A, A) - np.einsum("iln,jkn->ijkl", A, A)


def gauss_sides(chart: Chart, u, h: float | None = None):
    """(intrinsic, extrinsic) full curvature tensors at u."""
    forms = fundamental_forms(chart, u)
    return intrinsic_curvature(chart, u, h), extrinsic_curvature(forms)


def gauss_residual(chart: Chart, u, i, j, k, l, h: float | None = None) -> float:
    _check_indices(chart, i, j, k, l)
    intr, extr = gauss_sides(chart, u, h)
    return float(abs(intr[i, j, k, l] - extr[i, j, k, l]))


def gauss_residual_max(chart: Chart, u, h: float | None = None) -> float:
    intr, extr = gauss_sides(chart, u, h)
    return float(np.max(np.abs(intr - extr)))


def sectional_curvature(chart: Chart, u, i=0, j=1, h: float | None = None):
    """Sectional curvature of span(d_i, d_j) from both sides of the Gauss equation."""
    _check_indices(chart, i, j)
    if i == j:
        raise InvalidArgumentError("sectional curvature needs two distinct directions")
    forms = fundamental_forms(chart, u)
    g = forms.g
    area2 = g[i, i] * g[j, j] - g[i, j] ** 2
    intr = intrinsic_curvature(chart, u, h)[i, j, i, j] / area2
    extr = extrinsic_curvature(forms)[i, j, i, j] / area2
    return float(intr), float(extr)


# --- Codazzi ----------------------------------------------------------------------------

def _A_vec(chart: Chart, p):
    return fundamental_forms(chart, p).A


def fd_covariant_A(chart: Chart, u, h: float | None = None) -> np.ndarray:
    """nabla^perp A from centred differences of the ambient A components."""
    h = _step("codazzi", h)
    u = chart.require_interior(u, _fd_safe_jet_reach(chart, 2, h, 1))
    forms = fundamental_forms(chart, u)
    dA = _central(lambda p: _A_vec(chart, p), u, h)  # [i, j, k, n]
    gam, A = forms.christoffel, forms.A
    return (np.einsum("pq,ijkq->ijkp", forms.P_normal, dA)
            - np.einsum("lij,lkn->ijkn", gam, A)
            - np.einsum("lik,jln->ijkn", gam, A))


def codazzi_residual(chart: Chart, u, i, j, k, h: float | None = None) -> float:
    _check_indices(chart, i, j, k)
    if chart.dim_domain == 1:
        return 0.0
    nab = fd_covariant_A(chart, u, h)
    return float(np.linalg.norm(nab[i, j, k] - nab[j, i, k]))


def codazzi_residual_max(chart: Chart, u, h: float | None = None) -> float:
    if chart.dim_domain == 1:
        return 0.0
    nab = fd_covariant_A(chart, u, h)
    diff = nab - nab.transpose(1, 0, 2, 3)
    return float(np.max(np.linalg.norm(diff, axis=-1)))


# --- Ricci ------------------------------------------------------------------------------

def _shape_derivative_field(chart: Chart, p, nu):
    """W_j(p) = nabla^perp_j (P_N(p) nu) for the fixed ambient vector nu."""
    jet = chart.jet(p, 2)
    forms = forms_from_jet(chart, p, jet)
    dPt = tangent_projector_derivative(jet[1], jet[2], forms.g_inv)
    return -np.einsum("pq,jqr,r->jp", forms.P_normal, dPt, nu)


def normal_curvature(chart: Chart, u, a: int, h: float | None = None) -> np.ndarray:
    """R^perp(d_i, d_j) nu_a, indexed [i, j, :], from differences of the normal connection."""
    h = _step("ricci", h)
    u = chart.require_interior(u, _fd_safe_jet_reach(chart, 2, h, 1))
    forms = fundamental_forms(chart, u)
    if not 0 <= a < forms.codim:
        raise InvalidArgumentError(f"normal index {a} out of range for codimension {forms.codim}")
    nu = forms.normal_frame[a]
    dW = _central(lambda p: _shape_derivative_field(chart, p, nu), u, h)  # [i, j, n]
    curl = dW - dW.transpose(1, 0, 2)
    return np.einsum("pq,ijq->ijp", forms.P_normal, curl)


def ricci_rhs(forms, a: int) -> np.ndarray:
    """sum_k A^nu(d_j, e_k) A(d_i, e_k) - A^nu(d_i, e_k) A(d_j, e_k), indexed [i, j, :]."""
    nu = forms.normal_frame[a]
    An = forms.A_along(nu)
    A = forms.A
    t = np.einsum("jk,kl,iln->ijn", An, forms.g_inv, A)
    return t - t.transpose(1, 0, 2)


def ricci_residual(chart: Chart, u, i, j, a, h: float | None = None) -> float:
    _check_indices(chart, i, j)
    lhs = normal_curvature(chart, u, a, h)
    rhs = ricci_rhs(fundamental_forms(chart, u), a)
    return float(np.linalg.norm(lhs[i, j] - rhs[i, j]))


def ricci_residual_max(chart: Chart, u, h: float | None = None) -> float:
    forms = fundamental_forms(chart, u)
    worst = 0.0
    for a in range(forms.codim):
        diff = normal_curvature(chart, u, a, h) - ricci_rhs(forms, a)
        worst = max(worst, float(np.max(np.linalg.norm(diff, axis=-1))))
    return worst


# --- Simons -----------------------------------------------------------------------------

def _nabla_fields(chart: Chart, p):
    cd = covariant_derivatives_from_jet(chart, p, chart.jet(p, 3))
    return cd.nabla_A, cd.nabla_H


def simons_terms(chart: Chart, u, h: float | None = None) -> dict:
    """Both sides of the Simons identity at u, as ambient vectors indexed [v, w, :].

    Returns the rough Laplacian of A and the individual right-hand terms:
    ``hess_H``, ``AH_A`` and the four cubic terms ``cubic_1`` .. ``cubic_4``.
    """
    h = _step("simons", h)
    if chart.derivative_mode == "fd":
        warnings.warn(f"{chart.name}: Simons residual from finite-difference jets needs fourth "
                      "differences and is only indicative", AccuracyWarning, stacklevel=2)
    u = chart.require_interior(u, _fd_safe_jet_reach(chart, 3, h, 1))
    cd = covariant_derivatives(chart, u)
    forms = cd.forms
    gi, gam, Pn, A = forms.g_inv, forms.christoffel, forms.P_normal, forms.A
    nA, nH = cd.nabla_A, cd.nabla_H
    d_nA = _central(lambda p: _nabla_fields(chart, p)[0], u, h)  # [p, q, v, w, n]
    d_nH = _central(lambda p: _nabla_fields(chart, p)[1], u, h)  # [v, w, n]
    hess_A = (np.einsum("xy,pqvwy->pqvwx", Pn, d_nA)
              - np.einsum("lpq,lvwn->pqvwn", gam, nA)
              - np.einsum("lpv,qlwn->pqvwn", gam, nA)
              - np.einsum("lpw,qvln->pqvwn", gam, nA))
    lap_A = np.einsum("pq,pqvwn->vwn", gi, hess_A)
    hess_H = (np.einsum("xy,vwy->vwx", Pn, d_nH) - np.einsum("lvw,ln->vwn", gam, nH))
    A_up = forms.A_up
    AH = forms.A_H
    aa = np.einsum("van,wbn->vwab", A, A)  # <A_va, A_wb>
    # sum_{k,l} <A(v,e_k), A(e_k,e_l)> A(w,e_l) = <A_va, A_cb> g^ac g^bd A_wd
    coef = np.einsum("van,cbn,ac,bd->vd", A, A, gi, gi)
    terms = {
        "hess_H": hess_H,
        "AH_A": np.einsum("vk,kl,wln->vwn", AH, gi, A),
        "cubic_1": 2.0 * np.einsum("vwab,abn->vwn", aa, A_up),
        "cubic_2": -np.einsum("vwn,cdn,cdx->vwx", A, A, A_up),
        "cubic_3": -np.einsum("vd,wdn->vwn", coef, A),
        "cubic_4": -np.einsum("wd,vdn->vwn", coef, A),
    }
    return {"laplacian_A": lap_A, **terms}


def simons_rhs(terms: dict) -> np.ndarray:
    return sum(terms[k] for k in ("hess_H", "AH_A", "cubic_1", "cubic_2", "cubic_3", "cubic_4"))


def simons_residual(chart: Chart, u, v, w, h: float | None = None) -> float:
    _check_indices(chart, v, w)
    t = simons_terms(chart, u, h)
    return float(np.linalg.norm(t["laplacian_A"][v, w] - simons_rhs(t)[v, w]))


def simons_residual_max(chart: Chart, u, h: float | None = None) -> float:
    t = simons_terms(chart, u, h)
    return float(np.max(np.linalg.norm(t["laplacian_A"] - simons_rhs(t), axis=-1)))


# --- identities for the position vector -------------------------------------------------

def position_identity_residual(chart: Chart, u, h: float | None = None) -> dict:
    """Residuals of grad s = F^T, Hess s = g + <F, A> and nabla^perp F^perp = -A(grad s, .).

    ``s = |F|^2 / 2`` and ``F^perp`` are differenced on the parameter grid; the
    comparison sides come from the fundamental forms at u.
    """
    h = _step("position", h)
    u = chart.require_interior(u, _fd_safe_jet_reach(chart, 2, h, 1))
    forms = fundamental_forms(chart, u)
    m = forms.m

    def s_of(p):
        F = chart.position(p)
        return 0.5 * float(F @ F)

    s0 = s_of(u)
    ds = np.empty(m)
    d2s = np.empty((m, m))
    for i in range(m):
        ei = np.zeros(m)
        ei[i] = h
        ds[i] = (s_of(u + ei) - s_of(u - ei)) / (2 * h)
        d2s[i, i] = (s_of(u + ei) - 2 * s0 + s_of(u - ei)) / h ** 2
        for j in range(i + 1, m):
            ej = np.zeros(m)
            ej[j] = h
            d2s[i, j] = d2s[j, i] = (s_of(u + ei + ej) - s_of(u + ei - ej) - s_of(u - ei + ej)
                                     + s_of(u - ei - ej)) / (4 * h * h)
    grad_err = ds - forms.g @ forms.top_coords
    hess = d2s - np.einsum("kij,k->ij", forms.christoffel, ds)
    hess_err = hess - forms.g - np.einsum("n,ijn->ij", forms.F, forms.A)
    dFperp = _central(lambda p: fundamental_forms(chart, p).F_perp, u, h)  # [i, n]
    nab = dFperp @ forms.P_normal.T
    normal_err = nab + np.einsum("k,kin->in", forms.top_coords, forms.A)
    return {
        "grad_s": float(np.sqrt(max(grad_err @ forms.g_inv @ grad_err, 0.0))),
        "hess_s": float(np.sqrt(max(tensor_norm2(hess_err, forms.g_inv), 0.0))),
        "normal_F": float(np.sqrt(max(tensor_norm2(normal_err, forms.g_inv), 0.0))),
    }


# --- parallel principal normal ----------------------------------------------------------

def _operator_norm(M, g):
    """sup over g-unit v of sqrt(v^T M v) for a PSD form M."""
    vals = scipy.linalg.eigh(0.5 * (M + M.T), g, eigvals_only=True)
    return float(np.sqrt(max(vals[-1], 0.0)))


def principal_normal_parallel_residual(chart: Chart, u, method: str | None = None,
                                       h: float | None = None,
                                       eps_H: float = EPS_H) -> float:
    """max over unit v of |nabla^perp_v xi| for xi = H/|H|.

    ``method='jet'`` uses nabla^perp xi = nabla^perp H/|H| - H <nabla^perp H, H>/|H|^3
    with the exact covariant derivative of H; ``method='fd'`` differences xi at
    neighbouring points and projects to the normal space.  The default is the
    jet route for closed-form charts and differences otherwise.
    """
    if method is None:
        method = "jet" if chart.derivative_mode == "closed" else "fd"
    if method == "jet":
        cd = covariant_derivatives(chart, u)
        forms = cd.forms
        if forms.normH2 <= eps_H:
            raise UndefinedPrincipalNormalError(f"|H|^2 = {forms.normH2:.3e} at {list(u)}")
        nh = np.sqrt(forms.normH2)
        D = cd.nabla_H / nh - np.outer(cd.nabla_H @ forms.H, forms.H) / nh ** 3
    elif method == "fd":
        h = _step("xi_parallel", h)
        u = chart.require_interior(u, _fd_safe_jet_reach(chart, 2, h, 1))
        forms = fundamental_forms(chart, u)

        def xi(p):
            H = fundamental_forms(chart, p).H
            n2 = float(H @ H)
            if n2 <= eps_H:
                raise UndefinedPrincipalNormalError(f"|H|^2 = {n2:.3e} at {list(p)}")
            return H / np.sqrt(n2)

        xi(u)
        D = _central(xi, u, h) @ forms.P_normal.T
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")
    return _operator_norm(D @ D.T, forms.g)


# --- convergence diagnostics ------------------------------------------------------------

def halving_ratio(residual_fn, h: float, floor: float = 1e-12):
    """r(h) / r(h/2) for a residual callable of the step; None when r(h) is at round-off."""
    r1 = residual_fn(h)
    r2 = residual_fn(h / 2)
    if r1 < floor:
        return None
    return r1 / max(r2, np.finfo(float).tiny)


def all_index_tuples(m: int, arity: int):
    return itertools.product(range(m), repeat=arity)
