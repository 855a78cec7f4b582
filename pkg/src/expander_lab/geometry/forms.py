"""Pointwise extrinsic geometry: metric, normal frame, second fundamental form.

Normal-valued tensors are kept as ambient vectors (``A[i, j]`` is the normal
vector A(d_i, d_j) in R^n), which makes every contraction frame free.  The
coefficients A^{nu_a} in the Gram-Schmidt normal frame are also stored, as the
usual matrix picture of A.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import DegenerateImmersionError, InvalidArgumentError
from .charts import Chart

EPS_H = 1e-10
FRAME_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class FundamentalForms:
    u: np.ndarray
    F: np.ndarray
    dF: np.ndarray          # (m, n)
    g: np.ndarray           # (m, m)
    g_inv: np.ndarray
    normal_frame: np.ndarray  # (n - m, n), orthonormal rows
    A: np.ndarray           # (m, m, n) normal-valued, ambient components
    H: np.ndarray           # (n,)
    christoffel: np.ndarray  # (m, m, m): [l, i, j] = Gamma^l_ij
    P_normal: np.ndarray    # (n, n)
    top_coords: np.ndarray  # F^T = top_coords @ dF, i.e. grad s in coordinates

    @property
    def m(self) -> int:
        return self.g.shape[0]

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def codim(self) -> int:
        return self.n - self.m

    @property
    def F_top(self) -> np.ndarray:
        return self.top_coords @ self.dF

    @property
    def F_perp(self) -> np.ndarray:
        return self.P_normal @ self.F

    @property
    def A_frame(self) -> np.ndarray:
        """(n - m, m, m): A^{nu_a} in the stored normal frame."""
        return np.einsum("an,ijn->aij", self.normal_frame, self.A)

    @property
    def A_up(self) -> np.ndarray:
        """A with both indices raised by g."""
        return np.einsum("ik,jl,kln->ijn", self.g_inv, self.g_inv, self.A)

    @property
    def normA2(self) -> float:
        return float(np.einsum("ijn,ijn->", self.A_up, self.A))

    @property
    def normH2(self) -> float:
        return float(self.H @ self.H)

    @property
    def A_H(self) -> np.ndarray:
        return self.A @ self.H

    @property
    def normAH2(self) -> float:
        return tensor_norm2(self.A_H, self.g_inv)

    @property
    def s_value(self) -> float:
        return 0.5 * float(self.F @ self.F)

    @property
    def scalar_curvature(self) -> float:
        """S = |H|^2 - |A|^2 (traced Gauss equation)."""
        return self.normH2 - self.normA2

    def A_along(self, xi) -> np.ndarray:
        return self.A @ np.asarray(xi, dtype=float)

    def pinch_hyp(self, eps_H: float = EPS_H) -> float | None:
        h2 = self.normH2
        return self.normA2 / h2 if h2 > eps_H else None

    def pinch_AH(self, eps_H: float = EPS_H) -> float | None:
        h2 = self.normH2
        return self.normAH2 / (h2 * h2) if h2 > eps_H else None

    def orthonormal_basis(self) -> np.ndarray:
        """Columns e_k (coordinate components) with g(e_k, e_l) = delta_kl."""
        L = np.linalg.cholesky(self.g_inv)
        return L


def tensor_norm2(T, g_inv) -> float:
    """|T|^2 for a covariant tensor of any rank (extra trailing axes are summed)."""
    T = np.asarray(T, dtype=float)
    m = g_inv.shape[0]
    rank = 0
    while rank < T.ndim and T.shape[rank] == m:
        rank += 1
    rank = min(rank, T.ndim)
    U = T
    for ax in range(rank):
        U = np.moveaxis(np.tensordot(g_inv, U, axes=([1], [ax])), 0, ax)
    return float(np.sum(U * T))


def normal_frame(P_normal: np.ndarray, codim: int, tol: float = FRAME_TOL) -> np.ndarray:
    """Gram-Schmidt on the projected standard basis, in index order."""
    n = P_normal.shape[0]
    frame = []
    for j in range(n):
        v = P_normal[:, j].copy()
        for w in frame:
            v -= (w @ v) * w
        norm = np.linalg.norm(v)
        if norm > tol:
            frame.append(v / norm)
            if len(frame) == codim:
                break
    if len(frame) != codim:
        raise DegenerateImmersionError("could not complete the normal frame")
    return np.array(frame)


def _metric_parts(chart: Chart, J: np.ndarray):
    g = J @ J.T
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[-1] <= chart.rank_tol:
        raise DegenerateImmersionError(
            f"{chart.name}: dF rank deficient (smallest singular value {sv[-1]:.2e})")
    g_inv = np.linalg.inv(g)
    g_inv = 0.5 * (g_inv + g_inv.T)
    P_t = J.T @ g_inv @ J
    P_n = np.eye(J.shape[1]) - P_t
    return g, g_inv, P_n


def forms_from_jet(chart: Chart, u, jet) -> FundamentalForms:
    F, J, d2 = jet[0], jet[1], jet[2]
    m, n = J.shape
    g, g_inv, P_n = _metric_parts(chart, J)
    A = np.einsum("pn,ijn->ijp", P_n, d2)
    A = 0.5 * (A + A.transpose(1, 0, 2))
    H = np.einsum("ij,ijn->n", g_inv, A)
    gamma = np.einsum("lp,ijn,pn->lij", g_inv, d2, J)
    top = g_inv @ (J @ F)
    frame = normal_frame(P_n, n - m)
    return FundamentalForms(np.asarray(u, dtype=float), F, J, g, g_inv, frame, A, H, gamma,
                            P_n, top)


def fundamental_forms(chart: Chart, u) -> FundamentalForms:
    """First and second fundamental form, H and the splitting F = F^T + F^perp at u."""
    u = chart.require_interior(u, chart.jet_reach(2))
    return forms_from_jet(chart, u, chart.jet(u, 2))


def tangent_projector_derivative(J, d2, g_inv):
    """d/du_i of P_T = J^T g^-1 J, stacked over i: shape (m, n, n)."""
    out = []
    for dJ in d2:
        dg = dJ @ J.T + J @ dJ.T
        dginv = -g_inv @ dg @ g_inv
        out.append(dJ.T @ g_inv @ J + J.T @ dginv @ J + J.T @ g_inv @ dJ)
    return np.array(out)


@dataclass(frozen=True, eq=False)
class CovariantDerivatives:
    forms: FundamentalForms
    nabla_A: np.ndarray  # (m, m, m, n): [i, j, k] = (nabla^perp_i A)(d_j, d_k)
    nabla_H: np.ndarray  # (m, n)


def covariant_derivatives_from_jet(chart: Chart, u, jet) -> CovariantDerivatives:
    """nabla^perp A and nabla^perp H from a third-order jet (no differencing)."""
    forms = forms_from_jet(chart, u, jet)
    J, d2, d3 = jet[1], jet[2], jet[3]
    dPt = tangent_projector_derivative(J, d2, forms.g_inv)
    P_n = forms.P_normal
    dA = -np.einsum("ipq,jkq->ijkp", dPt, d2) + np.einsum("pq,ijkq->ijkp", P_n, d3)
    gam = forms.christoffel
    A = forms.A
    nab = (np.einsum("pq,ijkq->ijkp", P_n, dA)
           - np.einsum("lij,lkn->ijkn", gam, A)
           - np.einsum("lik,jln->ijkn", gam, A))
    nab = 0.5 * (nab + nab.transpose(0, 2, 1, 3))
    nabla_H = np.einsum("jk,ijkn->in", forms.g_inv, nab)
    return CovariantDerivatives(forms, nab, nabla_H)


def covariant_derivatives(chart: Chart, u) -> CovariantDerivatives:
    u = chart.require_interior(u, chart.jet_reach(3))
    return covariant_derivatives_from_jet(chart, u, chart.jet(u, 3))


# --- shape operator, principal curvatures, the trace product ---------------------------

def circ_star(C, D, forms: FundamentalForms) -> np.ndarray:
    """(C (*) D)(v, w) = sum_k C(v, e_k) (x) D(e_k, w) over a g-orthonormal frame.

    C and D are arrays of shape (m, m, *E) and (m, m, *F) in coordinate
    components; the result has shape (m, m, *E, *F).
    """
    C = np.asarray(C, dtype=float)
    D = np.asarray(D, dtype=float)
    m = forms.m
    if C.shape[:2] != (m, m) or D.shape[:2] != (m, m):
        raise InvalidArgumentError(
            f"bilinear forms must have leading shape ({m}, {m}), got {C.shape} and {D.shape}")
    Ce = C.reshape(m, m, -1)
    De = D.reshape(m, m, -1)
    out = np.einsum("vke,kl,lwf->vwef", Ce, forms.g_inv, De)
    return out.reshape((m, m) + C.shape[2:] + D.shape[2:])


def eigen_shape(forms: FundamentalForms, xi, tol: float = 1e-8):
    """Eigen-decomposition of the shape operator g^-1 A^xi.

    Returns ascending eigenvalues and the g-orthonormal eigenvectors as columns
    (coordinate components).
    """
    xi = np.asarray(xi, dtype=float)
    if abs(np.linalg.norm(xi) - 1.0) > tol:
        raise InvalidArgumentError("xi must be a unit vector")
    if np.linalg.norm(forms.dF @ xi) > tol * max(1.0, np.linalg.norm(forms.dF)):
        raise InvalidArgumentError("xi must be normal to the immersion")
    Axi = forms.A_along(xi)
    vals, vecs = scipy.linalg.eigh(0.5 * (Axi + Axi.T), forms.g)
    return vals, vecs


def oriented_unit_normal(forms: FundamentalForms, eps_H: float = EPS_H) -> np.ndarray:
    """Hypersurface unit normal, oriented so that H^nu >= 0 where |H| > eps_H."""
    if forms.codim != 1:
        raise InvalidArgumentError("unit normal orientation only defined for hypersurfaces")
    nu = forms.normal_frame[0]
    if forms.normH2 > eps_H and nu @ forms.H < 0:
        nu = -nu
    return nu


def principal_curvatures(forms: FundamentalForms, eps_H: float = EPS_H) -> np.ndarray:
    return eigen_shape(forms, oriented_unit_normal(forms, eps_H))[0]


def A_H_spectrum(forms: FundamentalForms) -> np.ndarray:
    """Eigenvalues of A^H relative to g (ascending)."""
    AH = forms.A_H
    return scipy.linalg.eigh(0.5 * (AH + AH.T), forms.g, eigvals_only=True)
