"""Algebra of principal-curvature spectra: mean convexity, scalar curvature, k-convexity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError


@dataclass(frozen=True)
class SpectrumCheck:
    H: float
    S: float
    mean_convex: bool
    positive_S: bool
    bound_holds: bool
    k_convexity: float  # smallest k with every k-sum positive; math.inf if none


def lemma_bound_check(spectrum) -> SpectrumCheck:
    """Mean curvature, scalar curvature and convexity data of a principal spectrum.

    |H| = sum(l), S = |H|^2 - sum(l^2), ``bound_holds`` is l_i < |H| for every i
    and ``k_convexity`` is the smallest k such that every sum of k entries is
    positive.  Since the sums of the k smallest entries are the extremal ones,
    k-convexity is read off the sorted prefix sums; once one is positive all
    later ones are.
    """
    lam = np.asarray(spectrum, dtype=float)
    if lam.ndim != 1 or lam.size < 2:
        raise InvalidArgumentError("need a spectrum of at least two principal curvatures")
    H = float(lam.sum())
    S = H * H - float(lam @ lam)
    prefix = np.cumsum(np.sort(lam))
    good = np.nonzero(prefix > 0)[0]
    kc = int(good[0] + 1) if good.size else math.inf
    return SpectrumCheck(H, S, H > 0, S > 0, bool(np.all(lam < H)), kc)


def batch_bound_check(spectra):
    """Vectorised lemma_bound_check over rows; returns a dict of arrays."""
    lam = np.asarray(spectra, dtype=float)
    if lam.ndim != 2 or lam.shape[1] < 2:
        raise InvalidArgumentError("expected an (N, m) array with m >= 2")
    H = lam.sum(axis=1)
    S = H * H - np.einsum("ij,ij->i", lam, lam)
    prefix = np.cumsum(np.sort(lam, axis=1), axis=1)
    pos = prefix > 0
    # once the k smallest entries have positive sum the next entry exceeds their
    # mean, so every later prefix sum is positive too
    first = np.where(pos.any(axis=1), pos.argmax(axis=1) + 1.0, np.inf)
    return {
        "H": H,
        "S": S,
        "mean_convex": H > 0,
        "positive_S": S > 0,
        "bound_holds": np.all(lam < H[:, None], axis=1),
        "k_convexity": first,
    }
