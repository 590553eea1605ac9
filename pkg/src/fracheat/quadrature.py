"""Panel-based Gauss quadrature helpers.

Meshes come in three flavors: graded power meshes absorbing endpoint
singularities, geometric meshes for algebraic tails, and plain panels.
All return flattened (nodes, weights) pairs ready for vectorized integrands.
"""

from __future__ import annotations

import functools
import math

import numpy as np


@functools.lru_cache(maxsize=64)
def _leggauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


@functools.lru_cache(maxsize=64)
def hermgauss(order: int):
    """Gauss-Hermite nodes/weights for integral of f(w) e^{-w^2} dw."""
    x, w = np.polynomial.hermite.hermgauss(order)
    return x, w


def gauss_legendre_panels(edges, order: int):
    """Composite Gauss-Legendre rule over consecutive panels.

    edges: ascending array of panel boundaries (len m+1 for m panels).
    Returns flattened nodes and weights.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2:
        raise ValueError("need at least one panel")
    x, w = _leggauss(order)
    lo = edges[:-1][:, None]
    hi = edges[1:][:, None]
    mid = 0.5 * (hi + lo)
    half = 0.5 * (hi - lo)
    nodes = (mid + half * x[None, :]).ravel()
    weights = (half * w[None, :]).ravel()
    return nodes, weights


def graded_edges(a: float, b: float, count: int, power: float):
    """Panel edges on [a, b] clustered at a like (j/count)^power."""
    j = np.arange(count + 1, dtype=float) / count
    return a + (b - a) * j**power


def geometric_edges(a: float, b: float, ratio: float):
    """Panel edges a, a*ratio, a*ratio^2, ..., ending exactly at b."""
    if b <= a:
        raise ValueError("empty geometric range")
    count = max(1, int(math.ceil(math.log(b / a) / math.log(ratio))))
    return a * (b / a) ** (np.arange(count + 1, dtype=float) / count)


def merge_breakpoints(edges, points):
    """Insert interior breakpoints into an ascending edge array."""
    edges = np.asarray(edges, dtype=float)
    pts = [p for p in points if edges[0] < p < edges[-1]]
    if not pts:
        return edges
    return np.unique(np.concatenate([edges, np.asarray(pts, dtype=float)]))


def ladder_breakpoints(edges, points, levels: int = 8):
    """Insert breakpoints with geometric panel ladders shrinking toward them.

    Integrands that are merely Hoelder at an interior point need panels that
    cluster there; a plain breakpoint leaves the adjacent panels too wide.
    """
    edges = np.asarray(edges, dtype=float)
    for pnt in points:
        if not edges[0] < pnt < edges[-1]:
            continue
        edges = merge_breakpoints(edges, [pnt])
        i = int(np.searchsorted(edges, pnt))
        extra = []
        if i > 0:
            gap = pnt - edges[i - 1]
            extra.extend(pnt - gap * 4.0 ** (-k) for k in range(1, levels + 1))
        if i + 1 < edges.size:
            gap = edges[i + 1] - pnt
            extra.extend(pnt + gap * 4.0 ** (-k) for k in range(1, levels + 1))
        edges = merge_breakpoints(edges, extra)
    return edges


def singular_left_nodes(b: float, s: float, panels: int, order: int):
    """Nodes/weights for integral over sig in (0, b) of sig^{-1-s} g(sig) dsig
    where the defect g vanishes linearly at 0.

    Substituting v = sig^{1-s} gives (1/(1-s)) * integral of g(sig(v))/sig(v) dv,
    whose leading term is constant in v, so the rule is accurate uniformly in
    s including s close to 1 where plain power grading fails.  Lags below a
    relative cut are handled by extrapolating the linear slope of g from the
    cut itself (first returned node); below the cut the defect would drown in
    floating-point cancellation anyway.  Returns (sig, w) used as
    sum_k w_k g(sig_k).
    """
    if not 0 < s < 1:
        raise ValueError("order must lie in (0,1)")
    sig_cut = 1e-8 * b
    V = b ** (1.0 - s)
    v_lo = sig_cut ** (1.0 - s)
    edges = v_lo + (V - v_lo) * (np.arange(panels + 1, dtype=float) / panels) ** 1.5
    v, wv = gauss_legendre_panels(edges, order)
    sig = v ** (1.0 / (1.0 - s))
    w = wv / ((1.0 - s) * sig)
    # Head integral over (0, sig_cut): g ~ (g(sig_cut)/sig_cut) * sig exactly
    # integrates to g(sig_cut) * sig_cut^{-s} / (1-s).
    sig = np.concatenate([[sig_cut], sig])
    w = np.concatenate([[sig_cut ** (-s) / (1.0 - s)], w])
    return sig, w
