"""Numerical verification of the convergence analysis.

Covers the prior-anchoring steady state and its critical ratio, the
multiplication-contraction rule for standardized cumulants, power-law decay
fits along chains, and computation-tree unwrapping of loopy graphs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bp import run_sync
from .dists import CumulantSummary
from .errors import InsufficientDepthError
from .graph import BinaryFactor, Factor, FactorGraph, UnaryFactor

MAX_TREE_NODES = 10**6


@dataclass(frozen=True)
class AnchorAnalysis:
    """Steady-state variance analysis of a priors-everywhere homogeneous chain."""

    sigma_e2: float
    sigma_p2: float
    sigma_ss2: float
    lambda_retention: float
    R: float
    anchored: bool


@dataclass(frozen=True)
class ContractionPrediction:
    """Predicted vs observed standardized cumulants of a pointwise product."""

    w_a: float
    w_b: float
    predicted: dict[int, float]
    observed: dict[int, float] | None = None

    def abs_errors(self) -> dict[int, float]:
        if self.observed is None:
            raise ValueError("no observed cumulants attached")
        return {n: abs(self.observed[n] - self.predicted[n]) for n in self.predicted}


def solve_steady_state(sigma_e2: float, sigma_p2: float) -> AnchorAnalysis:
    """Steady-state belief variance of a homogeneous priors-everywhere chain.

    The belief precision balances the incoming-message precision (the belief
    re-inflated by one edge) against the local prior precision, giving the
    positive root of s^2 + s*sigma_e2 - sigma_e2*sigma_p2 = 0.
    """
    if sigma_e2 <= 0 or sigma_p2 <= 0:
        raise ValueError("variances must be positive")
    s = (-sigma_e2 + np.sqrt(sigma_e2**2 + 4.0 * sigma_e2 * sigma_p2)) / 2.0
    lam = s / (s + sigma_e2)
    R = sigma_p2 / sigma_e2
    _, r_crit = critical_threshold()
    return AnchorAnalysis(sigma_e2=sigma_e2, sigma_p2=sigma_p2, sigma_ss2=float(s),
                          lambda_retention=float(lam), R=float(R), anchored=R <= r_crit)


def critical_threshold(tol: float = 1e-10) -> tuple[float, float]:
    """Bisection root of 1 + (1+u)^1.5 = u^-1.5 and the implied critical ratio.

    Returns (u_star, R_crit) with R_crit = (1/u)(1/u + 1); u_star is near 0.5
    and R_crit near 6.
    """

    def f(u: float) -> float:
        return 1.0 + (1.0 + u) ** 1.5 - u**-1.5

    lo, hi = 0.01, 10.0
    if f(lo) >= 0 or f(hi) <= 0:
        raise RuntimeError("bisection bracket invalid")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    u = 0.5 * (lo + hi)
    return u, (1.0 / u) * (1.0 / u + 1.0)


def predict_product_cumulants(a: CumulantSummary, b: CumulantSummary,
                              observed: CumulantSummary | None = None) -> ContractionPrediction:
    """First-order contraction of standardized cumulants under multiplication.

    kappa_hat_{n,c} = w_b^{n/2} kappa_hat_{n,a} + w_a^{n/2} kappa_hat_{n,b},
    with precision-share weights w_a = var_a / (var_a + var_b).
    """
    if a.var <= 0 or b.var <= 0:
        raise ValueError("variances must be positive")
    w_a = a.var / (a.var + b.var)
    w_b = 1.0 - w_a

    def hats(s: CumulantSummary) -> dict[int, float]:
        return {3: s.skew, 4: s.exkurt, 5: s.k5hat, 6: s.k6hat}

    ha, hb = hats(a), hats(b)
    pred = {n: w_b ** (n / 2.0) * ha[n] + w_a ** (n / 2.0) * hb[n] for n in (3, 4, 5, 6)}
    obs = None if observed is None else hats(observed)
    return ContractionPrediction(w_a=w_a, w_b=w_b, predicted=pred, observed=obs)


def decay_rate_fit(depth_summaries: list[tuple[int, CumulantSummary]],
                   min_depth: int = 2) -> dict[str, float | None]:
    """Least-squares log-log slopes of |skew| and KL against chain depth.

    Depths below ``min_depth`` are excluded (boundary-dominated).  The skew
    fit is skipped (None) when every |skew| is below 0.01.
    """
    pts = [(d, s) for d, s in depth_summaries if d >= min_depth]
    if not pts or max(d for d, _ in pts) < 8:
        raise InsufficientDepthError("need depths up to at least 8")
    depths = np.array([d for d, _ in pts], dtype=float)
    skews = np.array([abs(s.skew) for _, s in pts])
    kls = np.array([s.kl_gauss for _, s in pts])
    out: dict[str, float | None] = {}
    if np.all(skews < 0.01):
        out["skew_slope"] = None
    else:
        out["skew_slope"] = float(np.polyfit(np.log(depths), np.log(skews), 1)[0])
    out["kl_slope"] = float(np.polyfit(np.log(depths), np.log(np.maximum(kls, 1e-300)), 1)[0])
    return out


def unwrap_computation_tree(graph: FactorGraph, root: int, depth: int) -> tuple[FactorGraph, int]:
    """Tree of all non-reversing walks from ``root`` up to ``depth`` variable hops.

    Every variable copy carries copies of its original unary priors; leaves
    keep the loopy initialization implicitly (no extra factors).  Returns
    the tree and the root's variable id in it (always 0).
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    factors: list[Factor] = []
    n_vars = 0

    def add_var(orig: int) -> int:
        nonlocal n_vars
        vid = n_vars
        n_vars += 1
        if n_vars > MAX_TREE_NODES:
            raise RuntimeError(f"computation tree exceeds {MAX_TREE_NODES} nodes")
        for fid in graph.factors_of_var(orig):
            f = graph.factor(fid)
            if isinstance(f, UnaryFactor):
                factors.append(UnaryFactor(id=-1, target=vid, potential=f.potential))
        return vid

    root_copy = add_var(root)
    frontier = [(root, None, root_copy)]  # (orig var, arrival factor id, copy id)
    for _ in range(depth):
        nxt = []
        for orig, in_fid, copy_id in frontier:
            for fid in graph.factors_of_var(orig):
                f = graph.factor(fid)
                if not isinstance(f, BinaryFactor) or fid == in_fid:
                    continue
                other = f.b if f.a == orig else f.a
                child_copy = add_var(other)
                if f.a == orig:
                    factors.append(BinaryFactor(id=-1, a=copy_id, b=child_copy, kernel=f.kernel))
                else:
                    factors.append(BinaryFactor(id=-1, a=child_copy, b=copy_id, kernel=f.kernel))
                nxt.append((other, fid, child_copy))
        frontier = nxt
    renumbered = [
        UnaryFactor(id=i, target=f.target, potential=f.potential)
        if isinstance(f, UnaryFactor)
        else BinaryFactor(id=i, a=f.a, b=f.b, kernel=f.kernel)
        for i, f in enumerate(factors)
    ]
    tree = FactorGraph(graph.grid, n_vars, renumbered)
    tree.require_tree()
    return tree, root_copy


def check_tree_equivalence(graph: FactorGraph, root: int, n_iters: int) -> float:
    """L-infinity distance between the root belief of synchronous BP on the
    loopy graph and on its depth-``n_iters`` unwrapped tree."""
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    loopy_beliefs, _ = run_sync(graph, n_iters, track_summaries=False)
    tree, tree_root = unwrap_computation_tree(graph, root, n_iters)
    tree_beliefs, _ = run_sync(tree, n_iters, track_summaries=False)
    return float(np.max(np.abs(loopy_beliefs[root].mass - tree_beliefs[tree_root].mass)))
