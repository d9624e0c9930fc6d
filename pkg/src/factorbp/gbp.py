"""Gaussian belief propagation on the same factor graphs.

Messages and beliefs carry only a mean and variance, stored internally in
information form (precision lam = 1/var, information eta = mu/var) so that
products at variables become additions.  lam = 0 encodes the vague message.

The synchronous schedule mirrors :mod:`factorbp.bp`: each iteration
computes variable-to-factor messages from the previous factor-to-variable
buffer, then factor-to-variable messages from those.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .dists import DiscreteDist, kernel_cumulants
from .errors import AllVagueError, DegenerateVarianceError
from .graph import BinaryFactor, FactorGraph, UnaryFactor


@dataclass(frozen=True)
class GaussianMsg:
    """Gaussian message/belief in information form."""

    eta: float
    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("precision must be nonnegative")
        if self.lam == 0 and self.eta != 0:
            raise ValueError("vague message must have eta = 0")

    @classmethod
    def vague(cls) -> "GaussianMsg":
        return cls(0.0, 0.0)

    @classmethod
    def from_moments(cls, mean: float, var: float) -> "GaussianMsg":
        if var <= 0:
            raise ValueError("var must be positive")
        return cls(mean / var, 1.0 / var)

    @property
    def is_vague(self) -> bool:
        return self.lam == 0.0

    @property
    def mean(self) -> float:
        if self.is_vague:
            raise AllVagueError("vague message has no mean")
        return self.eta / self.lam

    @property
    def var(self) -> float:
        if self.is_vague:
            raise AllVagueError("vague message has infinite variance")
        return 1.0 / self.lam

    def combine(self, other: "GaussianMsg") -> "GaussianMsg":
        return GaussianMsg(self.eta + other.eta, self.lam + other.lam)


def gaussian_project(d: DiscreteDist) -> GaussianMsg:
    """Moment-matched Gaussian: mean and variance of the discrete mass.

    Variance is floored at the within-bin variance step^2/12, since mass
    concentrated on a single bin still carries that much quantization
    uncertainty about the underlying continuous value.
    """
    var = max(d.var(), d.grid.step ** 2 / 12.0)
    if var < 1e-12:
        raise DegenerateVarianceError(f"variance {var:g} below 1e-12")
    return GaussianMsg.from_moments(d.mean(), var)


class GaussianGraph:
    """A factor graph with all potentials projected to (mean, var) pairs."""

    def __init__(self, graph: FactorGraph):
        self.graph = graph
        self.priors: dict[int, GaussianMsg] = {}
        self.kernel_moments: dict[int, tuple[float, float]] = {}
        step = graph.grid.step
        for f in graph.factors:
            if isinstance(f, UnaryFactor):
                self.priors[f.id] = gaussian_project(f.potential)
            else:
                k1, k2 = kernel_cumulants(f.kernel, step)[:2]
                self.kernel_moments[f.id] = (k1, k2)


GaussianStore = dict[tuple[int, int], GaussianMsg]
GaussianBeliefSet = dict[int, GaussianMsg]


def _init_store(gg: GaussianGraph) -> GaussianStore:
    store: GaussianStore = {}
    for f in gg.graph.factors:
        if isinstance(f, UnaryFactor):
            store[(f.id, f.target)] = gg.priors[f.id]
        else:
            store[(f.id, f.a)] = GaussianMsg.vague()
            store[(f.id, f.b)] = GaussianMsg.vague()
    return store


def gbp_var_to_factor(gg: GaussianGraph, v: int, a: int, store: GaussianStore) -> GaussianMsg:
    """Sum of incoming informations/precisions from factors other than ``a``."""
    out = GaussianMsg.vague()
    for fid in gg.graph.factors_of_var(v):
        if fid != a:
            out = out.combine(store[(fid, v)])
    return out


def gbp_factor_to_var(gg: GaussianGraph, a: int, v: int, store: GaussianStore) -> GaussianMsg:
    """Unary: the projected prior.  Binary: mean shifts by the kernel mean
    (sign per direction) and variance grows by the kernel variance."""
    f = gg.graph.factor(a)
    if isinstance(f, UnaryFactor):
        return gg.priors[a]
    k_mean, k_var = gg.kernel_moments[a]
    if v == f.b:
        u, shift = f.a, k_mean
    elif v == f.a:
        u, shift = f.b, -k_mean
    else:
        raise ValueError(f"factor {a} not adjacent to variable {v}")
    inc = gbp_var_to_factor(gg, u, a, store)
    if inc.is_vague:
        return GaussianMsg.vague()
    return GaussianMsg.from_moments(inc.mean + shift, inc.var + k_var)


def _beliefs(gg: GaussianGraph, store: GaussianStore) -> GaussianBeliefSet:
    out: GaussianBeliefSet = {}
    for v in range(gg.graph.n_vars):
        b = GaussianMsg.vague()
        for fid in gg.graph.factors_of_var(v):
            b = b.combine(store[(fid, v)])
        out[v] = b
    return out


@dataclass
class GaussianIterationRecord:
    iteration: int
    max_delta: float
    moments: dict[int, tuple[float, float] | None] = field(default_factory=dict)


@dataclass
class GaussianTrace:
    records: list[GaussianIterationRecord] = field(default_factory=list)


def gbp_run_sync(graph: FactorGraph | GaussianGraph, iterations: int,
                 track_moments: bool = True,
                 on_iteration=None) -> tuple[GaussianBeliefSet, GaussianTrace]:
    """Synchronous GBP; raises AllVague if some final belief has zero precision.

    ``on_iteration(t, beliefs)`` streams per-iteration beliefs to the caller;
    ``track_moments=False`` drops the per-variable trace entries for big runs.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    gg = graph if isinstance(graph, GaussianGraph) else GaussianGraph(graph)
    store = _init_store(gg)
    beliefs = _beliefs(gg, store)
    trace = GaussianTrace()
    for t in range(1, iterations + 1):
        new = dict(store)
        for f in gg.graph.factors:
            if isinstance(f, BinaryFactor):
                for v in (f.a, f.b):
                    new[(f.id, v)] = gbp_factor_to_var(gg, f.id, v, store)
        store = new
        new_beliefs = _beliefs(gg, store)
        max_delta = 0.0
        rec = GaussianIterationRecord(iteration=t, max_delta=0.0)
        for v in range(gg.graph.n_vars):
            nb, ob = new_beliefs[v], beliefs[v]
            if not nb.is_vague and not ob.is_vague:
                max_delta = max(max_delta, abs(nb.mean - ob.mean), abs(nb.var - ob.var))
            elif nb.is_vague != ob.is_vague:
                max_delta = float("inf")
            if track_moments:
                rec.moments[v] = None if nb.is_vague else (nb.mean, nb.var)
        rec.max_delta = max_delta
        trace.records.append(rec)
        beliefs = new_beliefs
        if on_iteration is not None:
            on_iteration(t, beliefs)
    vague = [v for v, b in beliefs.items() if b.is_vague]
    if vague:
        raise AllVagueError(f"no evidence reached variables {vague} after {iterations} iterations")
    return beliefs, trace


def gaussian_trace_to_csv(trace: GaussianTrace, path):
    """Same CSV schema as the discretized trace; shape columns fixed at 0."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "variable", "mu", "var", "skew", "exkurt", "eps"])
        for rec in trace.records:
            for v in sorted(rec.moments):
                m = rec.moments[v]
                if m is None:
                    w.writerow([rec.iteration, v, "", "", "0", "0", "0"])
                else:
                    w.writerow([rec.iteration, v, repr(m[0]), repr(m[1]), "0", "0", "0"])
