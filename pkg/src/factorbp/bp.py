"""Discretized sum-product belief propagation.

Two schedules are provided: a synchronous iteration for general (possibly
loopy) graphs, and an exact two-pass sweep for singly connected graphs.

One synchronous iteration computes every variable-to-factor message from
the previous iteration's factor-to-variable buffer, then every
factor-to-variable message from those fresh variable-to-factor messages.
The factor-to-variable buffer is the canonical double-buffered state, so
each iteration is a pure function of the previous buffer and information
travels exactly one variable hop per iteration.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import dists
from .dists import CumulantSummary, DiscreteDist, cumulants, product, convolve
from .errors import DegenerateVarianceError, NotConverged, ZeroMassError
from .graph import BinaryFactor, FactorGraph, UnaryFactor

BeliefSet = dict[int, DiscreteDist]


class MessageStore:
    """Factor-to-variable messages from the previous completed iteration."""

    def __init__(self, graph: FactorGraph):
        self.graph = graph
        self.msgs: dict[tuple[int, int], DiscreteDist] = {}
        unif = dists.uniform(graph.grid)
        for f in graph.factors:
            if isinstance(f, UnaryFactor):
                self.msgs[(f.id, f.target)] = f.potential
            else:
                self.msgs[(f.id, f.a)] = unif
                self.msgs[(f.id, f.b)] = unif

    def get(self, fid: int, v: int) -> DiscreteDist:
        return self.msgs[(fid, v)]


def var_to_factor(graph: FactorGraph, v: int, a: int, store: MessageStore) -> DiscreteDist:
    """Product of previous-iteration messages into ``v`` from factors other than ``a``."""
    out: DiscreteDist | None = None
    for fid in graph.factors_of_var(v):
        if fid == a:
            continue
        msg = store.get(fid, v)
        out = msg if out is None else product(out, msg)
    return dists.uniform(graph.grid) if out is None else out


def factor_to_var(graph: FactorGraph, a: int, v: int, store: MessageStore) -> DiscreteDist:
    """Marginalization of factor ``a`` toward variable ``v``.

    Unary factors send their potential unchanged.  A binary factor (u, v)
    convolves the opposite variable-to-factor message with its kernel,
    reflected when marginalizing against the kernel's stored orientation.
    """
    f = graph.factor(a)
    if isinstance(f, UnaryFactor):
        if f.target != v:
            raise ValueError(f"unary factor {a} not adjacent to variable {v}")
        return f.potential
    if v == f.b:
        u, kernel = f.a, f.kernel
    elif v == f.a:
        u, kernel = f.b, f.kernel.reflected()
    else:
        raise ValueError(f"factor {a} not adjacent to variable {v}")
    return convolve(var_to_factor(graph, u, a, store), kernel)


def beliefs_from_store(graph: FactorGraph, store: MessageStore) -> BeliefSet:
    out: BeliefSet = {}
    for v in range(graph.n_vars):
        b: DiscreteDist | None = None
        for fid in graph.factors_of_var(v):
            msg = store.get(fid, v)
            b = msg if b is None else product(b, msg)
        out[v] = dists.uniform(graph.grid) if b is None else b
    return out


def summarize_belief(b: DiscreteDist) -> CumulantSummary | None:
    """Cumulant summary, or None for delta-like beliefs."""
    try:
        return cumulants(b)
    except DegenerateVarianceError:
        return None


@dataclass
class IterationRecord:
    iteration: int
    max_delta: float
    summaries: dict[int, CumulantSummary | None] = field(default_factory=dict)


@dataclass
class SyncTrace:
    records: list[IterationRecord] = field(default_factory=list)


def run_sync(graph: FactorGraph, iterations: int, track_summaries: bool = True,
             damping: float = 0.0, on_iteration=None) -> tuple[BeliefSet, SyncTrace]:
    """Synchronous BP for a fixed number of iterations.

    The trace records the L-infinity belief change per iteration and,
    optionally, per-variable cumulant summaries.  ``on_iteration(t, beliefs)``
    is invoked after each iteration; large runs use it to stream metrics
    instead of holding full per-iteration summaries in memory.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    store = MessageStore(graph)
    beliefs = beliefs_from_store(graph, store)
    trace = SyncTrace()
    for t in range(1, iterations + 1):
        new = MessageStore(graph)
        new.msgs = dict(store.msgs)
        for f in graph.factors:
            if not isinstance(f, BinaryFactor):
                continue
            for v in (f.a, f.b):
                try:
                    msg = factor_to_var(graph, f.id, v, store)
                except ZeroMassError as e:
                    raise ZeroMassError(
                        f"zero-mass message on edge factor {f.id} -> variable {v} "
                        f"at iteration {t}: {e}") from e
                if damping > 0.0:
                    old = store.get(f.id, v)
                    msg = dists.normalize(DiscreteDist(
                        graph.grid, (1.0 - damping) * msg.mass + damping * old.mass))
                new.msgs[(f.id, v)] = msg
        store = new
        new_beliefs = beliefs_from_store(graph, store)
        max_delta = max(
            (float(np.max(np.abs(new_beliefs[v].mass - beliefs[v].mass)))
             for v in range(graph.n_vars)), default=0.0)
        rec = IterationRecord(iteration=t, max_delta=max_delta)
        if track_summaries:
            rec.summaries = {v: summarize_belief(new_beliefs[v]) for v in range(graph.n_vars)}
        trace.records.append(rec)
        beliefs = new_beliefs
        if on_iteration is not None:
            on_iteration(t, beliefs)
    return beliefs, trace


def run_tree_exact(graph: FactorGraph) -> BeliefSet:
    """Exact marginals on a singly connected graph via a two-pass sweep."""
    graph.require_tree()
    root = 0
    # Orient the variable-level tree away from the root.
    parent_edge: dict[int, int | None] = {root: None}
    order = [root]
    seen = {root}
    i = 0
    while i < len(order):
        v = order[i]
        i += 1
        for fid in graph.factors_of_var(v):
            f = graph.factor(fid)
            if isinstance(f, BinaryFactor):
                u = f.b if f.a == v else f.a
                if u not in seen:
                    seen.add(u)
                    parent_edge[u] = fid
                    order.append(u)
    # Variables disconnected from the root form separate trees; process them too.
    for v in range(graph.n_vars):
        if v not in seen:
            seen.add(v)
            parent_edge[v] = None
            order.append(v)
            j = len(order) - 1
            while j < len(order):
                w = order[j]
                j += 1
                for fid in graph.factors_of_var(w):
                    f = graph.factor(fid)
                    if isinstance(f, BinaryFactor):
                        u = f.b if f.a == w else f.a
                        if u not in seen:
                            seen.add(u)
                            parent_edge[u] = fid
                            order.append(u)

    def oriented(f: BinaryFactor, target: int):
        if target == f.b:
            return f.a, f.kernel
        return f.b, f.kernel.reflected()

    # Upward pass: message each variable sends along its parent edge.
    up: dict[tuple[int, int], DiscreteDist] = {}  # (var, fid) -> msg var->factor
    for v in reversed(order):
        fid = parent_edge[v]
        if fid is None:
            continue
        msg: DiscreteDist | None = None
        for gid in graph.factors_of_var(v):
            if gid == fid:
                continue
            m = _incoming_exact(graph, gid, v, up, parent_edge)
            msg = m if msg is None else product(msg, m)
        up[(v, fid)] = dists.uniform(graph.grid) if msg is None else msg
    # Downward pass: message each variable receives from its parent edge.
    down: dict[int, DiscreteDist] = {}  # var -> msg parent_factor->var
    for v in order:
        fid = parent_edge[v]
        if fid is None:
            continue
        f = graph.factor(fid)
        assert isinstance(f, BinaryFactor)
        u, kernel = oriented(f, v)
        msg: DiscreteDist | None = None
        for gid in graph.factors_of_var(u):
            if gid == fid or gid == parent_edge[u]:
                continue
            m = _incoming_exact(graph, gid, u, up, parent_edge)
            msg = m if msg is None else product(msg, m)
        if parent_edge[u] is not None:
            m = down[u]
            msg = m if msg is None else product(msg, m)
        src = dists.uniform(graph.grid) if msg is None else msg
        down[v] = convolve(src, kernel)
    # Beliefs: product of all incoming factor->variable messages.
    beliefs: BeliefSet = {}
    for v in order:
        b: DiscreteDist | None = None
        for gid in graph.factors_of_var(v):
            if gid == parent_edge[v]:
                m = down[v]
            else:
                m = _incoming_exact(graph, gid, v, up, parent_edge)
            b = m if b is None else product(b, m)
        beliefs[v] = dists.uniform(graph.grid) if b is None else b
    return beliefs


def _incoming_exact(graph, fid, v, up, parent_edge) -> DiscreteDist:
    """Message factor ``fid`` -> ``v`` in the upward pass, for a child-side factor."""
    f = graph.factor(fid)
    if isinstance(f, UnaryFactor):
        return f.potential
    u = f.b if f.a == v else f.a
    kernel = f.kernel if v == f.b else f.kernel.reflected()
    return convolve(up[(u, fid)], kernel)


def convergence_check(trace: SyncTrace, tol: float) -> int:
    """First iteration whose max L-infinity belief change is below ``tol``."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    for rec in trace.records:
        if rec.max_delta < tol:
            return rec.iteration
    raise NotConverged(f"no iteration reached tolerance {tol:g}")


def trace_to_csv(trace: SyncTrace, path):
    """Export per-iteration, per-variable cumulant summaries as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "variable", "mu", "var", "skew", "exkurt", "eps", "kl_gauss"])
        for rec in trace.records:
            for v in sorted(rec.summaries):
                s = rec.summaries[v]
                if s is None:
                    w.writerow([rec.iteration, v, "", "0.0", "", "", "", ""])
                else:
                    w.writerow([rec.iteration, v, repr(s.mu), repr(s.var), repr(s.skew),
                                repr(s.exkurt), repr(s.eps), repr(s.kl_gauss)])
