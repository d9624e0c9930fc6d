"""Factor-graph data model and seeded topology builders.

Graphs are restricted to unary and binary factors, with binary potentials
stored solely as shift-invariant offset kernels.  Builders cover the four
synthetic topologies used in the experiments: chain, tree, star and grid.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .dists import DiscreteDist, Grid, Kernel
from .errors import BadPriorError, NotATreeError


@dataclass(frozen=True)
class UnaryFactor:
    id: int
    target: int
    potential: DiscreteDist


@dataclass(frozen=True)
class BinaryFactor:
    """Pairwise factor between variables ``a`` and ``b``.

    The kernel is oriented a->b: marginalizing toward ``b`` convolves with
    the kernel as stored; toward ``a`` with its reflection.
    """

    id: int
    a: int
    b: int
    kernel: Kernel

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("binary factor endpoints must be distinct")


Factor = UnaryFactor | BinaryFactor


class FactorGraph:
    """Immutable bipartite graph of variables 0..n-1 and unary/binary factors."""

    def __init__(self, grid: Grid, n_vars: int, factors: list[Factor]):
        if n_vars < 1:
            raise ValueError("need at least one variable")
        self.grid = grid
        self.n_vars = n_vars
        self.factors: tuple[Factor, ...] = tuple(factors)
        var_factors: list[list[int]] = [[] for _ in range(n_vars)]
        for f in self.factors:
            for v in self._endpoints(f):
                if not 0 <= v < n_vars:
                    raise BadPriorError(f"factor {f.id} targets nonexistent variable {v}")
                var_factors[v].append(f.id)
        self._var_factors = tuple(tuple(fs) for fs in var_factors)
        self._by_id = {f.id: f for f in self.factors}
        if len(self._by_id) != len(self.factors):
            raise ValueError("factor ids must be unique")

    @staticmethod
    def _endpoints(f: Factor) -> tuple[int, ...]:
        return (f.target,) if isinstance(f, UnaryFactor) else (f.a, f.b)

    def factor(self, fid: int) -> Factor:
        return self._by_id[fid]

    def factors_of_var(self, v: int) -> tuple[int, ...]:
        return self._var_factors[v]

    def vars_of_factor(self, fid: int) -> tuple[int, ...]:
        return self._endpoints(self._by_id[fid])

    def binary_factors(self) -> list[BinaryFactor]:
        return [f for f in self.factors if isinstance(f, BinaryFactor)]

    def unary_factors(self) -> list[UnaryFactor]:
        return [f for f in self.factors if isinstance(f, UnaryFactor)]

    def prior_vars(self) -> list[int]:
        return sorted({f.target for f in self.unary_factors()})

    def degree(self, v: int) -> int:
        return len(self._var_factors[v])

    def has_cycle(self) -> bool:
        """Union-find cycle detection over binary factors."""
        parent = list(range(self.n_vars))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for f in self.binary_factors():
            ra, rb = find(f.a), find(f.b)
            if ra == rb:
                return True
            parent[ra] = rb
        return False

    def require_tree(self):
        if self.has_cycle():
            raise NotATreeError("graph contains a cycle")

    def distances_from(self, sources: list[int]) -> list[int]:
        """BFS hop distance (over binary factors) from the nearest source variable.

        Unreachable variables get -1.
        """
        dist = [-1] * self.n_vars
        q = deque()
        for s in sources:
            dist[s] = 0
            q.append(s)
        while q:
            v = q.popleft()
            for fid in self._var_factors[v]:
                f = self._by_id[fid]
                if isinstance(f, BinaryFactor):
                    u = f.b if f.a == v else f.a
                    if dist[u] < 0:
                        dist[u] = dist[v] + 1
                        q.append(u)
        return dist

    def validate(self):
        """Assert the structural assumptions: arity <= 2, kernel-only binaries."""
        for f in self.factors:
            if isinstance(f, UnaryFactor):
                if f.potential.grid != self.grid:
                    raise ValueError(f"unary factor {f.id} potential on wrong grid")
            elif isinstance(f, BinaryFactor):
                if not isinstance(f.kernel, Kernel):
                    raise ValueError(f"binary factor {f.id} lacks a kernel")
            else:
                raise ValueError(f"unsupported factor type {type(f)}")


@dataclass(frozen=True)
class RandomPotentialSpec:
    """Seeded random-noise window: iid uniform(0,1] draws on ``width_bins`` bins."""

    width_bins: int
    seed: int


def random_potential(spec: RandomPotentialSpec, grid: Grid) -> DiscreteDist:
    """Random-noise potential on a centered window, deterministic given seed.

    Draws come from numpy's PCG64 (``default_rng``), whose stream is stable
    across platforms; values are 1 - U[0,1) so every window bin is positive.
    """
    if spec.width_bins > grid.n_bins:
        raise ValueError("width_bins exceeds grid size")
    rng = np.random.default_rng(spec.seed)
    w = 1.0 - rng.random(spec.width_bins)
    c = grid.n_bins // 2
    start = max(0, min(c - spec.width_bins // 2, grid.n_bins - spec.width_bins))
    m = np.zeros(grid.n_bins)
    m[start : start + spec.width_bins] = w
    return DiscreteDist(grid, m / m.sum())


def random_kernel(width_bins: int, seed: int) -> Kernel:
    """Random-noise kernel on centered offsets, deterministic given seed."""
    rng = np.random.default_rng(seed)
    w = 1.0 - rng.random(width_bins)
    offsets = np.arange(width_bins) - width_bins // 2
    return Kernel(offsets, w)


def skewed_kernel(width_bins: int, seed: int, decay: float = 0.6) -> Kernel:
    """Random kernel with a geometric envelope, guaranteeing nonzero skew.

    The envelope puts most mass on the leftmost offsets, so the third
    standardized cumulant stays bounded away from zero for every seed.
    """
    rng = np.random.default_rng(seed)
    w = decay ** np.arange(width_bins) * (1.0 - rng.random(width_bins))
    offsets = np.arange(width_bins) - width_bins // 2
    return Kernel(offsets, w)


def random_kernels(count: int, width_bins: int, seed: int) -> list[Kernel]:
    """Independent per-factor kernels derived from one master seed."""
    ss = np.random.SeedSequence(seed)
    return [random_kernel(width_bins, int(child.generate_state(1)[0]))
            for child in ss.spawn(count)]


def _as_kernels(kernel_spec, count: int, seed_offset: int = 0) -> list[Kernel]:
    """Accept a Kernel (shared), list of Kernels, or (width, seed) random spec."""
    if isinstance(kernel_spec, Kernel):
        return [kernel_spec] * count
    if isinstance(kernel_spec, tuple) and len(kernel_spec) == 2:
        width, seed = kernel_spec
        return random_kernels(count, width, seed + seed_offset)
    kernels = list(kernel_spec)
    if len(kernels) != count:
        raise ValueError(f"need {count} kernels, got {len(kernels)}")
    return kernels


def _attach_priors(n_vars: int, priors, factors: list[Factor], grid: Grid):
    next_id = len(factors)
    for v, pot in priors:
        if not 0 <= v < n_vars:
            raise BadPriorError(f"prior targets nonexistent variable {v}")
        factors.append(UnaryFactor(id=next_id, target=v, potential=pot))
        next_id += 1


def build_chain(n_vars: int, priors, kernel_spec, grid: Grid) -> FactorGraph:
    """Path graph: n_vars-1 binary factors linking consecutive variables."""
    if n_vars < 2:
        raise ValueError("chain needs at least 2 variables")
    kernels = _as_kernels(kernel_spec, n_vars - 1)
    factors: list[Factor] = [
        BinaryFactor(id=i, a=i, b=i + 1, kernel=kernels[i]) for i in range(n_vars - 1)
    ]
    _attach_priors(n_vars, priors, factors, grid)
    return FactorGraph(grid, n_vars, factors)


def build_tree(depth: int, branching: int, leaf_prior_fn, kernel_spec, grid: Grid) -> FactorGraph:
    """Complete ``branching``-ary tree of the given depth, priors on all leaves.

    ``leaf_prior_fn(i)`` supplies the potential for the i-th leaf.
    """
    if depth < 1 or branching < 2:
        raise ValueError("need depth >= 1 and branching >= 2")
    n_vars = (branching ** (depth + 1) - 1) // (branching - 1)
    kernels = _as_kernels(kernel_spec, n_vars - 1)
    factors: list[Factor] = []
    # Level-order ids: children of v are branching*v+1 .. branching*v+branching.
    for v in range(n_vars):
        for c in range(branching * v + 1, branching * v + branching + 1):
            if c < n_vars:
                factors.append(BinaryFactor(id=len(factors), a=v, b=c, kernel=kernels[len(factors)]))
    first_leaf = (branching**depth - 1) // (branching - 1)
    priors = [(v, leaf_prior_fn(i)) for i, v in enumerate(range(first_leaf, n_vars))]
    _attach_priors(n_vars, priors, factors, grid)
    g = FactorGraph(grid, n_vars, factors)
    g.require_tree()
    return g


def build_star(n_outer: int, outer_prior_fn, kernel_spec, grid: Grid) -> FactorGraph:
    """Star: central variable 0 (no prior), outer variables each with a prior."""
    if n_outer < 2:
        raise ValueError("star needs at least 2 outer variables")
    n_vars = n_outer + 1
    kernels = _as_kernels(kernel_spec, n_outer)
    factors: list[Factor] = [
        BinaryFactor(id=i, a=0, b=i + 1, kernel=kernels[i]) for i in range(n_outer)
    ]
    priors = [(i + 1, outer_prior_fn(i)) for i in range(n_outer)]
    _attach_priors(n_vars, priors, factors, grid)
    return FactorGraph(grid, n_vars, factors)


def build_grid_graph(rows: int, cols: int, priors, kernel_spec, grid: Grid,
                     edge_mask: set[tuple[int, int]] | None = None) -> FactorGraph:
    """4-connected lattice; variable id of pixel (r, c) is r*cols + c.

    ``edge_mask`` holds unordered variable-id pairs whose smoothing factor
    is suppressed.
    """
    if rows * cols < 2:
        raise ValueError("grid needs at least 2 variables")
    mask = {frozenset(e) for e in (edge_mask or set())}
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols and frozenset((v, v + 1)) not in mask:
                edges.append((v, v + 1))
            if r + 1 < rows and frozenset((v, v + cols)) not in mask:
                edges.append((v, v + cols))
    kernels = _as_kernels(kernel_spec, len(edges))
    factors: list[Factor] = [
        BinaryFactor(id=i, a=a, b=b, kernel=kernels[i]) for i, (a, b) in enumerate(edges)
    ]
    _attach_priors(rows * cols, priors, factors, grid)
    return FactorGraph(grid, rows * cols, factors)


def graph_to_json(g: FactorGraph) -> str:
    """Serialize a graph (grid, variables, factors, kernels) to a JSON document."""
    doc = {
        "grid": {"n_bins": g.grid.n_bins, "lo": g.grid.lo, "hi": g.grid.hi},
        "n_vars": g.n_vars,
        "factors": [],
    }
    for f in g.factors:
        if isinstance(f, UnaryFactor):
            doc["factors"].append({
                "id": f.id, "kind": "unary", "target": f.target,
                "mass": f.potential.mass.tolist(),
            })
        else:
            doc["factors"].append({
                "id": f.id, "kind": "binary", "a": f.a, "b": f.b,
                "offsets": f.kernel.offsets.tolist(),
                "weights": f.kernel.weights.tolist(),
            })
    return json.dumps(doc, indent=2)


def graph_from_json(text: str) -> FactorGraph:
    doc = json.loads(text)
    grid = Grid(n_bins=doc["grid"]["n_bins"], lo=doc["grid"]["lo"], hi=doc["grid"]["hi"])
    factors: list[Factor] = []
    for fd in doc["factors"]:
        if fd["kind"] == "unary":
            pot = DiscreteDist(grid, np.array(fd["mass"], dtype=float))
            factors.append(UnaryFactor(id=fd["id"], target=fd["target"], potential=pot))
        elif fd["kind"] == "binary":
            k = Kernel(np.array(fd["offsets"], dtype=int), np.array(fd["weights"], dtype=float))
            factors.append(BinaryFactor(id=fd["id"], a=fd["a"], b=fd["b"], kernel=k))
        else:
            raise ValueError(f"unknown factor kind {fd['kind']!r}")
    return FactorGraph(grid, doc["n_vars"], factors)
