"""Tests for discretized sum-product BP against brute-force marginals."""
import numpy as np
import pytest

from factorbp.bp import (convergence_check, run_sync, run_tree_exact,
                         summarize_belief, trace_to_csv)
from factorbp.dists import Grid, Kernel, delta, uniform_window
from factorbp.errors import NotATreeError, NotConverged, ZeroMassError
from factorbp.graph import (RandomPotentialSpec, build_chain, build_grid_graph,
                            build_star, build_tree, random_potential)

GRID = Grid(16, 0.0, 15.0)
KERN = Kernel(np.array([-1, 0, 1]), np.array([0.25, 0.5, 0.25]))


def _prior(seed, width=6):
    return random_potential(RandomPotentialSpec(width, seed), GRID)


class TestTreeExact:
    def test_chain_matches_brute_force(self):
        from .oracles import brute_force_marginals
        g = build_chain(4, [(0, _prior(1)), (3, _prior(2))], KERN, GRID)
        ref = brute_force_marginals(g)
        beliefs = run_tree_exact(g)
        for v in range(4):
            np.testing.assert_allclose(beliefs[v].mass, ref[v], atol=1e-12)

    def test_star_matches_brute_force(self):
        from .oracles import brute_force_marginals
        g = build_star(3, lambda i: _prior(i + 10), KERN, GRID)
        ref = brute_force_marginals(g)
        beliefs = run_tree_exact(g)
        for v in range(4):
            np.testing.assert_allclose(beliefs[v].mass, ref[v], atol=1e-12)

    def test_no_prior_beliefs_flat_in_interior(self):
        # Edge bins lose kernel mass to truncation; the interior stays flat.
        g = build_chain(3, [], KERN, GRID)
        b = run_tree_exact(g)[1]
        assert b.mass.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(b.mass[1:-1], b.mass[1])
        assert b.mass[0] < b.mass[1]

    def test_rejects_loopy_graph(self):
        g = build_grid_graph(2, 2, [(0, _prior(1))], KERN, GRID)
        with pytest.raises(NotATreeError):
            run_tree_exact(g)


class TestRunSync:
    def test_converges_to_exact_on_tree(self):
        g = build_tree(3, 2, lambda i: _prior(i), (4, 5), GRID)
        exact = run_tree_exact(g)
        beliefs, _ = run_sync(g, iterations=10, track_summaries=False)
        for v in range(g.n_vars):
            np.testing.assert_allclose(beliefs[v].mass, exact[v].mass,
                                       atol=1e-10)

    def test_damping_preserves_tree_fixed_point(self):
        g = build_chain(4, [(0, _prior(3)), (3, _prior(4))], KERN, GRID)
        plain, _ = run_sync(g, iterations=20)
        damped, _ = run_sync(g, iterations=60, damping=0.5)
        for v in range(4):
            np.testing.assert_allclose(damped[v].mass, plain[v].mass, atol=1e-8)

    def test_trace_records_shrinking_deltas(self):
        g = build_chain(5, [(0, _prior(5))], KERN, GRID)
        _, trace = run_sync(g, iterations=12)
        assert len(trace.records) == 12
        assert trace.records[-1].max_delta < trace.records[0].max_delta

    def test_zero_mass_message_reports_edge(self):
        # A one-directional kernel starves the right end of mass it could
        # reconcile with a contradictory prior.
        k = Kernel(np.array([5]), np.array([1.0]))
        g = build_chain(2, [(0, delta(GRID, 0)), (1, delta(GRID, 2))], k, GRID)
        with pytest.raises(ZeroMassError, match="factor"):
            run_sync(g, iterations=3)

    def test_iterations_validated(self):
        g = build_chain(3, [], KERN, GRID)
        with pytest.raises(ValueError):
            run_sync(g, iterations=0)

    def test_on_iteration_callback(self):
        g = build_chain(3, [(0, _prior(6))], KERN, GRID)
        seen = []
        run_sync(g, iterations=4, on_iteration=lambda t, b: seen.append(t))
        assert seen == [1, 2, 3, 4]


class TestDiagnostics:
    def test_summarize_belief_none_for_delta(self):
        assert summarize_belief(delta(GRID, 4)) is None
        assert summarize_belief(uniform_window(GRID, 8)) is not None

    def test_convergence_check(self):
        g = build_chain(4, [(0, _prior(7)), (3, _prior(8))], KERN, GRID)
        _, trace = run_sync(g, iterations=30)
        it = convergence_check(trace, tol=1e-8)
        assert 1 <= it <= 30
        with pytest.raises(NotConverged):
            convergence_check(trace, tol=0.0)

    def test_trace_to_csv(self, tmp_path):
        g = build_chain(3, [(0, _prior(9))], KERN, GRID)
        _, trace = run_sync(g, iterations=2)
        path = tmp_path / "trace.csv"
        trace_to_csv(trace, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("iteration,variable")
        assert len(lines) == 1 + 2 * 3
