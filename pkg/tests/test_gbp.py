"""Tests for Gaussian BP against dense linear-Gaussian solves."""
import numpy as np
import pytest

from factorbp.dists import Grid, Kernel, delta, gaussian_on_grid
from factorbp.errors import AllVagueError
from factorbp.gbp import (GaussianGraph, GaussianMsg, gaussian_project,
                          gaussian_trace_to_csv, gbp_run_sync)
from factorbp.graph import UnaryFactor, build_chain, build_grid_graph, build_star

GRID = Grid(64, 0.0, 63.0)
KERN = Kernel(np.array([-1, 0, 1]), np.array([0.25, 0.5, 0.25]))
SKEW_KERN = Kernel(np.array([-1, 0, 2]), np.array([0.2, 0.5, 0.3]))


def _gauss_prior(mu, var):
    return gaussian_on_grid(mu, var, GRID)


class TestGaussianMsg:
    def test_moment_information_round_trip(self):
        m = GaussianMsg.from_moments(4.0, 2.5)
        assert m.mean == pytest.approx(4.0)
        assert m.var == pytest.approx(2.5)

    def test_combine_adds_precisions(self):
        a = GaussianMsg.from_moments(0.0, 2.0)
        b = GaussianMsg.from_moments(6.0, 2.0)
        c = a.combine(b)
        assert c.mean == pytest.approx(3.0)
        assert c.var == pytest.approx(1.0)

    def test_vague_identity(self):
        a = GaussianMsg.from_moments(1.0, 3.0)
        c = a.combine(GaussianMsg.vague())
        assert (c.eta, c.lam) == (a.eta, a.lam)

    def test_vague_has_no_moments(self):
        with pytest.raises(AllVagueError):
            GaussianMsg.vague().mean

    def test_validation(self):
        with pytest.raises(ValueError):
            GaussianMsg(eta=1.0, lam=0.0)
        with pytest.raises(ValueError):
            GaussianMsg.from_moments(0.0, 0.0)


class TestProjection:
    def test_matches_discrete_moments(self):
        d = _gauss_prior(20.0, 9.0)
        m = gaussian_project(d)
        assert m.mean == pytest.approx(d.mean())
        assert m.var == pytest.approx(d.var())

    def test_single_bin_gets_quantization_floor(self):
        m = gaussian_project(delta(GRID, 10))
        assert m.var == pytest.approx(GRID.step**2 / 12.0)


class TestGbpRun:
    def test_chain_matches_dense_solve(self):
        from .oracles import gaussian_chain_posterior
        g = build_chain(5, [(0, _gauss_prior(20.0, 4.0)),
                            (4, _gauss_prior(30.0, 6.0))], SKEW_KERN, GRID)
        means, variances = gaussian_chain_posterior(g)
        beliefs, _ = gbp_run_sync(g, iterations=20)
        for v in range(5):
            assert beliefs[v].mean == pytest.approx(means[v], abs=1e-8)
            assert beliefs[v].var == pytest.approx(variances[v], abs=1e-8)

    def test_star_matches_dense_solve(self):
        from .oracles import gaussian_chain_posterior
        g = build_star(4, lambda i: _gauss_prior(20.0 + 2 * i, 3.0 + i),
                       SKEW_KERN, GRID)
        means, variances = gaussian_chain_posterior(g)
        beliefs, _ = gbp_run_sync(g, iterations=10)
        for v in range(5):
            assert beliefs[v].mean == pytest.approx(means[v], abs=1e-8)
            assert beliefs[v].var == pytest.approx(variances[v], abs=1e-8)

    def test_loopy_means_match_dense_solve(self):
        # On loopy Gaussian models converged GBP means are exact even though
        # the variances are overconfident.
        from .oracles import gaussian_chain_posterior
        g = build_grid_graph(3, 3, [(0, _gauss_prior(20.0, 4.0)),
                                    (8, _gauss_prior(30.0, 4.0))], KERN, GRID)
        means, variances = gaussian_chain_posterior(g)
        beliefs, _ = gbp_run_sync(g, iterations=60)
        for v in range(9):
            assert beliefs[v].mean == pytest.approx(means[v], abs=1e-6)
            assert beliefs[v].var <= variances[v] + 1e-9

    def test_all_vague_raises(self):
        g = build_chain(3, [], KERN, GRID)
        with pytest.raises(AllVagueError):
            gbp_run_sync(g, iterations=5)

    def test_trace_and_csv(self, tmp_path):
        g = build_chain(3, [(0, _gauss_prior(20.0, 4.0))], KERN, GRID)
        _, trace = gbp_run_sync(g, iterations=4)
        assert len(trace.records) == 4
        path = tmp_path / "gtrace.csv"
        gaussian_trace_to_csv(trace, path)
        assert path.read_text().startswith("iteration,variable,mu,var")

    def test_accepts_pre_projected_graph(self):
        g = build_chain(3, [(0, _gauss_prior(25.0, 4.0))], KERN, GRID)
        direct, _ = gbp_run_sync(g, iterations=8)
        via_gg, _ = gbp_run_sync(GaussianGraph(g), iterations=8)
        for v in range(3):
            assert via_gg[v].mean == pytest.approx(direct[v].mean)
