"""Discretized and Gaussian belief propagation on shift-invariant factor
graphs, with cumulant-based Gaussianity analytics and a stereo pipeline.

The package splits into:

- ``dists``: grids, discrete distributions, kernels, cumulants, KL-to-Gaussian.
- ``graph``: factor-graph model plus seeded chain/tree/star/grid builders.
- ``bp``: synchronous sum-product BP and exact tree marginalization.
- ``gbp``: information-form Gaussian BP over moment-projected potentials.
- ``theory``: executable checks of the anchoring threshold, cumulant
  contraction, decay-rate law and computation-tree equivalence.
- ``stereo``: disparity estimation from image pairs with photometric priors
  and edge-masked smoothing.
- ``experiments`` / ``cli``: JSON-config experiment harness and entry point.
"""

__version__ = "0.1.0"

from .dists import (CumulantSummary, DiscreteDist, Grid, Kernel, convolve,
                    cumulants, gaussian_on_grid, kl_to_gaussian_fit, product,
                    uniform, uniform_window)
from .graph import (BinaryFactor, FactorGraph, RandomPotentialSpec,
                    UnaryFactor, build_chain, build_grid_graph, build_star,
                    build_tree, graph_from_json, graph_to_json, random_kernel,
                    random_kernels, random_potential, skewed_kernel)
from .bp import run_sync, run_tree_exact, summarize_belief
from .gbp import GaussianGraph, GaussianMsg, gaussian_project, gbp_run_sync
from .theory import (check_tree_equivalence, critical_threshold,
                     decay_rate_fit, predict_product_cumulants,
                     solve_steady_state, unwrap_computation_tree)
from .stereo import (ImagePair, StereoConfig, StereoReport, load_pair,
                     run_stereo, synthetic_shift_pair)

__all__ = [
    "__version__",
    "CumulantSummary", "DiscreteDist", "Grid", "Kernel", "convolve",
    "cumulants", "gaussian_on_grid", "kl_to_gaussian_fit", "product",
    "uniform", "uniform_window",
    "BinaryFactor", "FactorGraph", "RandomPotentialSpec", "UnaryFactor",
    "build_chain", "build_grid_graph", "build_star", "build_tree",
    "graph_from_json", "graph_to_json", "random_kernel", "random_kernels",
    "random_potential", "skewed_kernel",
    "run_sync", "run_tree_exact", "summarize_belief",
    "GaussianGraph", "GaussianMsg", "gaussian_project", "gbp_run_sync",
    "check_tree_equivalence", "critical_threshold", "decay_rate_fit",
    "predict_product_cumulants", "solve_steady_state",
    "unwrap_computation_tree",
    "ImagePair", "StereoConfig", "StereoReport", "load_pair", "run_stereo",
    "synthetic_shift_pair",
]
