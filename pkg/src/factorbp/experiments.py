"""Seeded experiment harness: JSON configs in, plot-ready CSV artifacts out.

Each experiment kind maps a (config, seed) pair to a list of CSV rows.  The
harness runs every seed, writes one CSV per seed plus a seed-aggregated CSV
(mean and standard deviation per sweep point) and a JSON manifest echoing
the config.  All files are written atomically and float cells use ``repr``
so re-running a config reproduces byte-identical CSVs.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .bp import run_sync, run_tree_exact, summarize_belief
from .dists import Grid, cumulants, delta, uniform_window
from .errors import ConfigError
from .graph import (BinaryFactor, FactorGraph, RandomPotentialSpec,
                    build_chain, build_grid_graph, build_star, build_tree,
                    random_kernel, random_kernels, random_potential,
                    skewed_kernel)
from .stereo import (ImagePair, StereoConfig, load_pair, report_to_csv,
                     report_to_json, run_stereo, synthetic_shift_pair)
from .theory import check_tree_equivalence, decay_rate_fit

KINDS = ("chain", "tree", "star", "grid", "prior-sweep", "degree-sweep",
         "convergence-rate", "tree-equivalence", "stereo")

# Seeds run without --full-scale; keeps the default artifact cycle quick
# while staying a prefix of the full range (so full runs only add files).
DEFAULT_SEED_CAP = 3


# ---------------------------------------------------------------------------
# Config handling

def load_config(path: str) -> dict:
    """Parse a JSON experiment config, reporting the offending line on error."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"{path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return cfg


def _grid_from(cfg: dict) -> Grid:
    g = cfg.get("grid", {})
    return Grid(n_bins=int(g.get("bins", 128)), lo=float(g.get("lo", 0.0)),
                hi=float(g.get("hi", 63.0)))


def seed_range(cfg: dict, full_scale: bool = True) -> list[int]:
    """Inclusive [first, last] seed range from the config."""
    rng = cfg.get("seeds")
    if (not isinstance(rng, list) or len(rng) != 2
            or not all(isinstance(s, int) for s in rng) or rng[0] > rng[1]):
        raise ConfigError("'seeds' must be [first, last] with first <= last")
    seeds = list(range(rng[0], rng[1] + 1))
    if not full_scale:
        seeds = seeds[:DEFAULT_SEED_CAP]
    return seeds


def validate_config(cfg: dict) -> list[str]:
    """Precondition report; an empty list means the config is runnable."""
    problems: list[str] = []
    kind = cfg.get("kind")
    if kind not in KINDS:
        problems.append(f"'kind' must be one of {', '.join(KINDS)}; got {kind!r}")
        return problems
    try:
        seed_range(cfg)
    except ConfigError as e:
        problems.append(str(e))
    g = cfg.get("grid", {})
    if not isinstance(g, dict):
        problems.append("'grid' must be an object with bins/lo/hi")
    elif g and (int(g.get("bins", 128)) < 2 or float(g.get("hi", 63.0)) <= float(g.get("lo", 0.0))):
        problems.append("'grid' needs bins >= 2 and hi > lo")
    it = cfg.get("iterations", 20)
    if not isinstance(it, int) or it < 1:
        problems.append("'iterations' must be a positive integer")

    if kind == "chain" and int(cfg.get("n_vars", 13)) < 2:
        problems.append("chain needs n_vars >= 2")
    if kind == "tree":
        if int(cfg.get("depth", 6)) < 1 or int(cfg.get("branching", 2)) < 2:
            problems.append("tree needs depth >= 1 and branching >= 2")
    if kind == "star" and int(cfg.get("n_outer", 5)) < 2:
        problems.append("star needs n_outer >= 2")
    if kind == "grid" and int(cfg.get("rows", 5)) * int(cfg.get("cols", 5)) < 2:
        problems.append("grid needs rows*cols >= 2")
    if kind == "prior-sweep":
        widths = cfg.get("widths", [])
        bins = int(g.get("bins", 128)) if isinstance(g, dict) else 128
        if not widths or any(not isinstance(w, int) or not 1 <= w <= bins
                             for w in widths):
            problems.append(f"prior-sweep 'widths' must be integers in [1, {bins}]")
    if kind == "degree-sweep":
        degs = cfg.get("degrees", list(range(3, 12)))
        if not degs or any(d < 2 for d in degs):
            problems.append("degree-sweep 'degrees' must all be >= 2")
    if kind == "convergence-rate" and int(cfg.get("depth", 16)) < 8:
        problems.append("convergence-rate needs depth >= 8")
    if kind == "stereo":
        problems.extend(_validate_stereo(cfg))
    return problems


def _validate_stereo(cfg: dict) -> list[str]:
    problems = []
    if int(cfg.get("patch_size", 5)) % 2 == 0:
        problems.append("stereo 'patch_size' must be odd")
    if float(cfg.get("lam", 0.05)) <= 0:
        problems.append("stereo 'lam' must be positive")
    source = cfg.get("source", "synthetic")
    if source == "middlebury":
        for key in ("left", "right"):
            path = cfg.get(key)
            if not path or not os.path.exists(path):
                problems.append(f"stereo '{key}' image not found: {path!r}")
        gt = cfg.get("gt")
        if gt and not os.path.exists(gt):
            problems.append(f"stereo 'gt' not found: {gt!r}")
    elif source != "synthetic":
        problems.append("stereo 'source' must be 'synthetic' or 'middlebury'")
    return problems


# ---------------------------------------------------------------------------
# CSV plumbing

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def atomic_write(path: str, text: str):
    """Write via a sibling temp file + rename so readers never see partials."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, header: list[str], rows: list[list]):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(c) for c in row) for row in rows)
    atomic_write(path, "\n".join(lines) + "\n")


def _aggregate(per_seed: dict[int, list[list]], header: list[str],
               key_cols: int) -> tuple[list[str], list[list]]:
    """Mean/std across seeds for every value column, grouped by sweep key.

    Assumes every seed produced the same keys in the same order (true for
    all bundled experiments).
    """
    agg_header = header[:key_cols]
    for col in header[key_cols:]:
        agg_header += [f"{col}_mean", f"{col}_std"]
    groups: dict[tuple, list[list[float]]] = {}
    order: list[tuple] = []
    for rows in per_seed.values():
        for row in rows:
            key = tuple(row[:key_cols])
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append([float(v) for v in row[key_cols:]])
    out = []
    for key in order:
        block = np.array(groups[key], dtype=float)
        row = list(key)
        for j in range(block.shape[1]):
            col = block[:, j]
            row.append(float(np.mean(col)))
            row.append(float(np.std(col)))
        out.append(row)
    return agg_header, out


def _subseeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


# ---------------------------------------------------------------------------
# Experiment kinds.  Each returns (header, key_col_count, rows).

def _belief_rows(graph, beliefs) -> list[list]:
    dist = graph.distances_from(graph.prior_vars())
    rows = []
    for v in range(graph.n_vars):
        s = summarize_belief(beliefs[v])
        if s is None:
            rows.append([v, dist[v]] + [float("nan")] * 4)
        else:
            rows.append([v, dist[v], s.mu, s.var, s.eps, s.kl_gauss])
    return rows


_BELIEF_HEADER = ["variable", "distance_to_prior", "mean", "variance", "eps", "kl"]


def run_chain_seed(cfg: dict, seed: int):
    grid = _grid_from(cfg)
    n = int(cfg.get("n_vars", 13))
    pw = int(cfg.get("prior_width", 16))
    kw = int(cfg.get("kernel_width", 8))
    s_priors, s_kern = _subseeds(seed, 2)
    ends = [0, n - 1]
    priors = [(v, random_potential(RandomPotentialSpec(pw, s_priors + i), grid))
              for i, v in enumerate(ends)]
    g = build_chain(n, priors, (kw, s_kern), grid)
    beliefs, _ = run_sync(g, int(cfg.get("iterations", 20)), track_summaries=False)
    return _BELIEF_HEADER, 2, _belief_rows(g, beliefs)


def run_tree_seed(cfg: dict, seed: int):
    grid = _grid_from(cfg)
    depth = int(cfg.get("depth", 6))
    branching = int(cfg.get("branching", 2))
    pw = int(cfg.get("prior_width", 16))
    kw = int(cfg.get("kernel_width", 8))
    s_priors, s_kern = _subseeds(seed, 2)
    g = build_tree(depth, branching,
                   lambda i: random_potential(RandomPotentialSpec(pw, s_priors + i), grid),
                   (kw, s_kern), grid)
    beliefs, _ = run_sync(g, int(cfg.get("iterations", 20)), track_summaries=False)
    return _BELIEF_HEADER, 2, _belief_rows(g, beliefs)


def run_star_seed(cfg: dict, seed: int):
    grid = _grid_from(cfg)
    n_outer = int(cfg.get("n_outer", 5))
    pw = int(cfg.get("prior_width", 12))
    kw = int(cfg.get("kernel_width", 12))
    s_prior, s_kern = _subseeds(seed, 2)
    prior = random_potential(RandomPotentialSpec(pw, s_prior), grid)
    g = build_star(n_outer, lambda i: prior, (kw, s_kern), grid)
    beliefs, _ = run_sync(g, int(cfg.get("iterations", 30)), track_summaries=False)
    return _BELIEF_HEADER, 2, _belief_rows(g, beliefs)


def run_grid_seed(cfg: dict, seed: int):
    grid = _grid_from(cfg)
    rows_n = int(cfg.get("rows", 5))
    cols_n = int(cfg.get("cols", 5))
    pw = int(cfg.get("prior_width", 16))
    kw = int(cfg.get("kernel_width", 8))
    s_priors, s_kern = _subseeds(seed, 2)
    corners = [0, cols_n - 1, (rows_n - 1) * cols_n, rows_n * cols_n - 1]
    priors = [(v, random_potential(RandomPotentialSpec(pw, s_priors + i), grid))
              for i, v in enumerate(dict.fromkeys(corners))]
    g = build_grid_graph(rows_n, cols_n, priors, (kw, s_kern), grid)
    beliefs, _ = run_sync(g, int(cfg.get("iterations", 20)), track_summaries=False)
    return _BELIEF_HEADER, 2, _belief_rows(g, beliefs)


def run_prior_sweep_seed(cfg: dict, seed: int):
    """Priors-everywhere chain swept over bounded-uniform prior widths."""
    grid = _grid_from(cfg)
    n = int(cfg.get("n_vars", 20))
    kw = int(cfg.get("kernel_width", 8))
    iters = int(cfg.get("iterations", 20))
    widths = [int(w) for w in cfg.get("widths", [])]
    middle = n // 2
    rows = []
    for w in widths:
        prior = uniform_window(grid, w)
        sigma_p2 = prior.var()
        priors = [(v, prior) for v in range(n)]
        g = build_chain(n, priors, (kw, _subseeds(seed, 1)[0]), grid)
        beliefs, _ = run_sync(g, iters, track_summaries=False)
        s = summarize_belief(beliefs[middle])
        if s is None:
            rows.append([w, sigma_p2, float("nan"), float("nan")])
        else:
            rows.append([w, sigma_p2, s.eps, s.kl_gauss])
    return ["prior_width", "sigma_p2", "eps", "kl"], 2, rows


def run_degree_sweep_seed(cfg: dict, seed: int):
    """Central-belief non-Gaussianity vs star degree, shared prior draw.

    The same per-seed prior and kernel stream is reused for every degree so
    the sweep isolates the degree effect instead of re-rolling randomness.
    """
    grid = _grid_from(cfg)
    degrees = [int(d) for d in cfg.get("degrees", list(range(3, 12)))]
    pw = int(cfg.get("prior_width", 12))
    kw = int(cfg.get("kernel_width", 12))
    iters = int(cfg.get("iterations", 30))
    s_prior, s_kern = _subseeds(seed, 2)
    prior = random_potential(RandomPotentialSpec(pw, s_prior), grid)
    kernels = random_kernels(max(degrees), kw, s_kern)
    rows = []
    for deg in degrees:
        g = build_star(deg, lambda i: prior, kernels[:deg], grid)
        beliefs, _ = run_sync(g, iters, track_summaries=False)
        s = summarize_belief(beliefs[0])
        rows.append([deg, s.eps, s.kl_gauss])
    return ["degree", "eps", "kl"], 1, rows


def run_convergence_rate_seed(cfg: dict, seed: int):
    """Cumulant/KL decay along an i.i.d.-kernel chain anchored at one end."""
    grid = _grid_from(cfg)
    depth = int(cfg.get("depth", 16))
    kw = int(cfg.get("kernel_width", 12))
    kernel = skewed_kernel(kw, _subseeds(seed, 1)[0])
    prior = delta(grid, grid.n_bins // 2)
    g = build_chain(depth + 1, [(0, prior)], kernel, grid)
    beliefs = run_tree_exact(g)
    pairs = []
    rows = []
    for d in range(2, depth + 1):
        s = cumulants(beliefs[d])
        pairs.append((d, s))
        rows.append([d, abs(s.skew), s.kl_gauss])
    # Fit only the deeper half: shallow depths carry a boundary transient
    # (higher-cumulant excess) that steepens the KL slope.
    fit = decay_rate_fit(pairs, min_depth=max(2, depth // 2))
    skew_slope = float("nan") if fit["skew_slope"] is None else fit["skew_slope"]
    rows.append([0, skew_slope, fit["kl_slope"]])  # depth-0 row holds the slopes
    return ["depth", "abs_k3hat_or_k3slope", "kl_or_klslope"], 1, rows


def run_tree_equivalence_seed(cfg: dict, seed: int):
    """Loopy-vs-unwrapped-tree root belief discrepancy on small loopy graphs."""
    grid = _grid_from(cfg)
    pw = int(cfg.get("prior_width", 8))
    kw = int(cfg.get("kernel_width", 6))
    max_iters = int(cfg.get("iterations", 3))
    s_priors, s_kern = _subseeds(seed, 2)
    rows = []
    # 3-cycle with a prior on every variable.
    cyc_priors = [(v, random_potential(RandomPotentialSpec(pw, s_priors + v), grid))
                  for v in range(3)]
    cyc = build_grid_graph(1, 3, cyc_priors, (kw, s_kern), grid,
                           edge_mask=None)
    closing = BinaryFactor(id=max(f.id for f in cyc.factors) + 1, a=0, b=2,
                           kernel=random_kernel(kw, s_kern + 999))
    cyc = FactorGraph(grid, 3, list(cyc.factors) + [closing])
    grid4 = build_grid_graph(
        4, 4,
        [(v, random_potential(RandomPotentialSpec(pw, s_priors + 100 + v), grid))
         for v in range(16)],
        (kw, s_kern + 1), grid)
    for name, g, root in (("cycle3", cyc, 0), ("grid4x4", grid4, 0)):
        for n_iters in range(1, max_iters + 1):
            rows.append([name, n_iters, check_tree_equivalence(g, root, n_iters)])
    return ["graph", "iterations", "linf_discrepancy"], 2, rows


# ---------------------------------------------------------------------------
# Stereo experiment (its own artifact shapes: per-pixel CSV + traces)

def _stereo_cfg(cfg: dict) -> StereoConfig:
    g = cfg.get("grid", {})
    return StereoConfig(
        patch_size=int(cfg.get("patch_size", 5)),
        lam=float(cfg.get("lam", 0.05)),
        edge_threshold=float(cfg.get("edge_threshold", 3.0)),
        edge_scale=float(cfg.get("edge_scale", 1.0)),
        disparity_grid=Grid(n_bins=int(g.get("bins", 64)),
                            lo=float(g.get("lo", 0.0)), hi=float(g.get("hi", 63.0))),
        smoothing_sigma=float(cfg.get("smoothing_sigma", 1.0)),
        iterations=int(cfg.get("iterations", 30)),
        cost=cfg.get("cost", "sad"),
    )


def _stereo_pair(cfg: dict, seed: int) -> ImagePair:
    if cfg.get("source", "synthetic") == "middlebury":
        pair = load_pair(cfg["left"], cfg["right"], cfg.get("gt"))
        crop = cfg.get("crop")
        if crop:
            r0, c0, h, w = (int(x) for x in crop)
            gt = pair.gt[r0:r0 + h, c0:c0 + w] if pair.gt is not None else None
            pair = ImagePair(pair.left[r0:r0 + h, c0:c0 + w],
                             pair.right[r0:r0 + h, c0:c0 + w], gt)
        return pair
    return synthetic_shift_pair(
        height=int(cfg.get("height", 50)), width=int(cfg.get("width", 60)),
        shift=int(cfg.get("shift", 10)), seed=seed,
        noise_sigma=float(cfg.get("noise_sigma", 1.5)))


def run_stereo_seed_files(cfg: dict, seed: int, out_dir: str) -> list[list]:
    """Run both engines for one seed, writing the per-seed artifacts.

    Returns aggregate rows [engine, final_mse].
    """
    scfg = _stereo_cfg(cfg)
    pair = _stereo_pair(cfg, seed)
    engines = cfg.get("engines", ["bp", "gbp"])
    rows = []
    for engine in engines:
        report = run_stereo(pair, scfg, engine=engine)
        stem = os.path.join(out_dir, f"seed_{seed:05d}_{engine}")
        if engine == "bp":
            report_to_csv(report, stem + "_pixels.csv")
        trace_lines = ["iteration,mse"]
        trace_lines += [f"{i},{_fmt(v)}" for i, v in enumerate(report.mse_trace)]
        atomic_write(stem + "_trace.csv", "\n".join(trace_lines) + "\n")
        report_to_json(report, scfg, stem + "_summary.json")
        rows.append([engine, report.mse])
    return rows


# ---------------------------------------------------------------------------
# Harness

_RUNNERS = {
    "chain": run_chain_seed,
    "tree": run_tree_seed,
    "star": run_star_seed,
    "grid": run_grid_seed,
    "prior-sweep": run_prior_sweep_seed,
    "degree-sweep": run_degree_sweep_seed,
    "convergence-rate": run_convergence_rate_seed,
    "tree-equivalence": run_tree_equivalence_seed,
}


def _seed_worker(cfg: dict, seed: int):
    header, key_cols, rows = _RUNNERS[cfg["kind"]](cfg, seed)
    return seed, header, key_cols, rows


def _stereo_worker(cfg: dict, seed: int, out_dir: str):
    return seed, run_stereo_seed_files(cfg, seed, out_dir)


def run_experiment(cfg: dict, out_dir: str, threads: int = 1,
                   full_scale: bool = False) -> dict:
    """Run one experiment config over its seed range; returns the manifest."""
    problems = validate_config(cfg)
    if problems:
        raise ConfigError("; ".join(problems))
    os.makedirs(out_dir, exist_ok=True)
    seeds = seed_range(cfg, full_scale)
    t0 = time.time()
    kind = cfg["kind"]

    if kind == "stereo":
        per_seed = {}
        header, key_cols = ["engine", "final_mse"], 1
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                for seed, rows in pool.map(_stereo_worker, [cfg] * len(seeds),
                                           seeds, [out_dir] * len(seeds)):
                    per_seed[seed] = rows
        else:
            for seed in seeds:
                per_seed[seed] = run_stereo_seed_files(cfg, seed, out_dir)
        for seed in seeds:
            write_csv(os.path.join(out_dir, f"seed_{seed:05d}.csv"),
                      header, per_seed[seed])
    else:
        per_seed = {}
        header = key_cols = None
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                for seed, header, key_cols, rows in pool.map(
                        _seed_worker, [cfg] * len(seeds), seeds):
                    per_seed[seed] = rows
        else:
            for seed in seeds:
                seed, header, key_cols, rows = _seed_worker(cfg, seed)
                per_seed[seed] = rows
        for seed in seeds:
            write_csv(os.path.join(out_dir, f"seed_{seed:05d}.csv"),
                      header, per_seed[seed])

    agg_header, agg_rows = _aggregate(per_seed, header, key_cols)
    write_csv(os.path.join(out_dir, "aggregate.csv"), agg_header, agg_rows)
    manifest = {
        "config": cfg,
        "seeds_run": seeds,
        "full_scale": full_scale,
        "wall_time_s": round(time.time() - t0, 3),
        "version": __version__,
    }
    atomic_write(os.path.join(out_dir, "manifest.json"),
                 json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
