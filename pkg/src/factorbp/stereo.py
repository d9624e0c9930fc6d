"""Stereo depth estimation on an edge-masked disparity grid.

Pipeline: load a rectified image pair, turn local photometric matching
costs into per-pixel unary priors over disparity, connect 4-neighbor
pixels with a zero-mean smoothing kernel (dropping edges across strong
intensity boundaries), then run either discretized BP or GBP and report
disparity estimates, per-pixel Gaussianity metrics, and an MSE trace
against ground truth.
"""
from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import dists
from .bp import run_sync, summarize_belief
from .dists import DiscreteDist, Grid, Kernel
from .errors import (DecodeError, DimensionMismatchError, ZeroDisparityError)
from .gbp import GaussianGraph, gbp_run_sync
from .graph import BinaryFactor, FactorGraph, UnaryFactor


# ---------------------------------------------------------------------------
# Image I/O

def _read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"P2", b"P5"):
        raise DecodeError(f"{path}: not a P2/P5 PGM file")
    # Header: magic, width, height, maxval, with '#' comments allowed.
    tokens = []
    pos = 2
    while len(tokens) < 3:
        m = re.match(rb"\s*(#[^\n]*\n|\S+)", data[pos:])
        if m is None:
            raise DecodeError(f"{path}: truncated PGM header")
        tok = m.group(1)
        pos += m.end()
        if not tok.startswith(b"#"):
            tokens.append(tok)
    width, height, maxval = (int(t) for t in tokens)
    if maxval <= 0 or maxval > 255:
        raise DecodeError(f"{path}: unsupported maxval {maxval}")
    if data[:2] == b"P5":
        pos += 1  # single whitespace byte after maxval
        raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
        if raster.size != width * height:
            raise DecodeError(f"{path}: truncated P5 raster")
    else:
        values = data[pos:].split()
        if len(values) < width * height:
            raise DecodeError(f"{path}: truncated P2 raster")
        raster = np.array([int(v) for v in values[:width * height]], dtype=np.uint8)
    return raster.reshape(height, width)


def _read_png(path) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError as e:  # pragma: no cover
        raise DecodeError("PNG support requires Pillow") from e
    try:
        img = Image.open(path)
        img.load()
    except Exception as e:
        raise DecodeError(f"{path}: {e}") from e
    if img.mode in ("L", "P"):
        return np.asarray(img.convert("L"), dtype=np.uint8)
    arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    lum = 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]
    return np.round(lum).astype(np.uint8)


def load_image(path) -> np.ndarray:
    """8-bit grayscale raster from a PGM (P2/P5) or PNG file.

    RGB inputs are converted with the 0.299/0.587/0.114 luminance weights
    and rounded.
    """
    path = str(path)
    if path.lower().endswith(".png"):
        return _read_png(path)
    return _read_pgm(path)


def read_pfm(path) -> np.ndarray:
    """Middlebury PFM disparity raster (grayscale, scale line sets endianness)."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic not in (b"Pf", b"PF"):
            raise DecodeError(f"{path}: not a PFM file")
        dims = fh.readline().split()
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * (3 if magic == b"PF" else 1)
        raster = np.frombuffer(fh.read(), dtype=dtype, count=count)
    if magic == b"PF":
        raster = raster.reshape(height, width, 3)[..., 0]
    else:
        raster = raster.reshape(height, width)
    # PFM stores rows bottom-to-top.
    return np.flipud(raster).astype(np.float64)


@dataclass
class ImagePair:
    """Rectified stereo pair with optional ground-truth disparity."""

    left: np.ndarray
    right: np.ndarray
    gt: np.ndarray | None = None

    def __post_init__(self):
        if self.left.shape != self.right.shape:
            raise DimensionMismatchError(
                f"left {self.left.shape} vs right {self.right.shape}")
        if self.gt is not None and self.gt.shape != self.left.shape:
            raise DimensionMismatchError(
                f"ground truth {self.gt.shape} vs images {self.left.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.left.shape


def load_pair(left_path, right_path, gt_path=None) -> ImagePair:
    gt = None
    if gt_path is not None:
        gt_path = str(gt_path)
        gt = read_pfm(gt_path) if gt_path.lower().endswith(".pfm") \
            else load_image(gt_path).astype(np.float64)
    return ImagePair(load_image(left_path), load_image(right_path), gt)


# ---------------------------------------------------------------------------
# Configuration

def gaussian_smoothing_kernel(sigma: float = 1.0) -> Kernel:
    """Zero-mean discretized Gaussian over disparity-difference bins.

    Truncated at +-4 sigma; encourages neighboring pixels toward similar
    disparities without biasing them.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    reach = max(1, int(np.ceil(4 * sigma)))
    offsets = np.arange(-reach, reach + 1)
    weights = np.exp(-offsets.astype(float) ** 2 / (2 * sigma * sigma))
    return Kernel(tuple(int(o) for o in offsets), tuple(weights / weights.sum()))


@dataclass
class StereoConfig:
    patch_size: int = 5
    lam: float = 0.002
    edge_threshold: float = 3.0
    edge_scale: float = 1.0
    disparity_grid: Grid = field(default_factory=lambda: Grid(64, 0.0, 63.0))
    smoothing_sigma: float = 1.0
    iterations: int = 50
    seed: int = 42
    cost: str = "sad"

    def __post_init__(self):
        if self.patch_size < 1 or self.patch_size % 2 == 0:
            raise ValueError("patch_size must be odd and >= 1")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.cost not in ("sad", "ssd"):
            raise ValueError("cost must be 'sad' or 'ssd'")


# ---------------------------------------------------------------------------
# Priors from matching costs

def _box_filter(img: np.ndarray, radius: int) -> np.ndarray:
    """Sum over a (2r+1)^2 window with edge-clamped sampling."""
    padded = np.pad(img, radius, mode="edge")
    c = np.cumsum(np.cumsum(padded, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    k = 2 * radius + 1
    h, w = img.shape
    return (c[k:k + h, k:k + w] - c[:h, k:k + w]
            - c[k:k + h, :w] + c[:h, :w])


def cost_volume(pair: ImagePair, cfg: StereoConfig) -> np.ndarray:
    """Per-pixel matching cost for every disparity bin (height, width, bins).

    Pixel (row, u) in the left image is compared against (row, u - d) in the
    right image.  Patch samples that fall off the border clamp to it, but a
    disparity whose match point u - d itself lies outside the right image is
    invalid and gets infinite cost (zero prior mass) rather than a spurious
    border comparison.
    """
    left = pair.left.astype(np.float64)
    right = pair.right.astype(np.float64)
    h, w = left.shape
    radius = cfg.patch_size // 2
    disparities = np.round(cfg.disparity_grid.centers()).astype(int)
    volume = np.empty((h, w, len(disparities)))
    cols = np.arange(w)
    for i, d in enumerate(disparities):
        shifted = right[:, np.clip(cols - d, 0, w - 1)]
        diff = left - shifted
        per_px = np.abs(diff) if cfg.cost == "sad" else diff * diff
        plane = _box_filter(per_px, radius)
        plane[:, cols - d < 0] = np.inf
        volume[:, :, i] = plane
    return volume


def priors_from_costs(volume: np.ndarray, cfg: StereoConfig) -> np.ndarray:
    """Normalized prior mass exp(-lambda * cost) per pixel (h, w, bins)."""
    logits = -cfg.lam * volume
    mass = np.exp(logits - logits.max(axis=2, keepdims=True))
    return mass / mass.sum(axis=2, keepdims=True)


def matching_cost_prior(pair: ImagePair, pixel: tuple[int, int],
                        cfg: StereoConfig) -> DiscreteDist:
    """Photometric prior over disparity for one (row, col) pixel."""
    volume = cost_volume(pair, cfg)
    mass = priors_from_costs(volume, cfg)[pixel[0], pixel[1]]
    return DiscreteDist(cfg.disparity_grid, mass)


def prior_variance_map(pair: ImagePair, cfg: StereoConfig) -> np.ndarray:
    """Variance of each pixel's photometric prior (confidence proxy)."""
    mass = priors_from_costs(cost_volume(pair, cfg), cfg)
    x = cfg.disparity_grid.centers()
    mean = mass @ x
    return mass @ (x * x) - mean * mean


# ---------------------------------------------------------------------------
# Graph assembly

def build_stereo_graph(pair: ImagePair, cfg: StereoConfig) -> FactorGraph:
    """One variable per pixel (row-major), photometric unary priors
    everywhere, smoothing kernels on 4-neighbor pairs whose intensity
    difference stays within the edge threshold."""
    h, w = pair.shape
    mass = priors_from_costs(cost_volume(pair, cfg), cfg)
    kernel = gaussian_smoothing_kernel(cfg.smoothing_sigma)
    intensity = pair.left.astype(np.float64)
    threshold = cfg.edge_threshold * cfg.edge_scale
    factors = []
    fid = 0
    for r in range(h):
        for c in range(w):
            factors.append(UnaryFactor(
                fid, r * w + c, DiscreteDist(cfg.disparity_grid, mass[r, c])))
            fid += 1
    for r in range(h):
        for c in range(w):
            for dr, dc in ((0, 1), (1, 0)):
                rr, cc = r + dr, c + dc
                if rr >= h or cc >= w:
                    continue
                if abs(intensity[r, c] - intensity[rr, cc]) > threshold:
                    continue
                factors.append(BinaryFactor(
                    fid, r * w + c, rr * w + cc, kernel))
                fid += 1
    return FactorGraph(cfg.disparity_grid, h * w, tuple(factors))


# ---------------------------------------------------------------------------
# Synthetic data

def synthetic_shift_pair(height: int = 20, width: int = 20, shift: int = 3,
                         seed: int = 42, slope_strong: float = 1.0,
                         slope_weak: float = 0.3,
                         noise_sigma: float = 1.5) -> ImagePair:
    """Left/right pair where the right image is the left shifted by ``shift``
    pixels, so ground-truth disparity is constant.

    Intensity is a piecewise-linear column ramp: a steep slope on the left
    half and a shallow one on the right, continuous at the join.  A linear
    ramp makes the aggregated matching cost an exact tent ``|d - shift|``
    whose steepness tracks the slope, so the steep half yields confident
    (low prior-variance) photometric priors and the shallow half weak ones.
    A bright rectangle with hard boundaries sits in the weak half and
    exercises the edge mask.  Each camera adds independent Gaussian sensor
    noise of scale ``noise_sigma`` on top of sub-quantization dither, so
    neither engine can localize the shift exactly; ``seed`` controls all
    randomness.  Pixels whose true match falls outside the right image
    (the leftmost ``shift`` columns) get NaN ground truth.
    """
    rng = np.random.default_rng(seed)
    # Build the scene on a canvas ``shift`` columns wider than the output so
    # both views sample genuine content.  Left pixel u must match right
    # pixel u - shift: left[u] = canvas[u], right[v] = canvas[v + shift].
    rows = np.arange(height)[:, None].astype(float)
    cols = np.arange(width + shift)[None, :].astype(float)
    half = width // 2
    ramp = np.where(cols < half, slope_strong * cols,
                    slope_strong * half + slope_weak * (cols - half))
    base = 60.0 + 10.0 * rows / max(height - 1, 1) + ramp
    obj = ((rows >= height // 3) & (rows < 2 * height // 3)
           & (cols >= int(0.6 * width)) & (cols < int(0.8 * width)))
    scene = base + np.where(obj, 90.0, 0.0)
    # Dark strip over the columns whose match falls outside the right view:
    # the hard step makes the edge mask detach these unmatched pixels so
    # their meaningless matching costs cannot drag valid neighbors.
    scene[:, :shift] -= 45.0
    canvas = np.clip(scene + rng.uniform(-0.5, 0.5, size=scene.shape), 0, 255)
    left = canvas[:, :width] + rng.normal(0.0, noise_sigma, size=(height, width))
    right = canvas[:, shift:shift + width] \
        + rng.normal(0.0, noise_sigma, size=(height, width))
    left = np.round(np.clip(left, 0, 255)).astype(np.uint8)
    right = np.round(np.clip(right, 0, 255)).astype(np.uint8)
    gt = np.full((height, width), float(shift))
    gt[:, :shift] = np.nan
    return ImagePair(left, right, gt)


# ---------------------------------------------------------------------------
# Running and reporting

@dataclass
class StereoReport:
    engine: str
    disparity: np.ndarray            # per-pixel belief mean
    kl: np.ndarray | None            # per-pixel D_KL (BP only)
    eps: np.ndarray | None           # per-pixel max standardized cumulant (BP only)
    mse: float
    mse_trace: list[float]
    prior_variance: np.ndarray
    iterations: int


def _mse(disparity: np.ndarray, gt: np.ndarray) -> float:
    """Mean squared disparity error over pixels with known ground truth.

    Unknown pixels (occlusions, matches outside the right image) are NaN
    or non-finite in the ground-truth map and are excluded, following the
    usual stereo evaluation convention.
    """
    valid = np.isfinite(gt)
    return float(np.mean((disparity[valid] - gt[valid]) ** 2))


def run_stereo(pair: ImagePair, cfg: StereoConfig, engine: str = "bp") -> StereoReport:
    """Build the disparity graph and run the selected engine.

    The MSE trace is computed against ground truth after every iteration;
    per-pixel D_KL and epsilon come from the final discretized beliefs and
    are reported for the BP engine only (GBP beliefs are Gaussian by
    construction).
    """
    if engine not in ("bp", "gbp"):
        raise ValueError("engine must be 'bp' or 'gbp'")
    if pair.gt is None:
        raise ValueError("ground-truth disparity required for MSE reporting")
    h, w = pair.shape
    graph = build_stereo_graph(pair, cfg)
    pvar = prior_variance_map(pair, cfg)
    mse_trace: list[float] = []
    x = cfg.disparity_grid.centers()

    # Initialization point: prior-only disparity estimate (no messages yet).
    prior_mass = priors_from_costs(cost_volume(pair, cfg), cfg)
    mse_trace.append(_mse(prior_mass @ x, pair.gt))

    if engine == "bp":
        def record(_t, beliefs):
            est = np.array([float(np.dot(beliefs[v].mass, x))
                            for v in range(h * w)]).reshape(h, w)
            mse_trace.append(_mse(est, pair.gt))

        beliefs, _ = run_sync(graph, cfg.iterations, track_summaries=False,
                              on_iteration=record)
        disparity = np.array([float(np.dot(beliefs[v].mass, x))
                              for v in range(h * w)]).reshape(h, w)
        kl = np.zeros((h, w))
        eps = np.zeros((h, w))
        for v in range(h * w):
            s = summarize_belief(beliefs[v])
            kl[v // w, v % w] = np.inf if s is None else s.kl_gauss
            eps[v // w, v % w] = np.inf if s is None else s.eps
    else:
        def record(_t, beliefs):
            est = np.array([beliefs[v].mean for v in range(h * w)]).reshape(h, w)
            mse_trace.append(_mse(est, pair.gt))

        beliefs, _ = gbp_run_sync(GaussianGraph(graph), cfg.iterations,
                                  track_moments=False, on_iteration=record)
        disparity = np.array([beliefs[v].mean for v in range(h * w)]).reshape(h, w)
        kl = eps = None

    return StereoReport(engine=engine, disparity=disparity, kl=kl, eps=eps,
                        mse=mse_trace[-1], mse_trace=mse_trace,
                        prior_variance=pvar, iterations=cfg.iterations)


def disparity_to_depth(d: float, f: float, B: float) -> float:
    """Depth from disparity: Z = f * B / d."""
    if d <= 0:
        raise ZeroDisparityError(f"disparity {d!r} must be positive")
    return f * B / d


def save_disparity_pgm(report: StereoReport, path) -> None:
    """Disparity map as an 8-bit P2 PGM (values clipped to [0, 255])."""
    disp = np.clip(np.round(report.disparity), 0, 255).astype(int)
    h, w = disp.shape
    with open(path, "w") as fh:
        fh.write(f"P2\n{w} {h}\n255\n")
        for row in disp:
            fh.write(" ".join(str(v) for v in row) + "\n")


def _atomic_text(path, text: str) -> None:
    """Temp-file-and-rename write so partial artifacts are never visible."""
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


def report_to_csv(report: StereoReport, path) -> None:
    """Per-pixel rows: u (column), v (row), disparity, D_KL, eps."""
    h, w = report.disparity.shape
    lines = ["u,v,disparity,kl,eps"]
    for r in range(h):
        for c in range(w):
            kl = "" if report.kl is None else repr(float(report.kl[r, c]))
            eps = "" if report.eps is None else repr(float(report.eps[r, c]))
            lines.append(f"{c},{r},{float(report.disparity[r, c])!r},{kl},{eps}")
    _atomic_text(path, "\n".join(lines) + "\n")


def report_to_json(report: StereoReport, cfg: StereoConfig, path) -> None:
    summary = {
        "engine": report.engine,
        "mse": report.mse,
        "mse_trace": report.mse_trace,
        "iterations": report.iterations,
        "config": {
            "patch_size": cfg.patch_size,
            "lambda": cfg.lam,
            "edge_threshold": cfg.edge_threshold,
            "edge_scale": cfg.edge_scale,
            "disparity_bins": cfg.disparity_grid.n_bins,
            "disparity_lo": cfg.disparity_grid.lo,
            "disparity_hi": cfg.disparity_grid.hi,
            "smoothing_sigma": cfg.smoothing_sigma,
            "iterations": cfg.iterations,
            "seed": cfg.seed,
            "cost": cfg.cost,
        },
    }
    _atomic_text(path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
