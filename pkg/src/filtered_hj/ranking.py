"""PDE-based ranking of 2-D point clouds and exact Pareto peeling for comparison."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage, stats
from scipy.interpolate import RegularGridInterpolator

from .grid import GridFunction, GridSpec
from .hj_solver import SchemeConfig, sweep_solve


@dataclass(frozen=True)
class PointCloud:
    """Points mapped to ``[0, 1]^2`` by a per-axis affine map.

    ``raw = lo + points * (hi - lo)``.
    """

    points: np.ndarray
    raw: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @property
    def count(self) -> int:
        return len(self.points)

    @classmethod
    def from_array(cls, raw) -> "PointCloud":
        raw = np.asarray(raw, dtype=float)
        if raw.ndim != 2 or raw.shape[1] != 2:
            raise ValueError("expected an (M, 2) array of points")
        if len(raw) < 2:
            raise ValueError("need at least 2 points")
        if not np.all(np.isfinite(raw)):
            raise ValueError("points must be finite")
        lo = raw.min(axis=0)
        hi = raw.max(axis=0)
        if np.any(hi <= lo):
            raise ValueError("degenerate cloud: zero range on an axis")
        return cls((raw - lo) / (hi - lo), raw, lo, hi)


@dataclass(frozen=True)
class RankResult:
    pde_rank: np.ndarray
    exact_layer: np.ndarray
    agreement: float


def load_points(path: str | Path) -> PointCloud:
    """Read ``x1,x2`` rows (an ``x1,x2`` header line is allowed)."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and [c.strip().lower() for c in row] == ["x1", "x2"]:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value in {row}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}:{lineno}: non-finite value in {row}")
            rows.append(vals)
    return PointCloud.from_array(np.array(rows, dtype=float).reshape(-1, 2))


def cell_histogram(cloud: PointCloud, spec: GridSpec) -> np.ndarray:
    """Counts per cell divided by ``M h^2``; the cell values integrate to 1."""
    N = spec.intervals
    idx = np.minimum((cloud.points * N).astype(np.int64), N - 1)
    counts = np.zeros((N, N))
    np.add.at(counts, (idx[:, 0], idx[:, 1]), 1.0)
    return counts / (cloud.count * spec.h ** 2)


def estimate_density(cloud: PointCloud, spec: GridSpec, smoothing_passes: int = 0) -> GridFunction:
    """Histogram density mapped to nodes, then ``smoothing_passes`` 3x3 mean filters.

    Each node takes the mean of the cells touching it, so the trapezoidal
    integral of the node values equals the histogram integral.
    """
    if spec.dim != 2:
        raise ValueError("density estimation is 2-D only")
    if smoothing_passes < 0:
        raise ValueError("smoothing_passes must be non-negative")
    cells = cell_histogram(cloud, spec)
    padded = np.pad(cells, 1)
    ones = np.pad(np.ones_like(cells), 1)
    total = padded[:-1, :-1] + padded[1:, :-1] + padded[:-1, 1:] + padded[1:, 1:]
    touching = ones[:-1, :-1] + ones[1:, :-1] + ones[:-1, 1:] + ones[1:, 1:]
    nodes = total / touching
    for _ in range(smoothing_passes):
        nodes = ndimage.uniform_filter(nodes, size=3, mode="nearest")
    # the running-sum filter leaves ~1e-17 negatives where the density is zero
    np.maximum(nodes, 0.0, out=nodes)
    return GridFunction(spec, nodes)


def trapezoid_integral(g: GridFunction) -> float:
    vals = g.values
    for _ in range(g.spec.dim):
        vals = np.trapezoid(vals, dx=g.spec.h, axis=0)
    return float(vals)


def interpolate(g: GridFunction, points: np.ndarray) -> np.ndarray:
    """Bilinear (multilinear) interpolation of grid values at points in the cube."""
    interp = RegularGridInterpolator(g.spec.axes(), g.values, method="linear")
    return interp(np.clip(points, 0.0, 1.0))


def pde_rank(cloud: PointCloud, spec: GridSpec, cfg: SchemeConfig | None = None,
             smoothing_passes: int = 2, density: GridFunction | None = None) -> np.ndarray:
    """Continuum rank ``u_h`` at each point.

    ``density`` bypasses the histogram estimate when given.
    """
    cfg = cfg or SchemeConfig(order=2, filtered=True)
    f = density if density is not None else estimate_density(cloud, spec, smoothing_passes)
    sol = sweep_solve(f, spec, cfg)
    return interpolate(sol.u, cloud.points)


# {{{ nondominated sorting


def pareto_peel(points) -> np.ndarray:
    """Layer index (1 = minimal) of each 2-D point, in ``O(M log M)``.

    A point's layer is one more than the deepest layer holding a point that
    dominates it.  Scanning in lexicographic order, the smallest second
    coordinate seen so far in each layer is nondecreasing in the layer index,
    so the layer is found by bisection.  Equal points share a layer.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("pareto_peel fast path is 2-D only")
    M = len(pts)
    layers = np.zeros(M, dtype=np.int64)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    tails: list[float] = []
    prev = None
    prev_layer = 0
    for i in order:
        p = (pts[i, 0], pts[i, 1])
        if p == prev:
            layers[i] = prev_layer
            continue
        L = bisect.bisect_right(tails, p[1])
        if L == len(tails):
            tails.append(p[1])
        else:
            tails[L] = p[1]
        layers[i] = prev_layer = L + 1
        prev = p
    return layers


def pareto_peel_naive(points) -> np.ndarray:
    """Reference peeling: repeatedly remove all minimal points (any dimension).

    Builds the full dominance matrix, ``O(M^2)`` memory and time per layer.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("expected an (M, n) array of points")
    le = np.all(pts[:, None, :] <= pts[None, :, :], axis=2)
    lt = np.any(pts[:, None, :] < pts[None, :, :], axis=2)
    dominates = le & lt  # dominates[a, b]: a dominates b
    layers = np.zeros(len(pts), dtype=np.int64)
    alive = np.ones(len(pts), dtype=bool)
    layer = 0
    while alive.any():
        layer += 1
        minimal = alive & ~np.any(dominates[alive], axis=0)
        layers[minimal] = layer
        alive &= ~minimal
    return layers


# }}}


def compare_rankings(pde: np.ndarray, exact_layer: np.ndarray) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    pde = np.asarray(pde, dtype=float)
    exact_layer = np.asarray(exact_layer, dtype=float)
    if pde.shape != exact_layer.shape:
        raise ValueError("rankings must have the same length")
    return float(stats.spearmanr(pde, exact_layer).statistic)


def rank_cloud(cloud: PointCloud, mesh: int = 128, cfg: SchemeConfig | None = None,
               smoothing_passes: int = 2) -> RankResult:
    spec = GridSpec(2, mesh)
    ranks = pde_rank(cloud, spec, cfg, smoothing_passes)
    layers = pareto_peel(cloud.points)
    return RankResult(ranks, layers, compare_rankings(ranks, layers))


def write_ranks(cloud: PointCloud, result: RankResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["x1", "x2", "pde_rank", "exact_layer"])
        for (x1, x2), r, L in zip(cloud.raw, result.pde_rank, result.exact_layer):
            out.writerow([repr(float(x1)), repr(float(x2)), repr(float(r)), int(L)])
