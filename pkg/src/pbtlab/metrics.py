"""Distances between empirical distributions, histograms, and sample moments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .meanfield import DensityGrid

DEFAULT_MAX_ASSIGNMENT = 2048


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted point cloud; equal weights when ``weights`` is None."""

    points: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", pts)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape[0] != pts.shape[0]:
                raise ValueError("weights must align with points")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            object.__setattr__(self, "weights", w / w.sum())

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalMeasure":
        return cls(points=np.asarray(samples, dtype=float))


def w1_sorted_1d(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """Exact 1D Wasserstein-1 via sorted pairing / quantile-function coupling."""
    if a.dim != 1 or b.dim != 1:
        raise ValueError("w1_sorted_1d requires one-dimensional measures")
    xa, xb = a.points[:, 0], b.points[:, 0]
    if a.weights is None and b.weights is None and a.size == b.size:
        return float(np.mean(np.abs(np.sort(xa) - np.sort(xb))))
    return _w1_quantile(xa, a.weights, xb, b.weights)


def _w1_quantile(xa, wa, xb, wb) -> float:
    """General weighted 1D W1 by integrating the quantile-function gap."""
    if wa is None:
        wa = np.full(xa.shape[0], 1.0 / xa.shape[0])
    if wb is None:
        wb = np.full(xb.shape[0], 1.0 / xb.shape[0])
    ia, ib = np.argsort(xa), np.argsort(xb)
    xa, wa = xa[ia], wa[ia]
    xb, wb = xb[ib], wb[ib]
    # merge the two CDF breakpoints
    ca = np.cumsum(wa)[:-1]
    cb = np.cumsum(wb)[:-1]
    qs = np.sort(np.concatenate([ca, cb, [1.0]]))
    edges = np.concatenate([[0.0], qs])
    mids = 0.5 * (edges[:-1] + edges[1:])
    widths = np.diff(edges)
    qa = xa[np.searchsorted(np.cumsum(wa), mids, side="left").clip(0, len(xa) - 1)]
    qb = xb[np.searchsorted(np.cumsum(wb), mids, side="left").clip(0, len(xb) - 1)]
    return float(np.sum(widths * np.abs(qa - qb)))


def bl_distance(a: EmpiricalMeasure, b: EmpiricalMeasure, max_n: int = DEFAULT_MAX_ASSIGNMENT) -> float:
    """Bounded-Lipschitz distance: optimal assignment under cost min(|x-y|, 1).

    Exact (assignment solver), any dimension, equal sample counts required.
    The concave truncated cost breaks sorted pairing even in 1D, so the
    assignment solution is authoritative.
    """
    if a.size != b.size:
        raise ValueError("bl_distance requires equal sample counts; subsample first")
    if a.size > max_n:
        raise ValueError(f"sample count {a.size} exceeds max_n={max_n}; subsample first")
    if a.weights is not None or b.weights is not None:
        raise ValueError("bl_distance supports equal-weight samples only")
    diff = a.points[:, None, :] - b.points[None, :, :]
    cost = np.minimum(np.sqrt(np.sum(diff ** 2, axis=-1)), 1.0)
    row, col = linear_sum_assignment(cost)
    return float(cost[row, col].mean())


def subsample(points: np.ndarray, n: int, seed: int = 0) -> np.ndarray:
    """Fixed-seed subsample without replacement (all points if fewer than n)."""
    points = np.asarray(points, dtype=float)
    if points.shape[0] <= n:
        return points
    rng = np.random.default_rng(seed)
    idx = rng.choice(points.shape[0], size=n, replace=False)
    return points[idx]


def histogram(samples: np.ndarray, bins: int, range_: tuple[float, float]) -> DensityGrid:
    """Normalized 1D histogram as a DensityGrid; out-of-range goes to edge bins."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("empty sample set")
    lo, hi = float(range_[0]), float(range_[1])
    n_out = int(np.sum((samples < lo) | (samples > hi)))
    if n_out:
        import logging

        logging.getLogger(__name__).info("histogram: %d out-of-range samples clipped to edge bins", n_out)
    clipped = np.clip(samples, lo, np.nextafter(hi, lo))
    counts, _ = np.histogram(clipped, bins=bins, range=(lo, hi))
    return DensityGrid([lo], [hi], counts / counts.sum())
