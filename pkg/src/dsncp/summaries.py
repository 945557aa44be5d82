"""Second-order and distance-based summaries, theoretical and empirical.

Closed forms (pair correlation, Ripley's K, the pcf crossover radius) exist
for all three cluster families. The empirical side provides a
translation-corrected K estimator, an Epanechnikov-kernel pair correlation
estimator, and border-corrected F/G/J estimators; these are the inputs to
minimum-contrast fitting and envelope testing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .cluster import Family, ModelParams
from .core import (
    InsufficientPointsError,
    ParameterError,
    PointPattern,
    Rect,
    UnsupportedWindowError,
    Window,
    regularized_gamma_cdf,
)

_STATISTICS = ("pcf", "K", "F", "G", "J")


@dataclass(frozen=True)
class SummaryCurve:
    """A summary statistic evaluated on a grid of distances."""

    r: np.ndarray
    values: np.ndarray
    statistic: str
    kind: str
    warning: str | None = None

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or v.shape != r.shape:
            raise ParameterError("r and values must be 1-D and equal length")
        if r.size and (np.any(r < 0) or np.any(np.diff(r) <= 0)):
            raise ParameterError("grid must be nonnegative, strictly increasing")
        if self.statistic not in _STATISTICS:
            raise ParameterError(f"unknown statistic {self.statistic!r}")
        if self.kind not in ("theoretical", "empirical"):
            raise ParameterError(f"unknown kind {self.kind!r}")
        r.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", v)

    def to_csv(self, path: str | Path) -> None:
        np.savetxt(path, np.column_stack((self.r, self.values)),
                   fmt="%.17g", delimiter=",", header="r,value", comments="")


def default_grid(w: Window, size: int = 513) -> np.ndarray:
    """r grid from 0 to a quarter of the shorter window side."""
    if isinstance(w, Rect):
        short = min(w.side_lengths)
    else:
        short = 2.0 * w.radius
    return np.linspace(0.0, short / 4.0, size)


def _gamma_cdf_vec(shape: float, x: np.ndarray) -> np.ndarray:
    if shape == 1.0:
        return -np.expm1(-x)
    flat = np.asarray(x, dtype=float).ravel()
    out = np.array([regularized_gamma_cdf(shape, float(t)) for t in flat])
    return out.reshape(np.shape(x))


def pcf_theoretical(m: ModelParams, r, d: int = 2):
    """Pair correlation function of the model at distance(s) r.

    The DSNCP pcf is 1 + (cluster term) - (DPP repulsion term); the Thomas
    pcf has no repulsion term. Vectorized over r.
    """
    r = np.asarray(r, dtype=float)
    a2 = 4.0 * m.alpha ** 2
    cluster = np.exp(-r * r / a2) / ((math.pi * a2) ** (d / 2) * m.rho_Y)
    if m.family is Family.THOMAS:
        out = 1.0 + cluster
    elif m.family is Family.GAUSSIAN:
        v = a2 + m.beta ** 2 / 2.0
        out = 1.0 + cluster - (m.beta ** 2 / 2.0 / v) ** (d / 2) * np.exp(-r * r / v)
    elif m.family is Family.GINIBRE:
        if d != 2:
            raise ParameterError("the Ginibre family is planar (d = 2) only")
        v = a2 + m.beta ** 2
        out = 1.0 + cluster - m.beta ** 2 / v * np.exp(-r * r / v)
    else:
        raise ParameterError(f"unknown family {m.family!r}")
    return float(out) if np.ndim(out) == 0 else out


def K_theoretical(m: ModelParams, r, d: int = 2):
    """Ripley's K function of the model at distance(s) r. Vectorized."""
    r = np.asarray(r, dtype=float)
    a2 = 4.0 * m.alpha ** 2
    omega = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    ball = omega * r ** d
    cluster = _gamma_cdf_vec(d / 2, r * r / a2) / m.rho_Y
    if m.family is Family.THOMAS:
        out = ball + cluster
    elif m.family is Family.GAUSSIAN:
        v = a2 + m.beta ** 2 / 2.0
        out = ball + cluster \
            - (math.pi * m.beta ** 2 / 2.0) ** (d / 2) * _gamma_cdf_vec(d / 2, r * r / v)
    elif m.family is Family.GINIBRE:
        if d != 2:
            raise ParameterError("the Ginibre family is planar (d = 2) only")
        v = a2 + m.beta ** 2
        out = ball + cluster + math.pi * m.beta ** 2 * np.expm1(-r * r / v)
    else:
        raise ParameterError(f"unknown family {m.family!r}")
    return float(out) if np.ndim(out) == 0 else out


def pcf_crossover_radius(m: ModelParams, d: int = 2) -> float:
    """The radius r* where the DSNCP pcf crosses 1.

    Below r* the process looks clustered (g > 1), beyond it repulsive
    (g < 1). Thomas processes never cross (g > 1 everywhere).
    """
    if m.family is Family.THOMAS:
        raise ParameterError(
            "the Thomas pcf exceeds 1 everywhere; no crossover exists")
    a2 = 4.0 * m.alpha ** 2
    if m.family is Family.GAUSSIAN:
        v = a2 + m.beta ** 2 / 2.0
        arg = m.rho_Y * (2.0 * math.pi * m.alpha ** 2 * m.beta ** 2 / v) ** (d / 2)
    else:
        if d != 2:
            raise ParameterError("the Ginibre family is planar (d = 2) only")
        v = a2 + m.beta ** 2
        arg = m.rho_Y * 4.0 * math.pi * m.alpha ** 2 * m.beta ** 2 / v
    if not 0.0 < arg < 1.0:
        raise ParameterError(
            f"degenerate parameters: crossover log argument {arg} not in (0,1)")
    r_sq = math.log(arg) / (1.0 / v - 1.0 / a2)
    return math.sqrt(r_sq)


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1:
        raise ParameterError("grid must be 1-D")
    if g.size and (np.any(g < 0) or np.any(np.diff(g) <= 0)):
        raise ParameterError("grid must be nonnegative, strictly increasing")
    return g


def _pair_blocks(pts: np.ndarray, w: Rect, rmax: float):
    """Yield (distance, translation-weight) arrays over ordered point pairs
    with distance <= rmax, in manageable blocks."""
    n = pts.shape[0]
    lx, ly = w.side_lengths
    block = max(1, int(2_000_000 // max(n, 1)))
    for s in range(0, n, block):
        sub = pts[s:s + block]
        dx = np.abs(sub[:, 0][:, None] - pts[:, 0][None, :])
        dy = np.abs(sub[:, 1][:, None] - pts[:, 1][None, :])
        d = np.hypot(dx, dy)
        rows = np.arange(s, min(s + block, n))
        d[rows - s, rows] = np.inf  # drop self-pairs
        mask = (d <= rmax) & (dx < lx) & (dy < ly)
        area = (lx - dx[mask]) * (ly - dy[mask])
        yield d[mask], 1.0 / area


def K_hat(p: PointPattern, grid) -> SummaryCurve:
    """Translation-corrected empirical K function on a rectangle.

    K_hat(r) = |W|^2/(n(n-1)) * sum over ordered pairs of
    1[dist <= r] / area(W intersect W shifted by the pair difference).
    """
    if not isinstance(p.window, Rect):
        raise UnsupportedWindowError("K_hat needs a rectangular window")
    if p.n < 2:
        raise InsufficientPointsError(f"K_hat needs n >= 2, got n={p.n}")
    grid = _check_grid(grid)
    if grid.size == 0:
        return SummaryCurve(grid, np.zeros(0), "K", "empirical")
    hist = np.zeros(grid.size)
    for d, wgt in _pair_blocks(p.points, p.window, float(grid[-1])):
        idx = np.searchsorted(grid, d, side="left")
        hist += np.bincount(idx, weights=wgt, minlength=grid.size)
    vals = np.cumsum(hist) * p.window.area ** 2 / (p.n * (p.n - 1))
    return SummaryCurve(grid, vals, "K", "empirical")


def default_pcf_bandwidth(p: PointPattern) -> float:
    return 0.15 / math.sqrt(p.n / p.window.area)


def pcf_hat(p: PointPattern, grid, bandwidth: float | None = None) -> SummaryCurve:
    """Kernel (Epanechnikov) estimate of the pair correlation function,
    translation-corrected. The grid must start above bandwidth/2."""
    if not isinstance(p.window, Rect):
        raise UnsupportedWindowError("pcf_hat needs a rectangular window")
    if p.n < 2:
        raise InsufficientPointsError(f"pcf_hat needs n >= 2, got n={p.n}")
    grid = _check_grid(grid)
    b = default_pcf_bandwidth(p) if bandwidth is None else float(bandwidth)
    if not b > 0:
        raise ParameterError(f"bandwidth must be > 0, got {b}")
    if grid.size == 0:
        return SummaryCurve(grid, np.zeros(0), "pcf", "empirical")
    if grid[0] <= b / 2.0:
        raise ParameterError(
            f"grid must start above bandwidth/2 = {b / 2}, got {grid[0]}")
    parts = list(_pair_blocks(p.points, p.window, float(grid[-1]) + b))
    if parts:
        d = np.concatenate([q[0] for q in parts])
        wgt = np.concatenate([q[1] for q in parts])
    else:
        d = np.zeros(0)
        wgt = np.zeros(0)
    order = np.argsort(d)
    d, wgt = d[order], wgt[order]
    # Epanechnikov sums via prefix sums of w, w*d, w*d^2:
    # k_b(r-d) = 0.75/b * (1 - (r-d)^2/b^2), support |r-d| <= b
    s0 = np.concatenate(([0.0], np.cumsum(wgt)))
    s1 = np.concatenate(([0.0], np.cumsum(wgt * d)))
    s2 = np.concatenate(([0.0], np.cumsum(wgt * d * d)))
    lo = np.searchsorted(d, grid - b, side="left")
    hi = np.searchsorted(d, grid + b, side="right")
    w0 = s0[hi] - s0[lo]
    w1 = s1[hi] - s1[lo]
    w2 = s2[hi] - s2[lo]
    ksum = 0.75 / b * ((1.0 - grid ** 2 / b ** 2) * w0
                       + 2.0 * grid / b ** 2 * w1 - w2 / b ** 2)
    vals = ksum * p.window.area ** 2 / (2 * math.pi * grid * p.n * (p.n - 1))
    return SummaryCurve(grid, vals, "pcf", "empirical")


def _test_lattice(w: Window) -> np.ndarray:
    """Regular lattice of test points covering the window (cell centres)."""
    if isinstance(w, Rect):
        short = min(w.side_lengths)
    else:
        short = 2.0 * w.radius
    h = short / 128.0
    rect = w if isinstance(w, Rect) else w.bounding_rect
    nx = max(1, int(math.floor((rect.xmax - rect.xmin) / h)))
    ny = max(1, int(math.floor((rect.ymax - rect.ymin) / h)))
    xs = rect.xmin + (np.arange(nx) + 0.5) * h
    ys = rect.ymin + (np.arange(ny) + 0.5) * h
    lattice = np.column_stack([g.ravel() for g in np.meshgrid(xs, ys)])
    if not isinstance(w, Rect):
        lattice = lattice[w.contains(lattice)]
    return lattice


def _border_corrected_fraction(dist: np.ndarray, bdist: np.ndarray,
                               grid: np.ndarray) -> np.ndarray:
    """For each r: among reference points with boundary distance >= r, the
    fraction whose measured distance is <= r (NaN when none qualify).

    Counting runs through a 2-D histogram over (boundary-bin, distance-bin)
    so the whole curve costs O(len + grid^2) instead of O(len * grid).
    """
    g = grid.size
    b_idx = np.searchsorted(grid, bdist, side="right") - 1  # bin j: bdist >= r_k iff j >= k
    d_idx = np.searchsorted(grid, dist, side="left")        # bin c: dist <= r_k iff c <= k
    ok = b_idx >= 0
    hist = np.zeros((g, g + 1))
    np.add.at(hist, (b_idx[ok], np.minimum(d_idx[ok], g)), 1.0)
    row_suffix = np.cumsum(hist[::-1], axis=0)[::-1]
    eligible = row_suffix.sum(axis=1)
    num = np.cumsum(row_suffix, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(eligible > 0,
                        num[np.arange(g), np.arange(g)] / eligible,
                        np.nan)


def F_hat(p: PointPattern, grid) -> SummaryCurve:
    """Border-corrected empty-space function over a 128-per-side lattice."""
    grid = _check_grid(grid)
    lattice = _test_lattice(p.window)
    if p.n:
        dist, _ = cKDTree(p.points).query(lattice)
    else:
        dist = np.full(lattice.shape[0], np.inf)
    bdist = p.window.boundary_distance(lattice)
    vals = _border_corrected_fraction(dist, bdist, grid)
    return SummaryCurve(grid, vals, "F", "empirical")


def G_hat(p: PointPattern, grid) -> SummaryCurve:
    """Border-corrected nearest-neighbour distance distribution."""
    if p.n < 2:
        raise InsufficientPointsError(f"G_hat needs n >= 2, got n={p.n}")
    grid = _check_grid(grid)
    dist, _ = cKDTree(p.points).query(p.points, k=2)
    bdist = p.window.boundary_distance(p.points)
    vals = _border_corrected_fraction(dist[:, 1], bdist, grid)
    return SummaryCurve(grid, vals, "G", "empirical")


def J_hat(p: PointPattern, grid) -> SummaryCurve:
    """J = (1-G)/(1-F), kept only where F_hat is defined and < 1."""
    grid = _check_grid(grid)
    f = F_hat(p, grid)
    g = G_hat(p, grid)
    valid = np.isfinite(f.values) & np.isfinite(g.values) & (f.values < 1.0)
    warning = None
    if not valid.any():
        warning = "J undefined on the whole grid (F_hat saturates)"
    return SummaryCurve(grid[valid], (1.0 - g.values[valid])
                        / (1.0 - f.values[valid]), "J", "empirical",
                        warning=warning)
