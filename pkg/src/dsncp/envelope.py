"""Global envelope tests ordered by extreme rank length, and the
simulation study harness built on them.

A test simulates patterns from a fitted model, computes one functional
summary for the data and every simulation on a shared grid, ranks whole
curves by how extreme their pointwise ranks are (extreme rank length,
lexicographic on the counts of rank-1 points, then rank-2, ...), and
reports a Monte Carlo p-value together with a global envelope.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .cluster import Extension, Family, ModelParams, sample_model
from .core import ParameterError, PointPattern, Rect, RngStream, Window
from .dpp import max_admissible_beta
from .fit import FitResult, min_contrast_fit
from .summaries import (
    F_hat,
    G_hat,
    K_hat,
    default_grid,
    default_pcf_bandwidth,
    pcf_hat,
)

STATISTICS = ("F", "G", "J", "K", "pcf")


@dataclass(frozen=True)
class CurveEnsemble:
    """An observed curve and s >= 1 simulated curves on a shared grid.

    Grid points where any curve is undefined (NaN/inf, e.g. J beyond the
    radius where F saturates) are dropped ensemble-wide on construction.
    """

    r: np.ndarray
    observed: np.ndarray
    sims: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        obs = np.asarray(self.observed, dtype=float)
        sims = np.asarray(self.sims, dtype=float)
        if r.ndim != 1 or obs.shape != r.shape:
            raise ParameterError("observed curve must match the grid")
        if sims.ndim != 2 or sims.shape[1] != r.size:
            raise ParameterError("sims must be (s, len(grid))")
        if sims.shape[0] < 1:
            raise ParameterError("need at least one simulated curve")
        keep = np.isfinite(obs) & np.isfinite(sims).all(axis=0)
        if not keep.any():
            raise ParameterError("no grid point is finite across the ensemble")
        r, obs, sims = r[keep], obs[keep], sims[:, keep]
        for a in (r, obs, sims):
            a.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "sims", sims)

    @property
    def n_sim(self) -> int:
        return self.sims.shape[0]


def _erl_order_statistics(curves: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Extreme-rank-length ordering of the rows of ``curves``.

    Returns (order_stat, group): order_stat[j] is the competition rank of
    curve j from the most extreme end (1 = most extreme, exact ties share),
    group[j] an id increasing with decreasing extremeness (ties share).
    """
    m = curves.shape[0]
    r_lo = rankdata(curves, method="min", axis=0)
    r_hi = rankdata(-curves, method="min", axis=0)
    ranks = np.minimum(r_lo, r_hi)
    # lexicographic comparison of rank-count vectors == lexicographic
    # comparison of each curve's ascending-sorted pointwise ranks
    sorted_ranks = np.sort(ranks, axis=1)
    order = np.lexsort(sorted_ranks.T[::-1])
    srt = sorted_ranks[order]
    new_group = np.concatenate(([True], np.any(srt[1:] != srt[:-1], axis=1)))
    group_of_pos = np.cumsum(new_group) - 1
    group_start = np.flatnonzero(new_group)
    stat = np.empty(m, dtype=np.int64)
    grp = np.empty(m, dtype=np.int64)
    stat[order] = group_start[group_of_pos] + 1
    grp[order] = group_of_pos
    return stat, grp


def extreme_rank_length(ensemble: CurveEnsemble) -> np.ndarray:
    """Extremeness order statistic for the observed curve and each sim.

    Element 0 is the observed curve, elements 1..s the simulations;
    1 = most extreme, exact ties share the value.
    """
    curves = np.vstack([ensemble.observed, ensemble.sims])
    stat, _ = _erl_order_statistics(curves)
    return stat


@dataclass(frozen=True)
class EnvelopeResult:
    r: np.ndarray
    observed: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    central: np.ndarray
    p_value: float
    level: float
    n_sim: int
    statistic: str | None = None

    def __post_init__(self):
        if not (np.all(self.lower <= self.central + 1e-12)
                and np.all(self.central <= self.upper + 1e-12)):
            raise ParameterError("envelope must satisfy lower <= central <= upper")
        if not 0.0 < self.p_value <= 1.0:
            raise ParameterError(f"p-value {self.p_value} outside (0, 1]")

    @property
    def rejected(self) -> bool:
        return self.p_value < 1.0 - self.level

    def to_csv(self, path: str | Path) -> None:
        data = np.column_stack((self.r, self.observed, self.lower,
                                self.upper, self.central))
        np.savetxt(path, data, fmt="%.17g", delimiter=",",
                   header="r,obs,lo,hi,central", comments="")

    def meta(self) -> dict:
        return {"p_value": self.p_value, "level": self.level,
                "n_sim": self.n_sim, "statistic": self.statistic}

    def meta_to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.meta(), indent=2) + "\n")


def global_envelope(ensemble: CurveEnsemble, level: float = 0.95,
                    statistic: str | None = None) -> EnvelopeResult:
    """Rank the ensemble by extreme rank length and build the envelope.

    The ceil(level*(s+1)) least extreme curves are retained (boundary ties
    broken by curve index, observed first); the envelope is the pointwise
    min/max of the retained simulated curves and the central curve their
    pointwise mean. p = (1 + #{sims at least as extreme as observed})/(s+1).
    """
    if not 0.0 < level < 1.0:
        raise ParameterError(f"level must be in (0, 1), got {level}")
    m = ensemble.n_sim + 1
    # 1e-9 nudges keep products like 0.8 * 5 from falling off an integer
    if math.floor((1.0 - level) * m + 1e-9) < 1:
        raise ParameterError(
            f"{ensemble.n_sim} simulations are too few for level {level}")
    curves = np.vstack([ensemble.observed, ensemble.sims])
    stat, grp = _erl_order_statistics(curves)
    p_value = (1 + int(np.count_nonzero(grp[1:] <= grp[0]))) / m

    drop = m - math.ceil(level * m - 1e-9)
    by_extremeness = np.lexsort((np.arange(m), stat))
    dropped = by_extremeness[:drop]
    keep_sims = np.setdiff1d(np.arange(1, m), dropped)
    if keep_sims.size == 0:
        raise ParameterError("no simulated curve retained; level too low")
    retained = ensemble.sims[keep_sims - 1]
    return EnvelopeResult(r=ensemble.r, observed=ensemble.observed,
                          lower=retained.min(axis=0),
                          upper=retained.max(axis=0),
                          central=retained.mean(axis=0),
                          p_value=p_value, level=level,
                          n_sim=ensemble.n_sim, statistic=statistic)


def _curve_values(p: PointPattern, statistic: str, grid: np.ndarray,
                  bandwidth: float | None = None) -> np.ndarray:
    if statistic == "K":
        return K_hat(p, grid).values
    if statistic == "pcf":
        return pcf_hat(p, grid, bandwidth=bandwidth).values
    if statistic == "F":
        return F_hat(p, grid).values
    if statistic == "G":
        return G_hat(p, grid).values
    if statistic == "J":
        f = F_hat(p, grid).values
        g = G_hat(p, grid).values
        ok = np.isfinite(f) & np.isfinite(g) & (f < 1.0)
        out = np.full(grid.size, np.nan)
        out[ok] = (1.0 - g[ok]) / (1.0 - f[ok])
        return out
    raise ParameterError(f"unknown statistic {statistic!r}; "
                         f"choose one of {STATISTICS}")


def _sim_curve_task(args) -> np.ndarray:
    m, w, ext, stream, statistic, grid, bandwidth = args
    pattern = sample_model(m, w, ext=ext, rng=stream)
    return _curve_values(pattern, statistic, grid, bandwidth)


def envelope_test(p: PointPattern, fitted: FitResult | ModelParams,
                  statistic: str = "J", n_sim: int = 2499,
                  ext: Extension | None = None,
                  rng: RngStream | None = None, level: float = 0.95,
                  jobs: int = 1) -> EnvelopeResult:
    """Goodness-of-fit test of a fitted model against the data pattern.

    Simulates ``n_sim`` patterns from the fitted model on the data window
    (one RngStream substream each, so results are independent of execution
    order), evaluates the chosen statistic everywhere on a shared grid, and
    runs the global envelope. 2499 simulations is the recommended default;
    199 is a usable fast mode.
    """
    if statistic not in STATISTICS:
        raise ParameterError(f"unknown statistic {statistic!r}; "
                             f"choose one of {STATISTICS}")
    if rng is None:
        raise ParameterError("an RngStream is required")
    if level == 0.95 and n_sim + 1 < 100:
        raise ParameterError(
            f"need at least 99 simulations at level 0.95, got {n_sim}")
    model = fitted.model() if isinstance(fitted, FitResult) else fitted
    grid = default_grid(p.window)
    bandwidth = None
    if statistic == "pcf":
        bandwidth = default_pcf_bandwidth(p)
        grid = grid[grid > bandwidth / 2.0]
        if grid.size == 0:
            raise ParameterError("pcf grid is empty after the bandwidth cut")
    observed = _curve_values(p, statistic, grid, bandwidth)
    tasks = [(model, p.window, ext, rng.substream(i), statistic, grid,
              bandwidth) for i in range(n_sim)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sim_curve_task, tasks,
                                 chunksize=max(1, n_sim // (8 * jobs))))
    else:
        rows = [_sim_curve_task(t) for t in tasks]
    ensemble = CurveEnsemble(grid, observed, np.vstack(rows))
    return global_envelope(ensemble, level=level, statistic=statistic)


@dataclass(frozen=True)
class StudyConfig:
    """Parameter grid and protocol for the misspecification study."""

    alpha_values: tuple[float, ...]
    gamma_values: tuple[float, ...]
    rho_values: tuple[float, ...]
    families: tuple[Family, ...] = tuple(Family)
    fitted_families: tuple[Family, ...] | None = None
    replicates: int = 100
    n_sim: int = 1999
    statistic: str = "J"
    level: float = 0.95
    seed: int = 0
    jobs: int = 1
    window: Rect = field(default_factory=lambda: Rect(0.0, 1.0, 0.0, 1.0))

    def __post_init__(self):
        object.__setattr__(self, "families",
                           tuple(Family(f) for f in self.families))
        if self.fitted_families is not None:
            object.__setattr__(self, "fitted_families",
                               tuple(Family(f) for f in self.fitted_families))
        for name in ("alpha_values", "gamma_values", "rho_values"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals or any(v <= 0 for v in vals):
                raise ParameterError(f"{name} must be positive and non-empty")
            object.__setattr__(self, name, vals)
        if self.replicates < 1 or self.n_sim < 1:
            raise ParameterError("replicates and n_sim must be >= 1")
        if self.statistic not in STATISTICS:
            raise ParameterError(f"unknown statistic {self.statistic!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        d = dict(d)
        if "window" in d and not isinstance(d["window"], Rect):
            d["window"] = Rect(*d["window"])
        for k in ("families", "fitted_families"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


STUDY_CSV_HEADER = ("true_family,fitted_family,alpha,gamma,rhoY,"
                    "reject_rate,mean_rhoY_ratio")


@dataclass(frozen=True)
class StudyRow:
    true_family: Family
    fitted_family: Family
    alpha: float
    gamma: float
    rho_Y: float
    reject_rate: float
    mean_rhoY_ratio: float
    replicates_ok: int

    def csv_line(self) -> str:
        return ",".join([
            self.true_family.value, self.fitted_family.value,
            *(f"{v:.17g}" for v in (self.alpha, self.gamma, self.rho_Y,
                                    self.reject_rate, self.mean_rhoY_ratio)),
        ])


@dataclass
class StudyResult:
    rows: list[StudyRow]
    errors: list[dict]

    def to_csv(self, path: str | Path) -> None:
        lines = [STUDY_CSV_HEADER] + [row.csv_line() for row in self.rows]
        Path(path).write_text("\n".join(lines) + "\n")

    def errors_to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.errors, indent=2) + "\n")


def _true_model(family: Family, gamma: float, alpha: float,
                rho: float) -> ModelParams:
    if family is Family.THOMAS:
        return ModelParams(family=family, gamma=gamma, alpha=alpha, rho_Y=rho)
    return ModelParams.most_repulsive(family=family, gamma=gamma, alpha=alpha,
                                      beta=max_admissible_beta(rho))


def run_study(config: StudyConfig,
              cell_indices: set[int] | None = None) -> StudyResult:
    """Cross-family misspecification study.

    For every true family and parameter combination, each replicate
    simulates one pattern, fits the configured other families by minimum
    contrast, and envelope-tests each fit. Per-replicate failures are
    recorded and skipped, never fatal. Emits rejection rates and mean
    fitted-to-true centre intensity ratios per cell.

    ``cell_indices`` restricts execution to those positions of the full
    (families x alphas x gammas x rhos) cell enumeration without changing
    any cell's random streams, so an interrupted study resumed cell by
    cell reproduces the uninterrupted run bit for bit.
    """
    base = RngStream(seed=config.seed)
    rows: list[StudyRow] = []
    errors: list[dict] = []
    cells = list(product(config.families,
                         config.alpha_values, config.gamma_values,
                         config.rho_values))
    for cell_idx, (fam_true, alpha, gamma, rho) in enumerate(cells):
        if cell_indices is not None and cell_idx not in cell_indices:
            continue
        fitted_families = config.fitted_families or tuple(
            f for f in Family if f is not fam_true)
        m_true = _true_model(fam_true, gamma, alpha, rho)
        tallies = {f: {"reject": 0, "ratio": 0.0, "ok": 0}
                   for f in fitted_families}
        for rep in range(config.replicates):
            rep_rng = base.substream(cell_idx * config.replicates + rep)
            try:
                pattern = sample_model(m_true, config.window,
                                       rng=rep_rng.substream(0))
            except Exception as exc:
                errors.append({"true_family": fam_true.value, "alpha": alpha,
                               "gamma": gamma, "rhoY": rho, "replicate": rep,
                               "stage": "simulate", "error": str(exc)})
                continue
            for k, fam_fit in enumerate(fitted_families):
                try:
                    fit = min_contrast_fit(pattern, fam_fit)
                    res = envelope_test(pattern, fit,
                                        statistic=config.statistic,
                                        n_sim=config.n_sim,
                                        rng=rep_rng.substream(1 + k),
                                        level=config.level, jobs=config.jobs)
                except Exception as exc:
                    errors.append({"true_family": fam_true.value,
                                   "fitted_family": fam_fit.value,
                                   "alpha": alpha, "gamma": gamma,
                                   "rhoY": rho, "replicate": rep,
                                   "stage": "fit/test", "error": str(exc)})
                    continue
                t = tallies[fam_fit]
                t["reject"] += int(res.p_value < 1.0 - config.level)
                t["ratio"] += fit.rho_Y / rho
                t["ok"] += 1
        for fam_fit in fitted_families:
            t = tallies[fam_fit]
            ok = t["ok"]
            rows.append(StudyRow(
                true_family=fam_true, fitted_family=fam_fit, alpha=alpha,
                gamma=gamma, rho_Y=rho,
                reject_rate=t["reject"] / ok if ok else math.nan,
                mean_rhoY_ratio=t["ratio"] / ok if ok else math.nan,
                replicates_ok=ok))
    return StudyResult(rows=rows, errors=errors)
