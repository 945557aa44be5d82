"""Simulation of Thomas and DPP-Thomas cluster processes.

All three models scatter Poisson(gamma)-sized clusters of isotropic Gaussian
offspring (sd alpha) around unobserved centres of intensity rho_Y; they
differ in the centre process: homogeneous Poisson (Thomas) or a determinantal
process with Gaussian or Ginibre kernel. Centres are sampled on a window
extended by a margin so that clusters centred just outside the window still
contribute their points inside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import Disc, ParameterError, PointPattern, Rect, RngStream, Window
from .dpp import (
    GaussianDpp,
    GinibreDpp,
    GinibreParams,
    _cached_gaussian_spectrum,
    _cached_ginibre_spectrum,
    most_repulsive_intensity,
    sample_dpp,
    validate_dpp_params,
)


class Family(str, Enum):
    THOMAS = "thomas"
    GAUSSIAN = "gaussian-dpp-thomas"
    GINIBRE = "ginibre-dpp-thomas"

    @property
    def is_dpp(self) -> bool:
        return self is not Family.THOMAS


@dataclass(frozen=True)
class ModelParams:
    """Parameters of one cluster model.

    gamma: mean offspring per cluster; alpha: offspring standard deviation;
    rho_Y: centre intensity; beta: DPP kernel scale (None for Thomas).
    """

    family: Family
    gamma: float
    alpha: float
    rho_Y: float
    beta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        for name in ("gamma", "alpha", "rho_Y"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.family.is_dpp:
            if self.beta is None:
                raise ParameterError(f"{self.family.value} requires beta")
            validate_dpp_params(self.dpp_family())
        elif self.beta is not None:
            raise ParameterError("beta is not a Thomas parameter")

    @classmethod
    def most_repulsive(cls, family: Family | str, gamma: float, alpha: float,
                       beta: float) -> "ModelParams":
        """Construct with rho_Y = 1/(pi beta^2), saturating the existence
        bound. For the Thomas family beta only sets rho_Y and is not stored.
        """
        family = Family(family)
        rho = most_repulsive_intensity(beta)
        return cls(family, gamma, alpha, rho,
                   beta=beta if family.is_dpp else None)

    def dpp_family(self) -> GaussianDpp | GinibreDpp:
        if self.family is Family.GAUSSIAN:
            return GaussianDpp(self.rho_Y, self.beta)
        if self.family is Family.GINIBRE:
            return GinibreDpp(self.rho_Y, self.beta)
        raise ParameterError("Thomas model has no DPP kernel")

    @property
    def rho_X(self) -> float:
        return self.gamma * self.rho_Y


@dataclass(frozen=True)
class Extension:
    """Margin added on all sides of the window before sampling centres."""

    margin: float

    def __post_init__(self):
        if not self.margin >= 0:
            raise ParameterError(f"margin must be >= 0, got {self.margin}")


def default_extension(m: ModelParams) -> Extension:
    """Four offspring standard deviations: clusters centred further out
    contribute negligibly."""
    return Extension(4.0 * m.alpha)


def intensity(m: ModelParams) -> float:
    """Intensity of the cluster process: gamma * rho_Y."""
    return m.rho_X


def sample_centres(m: ModelParams, w: Window, ext: Extension,
                   rng: RngStream) -> PointPattern:
    """Draw the (unobserved) centre process on the extended window.

    Thomas centres are homogeneous Poisson. DPP centres are sampled
    spectrally on a covering domain (the extended rectangle for the Gaussian
    kernel; for Ginibre, the disc circumscribing the extended window, since
    the spectral representation lives on a disc) and then restricted.
    """
    w_ext = w.grow(ext.margin)
    gen = rng.generator
    if m.family is Family.THOMAS:
        n = gen.poisson(m.rho_Y * w_ext.area)
        return PointPattern(w_ext.sample_uniform(int(n), gen), w_ext)
    if m.family is Family.GAUSSIAN:
        rect = w_ext if isinstance(w_ext, Rect) else w_ext.bounding_rect
        spec = _cached_gaussian_spectrum(
            m.rho_Y, m.beta, (rect.xmin, rect.xmax, rect.ymin, rect.ymax))
        return sample_dpp(spec, rng).restrict(w_ext)
    p = GinibreParams.from_family(m.dpp_family())
    cx, cy = w_ext.center
    spec = _cached_ginibre_spectrum(p.nu, p.lam, w_ext.circumradius)
    pat = sample_dpp(spec, rng)
    # the kernel is motion-invariant, so sampling on a centred disc and
    # shifting is the same as sampling around the window centre
    return PointPattern(pat.points + np.array([cx, cy]),
                        Disc(cx, cy, w_ext.circumradius)).restrict(w_ext)


def sample_cluster(centre, gamma: float, alpha: float,
                   rng: RngStream) -> np.ndarray:
    """One cluster: Poisson(gamma) points scattered N2(centre, alpha^2 I)."""
    if not gamma > 0 or not alpha > 0:
        raise ParameterError("gamma and alpha must be > 0")
    gen = rng.generator
    n = int(gen.poisson(gamma))
    return np.asarray(centre, dtype=float) + gen.normal(0.0, alpha, (n, 2))


def sample_model(m: ModelParams, w: Window, ext: Extension | None = None,
                 rng: RngStream | None = None) -> PointPattern:
    """Simulate the cluster process on ``w``.

    Centres are drawn on the extended window (default margin 4*alpha),
    cluster sizes in centre order, then all offspring displacements in one
    draw; the union is clipped to ``w``. Deterministic given the stream.
    """
    if ext is None:
        ext = default_extension(m)
    if rng is None:
        raise ParameterError("an RngStream is required")
    centres = sample_centres(m, w, ext, rng)
    gen = rng.generator
    sizes = gen.poisson(m.gamma, centres.n) if centres.n else np.zeros(0, int)
    total = int(sizes.sum())
    offsets = gen.normal(0.0, m.alpha, (total, 2))
    pts = np.repeat(centres.points, sizes, axis=0) + offsets
    keep = w.contains(pts) if total else np.zeros(0, dtype=bool)
    return PointPattern(pts[keep], w)
