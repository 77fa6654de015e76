"""Closed-form mean-field drift and diffusion of the flocking models.

For the pairwise-copy model the polarization obeys

    dm/dt = -r1 m + sqrt((r1 + r2 (1 - |m|^2)) / N) I eta(t)

and for the ternary-copy model

    dm/dt = -r1 m + r3 (1 - |m|^2) m
            + sqrt((r1 + (r2 + r3)(1 - |m|^2)) / N) I eta(t).

Both noise amplitudes are isotropic, maximal at m = 0, and scale as
1/sqrt(N); the diffusion covariance is the squared amplitude times the
identity. The pairwise drift has a single stable equilibrium at the
origin; the ternary drift, for r3 > r1, has an unstable origin and a
stable ring at |m| = sqrt(1 - r1/r3). These closed forms are the ground
truth against which fitted models are checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .abm import ModelParams

KINDS = ("pairwise", "ternary")
DISC_TOL = 1e-9


@dataclass(frozen=True)
class AnalyticSde:
    """Mean-field SDE of one interaction model."""

    kind: str
    params: ModelParams

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "ternary" and self.params.r3 <= 0:
            raise ValueError("ternary SDE requires r3 > 0")

    def drift(self, m) -> np.ndarray:
        return drift(self, m)

    def cov(self, m) -> np.ndarray:
        return diffusion_cov(self, m)

    def ring_radius(self) -> float:
        """Radius of the ternary model's stable ring (nan if none)."""
        if self.kind != "ternary" or self.params.r3 <= self.params.r1:
            return float("nan")
        return float(np.sqrt(1.0 - self.params.r1 / self.params.r3))


def _check_disc(m: np.ndarray) -> np.ndarray:
    norm_sq = np.sum(m * m, axis=-1)
    if np.any(norm_sq > (1 + DISC_TOL) ** 2):
        raise ValueError("polarization outside the closed unit disc")
    return norm_sq


def drift(sde: AnalyticSde, m) -> np.ndarray:
    """Deterministic part of the mean-field SDE at m (batched over rows)."""
    m = np.asarray(m, dtype=np.float64)
    norm_sq = _check_disc(m)
    r1 = sde.params.r1
    if sde.kind == "pairwise":
        return -r1 * m
    r3 = sde.params.r3
    return (-r1 + r3 * (1.0 - norm_sq))[..., None] * m


def diffusion_cov(sde: AnalyticSde, m) -> np.ndarray:
    """Isotropic diffusion covariance G(m) = amplitude(m)^2 I."""
    m = np.asarray(m, dtype=np.float64)
    norm_sq = _check_disc(m)
    p = sde.params
    copy_rate = p.r2 if sde.kind == "pairwise" else p.r2 + p.r3
    variance = (p.r1 + copy_rate * (1.0 - norm_sq)) / p.n_agents
    g = np.zeros(m.shape[:-1] + (2, 2))
    g[..., 0, 0] = variance
    g[..., 1, 1] = variance
    return g
