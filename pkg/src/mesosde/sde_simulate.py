"""Euler-Maruyama integration of drift-diffusion models.

One step advances the state by drift(m) dt plus L(m) sqrt(dt) xi with xi
standard bivariate normal and L the Cholesky factor of the covariance.
Works with any pair of callables — analytic closed forms or fitted
networks — and generates the synthetic polarization trajectories used
for validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._util import as_generator
from .order_parameter import PolarizationSeries

# states that leave the unit disc under the boundary policy are rescaled
# onto this radius (the polarization norm cannot exceed 1 by definition)
BOUNDARY_RADIUS = 1.0 - 1e-9


@dataclass
class SimConfig:
    """Step size, length, start state, seed, and boundary policy."""

    dt: float
    n_steps: int
    m0: tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    boundary: bool = True
    substeps: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if math.hypot(*self.m0) > 1 + 1e-9:
            raise ValueError("m0 must lie in the closed unit disc")


def _chol2x2(g: np.ndarray) -> tuple[float, float, float]:
    """Closed-form lower Cholesky factor of a 2x2 SPD (or PSD) matrix."""
    a = g[0, 0]
    b = g[0, 1]
    c = g[1, 1]
    if a <= 0.0:
        # PSD edge: a = 0 forces b = 0; keep whatever variance remains in y
        return 0.0, 0.0, math.sqrt(max(c, 0.0))
    l11 = math.sqrt(a)
    l21 = b / l11
    return l11, l21, math.sqrt(max(c - l21 * l21, 0.0))


def euler_maruyama(drift, cov, config: SimConfig) -> PolarizationSeries:
    """Integrate the SDE and emit a series of n_steps + 1 samples.

    ``drift`` maps a state (2,) to a drift vector, ``cov`` to an SPD 2x2
    covariance. With ``substeps`` > 1 the integrator steps at
    dt / substeps internally and emits every ``substeps``-th state, which
    reduces discretization bias without changing the output cadence.
    With the boundary policy on, any step landing outside the unit disc
    is radially rescaled back onto it. Deterministic per seed.
    """
    rng = as_generator(config.seed)
    h = config.dt / config.substeps
    sqrt_h = math.sqrt(h)
    n_inner = config.n_steps * config.substeps

    out = np.empty((config.n_steps + 1, 2))
    x, y = float(config.m0[0]), float(config.m0[1])
    out[0] = (x, y)

    block = 1 << 14
    noise = rng.standard_normal((block, 2))
    pos = block
    state = np.empty(2)
    for k in range(1, n_inner + 1):
        if pos == block:
            noise = rng.standard_normal((block, 2))
            pos = 0
        state[0] = x
        state[1] = y
        f = drift(state)
        g = cov(state)
        l11, l21, l22 = _chol2x2(np.asarray(g, dtype=np.float64).reshape(2, 2))
        xi0, xi1 = noise[pos]
        pos += 1
        x = x + float(f[0]) * h + sqrt_h * l11 * xi0
        y = y + float(f[1]) * h + sqrt_h * (l21 * xi0 + l22 * xi1)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise FloatingPointError(f"non-finite state at integration step {k}")
        if config.boundary:
            norm = math.hypot(x, y)
            if norm > 1.0:
                x *= BOUNDARY_RADIUS / norm
                y *= BOUNDARY_RADIUS / norm
        if k % config.substeps == 0:
            out[k // config.substeps] = (x, y)

    return PolarizationSeries(config.dt, out, validate=config.boundary)


def simulate_model(model, config: SimConfig) -> PolarizationSeries:
    """Euler-Maruyama run of anything exposing drift(m) and cov(m)."""
    return euler_maruyama(model.drift, model.cov, config)
