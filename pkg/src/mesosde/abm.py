"""Event-driven simulation of a mean-field flocking model.

Agents carry a heading angle and unit speed; nothing else. Three event
types occur asynchronously as a Poisson process with per-agent rates:

* spontaneous reorientation to a uniformly random direction (rate ``r1``),
* copying the heading of one randomly chosen other agent (rate ``r2``),
* adopting the mean direction of two randomly chosen other agents (``r3``).

Between events the state is frozen, so the group is a continuous-time
Markov jump chain and is simulated exactly with the stochastic simulation
algorithm: exponential waiting times at total rate ``N * (r1 + r2 + r3)``,
then a single event applied to one uniformly chosen agent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._util import DATA_FMT, as_generator

TWO_PI = 2.0 * math.pi

# A ternary event whose two sampled headings are antipodal has no defined
# mean direction; below this resultant norm the focal agent keeps its heading.
DEGENERATE_RESULTANT = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Agent count and per-agent event rates of the flocking model.

    Parameters
    ----------
    n_agents : int
        Group size N, at least 2 (at least 3 if ternary events are active).
    r1, r2, r3 : float
        Per-agent rates of spontaneous turns, pairwise copies, and ternary
        copies. All non-negative, not all zero.
    """

    n_agents: int
    r1: float = 0.0
    r2: float = 0.0
    r3: float = 0.0

    def __post_init__(self):
        if int(self.n_agents) != self.n_agents or self.n_agents < 2:
            raise ValueError(f"n_agents must be an integer >= 2, got {self.n_agents}")
        for name in ("r1", "r2", "r3"):
            rate = getattr(self, name)
            if not math.isfinite(rate) or rate < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {rate}")
        if self.rate_sum <= 0:
            raise ValueError("r1 + r2 + r3 must be positive (all rates zero)")
        if self.r3 > 0 and self.n_agents < 3:
            raise ValueError("ternary copying (r3 > 0) requires n_agents >= 3")

    @property
    def rate_sum(self) -> float:
        return self.r1 + self.r2 + self.r3


@dataclass
class HeadingState:
    """Headings of all agents at one instant; angles live in [-pi, pi)."""

    headings: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.headings = np.asarray(self.headings, dtype=np.float64)
        if self.headings.ndim != 1 or self.headings.size < 2:
            raise ValueError("headings must be a 1-D array of at least 2 angles")
        if np.any(self.headings < -math.pi) or np.any(self.headings >= math.pi):
            raise ValueError("headings must be normalized to [-pi, pi)")

    @property
    def n_agents(self) -> int:
        return self.headings.size


@dataclass
class HeadingTrajectory:
    """Heading snapshots on a uniform sampling grid t0 + k * sample_dt."""

    sample_dt: float
    headings: np.ndarray  # (n_frames, n_agents)
    t0: float = 0.0
    event_counts: tuple[int, int, int] | None = field(default=None, compare=False)

    def __post_init__(self):
        self.headings = np.asarray(self.headings, dtype=np.float64)
        if self.sample_dt <= 0:
            raise ValueError("sample_dt must be positive")
        if self.headings.ndim != 2 or self.headings.shape[0] < 1:
            raise ValueError("headings must be a (n_frames, n_agents) array")

    @property
    def n_frames(self) -> int:
        return self.headings.shape[0]

    @property
    def n_agents(self) -> int:
        return self.headings.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.sample_dt * np.arange(self.n_frames)

    def drop_burn_in(self, fraction: float = 0.1) -> "HeadingTrajectory":
        """Discard the initial ``fraction`` of frames (transient removal)."""
        if not 0 <= fraction < 1:
            raise ValueError("burn-in fraction must be in [0, 1)")
        n_drop = int(self.n_frames * fraction)
        return HeadingTrajectory(
            self.sample_dt,
            self.headings[n_drop:],
            t0=self.t0 + n_drop * self.sample_dt,
        )


def total_event_rate(params: ModelParams) -> float:
    """Total Poisson event rate of the group: N * (r1 + r2 + r3)."""
    return params.n_agents * params.rate_sum


class _BlockRng:
    """Buffered scalar draws from a Generator.

    Pulls blocks of variates and hands them out one by one; orders of
    magnitude faster than per-event Generator calls in the SSA loop while
    keeping the stream deterministic for a fixed seed.
    """

    def __init__(self, rng: np.random.Generator, block: int = 1 << 15):
        self._rng = rng
        self._block = block
        self._uniform: list[float] = []
        self._expo: list[float] = []
        self._ints: dict[int, list[int]] = {}
        self._pos_u = self._pos_e = 0
        self._pos_i: dict[int, int] = {}

    def random(self) -> float:
        if self._pos_u == len(self._uniform):
            self._uniform = self._rng.random(self._block).tolist()
            self._pos_u = 0
        u = self._uniform[self._pos_u]
        self._pos_u += 1
        return u

    def exponential(self) -> float:
        if self._pos_e == len(self._expo):
            self._expo = self._rng.exponential(size=self._block).tolist()
            self._pos_e = 0
        e = self._expo[self._pos_e]
        self._pos_e += 1
        return e

    def integers(self, n: int) -> int:
        pos = self._pos_i.get(n, 0)
        cache = self._ints.get(n)
        if cache is None or pos == len(cache):
            cache = self._rng.integers(0, n, size=self._block).tolist()
            self._ints[n] = cache
            pos = 0
        self._pos_i[n] = pos + 1
        return cache[pos]


def _one_event(theta: np.ndarray, params: ModelParams, rb) -> int:
    """Apply one SSA event to ``theta`` in place; returns the event kind.

    Draw order: event kind, focal agent, then event-specific variates.
    ``rb`` is anything with ``random()`` and ``integers(n)`` (a Generator
    or a _BlockRng). Kinds: 0 spontaneous turn, 1 pairwise copy, 2 ternary.
    """
    n = theta.shape[0]
    u = rb.random() * params.rate_sum
    i = rb.integers(n)
    if u < params.r1:
        theta[i] = rb.random() * TWO_PI - math.pi
        return 0
    if u < params.r1 + params.r2:
        j = int(rb.integers(n - 1))
        if j >= i:
            j += 1
        theta[i] = theta[j]
        return 1
    # two distinct neighbours, both excluding the focal agent
    a = int(rb.integers(n - 1))
    b = int(rb.integers(n - 2))
    if b >= a:
        b += 1
    if a >= i:
        a += 1
    if b >= i:
        b += 1
    ta = theta[a]
    tb = theta[b]
    x = math.cos(ta) + math.cos(tb)
    y = math.sin(ta) + math.sin(tb)
    if x * x + y * y >= DEGENERATE_RESULTANT * DEGENERATE_RESULTANT:
        t_new = math.atan2(y, x)
        if t_new >= math.pi:
            t_new -= TWO_PI
        theta[i] = t_new
    return 2


def ssa_step(
    state: HeadingState, params: ModelParams, rng
) -> tuple[HeadingState, float]:
    """Advance the flock by exactly one event.

    Returns the post-event state (clock advanced by the waiting time) and
    the waiting time itself, drawn Exponential(total_event_rate).
    """
    if state.n_agents != params.n_agents:
        raise ValueError("state size does not match params.n_agents")
    rng = as_generator(rng)
    wait = rng.exponential() / total_event_rate(params)
    theta = state.headings.copy()
    _one_event(theta, params, rng)
    return HeadingState(theta, state.time + wait), wait


def random_state(params: ModelParams, rng, time: float = 0.0) -> HeadingState:
    """Headings drawn i.i.d. Uniform[-pi, pi) — the unbiased default start."""
    rng = as_generator(rng)
    return HeadingState(rng.uniform(-math.pi, math.pi, params.n_agents), time)


def aligned_state(
    params: ModelParams, heading: float = 0.0, time: float = 0.0
) -> HeadingState:
    """Perfectly aligned flock, |m| = 1."""
    return HeadingState(np.full(params.n_agents, float(heading)), time)


def simulate_abm(
    params: ModelParams,
    t_end: float,
    sample_dt: float = 0.12,
    seed=0,
    initial_state: HeadingState | None = None,
) -> HeadingTrajectory:
    """Run the exact SSA and record snapshots every ``sample_dt``.

    The state is held constant between events; the snapshot at a sample
    time that coincides with an event records the pre-event state.
    Deterministic for a fixed seed.

    Parameters
    ----------
    params : ModelParams
    t_end : float
        Simulated time span. Must allow at least one sample past t = 0.
    sample_dt : float
        Snapshot spacing; defaults to the 0.12 cadence of the reference
        trajectory datasets.
    seed : int or numpy Generator
    initial_state : HeadingState, optional
        Starting headings; defaults to i.i.d. Uniform[-pi, pi).

    Returns
    -------
    HeadingTrajectory
        Frames at t = k * sample_dt, k = 0 .. floor(t_end / sample_dt),
        with per-kind event counts attached.
    """
    if sample_dt <= 0:
        raise ValueError("sample_dt must be positive")
    if t_end < sample_dt:
        raise ValueError("empty trajectory: t_end < sample_dt yields no samples")
    rng = as_generator(seed)
    if initial_state is None:
        initial_state = random_state(params, rng)
    elif initial_state.n_agents != params.n_agents:
        raise ValueError("initial_state size does not match params.n_agents")

    n_frames = int(math.floor(t_end / sample_dt + 1e-9)) + 1
    theta = initial_state.headings.copy()
    out = np.empty((n_frames, params.n_agents))
    out[0] = theta

    rate = total_event_rate(params)
    rb = _BlockRng(rng)
    counts = [0, 0, 0]
    t = 0.0
    k = 0
    last = n_frames - 1
    while k < last:
        t_next = t + rb.exponential() / rate
        while k < last and (k + 1) * sample_dt <= t_next:
            k += 1
            out[k] = theta
        if k == last:
            break
        counts[_one_event(theta, params, rb)] += 1
        t = t_next

    return HeadingTrajectory(
        sample_dt, out, t0=initial_state.time, event_counts=tuple(counts)
    )


def simulate_replicates(
    params: ModelParams,
    t_end: float,
    sample_dt: float,
    seed: int,
    n_replicates: int,
) -> list[HeadingTrajectory]:
    """Independent runs with child seeds, merged in replicate order."""
    children = np.random.SeedSequence(seed).spawn(n_replicates)
    return [
        simulate_abm(params, t_end, sample_dt, seed=np.random.default_rng(child))
        for child in children
    ]


def save_heading_csv(path, traj: HeadingTrajectory) -> None:
    """Write a trajectory as CSV rows ``t,agent_id,theta`` (one per agent per frame)."""
    times = traj.times
    with open(path, "w", encoding="utf-8") as f:
        f.write("t,agent_id,theta\n")
        for k in range(traj.n_frames):
            t_str = DATA_FMT % times[k]
            row = traj.headings[k]
            f.write(
                "".join(
                    f"{t_str},{i},{DATA_FMT % row[i]}\n" for i in range(traj.n_agents)
                )
            )
