"""Polarization order parameter: extraction, dataset ingestion, augmentation.

The polarization of a frame is the mean of the agents' unit velocity
vectors; its norm is 1 for a perfectly aligned group and near 0 for a
disordered one. This module turns heading or velocity trajectories into
uniformly sampled polarization series, reads/writes the plain-text data
formats, and produces the rotated/flipped copies used to teach the
estimator the rotational and mirror symmetries of the dynamics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import InitVar, dataclass, field

import numpy as np

from ._util import DATA_FMT
from .abm import HeadingTrajectory

ZERO_SPEED = 1e-12
DT_RTOL = 1e-6

#: Rotation angles of the augmentation set: 16 angles equally spaced on
#: [-pi, pi), endpoint excluded (the k = 8 entry is the identity rotation).
AUGMENT_ANGLES = tuple(-math.pi + k * math.pi / 8 for k in range(16))


@dataclass
class VelocityFrame:
    """Velocities of all agents at one instant (positions are not needed)."""

    time: float
    velocities: np.ndarray  # (n_agents, 2)

    def __post_init__(self):
        self.velocities = np.asarray(self.velocities, dtype=np.float64)
        if self.velocities.ndim != 2 or self.velocities.shape[1] != 2:
            raise ValueError("velocities must be an (n_agents, 2) array")

    @property
    def n_agents(self) -> int:
        return self.velocities.shape[0]

    def is_valid(self) -> bool:
        """False if any agent has (numerically) zero speed."""
        speed = np.linalg.norm(self.velocities, axis=1)
        return bool(np.all(speed >= ZERO_SPEED))


@dataclass
class PolarizationSeries:
    """Uniformly sampled 2-D polarization vectors.

    ``sample_index`` records each sample's position on the original
    sampling grid; gaps left by dropped frames show up as jumps and stop
    the estimator from forming transition pairs across them. ``None``
    means contiguous.
    """

    dt: float
    m: np.ndarray  # (n_samples, 2)
    sample_index: np.ndarray | None = None
    t0: float = 0.0
    n_dropped: int = field(default=0, compare=False)
    validate: InitVar[bool] = True

    def __post_init__(self, validate):
        self.m = np.asarray(self.m, dtype=np.float64)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.m.ndim != 2 or self.m.shape[1] != 2 or self.m.shape[0] < 1:
            raise ValueError("m must be a non-empty (n_samples, 2) array")
        if self.sample_index is not None:
            self.sample_index = np.asarray(self.sample_index, dtype=np.int64)
            if self.sample_index.shape != (self.m.shape[0],):
                raise ValueError("sample_index must match the number of samples")
            if np.any(np.diff(self.sample_index) < 1):
                raise ValueError("sample_index must be strictly increasing")
        if validate and np.any(self.norms() > 1 + 1e-9):
            raise ValueError("polarization norms exceed 1")

    def __len__(self) -> int:
        return self.m.shape[0]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.m, axis=1)

    @property
    def times(self) -> np.ndarray:
        idx = (
            self.sample_index
            if self.sample_index is not None
            else np.arange(len(self))
        )
        return self.t0 + self.dt * idx

    def drop_initial(self, fraction: float = 0.1) -> "PolarizationSeries":
        """Discard the initial ``fraction`` of samples (burn-in removal)."""
        if not 0 <= fraction < 1:
            raise ValueError("burn-in fraction must be in [0, 1)")
        n_drop = int(len(self) * fraction)
        idx = self.sample_index[n_drop:] if self.sample_index is not None else None
        return PolarizationSeries(
            self.dt, self.m[n_drop:], sample_index=idx, t0=self.t0,
            n_dropped=self.n_dropped,
        )


def polarization(frame: VelocityFrame) -> np.ndarray:
    """Mean of the normalized velocity vectors of one frame.

    Raises ValueError if any agent has zero speed; ingestion drops such
    frames instead of calling this.
    """
    speed = np.linalg.norm(frame.velocities, axis=1)
    if np.any(speed < ZERO_SPEED):
        raise ValueError("zero-norm velocity: frame is invalid for polarization")
    return (frame.velocities / speed[:, None]).mean(axis=0)


def _headings_to_series(traj: HeadingTrajectory) -> PolarizationSeries:
    m = np.stack(
        [np.cos(traj.headings).mean(axis=1), np.sin(traj.headings).mean(axis=1)],
        axis=1,
    )
    return PolarizationSeries(traj.sample_dt, m, t0=traj.t0)


def series_from_trajectory(traj) -> PolarizationSeries:
    """Compute the polarization series of a trajectory.

    Accepts a HeadingTrajectory (unit-speed convention) or a list of
    VelocityFrame. Velocity frames must sit on a uniform time grid
    (relative tolerance 1e-6); frames containing a zero-speed agent are
    dropped, counted in ``n_dropped``, and leave a gap in ``sample_index``.
    """
    if isinstance(traj, HeadingTrajectory):
        return _headings_to_series(traj)

    frames = list(traj)
    if not frames:
        raise ValueError("no frames")
    if len(frames) == 1:
        raise ValueError("at least two frames are needed to fix the sampling interval")
    times = np.array([f.time for f in frames], dtype=np.float64)
    diffs = np.diff(times)
    dt = float(np.median(diffs))
    if dt <= 0 or np.any(np.abs(diffs - dt) > DT_RTOL * dt):
        raise ValueError("non-uniform frame timestamps (beyond 1e-6 relative tolerance)")
    n_agents = frames[0].n_agents
    if any(f.n_agents != n_agents for f in frames):
        raise ValueError("agent count varies across frames")

    kept_m = []
    kept_idx = []
    for k, f in enumerate(frames):
        if f.is_valid():
            kept_m.append(polarization(f))
            kept_idx.append(k)
    n_dropped = len(frames) - len(kept_m)
    if not kept_m:
        raise ValueError("all frames invalid (zero-speed agents)")
    return PolarizationSeries(
        dt,
        np.array(kept_m),
        sample_index=np.array(kept_idx, dtype=np.int64),
        t0=float(times[0]),
        n_dropped=n_dropped,
    )


def _rotated(series: PolarizationSeries, angle: float) -> PolarizationSeries:
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return PolarizationSeries(
        series.dt, series.m @ rot.T, sample_index=series.sample_index,
        t0=series.t0, n_dropped=series.n_dropped,
    )


def _flipped(series: PolarizationSeries, axis: int) -> PolarizationSeries:
    m = series.m.copy()
    m[:, axis] = -m[:, axis]
    return PolarizationSeries(
        series.dt, m, sample_index=series.sample_index,
        t0=series.t0, n_dropped=series.n_dropped,
    )


def augment(series: PolarizationSeries) -> list[PolarizationSeries]:
    """Symmetry copies of a series: original, 16 rotations, both flips.

    Returns 19 series: the original, one copy per angle in
    AUGMENT_ANGLES (each sample rotated by that fixed angle), one copy
    with mx negated (horizontal flip), one with my negated (vertical
    flip). Rotations and flips are isometries, so every copy has the
    same norm sequence as the original.
    """
    out = [series]
    out.extend(_rotated(series, angle) for angle in AUGMENT_ANGLES)
    out.append(_flipped(series, 0))
    out.append(_flipped(series, 1))
    return out


# ---------------------------------------------------------------------------
# plain-text data formats
# ---------------------------------------------------------------------------

_HEADING_COLS = ["t", "agent_id", "theta"]
_VELOCITY_COLS = ["t", "agent_id", "vx", "vy"]


def _parse_float(text: str, line_no: int, col: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValueError(
            f"line {line_no}: cannot parse {col}={text!r} as a number"
        ) from None


def load_trajectory_csv(path) -> list[VelocityFrame]:
    """Read an individual-trajectory CSV into velocity frames.

    Two schemas are accepted, recognized from the header: heading files
    (``t,agent_id,theta``, unit speed assumed, velocities cos/sin of the
    heading) and velocity files (``t,agent_id,x,y,vx,vy`` where the
    position columns are optional and may be empty). Rows are grouped by
    timestamp; agents are ordered by id within each frame. Malformed
    content raises ValueError naming the offending line.
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if all(c in header for c in _HEADING_COLS):
            mode = "heading"
            cols = {c: header.index(c) for c in _HEADING_COLS}
        elif all(c in header for c in _VELOCITY_COLS):
            mode = "velocity"
            cols = {c: header.index(c) for c in _VELOCITY_COLS}
        else:
            raise ValueError(
                f"{path}: header must contain t,agent_id,theta or "
                f"t,agent_id[,x,y],vx,vy — got {','.join(header)}"
            )

        by_time: dict[float, list[tuple[int, float, float]]] = {}
        order: list[float] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < len(header):
                raise ValueError(f"line {line_no}: expected {len(header)} fields")
            t = _parse_float(row[cols["t"]], line_no, "t")
            try:
                agent = int(row[cols["agent_id"]])
            except ValueError:
                raise ValueError(
                    f"line {line_no}: cannot parse agent_id={row[cols['agent_id']]!r}"
                ) from None
            if mode == "heading":
                theta = _parse_float(row[cols["theta"]], line_no, "theta")
                vx, vy = math.cos(theta), math.sin(theta)
            else:
                vx = _parse_float(row[cols["vx"]], line_no, "vx")
                vy = _parse_float(row[cols["vy"]], line_no, "vy")
            if t not in by_time:
                by_time[t] = []
                order.append(t)
            by_time[t].append((agent, vx, vy))

    if not order:
        raise ValueError(f"{path}: no data rows")
    n_agents = len(by_time[order[0]])
    frames = []
    for t in order:
        rows = sorted(by_time[t])
        if len(rows) != n_agents:
            raise ValueError(
                f"frame t={t!r} has {len(rows)} agents, expected {n_agents}"
            )
        frames.append(VelocityFrame(t, np.array([(vx, vy) for _, vx, vy in rows])))
    return frames


def save_polarization_csv(path, series: PolarizationSeries) -> None:
    """Write a series as CSV rows ``t,mx,my``."""
    times = series.times
    with open(path, "w", encoding="utf-8") as f:
        f.write("t,mx,my\n")
        for k in range(len(series)):
            f.write(
                f"{DATA_FMT % times[k]},{DATA_FMT % series.m[k, 0]},"
                f"{DATA_FMT % series.m[k, 1]}\n"
            )


def load_polarization_csv(path) -> PolarizationSeries:
    """Read a ``t,mx,my`` CSV.

    The base sampling interval is the smallest positive time difference;
    larger spacings must be integer multiples of it (dropped-frame gaps)
    and are recorded in ``sample_index``.
    """
    times = []
    m = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if header[:3] != ["t", "mx", "my"]:
            raise ValueError(f"{path}: expected header t,mx,my, got {','.join(header)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 3:
                raise ValueError(f"line {line_no}: expected 3 fields")
            times.append(_parse_float(row[0], line_no, "t"))
            m.append(
                (
                    _parse_float(row[1], line_no, "mx"),
                    _parse_float(row[2], line_no, "my"),
                )
            )
    if len(times) < 2:
        raise ValueError(f"{path}: need at least two samples")
    times_arr = np.asarray(times)
    diffs = np.diff(times_arr)
    if np.any(diffs <= 0):
        raise ValueError(f"{path}: timestamps must be strictly increasing")
    dt = float(diffs.min())
    steps = diffs / dt
    if np.any(np.abs(steps - np.round(steps)) > DT_RTOL):
        raise ValueError(
            f"{path}: time spacings are not integer multiples of the base interval"
        )
    index = np.concatenate([[0], np.cumsum(np.round(steps).astype(np.int64))])
    sample_index = index if np.any(np.diff(index) != 1) else None
    return PolarizationSeries(
        dt, np.asarray(m), sample_index=sample_index, t0=float(times_arr[0])
    )
