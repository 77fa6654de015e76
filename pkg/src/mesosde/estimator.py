"""Maximum-likelihood fitting of a neural drift-diffusion model.

The model pairs a drift network f: R^2 -> R^2 with a diffusion network
whose 3 raw outputs parameterize a lower-triangular Cholesky factor
L = [[exp(l11_raw), 0], [l21, exp(l22_raw)]], so the state-dependent
covariance G = L L^T is symmetric positive definite by construction.

A sampled series enters as consecutive transition pairs (m0, m1, dt); the
one-step transition density is the Gaussian
N(m0 + f(m0) dt, G(m0) dt), and training minimizes its mean negative
log-likelihood with Adamax. Derivatives through the quadratic form, the
log-determinant, and the Cholesky parameterization are analytic, so a
single backward pass per network serves the whole loss.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._util import EXACT_FMT, derive_seed
from .neural_net import (
    AdamaxState,
    MlpParams,
    MlpSpec,
    _backward,
    _forward_cached,
    adamax_update,
    init_mlp_params,
    load_mlp,
    mlp_forward,
    save_mlp,
)
from .order_parameter import PolarizationSeries, augment as _augment_series

LOG_2PI = math.log(2.0 * math.pi)
DISC_TOL = 1e-9
# exp() of a raw Cholesky diagonal is clamped here so G's eigenvalues stay
# >= ~1e-12 even if the raw output underflows.
CHOL_DIAG_FLOOR = 1e-6

MODEL_MAGIC = "MESO-SDE-MODEL v1"


class DataInsufficiencyError(ValueError):
    """Raised when there is not enough data to form the requested fit."""


@dataclass
class TransitionPair:
    """One observed step: the state dt apart from its predecessor."""

    m0: np.ndarray
    m1: np.ndarray
    dt: float

    def __post_init__(self):
        self.m0 = np.asarray(self.m0, dtype=np.float64).reshape(2)
        self.m1 = np.asarray(self.m1, dtype=np.float64).reshape(2)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if np.linalg.norm(self.m0) > 1 + DISC_TOL or np.linalg.norm(self.m1) > 1 + DISC_TOL:
            raise ValueError("transition endpoints must lie in the closed unit disc")


class PairSet:
    """Columnar batch of transition pairs sharing one dt.

    Behaves as a sequence of TransitionPair for inspection while keeping
    the data in two (n, 2) arrays for vectorized training.
    """

    def __init__(self, m0: np.ndarray, m1: np.ndarray, dt: float, check: bool = True):
        self.m0 = np.asarray(m0, dtype=np.float64).reshape(-1, 2)
        self.m1 = np.asarray(m1, dtype=np.float64).reshape(-1, 2)
        if self.m0.shape != self.m1.shape:
            raise ValueError("m0 and m1 must have the same shape")
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.dt = float(dt)
        if check and self.m0.size:
            worst = max(
                np.linalg.norm(self.m0, axis=1).max(),
                np.linalg.norm(self.m1, axis=1).max(),
            )
            if worst > 1 + DISC_TOL:
                raise ValueError("transition endpoints must lie in the closed unit disc")

    def __len__(self) -> int:
        return self.m0.shape[0]

    def __getitem__(self, i: int) -> TransitionPair:
        return TransitionPair(self.m0[i], self.m1[i], self.dt)

    def subset(self, idx) -> "PairSet":
        return PairSet(self.m0[idx], self.m1[idx], self.dt, check=False)

    @staticmethod
    def concat(parts: list["PairSet"]) -> "PairSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            raise DataInsufficiencyError("no transition pairs")
        dt = parts[0].dt
        if any(abs(p.dt - dt) > 1e-9 * dt for p in parts):
            raise ValueError("mixed dt across pair sets")
        return PairSet(
            np.concatenate([p.m0 for p in parts]),
            np.concatenate([p.m1 for p in parts]),
            dt,
            check=False,
        )


def build_pairs(series: list[PolarizationSeries] | PolarizationSeries) -> PairSet:
    """Consecutive-sample pairs of one or more series.

    Pairs are formed within each series only, and never across a
    dropped-frame gap (consecutive means adjacent positions on the
    original sampling grid). All series must share the same dt.
    """
    if isinstance(series, PolarizationSeries):
        series = [series]
    if not series:
        raise DataInsufficiencyError("no series given")
    dt = series[0].dt
    m0_parts, m1_parts = [], []
    for s in series:
        if abs(s.dt - dt) > 1e-9 * dt:
            raise ValueError("mixed dt across series")
        if np.any(s.norms() > 1 + DISC_TOL):
            raise ValueError("series leaves the closed unit disc")
        if s.sample_index is None:
            adjacent = np.ones(len(s) - 1, dtype=bool)
        else:
            adjacent = np.diff(s.sample_index) == 1
        m0_parts.append(s.m[:-1][adjacent])
        m1_parts.append(s.m[1:][adjacent])
    m0 = np.concatenate(m0_parts) if m0_parts else np.empty((0, 2))
    m1 = np.concatenate(m1_parts) if m1_parts else np.empty((0, 2))
    return PairSet(m0, m1, dt, check=False)


# ---------------------------------------------------------------------------
# covariance parameterization and the transition likelihood
# ---------------------------------------------------------------------------


def _chol_entries(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cholesky entries (l11, l21, l22) from raw outputs (..., 3)."""
    l11 = np.maximum(np.exp(raw[..., 0]), CHOL_DIAG_FLOOR)
    l21 = raw[..., 1]
    l22 = np.maximum(np.exp(raw[..., 2]), CHOL_DIAG_FLOOR)
    return l11, l21, l22


def cov_from_raw(raw) -> np.ndarray:
    """SPD covariance G = L L^T from the raw lower-triangular outputs.

    raw = (l11_raw, l21, l22_raw) maps to L = [[exp(l11_raw), 0],
    [l21, exp(l22_raw)]]; the exponential diagonal keeps G symmetric
    positive definite for every input.
    """
    raw = np.asarray(raw, dtype=np.float64)
    l11, l21, l22 = _chol_entries(raw)
    g = np.empty(raw.shape[:-1] + (2, 2))
    g[..., 0, 0] = l11 * l11
    g[..., 0, 1] = l11 * l21
    g[..., 1, 0] = g[..., 0, 1]
    g[..., 1, 1] = l21 * l21 + l22 * l22
    return g


def _nll_core(
    f_val: np.ndarray,
    g11: np.ndarray,
    g12: np.ndarray,
    g22: np.ndarray,
    m0: np.ndarray,
    m1: np.ndarray,
    dt: float,
):
    """Vectorized Gaussian NLL of the Euler transition, plus residual pieces."""
    r = m1 - m0 - f_val * dt
    s11, s12, s22 = g11 * dt, g12 * dt, g22 * dt
    det = s11 * s22 - s12 * s12
    # Sigma^{-1} r via the 2x2 adjugate
    w0 = (s22 * r[..., 0] - s12 * r[..., 1]) / det
    w1 = (-s12 * r[..., 0] + s11 * r[..., 1]) / det
    quad = r[..., 0] * w0 + r[..., 1] * w1
    nll = 0.5 * quad + 0.5 * np.log(det) + LOG_2PI
    return nll, r, (w0, w1), (s11, s12, s22), det


def nll(f_val, G, pair: TransitionPair) -> float:
    """Negative log-density of one transition under the Euler Gaussian.

    With residual r = m1 - m0 - f dt and covariance Sigma = G dt this is
    0.5 r^T Sigma^{-1} r + 0.5 log det Sigma + log 2 pi.
    """
    f_val = np.asarray(f_val, dtype=np.float64).reshape(2)
    G = np.asarray(G, dtype=np.float64).reshape(2, 2)
    value = _nll_core(
        f_val, G[0, 0], G[0, 1], G[1, 1], pair.m0, pair.m1, pair.dt
    )[0]
    value = float(value)
    if not math.isfinite(value):
        raise FloatingPointError("non-finite transition likelihood")
    return value


@dataclass
class SdeModel:
    """Fitted drift network, diffusion network, and the training dt."""

    drift_net: MlpParams
    diff_net: MlpParams
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def drift(self, m) -> np.ndarray:
        """Drift vector(s) f(m)."""
        return mlp_forward(self.drift_net, m)

    def raw_diffusion(self, m) -> np.ndarray:
        """Raw Cholesky outputs of the diffusion network."""
        return mlp_forward(self.diff_net, m)

    def cov(self, m) -> np.ndarray:
        """Diffusion covariance G(m) = L L^T, SPD by construction."""
        return cov_from_raw(mlp_forward(self.diff_net, m))

    def copy(self) -> "SdeModel":
        return SdeModel(self.drift_net.copy(), self.diff_net.copy(), self.dt)


def _batch_nll(model: SdeModel, pairs: PairSet) -> np.ndarray:
    f_val = mlp_forward(model.drift_net, pairs.m0)
    raw = mlp_forward(model.diff_net, pairs.m0)
    l11, l21, l22 = _chol_entries(raw)
    g11 = l11 * l11
    g12 = l11 * l21
    g22 = l21 * l21 + l22 * l22
    return _nll_core(f_val, g11, g12, g22, pairs.m0, pairs.m1, pairs.dt)[0]


def mean_nll(model: SdeModel, pairs: PairSet) -> float:
    """Mean transition NLL of a pair set under the model."""
    if not len(pairs):
        raise DataInsufficiencyError("empty pair set")
    return float(_batch_nll(model, pairs).mean())


def loss_gradient(
    model: SdeModel, pairs: PairSet
) -> tuple[MlpParams, MlpParams]:
    """Exact gradients of the mean transition NLL for both networks.

    Chains the Gaussian NLL through the residual (drift side) and
    through G = L L^T with the exponential-diagonal parameterization
    (diffusion side), then backpropagates each network once with the
    per-sample cotangents.
    """
    if not len(pairs):
        raise ValueError("empty batch")
    n = len(pairs)
    dt = pairs.dt

    drift_acts = _forward_cached(model.drift_net, pairs.m0)
    diff_acts = _forward_cached(model.diff_net, pairs.m0)
    f_val = drift_acts[-1]
    raw = diff_acts[-1]

    l11, l21, l22 = _chol_entries(raw)
    g11 = l11 * l11
    g12 = l11 * l21
    g22 = l21 * l21 + l22 * l22
    nll_vals, r, (w0, w1), _, _ = _nll_core(
        f_val, g11, g12, g22, pairs.m0, pairs.m1, dt
    )
    if not np.all(np.isfinite(nll_vals)):
        raise FloatingPointError("non-finite transition likelihood in batch")

    # d(mean NLL)/d f = -dt Sigma^{-1} r / n
    f_bar = np.stack([w0, w1], axis=1) * (-dt / n)

    # d(mean NLL)/d Sigma = (-1/2 Sigma^{-1} r r^T Sigma^{-1} + 1/2 Sigma^{-1}) / n,
    # then dSigma/dG = dt. Sigma^{-1} = adj(Sigma)/det evaluated via w = Sigma^{-1} r.
    s11, s12, s22 = g11 * dt, g12 * dt, g22 * dt
    det = s11 * s22 - s12 * s12
    inv11 = s22 / det
    inv12 = -s12 / det
    inv22 = s11 / det
    c = 0.5 * dt / n
    gbar11 = c * (inv11 - w0 * w0)
    gbar12 = c * (inv12 - w0 * w1)
    gbar22 = c * (inv22 - w1 * w1)

    # L_bar = 2 G_bar L restricted to the lower triangle, then the
    # exponential diagonal maps l_bar into raw coordinates.
    lbar11 = 2.0 * (gbar11 * l11 + gbar12 * l21)
    lbar21 = 2.0 * (gbar12 * l11 + gbar22 * l21)
    lbar22 = 2.0 * gbar22 * l22
    raw_bar = np.stack(
        [
            lbar11 * np.where(l11 > CHOL_DIAG_FLOOR, l11, 0.0),
            lbar21,
            lbar22 * np.where(l22 > CHOL_DIAG_FLOOR, l22, 0.0),
        ],
        axis=1,
    )

    drift_grads, _ = _backward(model.drift_net, drift_acts, f_bar)
    diff_grads, _ = _backward(model.diff_net, diff_acts, raw_bar)
    return drift_grads, diff_grads


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Knobs of the likelihood fit.

    The architecture and optimizer defaults mirror the reference setup
    (5 x 150 ELU networks, batch 512, 90:10 split, Adamax); smaller
    networks and ``steps_per_epoch`` caps are the practical choice for
    desk-scale runs on large augmented datasets.
    """

    batch_size: int = 512
    train_fraction: float = 0.9
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    augment: bool = True
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden_layers: int = 5
    hidden_width: int = 150
    steps_per_epoch: int | None = None
    val_max_pairs: int = 200_000
    data_init: bool = True

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1 or self.patience < 0:
            raise ValueError("max_epochs must be >= 1 and patience >= 0")


@dataclass
class TrainReport:
    """Per-epoch train/validation NLL and the best-checkpoint trace."""

    epochs: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = -1
    best_val_nll: float = math.inf
    n_train_pairs: int = 0
    n_val_pairs: int = 0
    diverged: bool = False
    # (epoch, train_nll, val_nll) at every new validation best
    checkpoints: list[tuple[int, float, float]] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("epoch,train_nll,val_nll\n")
            for epoch, train_nll, val_nll in self.epochs:
                f.write(f"{epoch},{EXACT_FMT % train_nll},{EXACT_FMT % val_nll}\n")


def _split_series(
    series: list[PolarizationSeries], train_fraction: float
) -> tuple[list[PolarizationSeries], list[PolarizationSeries]]:
    """Hold out the trailing block of each series for validation.

    Splitting the raw series (before augmentation) keeps every augmented
    copy of a sample on one side of the split, and the cut itself removes
    the straddling transition pair.
    """
    train_parts, val_parts = [], []
    for s in series:
        n_train = int(round(train_fraction * len(s)))
        n_train = min(max(n_train, 0), len(s))
        head_idx = s.sample_index[:n_train] if s.sample_index is not None else None
        tail_idx = s.sample_index[n_train:] if s.sample_index is not None else None
        if n_train >= 2:
            train_parts.append(
                PolarizationSeries(s.dt, s.m[:n_train], sample_index=head_idx, t0=s.t0)
            )
        if len(s) - n_train >= 2:
            tail_t0 = s.t0 if tail_idx is not None else s.t0 + n_train * s.dt
            val_parts.append(
                PolarizationSeries(s.dt, s.m[n_train:], sample_index=tail_idx, t0=tail_t0)
            )
    return train_parts, val_parts


def _data_moment_init(diff_net: MlpParams, pairs: PairSet) -> None:
    """Bias the diffusion head toward the sample increment covariance.

    With small random output weights the initial G is then within a
    factor of a few of the maximum-likelihood scale, which removes the
    long burn-in the log-determinant term otherwise causes.
    """
    inc = (pairs.m1 - pairs.m0) / math.sqrt(pairs.dt)
    cov = np.cov(inc.T)
    cov = np.atleast_2d(cov) + 1e-12 * np.eye(2)
    chol = np.linalg.cholesky(cov)
    diff_net.biases[-1][:] = (
        math.log(max(chol[0, 0], CHOL_DIAG_FLOOR)),
        chol[1, 0],
        math.log(max(chol[1, 1], CHOL_DIAG_FLOOR)),
    )


def train(
    series: list[PolarizationSeries] | PolarizationSeries,
    config: TrainConfig | None = None,
) -> tuple[SdeModel, TrainReport]:
    """Fit the neural drift-diffusion model to polarization series.

    Each raw series is split 90:10 into a leading training block and a
    trailing validation block, the symmetry augmentation (when enabled)
    is applied per block, and transition pairs are built per augmented
    copy. Adamax then minimizes the mean transition NLL over shuffled
    minibatches; the parameters with the best validation NLL are
    returned. Runs are deterministic for a fixed config.

    Returns the fitted model and a report with the per-epoch curves.
    """
    if config is None:
        config = TrainConfig()
    if isinstance(series, PolarizationSeries):
        series = [series]
    if not series:
        raise DataInsufficiencyError("no series given")

    train_series, val_series = _split_series(series, config.train_fraction)
    if not train_series or not val_series:
        raise DataInsufficiencyError(
            "series too short to carve out both a training and a validation block"
        )
    if config.augment:
        train_series = [c for s in train_series for c in _augment_series(s)]
        val_series = [c for s in val_series for c in _augment_series(s)]
    train_pairs = build_pairs(train_series)
    val_pairs = build_pairs(val_series)
    if len(train_pairs) < 1 or len(val_pairs) < 1:
        raise DataInsufficiencyError("not enough transition pairs after the split")
    if len(train_pairs) + len(val_pairs) < 1000:
        warnings.warn(
            f"only {len(train_pairs) + len(val_pairs)} transition pairs; "
            "the fit may be noisy",
            stacklevel=2,
        )

    init_rng = np.random.default_rng(derive_seed(config.seed, 0))
    shuffle_rng = np.random.default_rng(derive_seed(config.seed, 1))
    val_rng = np.random.default_rng(derive_seed(config.seed, 2))

    spec = dict(hidden_layers=config.hidden_layers, hidden_width=config.hidden_width)
    drift_net = init_mlp_params(MlpSpec(2, 2, **spec), init_rng)
    diff_net = init_mlp_params(MlpSpec(2, 3, **spec), init_rng)
    if config.data_init:
        _data_moment_init(diff_net, train_pairs)
    model = SdeModel(drift_net, diff_net, train_pairs.dt)

    if len(val_pairs) > config.val_max_pairs:
        keep = val_rng.choice(len(val_pairs), size=config.val_max_pairs, replace=False)
        keep.sort()
        val_pairs = val_pairs.subset(keep)

    n_arrays = len(model.drift_net.arrays())
    state = AdamaxState.for_arrays(
        model.drift_net.arrays() + model.diff_net.arrays(),
        alpha=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
    )

    report = TrainReport(n_train_pairs=len(train_pairs), n_val_pairs=len(val_pairs))
    best_model = model.copy()
    epochs_since_best = 0
    n_batches_full = max(1, len(train_pairs) // config.batch_size)
    n_batches = (
        min(config.steps_per_epoch, n_batches_full)
        if config.steps_per_epoch
        else n_batches_full
    )

    for epoch in range(1, config.max_epochs + 1):
        perm = shuffle_rng.permutation(len(train_pairs))
        train_nll_sum = 0.0
        for b in range(n_batches):
            idx = perm[b * config.batch_size : (b + 1) * config.batch_size]
            batch = train_pairs.subset(idx)
            train_nll_sum += mean_nll(model, batch)
            drift_grads, diff_grads = loss_gradient(model, batch)
            arrays, state = adamax_update(
                model.drift_net.arrays() + model.diff_net.arrays(),
                drift_grads.arrays() + diff_grads.arrays(),
                state,
            )
            model = SdeModel(
                MlpParams.from_arrays(arrays[:n_arrays]),
                MlpParams.from_arrays(arrays[n_arrays:]),
                model.dt,
            )
        train_nll = train_nll_sum / n_batches
        val_nll = float(_batch_nll(model, val_pairs).mean())
        report.epochs.append((epoch, train_nll, val_nll))

        if not math.isfinite(val_nll):
            report.diverged = True
            break
        if val_nll < report.best_val_nll:
            report.best_val_nll = val_nll
            report.best_epoch = epoch
            report.checkpoints.append((epoch, train_nll, val_nll))
            best_model = model.copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best > config.patience:
                break

    if report.best_epoch < 0:
        raise FloatingPointError("training diverged before any finite checkpoint")
    return best_model, report


# ---------------------------------------------------------------------------
# model container file
# ---------------------------------------------------------------------------


def save_model(path, model: SdeModel) -> None:
    """Write dt header plus the two tagged network blocks."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(MODEL_MAGIC + "\n")
        f.write(f"dt {EXACT_FMT % model.dt}\n")
        save_mlp(f, model.drift_net)
        save_mlp(f, model.diff_net)


def load_model(path) -> SdeModel:
    """Read a model container written by save_model."""
    with open(path, "r", encoding="utf-8") as f:
        magic = f.readline().strip()
        if magic != MODEL_MAGIC:
            raise ValueError(f"bad magic string: expected {MODEL_MAGIC!r}, got {magic!r}")
        dt_line = f.readline().split()
        if len(dt_line) != 2 or dt_line[0] != "dt":
            raise ValueError("malformed dt header")
        dt = float(dt_line[1])
        drift_net = load_mlp(f)
        diff_net = load_mlp(f)
    return SdeModel(drift_net, diff_net, dt)
