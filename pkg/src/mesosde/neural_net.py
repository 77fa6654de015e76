"""Minimal fully-connected network engine.

Forward pass, exact reverse-mode gradients, and the Adamax optimizer —
just enough machinery to train the small drift and diffusion networks.
Everything is plain float64 numpy. An MLP is a stack of affine layers
with ELU on the hidden layers and an identity output head. Gradients are
returned in an ``MlpParams`` container of the same shape as the
parameters, so optimizer code treats both as parallel lists of arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._util import EXACT_FMT, as_generator

MLP_MAGIC = "MESO-SDE-MLP v1"


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a uniform-width MLP: ELU hidden layers, linear head."""

    input_dim: int
    output_dim: int
    hidden_layers: int = 5
    hidden_width: int = 150

    def __post_init__(self):
        for name in ("input_dim", "output_dim", "hidden_layers", "hidden_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def layer_dims(self) -> list[int]:
        return (
            [self.input_dim]
            + [self.hidden_width] * self.hidden_layers
            + [self.output_dim]
        )


@dataclass
class MlpParams:
    """Per-layer weight matrices (fan_in, fan_out) and bias vectors.

    Also used as the container for gradients and optimizer moments, which
    share the parameter shapes.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty parallel lists")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError("layer shapes inconsistent")
        for l in range(len(self.weights) - 1):
            if self.weights[l].shape[1] != self.weights[l + 1].shape[0]:
                raise ValueError("consecutive layer dims do not chain")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def spec(self) -> MlpSpec:
        return MlpSpec(
            input_dim=self.weights[0].shape[0],
            output_dim=self.weights[-1].shape[1],
            hidden_layers=self.n_layers - 1,
            hidden_width=self.weights[0].shape[1]
            if self.n_layers > 1
            else self.weights[0].shape[0],
        )

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray]) -> "MlpParams":
        return cls(weights=list(arrays[0::2]), biases=list(arrays[1::2]))

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )


def init_mlp_params(spec: MlpSpec, rng) -> MlpParams:
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = as_generator(rng)
    weights, biases = [], []
    dims = spec.layer_dims
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def elu(x):
    """ELU with unit scale: x for x >= 0, exp(x) - 1 below."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_backward(activation: np.ndarray) -> np.ndarray:
    # elu'(z) expressed through the stored activation a = elu(z):
    # 1 on the linear branch, exp(z) = a + 1 on the negative branch.
    return np.where(activation >= 0, 1.0, activation + 1.0)


def _forward_cached(params: MlpParams, x: np.ndarray) -> list[np.ndarray]:
    """Activations of every layer for a (batch, input_dim) input."""
    acts = [x]
    a = x
    last = params.n_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        a = z if l == last else elu(z)
        acts.append(a)
    return acts


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Evaluate the network on one input vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != params.weights[0].shape[0]:
        raise ValueError(
            f"input dim {x.shape[1]} does not match network input "
            f"{params.weights[0].shape[0]}"
        )
    out = _forward_cached(params, x)[-1]
    return out[0] if single else out


def mlp_gradient(
    params: MlpParams, x, upstream
) -> tuple[MlpParams, np.ndarray]:
    """Reverse-mode gradients of <upstream, mlp_forward(params, x)>.

    For batched inputs the parameter gradients are summed over the batch
    (callers scale ``upstream`` to get means); the returned input
    gradient keeps one row per sample.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
        upstream = upstream[None, :]
    acts = _forward_cached(params, x)
    grads, x_grad = _backward(params, acts, upstream)
    return grads, (x_grad[0] if single else x_grad)


def _backward(
    params: MlpParams, acts: list[np.ndarray], upstream: np.ndarray
) -> tuple[MlpParams, np.ndarray]:
    """Backprop through cached activations; shared by all loss gradients."""
    n = params.n_layers
    d_w: list = [None] * n
    d_b: list = [None] * n
    delta = upstream
    for l in range(n - 1, -1, -1):
        d_w[l] = acts[l].T @ delta
        d_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l].T) * _elu_backward(acts[l])
    x_grad = delta @ params.weights[0].T
    return MlpParams(d_w, d_b), x_grad


# ---------------------------------------------------------------------------
# Adamax
# ---------------------------------------------------------------------------


@dataclass
class AdamaxState:
    """First moments, infinity-norm accumulators, and step counter."""

    m: list[np.ndarray]
    u: list[np.ndarray]
    t: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_arrays(cls, arrays: list[np.ndarray], **hyper) -> "AdamaxState":
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            u=[np.zeros_like(a) for a in arrays],
            **hyper,
        )

    @classmethod
    def for_params(cls, params: MlpParams, **hyper) -> "AdamaxState":
        return cls.for_arrays(params.arrays(), **hyper)


def adamax_update(
    arrays: list[np.ndarray], grads: list[np.ndarray], state: AdamaxState
) -> tuple[list[np.ndarray], AdamaxState]:
    """One Adamax step on a flat list of parameter arrays.

    t is incremented first; then per entry
    m <- beta1 m + (1 - beta1) g, u <- max(beta2 u, |g|),
    theta <- theta - (alpha / (1 - beta1^t)) * m / (u + eps).
    """
    t = state.t + 1
    scale = state.alpha / (1.0 - state.beta1**t)
    new_arrays, new_m, new_u = [], [], []
    for a, g, m, u in zip(arrays, grads, state.m, state.u):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        u = np.maximum(state.beta2 * u, np.abs(g))
        new_arrays.append(a - scale * m / (u + state.eps))
        new_m.append(m)
        new_u.append(u)
    return new_arrays, AdamaxState(
        new_m, new_u, t, state.alpha, state.beta1, state.beta2, state.eps
    )


def adamax_step(
    params: MlpParams, grads: MlpParams, state: AdamaxState
) -> tuple[MlpParams, AdamaxState]:
    """One Adamax step on a whole network."""
    arrays, new_state = adamax_update(params.arrays(), grads.arrays(), state)
    return MlpParams.from_arrays(arrays), new_state


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def save_mlp(f, params: MlpParams) -> None:
    """Write one network as a self-describing text block (magic-tagged)."""
    spec = params.spec
    f.write(MLP_MAGIC + "\n")
    f.write(
        f"dims {spec.input_dim} {spec.hidden_layers} "
        f"{spec.hidden_width} {spec.output_dim}\n"
    )
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        f.write(f"layer {l} {w.shape[0]} {w.shape[1]}\n")
        f.write(" ".join(EXACT_FMT % v for v in w.ravel()) + "\n")
        f.write(" ".join(EXACT_FMT % v for v in b) + "\n")


def load_mlp(f) -> MlpParams:
    """Read one network block written by save_mlp."""
    magic = f.readline().strip()
    if magic != MLP_MAGIC:
        raise ValueError(f"bad magic string: expected {MLP_MAGIC!r}, got {magic!r}")
    dims_line = f.readline().split()
    if len(dims_line) != 5 or dims_line[0] != "dims":
        raise ValueError("malformed dims line")
    input_dim, hidden_layers, hidden_width, output_dim = map(int, dims_line[1:])
    spec = MlpSpec(input_dim, output_dim, hidden_layers, hidden_width)
    weights, biases = [], []
    for l, (fan_in, fan_out) in enumerate(zip(spec.layer_dims[:-1], spec.layer_dims[1:])):
        head = f.readline().split()
        if head[:2] != ["layer", str(l)]:
            raise ValueError(f"malformed layer header at layer {l}")
        if [int(head[2]), int(head[3])] != [fan_in, fan_out]:
            raise ValueError(f"layer {l} shape does not match dims header")
        w = np.array(f.readline().split(), dtype=np.float64)
        b = np.array(f.readline().split(), dtype=np.float64)
        if w.size != fan_in * fan_out or b.size != fan_out:
            raise ValueError(f"layer {l} has wrong number of values")
        weights.append(w.reshape(fan_in, fan_out))
        biases.append(b)
    return MlpParams(weights, biases)
