"""
MarginLab - Dense feed-forward network with analytic gradients

ReLU hidden layers, identity output layer producing C+1 logits (the C task
classes plus the virtual class). Weights are stored as (fan_out, fan_in), so a
layer computes ``a @ W.T + b``. Everything is float64.
"""
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, TrainingAborted

# Default optimizer settings
DEFAULT_MOMENTUM = 0.9
DEFAULT_BASE_LR = 0.03


@dataclass
class NetworkParams:
    """Layer sizes plus per-layer weights and biases"""
    layer_sizes: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @property
    def num_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    def tensors(self) -> List[np.ndarray]:
        """All parameter arrays in a fixed order (weights then biases per layer)"""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            layer_sizes=list(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams(
            layer_sizes=list(self.layer_sizes),
            weights=[np.zeros_like(w) for w in self.weights],
            biases=[np.zeros_like(b) for b in self.biases],
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors())


@dataclass
class OptimizerState:
    """Momentum buffers (same shapes as the parameters) and step counter"""
    momentum_buffers: NetworkParams
    step_count: int = 0

    @classmethod
    def create(cls, params: NetworkParams) -> "OptimizerState":
        return cls(momentum_buffers=params.zeros_like(), step_count=0)


@dataclass(frozen=True)
class LrSchedule:
    total_steps: int
    base_lr: float = DEFAULT_BASE_LR

    def __post_init__(self):
        if self.total_steps < 1:
            raise ConfigurationError("total_steps must be positive", key="total_steps")
        if self.base_lr <= 0:
            raise ConfigurationError("base_lr must be positive", key="base_lr")


@dataclass
class ForwardTrace:
    """Cached activations for the backward pass.

    ``activations[l]`` is the input to layer l; ``pre_activations[l]`` its
    output before the nonlinearity.
    """
    activations: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)


class WeightedLoss(NamedTuple):
    total: float
    grads: NetworkParams
    term_losses: np.ndarray
    probs: np.ndarray


def init_params(layer_sizes: Sequence[int], rng: np.random.Generator) -> NetworkParams:
    """
    Uniform fan-in initialization, zero biases.

    Args:
        layer_sizes: input dim, hidden dims..., output dim
        rng: Generator for the ``init`` stream

    Returns:
        Fresh NetworkParams
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigurationError(f"invalid layer sizes {sizes}", key="network.hidden")

    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(layer_sizes=sizes, weights=weights, biases=biases)


def forward(params: NetworkParams, inputs: np.ndarray) -> Tuple[np.ndarray, ForwardTrace]:
    """
    Run the network on a batch.

    Args:
        params: Network parameters
        inputs: (batch, input_dim) array, or a single vector

    Returns:
        Tuple of (logits (batch, C+1), trace)
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if x.shape[1] != params.input_dim:
        raise ConfigurationError(
            f"input dim {x.shape[1]} does not match network input dim {params.input_dim}",
            key="network",
        )

    trace = ForwardTrace()
    a = x
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        trace.activations.append(a)
        z = a @ w.T + b
        trace.pre_activations.append(z)
        a = z if l == last else np.maximum(z, 0.0)
    return a, trace


def backward(params: NetworkParams, trace: ForwardTrace, grad_logits: np.ndarray) -> NetworkParams:
    """Backpropagate d(loss)/d(logits) through the cached trace"""
    grads = params.zeros_like()
    delta = grad_logits
    for l in range(len(params.weights) - 1, -1, -1):
        grads.weights[l] = delta.T @ trace.activations[l]
        grads.biases[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l]) * (trace.pre_activations[l - 1] > 0.0)
    return grads


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise max-shifted softmax"""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_ce(logits: np.ndarray, target: int) -> Tuple[float, np.ndarray]:
    """
    Cross-entropy of one logit vector against a hard target.

    Args:
        logits: vector of length C+1
        target: 0-based class index

    Returns:
        Tuple of (loss, grad wrt logits)
    """
    z = np.asarray(logits, dtype=np.float64)
    if not 0 <= target < z.shape[-1]:
        raise ValueError(f"target {target} out of range for {z.shape[-1]} classes")
    loss = float(-log_softmax(z)[target])
    grad = softmax(z)
    grad[target] -= 1.0
    return loss, grad


def loss_and_grads(params: NetworkParams,
                   inputs: np.ndarray,
                   targets: np.ndarray,
                   weights: np.ndarray) -> WeightedLoss:
    """
    Weighted sum of per-term cross-entropies and its exact gradient.

    Each row of ``inputs`` is one term (an already augmented view) with its
    hard target and a non-negative weight. Zero-weight terms contribute
    nothing to either the loss or the gradient.

    Returns:
        WeightedLoss(total, grads, term_losses, probs), where ``probs`` holds
        the softmax of each row's logits
    """
    targets = np.asarray(targets, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("term weights must be non-negative")
    if len(targets) == 0:
        return WeightedLoss(0.0, params.zeros_like(), np.zeros(0), np.zeros((0, params.num_outputs)))

    logits, trace = forward(params, inputs)
    num_out = logits.shape[1]
    if np.any(targets < 0) or np.any(targets >= num_out):
        raise ValueError(f"targets out of range for {num_out} classes")

    rows = np.arange(len(targets))
    term_losses = -log_softmax(logits)[rows, targets]
    total = float(np.dot(w, term_losses))

    probs = softmax(logits)
    grad_logits = probs - np.eye(num_out)[targets]
    grad_logits *= w[:, None]
    return WeightedLoss(total, backward(params, trace, grad_logits), term_losses, probs)


def sgd_step(params: NetworkParams,
             grads: NetworkParams,
             opt: OptimizerState,
             lr: float,
             momentum: float = DEFAULT_MOMENTUM) -> None:
    """
    Classical momentum SGD, in place: v <- m*v + g; p <- p - lr*v.

    Raises:
        TrainingAborted: on non-finite gradients or parameters
    """
    if not grads.is_finite():
        raise TrainingAborted(f"non-finite gradient at step {opt.step_count}")

    triples = list(zip(params.tensors(), grads.tensors(), opt.momentum_buffers.tensors()))
    for p, g, v in triples:
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch {p.shape} / {g.shape} / {v.shape}")
    for p, g, v in triples:
        v *= momentum
        v += g
        p -= lr * v
    opt.step_count += 1

    if not params.is_finite():
        raise TrainingAborted(f"non-finite parameters after step {opt.step_count}")


def cosine_lr(k: int, sched: LrSchedule) -> float:
    """base_lr * cos(7*pi*k / (16*K)), with k clamped into [0, K]"""
    k = min(max(k, 0), sched.total_steps)
    return sched.base_lr * math.cos(7.0 * math.pi * k / (16.0 * sched.total_steps))
