"""Small feed-forward network with analytic gradients.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of shape
``(n, d)`` maps to logits ``X @ W1 + b1 -> act -> ... -> (n, K)``. Every
function here is pure: updates return new objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, TrainingDiverged

LOG_FLOOR = 1e-12


@dataclass
class ParameterSet:
    """Layered weights and biases; also used for gradients and momentum buffers."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    slope: float = 0.01

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise InvalidArgument("weights and biases must be non-empty and of equal length")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise InvalidArgument(f"layer {i}: weight {W.shape} and bias {b.shape} disagree")
            if i > 0 and self.weights[i - 1].shape[1] != W.shape[0]:
                raise InvalidArgument(f"layer {i}: input dim {W.shape[0]} does not chain")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    @classmethod
    def from_arrays(cls, arrays, slope=0.01) -> "ParameterSet":
        arrays = list(arrays)
        return cls(arrays[0::2], arrays[1::2], slope)

    def map(self, fn, *others) -> "ParameterSet":
        for o in others:
            _check_same_shape(self, o)
        cols = zip(self.arrays(), *(o.arrays() for o in others))
        return ParameterSet.from_arrays([fn(*c) for c in cols], self.slope)

    def copy(self) -> "ParameterSet":
        return self.map(np.copy)

    def zeros_like(self) -> "ParameterSet":
        return self.map(np.zeros_like)

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


GradientSet = ParameterSet


def _check_same_shape(a: ParameterSet, b: ParameterSet):
    sa = [x.shape for x in a.arrays()]
    sb = [x.shape for x in b.arrays()]
    if sa != sb:
        raise InvalidArgument(f"parameter shapes differ: {sa} vs {sb}")


def init_params(dims, seed=0, slope=0.01) -> ParameterSet:
    """Glorot-uniform weights, zero biases. ``dims`` = (d, h1, ..., K)."""
    if len(dims) < 2:
        raise InvalidArgument("need at least input and output dimensions")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ParameterSet(weights, biases, slope)


# ---------------------------------------------------------------------------
# probability primitives


def _check_logits(logits, T):
    z = np.asarray(logits, dtype=np.float64)
    if not T > 0:
        raise InvalidArgument(f"temperature must be positive, got {T}")
    if not np.isfinite(z).all():
        raise InvalidArgument("logits must be finite")
    return z


def softmax_with_temperature(logits, T=1.0) -> np.ndarray:
    """exp(z_i/T) / sum_j exp(z_j/T) along the last axis, max-shifted."""
    z = _check_logits(logits, T)
    e = np.exp((z - z.max(axis=-1, keepdims=True)) / T)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits, T=1.0) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64) / T
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def confidence_score(logits, T=1.0):
    """Maximum temperature-scaled softmax probability; in [1/K, 1)."""
    return softmax_with_temperature(logits, T).max(axis=-1)


def _check_distribution(p):
    p = np.asarray(p, dtype=np.float64)
    if (not np.isfinite(p).all() or (p < 0).any() or (p > 1).any()
            or not np.allclose(p.sum(axis=-1), 1.0, rtol=0, atol=1e-9)):
        raise InvalidArgument("not a probability distribution")
    return p


def entropy(p):
    """Shannon entropy in nats with 0 ln 0 = 0."""
    p = _check_distribution(p)
    logs = np.log(np.where(p > 0, p, 1.0))
    return -(p * logs).sum(axis=-1)


def cross_entropy(target, pred):
    """-sum target_i ln pred_i; pred is floored at LOG_FLOOR instead of raising."""
    t = np.asarray(target, dtype=np.float64)
    q = np.asarray(pred, dtype=np.float64)
    return -(t * np.log(np.maximum(q, LOG_FLOOR))).sum(axis=-1)


def xent_with_logits(logits, target):
    """Per-row CE(target || softmax(logits)) and its gradient w.r.t. logits.

    ``target`` is a constant (no gradient flows into it).
    """
    logp = log_softmax(logits)
    t = np.asarray(target, dtype=np.float64)
    value = -(t * logp).sum(axis=1)
    grad = np.exp(logp) * t.sum(axis=1, keepdims=True) - t
    return value, grad


def neg_entropy_with_logits(logits):
    """Per-row -H(softmax(logits)) and its gradient w.r.t. logits."""
    logp = log_softmax(logits)
    p = np.exp(logp)
    neg_h = (p * logp).sum(axis=1)
    grad = p * (logp - neg_h[:, None])
    return neg_h, grad


# ---------------------------------------------------------------------------
# forward / backward


def _act(a, slope):
    return np.where(a > 0, a, slope * a)


def _forward_cached(params: ParameterSet, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise InvalidArgument(
            f"expected inputs of shape (n, {params.input_dim}), got {X.shape}")
    inputs, pre = [], []
    h = X
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        a = h @ W + b
        if i < last:
            pre.append(a)
            h = _act(a, params.slope)
        else:
            h = a
    return h, (inputs, pre)


def forward(params: ParameterSet, X) -> np.ndarray:
    """Logits for a batch ``X`` of shape (n, d)."""
    return _forward_cached(params, X)[0]


def _backward(params: ParameterSet, cache, dz):
    inputs, pre = cache
    n_layers = len(params.weights)
    gW, gb = [None] * n_layers, [None] * n_layers
    delta = dz
    for i in range(n_layers - 1, -1, -1):
        gW[i] = inputs[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            dh = delta @ params.weights[i].T
            delta = dh * np.where(pre[i - 1] > 0, 1.0, params.slope)
    return ParameterSet(gW, gb, params.slope)


class Output:
    """Logits recorded on a :class:`Tape`; gradients are accumulated via ``backward``."""

    def __init__(self, logits, cache):
        self.logits = logits
        self._cache = cache
        self._grad = None

    def backward(self, dlogits):
        dlogits = np.asarray(dlogits, dtype=np.float64)
        if dlogits.shape != self.logits.shape:
            raise InvalidArgument("gradient shape does not match logits")
        self._grad = dlogits if self._grad is None else self._grad + dlogits


class Tape:
    """Records forward passes inside a loss closure."""

    def __init__(self, params: ParameterSet):
        self.params = params
        self._outputs: list[Output] = []

    def forward(self, X) -> Output:
        logits, cache = _forward_cached(self.params, X)
        out = Output(logits, cache)
        self._outputs.append(out)
        return out

    def gradients(self) -> GradientSet:
        total = self.params.zeros_like()
        for out in self._outputs:
            if out._grad is None:
                continue
            g = _backward(self.params, out._cache, out._grad)
            total = total.map(np.add, g)
        return total


def compute_gradients(params: ParameterSet, loss_closure):
    """Evaluate ``loss_closure(tape)`` and backpropagate.

    The closure runs forward passes through ``tape.forward`` and seeds each
    returned :class:`Output` with ``output.backward(dloss/dlogits)``. Any
    forward pass made with the plain :func:`forward` is a constant.
    Returns ``(loss, gradients)``.
    """
    tape = Tape(params)
    loss = float(loss_closure(tape))
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss}")
    return loss, tape.gradients()


# ---------------------------------------------------------------------------
# optimisation


def sgd_step(params, grads, lr, momentum=0.0, weight_decay=0.0, momentum_buffer=None):
    """One SGD step with heavy-ball momentum and L2 decay folded into the buffer.

    Returns ``(new_params, new_buffer)``.
    """
    if lr < 0 or not 0 <= momentum < 1 or not 0 <= weight_decay < 1:
        raise InvalidArgument("need lr >= 0 and momentum, weight_decay in [0, 1)")
    if momentum_buffer is None:
        momentum_buffer = params.zeros_like()
    buf = momentum_buffer.map(
        lambda m, g, p: momentum * m + g + weight_decay * p, grads, params)
    new = params.map(lambda p, v: p - lr * v, buf)
    if not (buf.is_finite() and new.is_finite()):
        raise TrainingDiverged("non-finite parameter update")
    return new, buf


@dataclass
class EmaState:
    shadow: ParameterSet
    decay: float = 0.999

    def __post_init__(self):
        if not 0.0 <= self.decay <= 1.0:
            raise InvalidArgument(f"decay must lie in [0, 1], got {self.decay}")


def ema_update(ema: EmaState, params: ParameterSet) -> EmaState:
    d = ema.decay
    shadow = ema.shadow.map(lambda s, p: d * s + (1.0 - d) * p, params)
    return EmaState(shadow, d)
