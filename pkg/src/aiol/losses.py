"""The four training objectives and their weighted sum.

Each ``*_term`` function works inside a :func:`aiol.nn.compute_gradients`
closure: it runs the prediction branch through the tape, seeds the logit
gradient scaled by ``weight`` and returns the (unweighted) loss value.
Targets and pseudo-labels come from plain :func:`aiol.nn.forward` calls and
so carry no gradient. With ``weight == 0`` nothing is recorded on the tape.

The ``*_loss`` functions are value-only conveniences over a parameter set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .augment import AugmentationPolicy, mix, rand_transform, weak_augment
from .errors import InvalidArgument, TrainingDiverged
from .nn import (ParameterSet, forward, neg_entropy_with_logits,
                 softmax_with_temperature, xent_with_logits)

DIVERGENCE_BOUND = 1e6


@dataclass(frozen=True)
class LossWeights:
    omega: float
    beta: float
    gamma: float


def _one_hot(y, K):
    out = np.zeros((len(y), K))
    out[np.arange(len(y)), y] = 1.0
    return out


def _run(tape, params, X, weight):
    """Forward through the tape when a gradient is wanted, else plainly."""
    if weight != 0 and tape is not None:
        out = tape.forward(X)
        return out.logits, out
    return forward(params, X), None


def supervised_term(tape, params, X, y, weight=1.0) -> float:
    n = len(X)
    if n == 0:
        raise InvalidArgument("empty labeled batch")
    logits, out = _run(tape, params, X, weight)
    val, g = xent_with_logits(logits, _one_hot(y, logits.shape[1]))
    if out is not None:
        out.backward(weight * g / n)
    return float(val.mean())


def consistency_term(tape, params, x_weak, x_strong, T, weight=1.0) -> float:
    """Mean CE(softmax(f(x_weak)/T) || softmax(f(x_strong))); the target is constant."""
    n = len(x_weak)
    if n == 0:
        raise InvalidArgument("empty unlabeled batch")
    target = softmax_with_temperature(forward(params, x_weak), T)
    logits, out = _run(tape, params, x_strong, weight)
    val, g = xent_with_logits(logits, target)
    if out is not None:
        out.backward(weight * g / n)
    return float(val.mean())


def entropy_min_term(tape, params, x_orig, x_mixed, n_batch, weight=1.0, pseudo_labels=None) -> float:
    """Sum over selected rows of CE(one-hot argmax f(x) || softmax(f(x_mixed))), / n_batch.

    ``x_orig``/``x_mixed`` hold only the selected-ID rows of the batch.
    """
    if len(x_orig) == 0:
        return 0.0
    if pseudo_labels is None:
        pseudo_labels = forward(params, x_orig).argmax(axis=1)
    logits, out = _run(tape, params, x_mixed, weight)
    val, g = xent_with_logits(logits, _one_hot(pseudo_labels, logits.shape[1]))
    if out is not None:
        out.backward(weight * g / n_batch)
    return float(val.sum() / n_batch)


def entropy_max_term(tape, params, x_mixed, n_batch, weight=1.0) -> float:
    """-(sum over selected-OOD rows of H(softmax(f(x_mixed)))) / n_batch."""
    if len(x_mixed) == 0:
        return 0.0
    logits, out = _run(tape, params, x_mixed, weight)
    val, g = neg_entropy_with_logits(logits)
    if out is not None:
        out.backward(weight * g / n_batch)
    return float(val.sum() / n_batch)


# ---------------------------------------------------------------------------
# value-only wrappers


def supervised_loss(params: ParameterSet, X, y) -> float:
    return supervised_term(None, params, np.asarray(X, dtype=np.float64), np.asarray(y), 0.0)


def consistency_loss(params: ParameterSet, X, T, policy: AugmentationPolicy, rng) -> float:
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise InvalidArgument("empty unlabeled batch")
    x_weak = weak_augment(X, rng, policy.weak_sigma)
    x_strong = rand_transform(X, policy, rng)
    return consistency_term(None, params, x_weak, x_strong, T, 0.0)


def mixed_batch(X, rows, lam, policy, rng, partners=None):
    """Mixup of ``X[rows]`` with partners drawn uniformly from the whole batch."""
    X = np.asarray(X, dtype=np.float64)
    if partners is None:
        partners = rng.integers(0, len(X), len(X))
    return mix(X[rows], X[partners[rows]], lam, policy, rng)


def entropy_min_loss(params, X, in_mask, lambda_prime, policy, rng) -> float:
    X = np.asarray(X, dtype=np.float64)
    rows = np.flatnonzero(in_mask)
    if rows.size == 0:
        return 0.0
    x_mixed = mixed_batch(X, rows, lambda_prime, policy, rng)
    return entropy_min_term(None, params, X[rows], x_mixed, len(X), 0.0)


def entropy_max_loss(params, X, out_mask, lambda_prime, policy, rng) -> float:
    X = np.asarray(X, dtype=np.float64)
    rows = np.flatnonzero(out_mask)
    if rows.size == 0:
        return 0.0
    x_mixed = mixed_batch(X, rows, lambda_prime, policy, rng)
    return entropy_max_term(None, params, x_mixed, len(X), 0.0)


def stage_schedule(epoch, epochs, stage_switch_fraction=0.8) -> LossWeights:
    """(1, 0, 0) up to floor(fraction * epochs), (0, 1, 1) afterwards."""
    if not 1 <= epoch <= epochs:
        raise InvalidArgument(f"epoch {epoch} outside 1..{epochs}")
    if epoch <= math.floor(stage_switch_fraction * epochs):
        return LossWeights(1.0, 0.0, 0.0)
    return LossWeights(0.0, 1.0, 1.0)


def total_loss(weights: LossWeights, l_s, l_cr, l_emin, l_emax) -> float:
    parts = (l_s, l_cr, l_emin, l_emax)
    if not all(math.isfinite(p) for p in parts):
        raise TrainingDiverged(f"non-finite loss component in {parts}")
    total = l_s + weights.omega * l_cr + weights.beta * l_emin + weights.gamma * l_emax
    if not math.isfinite(total):
        raise TrainingDiverged("non-finite total loss")
    return total
