"""Augmentation for feature vectors.

``weak_augment`` adds small Gaussian noise. ``rand_transform`` is a vector
analogue of RandAugment: ``n_ops`` operations drawn uniformly from a pool,
all at one shared magnitude. ``modified_mixup`` combines two transformed
samples with a weight of at least one half on the first, so the mixed point
stays nearer its source.

All functions accept a single vector or an ``(n, d)`` batch and draw all
randomness from the ``numpy.random.Generator`` passed in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

OPS = ("gaussian-jitter", "global-scale", "rotation", "coordinate-dropout")
MAX_ROTATION = np.pi / 4


@dataclass(frozen=True)
class AugmentationPolicy:
    """Weak/strong augmentation settings.

    ``scale`` is the per-dimension data spread used to size jitter; ``center``
    is the point scaling and rotation act around. Both broadcast against a
    feature vector.
    """

    weak_sigma: float | np.ndarray = 0.05
    n_ops: int = 2
    magnitude: float = 0.5
    ops: tuple[str, ...] = OPS
    scale: float | np.ndarray = 1.0
    center: float | np.ndarray = 0.0

    def __post_init__(self):
        if self.n_ops < 1:
            raise InvalidArgument("n_ops must be >= 1")
        if not 0.0 <= self.magnitude <= 1.0:
            raise InvalidArgument("magnitude must lie in [0, 1]")
        unknown = set(self.ops) - set(OPS)
        if unknown or not self.ops:
            raise InvalidArgument(f"unknown or empty op pool: {sorted(unknown)}")

    def pool(self, d: int) -> tuple[str, ...]:
        ops = tuple(op for op in self.ops if op != "rotation" or d == 2)
        if not ops:
            raise InvalidArgument("op pool is empty for this dimension")
        return ops

    @classmethod
    def for_data(cls, X, weak_fraction=0.05, **kwargs) -> "AugmentationPolicy":
        """Policy sized to a data matrix: weak sigma = ``weak_fraction`` * per-dim std."""
        X = np.asarray(X, dtype=np.float64)
        std = X.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(weak_sigma=weak_fraction * std, scale=std, center=X.mean(axis=0), **kwargs)


@dataclass(frozen=True)
class MixupConfig:
    alpha: float = 0.2
    mode: str = "modified"  # "modified" | "vanilla" | "none"

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidArgument("alpha must be positive")
        if self.mode not in ("modified", "vanilla", "none"):
            raise InvalidArgument(f"unknown mixup mode {self.mode!r}")


def weak_augment(x, rng, sigma=0.05):
    x = np.asarray(x, dtype=np.float64)
    return x + np.asarray(sigma) * rng.standard_normal(x.shape)


def _apply_op(op, X, m, policy, rng):
    """Apply one op at magnitude m to every row of X (n, d)."""
    n, d = X.shape
    c = np.broadcast_to(np.asarray(policy.center, dtype=np.float64), (d,))
    if op == "gaussian-jitter":
        s = np.broadcast_to(np.asarray(policy.scale, dtype=np.float64), (d,))
        return X + 0.5 * m * s * rng.standard_normal((n, d))
    if op == "global-scale":
        f = rng.uniform(1.0 - m / 2, 1.0 + m / 2, (n, 1))
        return c + (X - c) * f
    if op == "rotation":
        theta = rng.uniform(-m * MAX_ROTATION, m * MAX_ROTATION, n)
        cos, sin = np.cos(theta), np.sin(theta)
        dx, dy = X[:, 0] - c[0], X[:, 1] - c[1]
        return np.column_stack([c[0] + cos * dx - sin * dy, c[1] + sin * dx + cos * dy])
    # coordinate-dropout: pull one coordinate to the centre
    j = rng.integers(0, d, n)
    rows = np.arange(n)
    out = X.copy()
    out[rows, j] = X[rows, j] + m * (c[j] - X[rows, j])
    return out


def rand_transform(x, policy: AugmentationPolicy, rng):
    """Apply ``policy.n_ops`` randomly chosen ops to each sample.

    Rotation is dropped from the pool when d != 2. Magnitude 0 is the identity.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    n, d = X.shape
    pool = policy.pool(d)
    m = policy.magnitude
    choices = rng.integers(0, len(pool), (policy.n_ops, n))
    out = X.copy()
    if m > 0:
        for slot in range(policy.n_ops):
            for k, op in enumerate(pool):
                rows = np.flatnonzero(choices[slot] == k)
                if rows.size:
                    out[rows] = _apply_op(op, out[rows], m, policy, rng)
    return out[0] if single else out


def sample_lambda(config: MixupConfig, rng) -> float:
    """Beta(alpha, alpha) draw via two Gamma variates; folded to [0.5, 1] unless vanilla."""
    g1 = rng.gamma(config.alpha)
    g2 = rng.gamma(config.alpha)
    lam = 0.5 if g1 + g2 == 0 else g1 / (g1 + g2)
    if config.mode == "vanilla":
        return float(lam)
    return float(max(lam, 1.0 - lam))


def mix(x, x_prime, lam, policy: AugmentationPolicy | None, rng):
    """lam * R(x) + (1 - lam) * R(x'); ``policy=None`` skips the transform."""
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(x_prime, dtype=np.float64)
    if x.shape != xp.shape:
        raise InvalidArgument(f"shape mismatch {x.shape} vs {xp.shape}")
    if policy is not None:
        x = rand_transform(x, policy, rng)
        xp = rand_transform(xp, policy, rng)
    if lam == 1.0:
        return x
    return lam * x + (1.0 - lam) * xp


def modified_mixup(x, x_prime, lambda_prime, policy: AugmentationPolicy | None, rng):
    if not 0.5 <= lambda_prime <= 1.0:
        raise InvalidArgument(f"lambda' must lie in [0.5, 1], got {lambda_prime}")
    return mix(x, x_prime, lambda_prime, policy, rng)
