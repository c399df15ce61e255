"""Dynamic ID/OOD selection from unlabeled confidence scores.

A two-component 1-D Gaussian mixture is fitted to the scores with EM; the
component with the higher mean (``g1``) stands for ID. Each score is assigned
to the component with the larger posterior, the per-group mean score becomes
the threshold, and scores strictly beyond a threshold are selected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateDistribution, InsufficientData

VAR_FLOOR = 1e-6
TAU_IN_MAX = 0.95
TAU_OUT_MARGIN = 0.05


@dataclass(frozen=True)
class GmmModel:
    """Two-component mixture with ``g1`` (index 0) the higher-mean component."""

    weights: tuple[float, float]
    means: tuple[float, float]
    variances: tuple[float, float]
    log_likelihoods: tuple[float, ...] = ()
    n_iter: int = 0

    @classmethod
    def ordered(cls, weights, means, variances, log_likelihoods=(), n_iter=0) -> "GmmModel":
        """Build a model from components in arbitrary order."""
        order = [0, 1] if means[0] >= means[1] else [1, 0]
        return cls(
            tuple(float(weights[i]) for i in order),
            tuple(float(means[i]) for i in order),
            tuple(float(variances[i]) for i in order),
            tuple(float(v) for v in log_likelihoods),
            int(n_iter),
        )

    def log_joint(self, scores) -> np.ndarray:
        """log(weight_k * N(s | mean_k, var_k)) as an (n, 2) array."""
        s = np.asarray(scores, dtype=np.float64)[:, None]
        w = np.array(self.weights)
        mu = np.array(self.means)
        var = np.array(self.variances)
        return np.log(w) - 0.5 * np.log(2 * np.pi * var) - (s - mu) ** 2 / (2 * var)


@dataclass(frozen=True)
class ThresholdPair:
    tau_in: float
    tau_out: float
    clamped_in: bool = False
    clamped_out: bool = False


@dataclass(frozen=True)
class SelectionResult:
    in_indices: np.ndarray
    out_indices: np.ndarray

    @property
    def n_in(self) -> int:
        return int(self.in_indices.size)

    @property
    def n_out(self) -> int:
        return int(self.out_indices.size)

    def masks(self, n):
        m_in = np.zeros(n, dtype=bool)
        m_out = np.zeros(n, dtype=bool)
        m_in[self.in_indices] = True
        m_out[self.out_indices] = True
        return m_in, m_out


def fit_gmm_1d(scores, max_iters=200, tol=1e-6, var_floor=VAR_FLOOR) -> GmmModel:
    """Fit two 1-D Gaussians by EM.

    Initialisation: means at the 25th/75th percentiles (min/max if those
    coincide), equal weights, both variances set to the sample variance.
    Stops once the log-likelihood gain drops below ``tol``.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size < 4:
        raise InsufficientData(f"need at least 4 scores, got {s.size}")
    if not np.isfinite(s).all():
        raise DegenerateDistribution("scores must be finite")
    if s.max() == s.min():
        raise DegenerateDistribution("all scores are equal")
    lo, hi = np.percentile(s, [25, 75])
    if lo == hi:
        lo, hi = s.min(), s.max()
    v = max(float(s.var()), var_floor)
    w, mu, var, hist, n_iter = kernels.em_gmm_1d(
        s, [0.5, 0.5], [hi, lo], [v, v], int(max_iters), float(tol), float(var_floor))
    return GmmModel.ordered(w, mu, var, hist, n_iter)


def posterior_split(gmm: GmmModel, scores):
    """Indices assigned to g1 (strictly larger posterior) and to g2 (the rest)."""
    lj = gmm.log_joint(scores)
    to_g1 = lj[:, 0] > lj[:, 1]
    return np.flatnonzero(to_g1), np.flatnonzero(~to_g1)


def compute_thresholds(gmm: GmmModel, scores, K: int) -> ThresholdPair:
    """Mean score per posterior group, clamped to tau_in <= 0.95, tau_out >= 1/K + 0.05."""
    s = np.asarray(scores, dtype=np.float64)
    g1, g2 = posterior_split(gmm, s)
    if g1.size == 0 or g2.size == 0:
        raise DegenerateDistribution("a mixture component received no scores")
    raw_in = float(s[g1].mean())
    raw_out = float(s[g2].mean())
    tau_in = min(raw_in, TAU_IN_MAX)
    floor_out = 1.0 / K + TAU_OUT_MARGIN
    tau_out = max(raw_out, floor_out)
    clamped_in = tau_in != raw_in
    clamped_out = tau_out != raw_out
    if tau_out > tau_in:
        # both groups sit below the OOD floor; keep the pair ordered
        tau_in, clamped_in = tau_out, True
    return ThresholdPair(tau_in, tau_out, clamped_in, clamped_out)


def select_in_out(scores, thresholds: ThresholdPair) -> SelectionResult:
    s = np.asarray(scores, dtype=np.float64)
    return SelectionResult(
        np.flatnonzero(s > thresholds.tau_in),
        np.flatnonzero(s < thresholds.tau_out),
    )


def dynamic_thresholds(scores, K, max_iters=200, tol=1e-6) -> tuple[ThresholdPair, GmmModel]:
    gmm = fit_gmm_1d(scores, max_iters, tol)
    return compute_thresholds(gmm, scores, K), gmm


def mixture_log_likelihood(gmm: GmmModel, scores) -> float:
    lj = gmm.log_joint(scores)
    m = lj.max(axis=1)
    return float((m + np.log(np.exp(lj - m[:, None]).sum(axis=1))).sum())
