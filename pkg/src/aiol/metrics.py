"""Detection metrics with ID as the positive class, plus selection quality
and classification accuracy."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels
from .data import OodTruth
from .errors import InvalidArgument
from .nn import ParameterSet, forward

REJECT = -1


@dataclass(frozen=True)
class ScoreSet:
    id_scores: np.ndarray
    ood_scores: np.ndarray

    def __post_init__(self):
        for name in ("id_scores", "ood_scores"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if arr.size == 0:
                raise InvalidArgument(f"{name} is empty")
            if not np.isfinite(arr).all():
                raise InvalidArgument(f"{name} must be finite")
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class PrfResult:
    precision: float
    recall: float
    f_score: float


def _as_scores(s, ood=None) -> ScoreSet:
    if isinstance(s, ScoreSet):
        return s
    return ScoreSet(s, ood)


def detection_scores(params: ParameterSet, X, T=1.0) -> np.ndarray:
    """Maximum softmax probability of each row: the detection score."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        return np.zeros(0)
    return kernels.confidence_scores(forward(params, X), float(T))


def auroc(s, ood=None) -> float:
    """Mann-Whitney AUROC: P(id > ood) + 0.5 P(id = ood), via average ranks."""
    s = _as_scores(s, ood)
    n1, n2 = s.id_scores.size, s.ood_scores.size
    allv = np.concatenate([s.id_scores, s.ood_scores])
    _, inv, counts = np.unique(allv, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    avg_rank = upper - (counts - 1) / 2.0
    r_id = avg_rank[inv[:n1]].sum()
    return float((r_id - n1 * (n1 + 1) / 2.0) / (n1 * n2))


def aupr(s, ood=None) -> float:
    """Average precision with ID positive: sum over descending unique thresholds
    t of (recall_t - recall_prev) * precision_t, predicting ID when score >= t."""
    s = _as_scores(s, ood)
    allv = np.concatenate([s.id_scores, s.ood_scores])
    is_id = np.concatenate([np.ones(s.id_scores.size), np.zeros(s.ood_scores.size)])
    order = np.argsort(-allv, kind="mergesort")
    v, pos = allv[order], is_id[order]
    tp = np.cumsum(pos)
    fp = np.cumsum(1 - pos)
    # keep the last index of each run of equal scores
    last = np.r_[np.flatnonzero(np.diff(v) != 0), v.size - 1]
    tp, fp = tp[last], fp[last]
    # summed in exact rationals so the result is the correctly rounded value
    d_tp = np.diff(np.r_[0, tp.astype(np.int64)])
    total = sum((Fraction(int(d) * int(t), int(t + f)) for d, t, f in zip(d_tp, tp, fp) if d),
                Fraction(0))
    return float(total / s.id_scores.size)


def threshold_at_tpr(s, ood=None, tpr=0.95) -> float:
    """Largest candidate threshold t with #(id > t) / n_id >= tpr.

    Candidates are -inf and every observed score; FPR is constant between them.
    """
    s = _as_scores(s, ood)
    cands = np.unique(np.concatenate([s.id_scores, s.ood_scores]))
    ids = np.sort(s.id_scores)
    above = ids.size - np.searchsorted(ids, cands, side="right")
    ok = np.flatnonzero(above / ids.size >= tpr)
    return float(cands[ok[-1]]) if ok.size else float("-inf")


def fpr_at_95_tpr(s, ood=None) -> float:
    s = _as_scores(s, ood)
    t = threshold_at_tpr(s)
    return float((s.ood_scores > t).mean())


def detect(score, threshold, predicted_class):
    """Return ``predicted_class`` when ``score > threshold``, else ``None`` (reject)."""
    return predicted_class if score > threshold else None


def detect_batch(params: ParameterSet, X, threshold) -> np.ndarray:
    """Predicted class per row, or ``REJECT`` where the confidence is not above threshold."""
    logits = forward(params, np.asarray(X, dtype=np.float64))
    conf = kernels.confidence_scores(logits, 1.0)
    return np.where(conf > threshold, logits.argmax(axis=1), REJECT)


def selection_prf(selection, truth, side="ID") -> PrfResult:
    """Precision/recall/F of a selection against hidden ground truth.

    ``selection`` is a SelectionResult; ``truth`` holds OodTruth codes for U.
    """
    truth = np.asarray(truth)
    if side == "ID":
        chosen = selection.in_indices
        positive = truth == OodTruth.ID
    elif side == "OOD":
        chosen = selection.out_indices
        positive = truth != OodTruth.ID
    else:
        raise InvalidArgument(f"side must be 'ID' or 'OOD', got {side!r}")
    hits = int(positive[chosen].sum())
    p = hits / chosen.size if chosen.size else 0.0
    r = hits / int(positive.sum()) if positive.any() else 0.0
    f = 2 * p * r / (p + r) if p > 0 and r > 0 else 0.0
    return PrfResult(p, r, f)


def classification_accuracy(params: ParameterSet, X, y) -> float:
    """Fraction of rows whose argmax logit (lowest index on ties) equals the label."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise InvalidArgument("empty test set")
    pred = forward(params, X).argmax(axis=1)
    return float((pred == np.asarray(y)).mean())


def detection_report(params: ParameterSet, id_X, ood_X) -> dict:
    ss = ScoreSet(detection_scores(params, id_X), detection_scores(params, ood_X))
    return {"auroc": auroc(ss), "aupr": aupr(ss), "fpr95": fpr_at_95_tpr(ss)}
