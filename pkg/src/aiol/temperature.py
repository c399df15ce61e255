"""Temperature calibration on the ID validation set and numerical checks of
how the in/out confidence gap depends on temperature."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidArgument
from .nn import ParameterSet, confidence_score, forward

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
MONOTONE_MARGIN = 1e-12


@dataclass(frozen=True)
class CalibrationResult:
    T: float
    nll: float
    search_iterations: int


def validation_nll(logits, labels, T) -> float:
    """Summed negative log-likelihood of the true labels at temperature T."""
    return float(kernels.temperature_nll(logits, labels, float(T)))


def calibrate_logits(logits, labels, T_min=0.25, T_max=10.0, tol=1e-3) -> CalibrationResult:
    """Golden-section minimisation of :func:`validation_nll` over [T_min, T_max]."""
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if logits.shape[0] == 0:
        raise InvalidArgument("validation set is empty")
    if not 0 < T_min < T_max or tol <= 0:
        raise InvalidArgument("need 0 < T_min < T_max and tol > 0")

    def f(T):
        return validation_nll(logits, labels, T)

    a, b = float(T_min), float(T_max)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol:
        it += 1
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    mid = 0.5 * (a + b)
    # unimodality guard: fall back to whichever of the three is best
    candidates = [(f(mid), mid), (f(T_min), float(T_min)), (f(T_max), float(T_max))]
    best_nll, best_T = min(candidates, key=lambda c: c[0])
    return CalibrationResult(best_T, best_nll, it)


def calibrate_temperature(params: ParameterSet, V_features, V_labels,
                          T_min=0.25, T_max=10.0, tol=1e-3) -> CalibrationResult:
    """Choose T minimising the validation NLL; logits over V are computed once."""
    X = np.asarray(V_features, dtype=np.float64)
    if X.shape[0] == 0:
        raise InvalidArgument("validation set is empty")
    return calibrate_logits(forward(params, X), V_labels, T_min, T_max, tol)


# ---------------------------------------------------------------------------
# confidence gap for K = 2


def _check_pair(s_in, s_out):
    if not 0.5 < s_out < s_in < 1.0:
        raise InvalidArgument(f"need 0.5 < s_out < s_in < 1, got s_in={s_in}, s_out={s_out}")


def _log_ratio(s):
    # S(T) = 1 / (1 + r**(1/T)) with r = (1 - s) / s
    return math.log1p(-s) - math.log(s)


def confidence_gap(s_in, s_out, T) -> float:
    """S_in(T) - S_out(T) for two-class scores given their values at T = 1."""
    _check_pair(s_in, s_out)
    if not T > 0:
        raise InvalidArgument("temperature must be positive")
    if T == 1:
        return s_in - s_out
    a = math.exp(_log_ratio(s_in) / T)
    b = math.exp(_log_ratio(s_out) / T)
    return (b - a) / ((1.0 + a) * (1.0 + b))


def log_confidence_gap(s_in, s_out, T_grid) -> np.ndarray:
    """log of :func:`confidence_gap` on a grid, evaluated without underflow."""
    _check_pair(s_in, s_out)
    T = np.asarray(T_grid, dtype=np.float64)
    la = _log_ratio(s_in) / T
    lb = _log_ratio(s_out) / T
    return lb + np.log1p(-np.exp(la - lb)) - np.log1p(np.exp(la)) - np.log1p(np.exp(lb))


def default_grid(step=0.01, T_max=10.0) -> np.ndarray:
    n = int(round(T_max / step))
    return np.arange(1, n + 1) * step


@dataclass
class TheoremReport:
    s_in: float
    s_out: float
    gap_curve: list[tuple[float, float]]
    c_estimate: float | None
    eq4_verdict: bool
    eq5_verdict: bool
    violations: list[str] = field(default_factory=list)

    @property
    def c_label(self):
        return "≤ 1" if self.c_estimate is None else self.c_estimate

    def to_dict(self, include_curve=False) -> dict:
        out = {
            "s_in": self.s_in,
            "s_out": self.s_out,
            "c_estimate": self.c_label,
            "eq4_verdict": self.eq4_verdict,
            "eq5_verdict": self.eq5_verdict,
            "violations": list(self.violations),
        }
        if include_curve:
            out["gap_curve"] = [list(p) for p in self.gap_curve]
        return out


def _strictly_increasing(log_vals, margin):
    # margin applies to log-gap differences, i.e. a relative margin on the gap
    return np.diff(log_vals) > margin


def verify_theorem1(s_in, s_out, T_grid=None, margin=MONOTONE_MARGIN) -> TheoremReport:
    """Check gap monotonicity below and above T = 1 on a grid.

    Below 1 the gap must increase strictly with T. Above 1 the grid argmax
    of the gap estimates the turning point ``c`` (``None`` when the gap is
    already maximal at T = 1) and the gap must increase strictly on [1, c).
    """
    _check_pair(s_in, s_out)
    grid = default_grid() if T_grid is None else np.asarray(T_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2 or (grid <= 0).any() or (np.diff(grid) <= 0).any():
        raise InvalidArgument("grid must be strictly increasing and positive")
    one = np.flatnonzero(np.isclose(grid, 1.0, rtol=0, atol=1e-12))
    if one.size != 1:
        raise InvalidArgument("grid must contain T = 1")
    i1 = int(one[0])
    lg = log_confidence_gap(s_in, s_out, grid)
    violations = []

    below = _strictly_increasing(lg[: i1 + 1], margin)
    eq5 = bool(below.all())
    for k in np.flatnonzero(~below):
        violations.append(f"eq5: gap({grid[k + 1]:.4g}) <= gap({grid[k]:.4g})")

    i_c = i1 + int(np.argmax(lg[i1:]))
    if i_c == i1:
        c_est = None
        eq4 = True
    else:
        c_est = float(grid[i_c])
        above = _strictly_increasing(lg[i1:i_c], margin)
        eq4 = bool(above.all())
        for k in np.flatnonzero(~above):
            violations.append(f"eq4: gap({grid[i1 + k + 1]:.4g}) <= gap({grid[i1 + k]:.4g})")

    curve = list(zip(grid.tolist(), np.exp(lg).tolist()))
    return TheoremReport(float(s_in), float(s_out), curve, c_est, eq4, eq5, violations)


def verify_topk_approximation(logits, T=1.0):
    """Exact confidence against the top-two approximation 1/(1 + (p2/p1)**(1/T)).

    Returns ``(exact, approx, abs_error)``.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise InvalidArgument("need a single logit vector with K >= 2")
    exact = float(confidence_score(z, T))
    top = np.sort(z)[::-1]
    approx = 1.0 / (1.0 + math.exp((top[1] - top[0]) / T))
    return exact, approx, abs(exact - approx)
