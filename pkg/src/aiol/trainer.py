"""The two-stage training loop.

Stage 1 trains on the supervised and consistency losses. Stage 2 fits the
score mixture on U once per epoch, selects likely-ID and likely-OOD samples
and trains on the supervised, entropy-minimisation and entropy-maximisation
losses. The temperature is calibrated on V every epoch after warm-up.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .augment import AugmentationPolicy, MixupConfig, rand_transform, sample_lambda, weak_augment
from .data import DatasetBundle, OodTruth, make_batches
from .errors import DegenerateDistribution, InsufficientData, InvalidArgument, TrainingDiverged
from .losses import (DIVERGENCE_BOUND, LossWeights, consistency_term, entropy_max_term,
                     entropy_min_term, mixed_batch, stage_schedule, supervised_term, total_loss)
from .metrics import auroc, selection_prf
from .nn import EmaState, ParameterSet, compute_gradients, ema_update, forward, init_params, sgd_step
from .selection import ThresholdPair, dynamic_thresholds, select_in_out
from .temperature import calibrate_temperature

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "epoch", "T_t", "tau_in", "tau_out", "n_sel_in", "n_sel_out",
    "loss_s", "loss_cr", "loss_emin", "loss_emax",
    "sel_P_in", "sel_R_in", "sel_F_in", "sel_P_out", "sel_R_out", "sel_F_out", "auroc_U",
)


@dataclass
class TrainConfig:
    epochs: int = 256
    iterations_per_epoch: int = 512
    stage_switch_fraction: float = 0.8
    temperature_warmup_epochs: int = 40
    batch_L: int = 32
    batch_U: int = 256
    lr: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 5e-4
    ema_decay: float = 0.999
    hidden: tuple[int, ...] = (64, 64)
    slope: float = 0.01
    # augmentation
    weak_fraction: float = 0.05
    n_ops: int = 2
    magnitude: float = 0.2
    mixup_alpha: float = 0.2
    mixup_mode: str = "modified"
    use_randaugment: bool = True
    # temperature: "adaptive" or a fixed positive number
    temperature: str | float = "adaptive"
    T_min: float = 0.25
    T_max: float = 10.0
    T_tol: float = 1e-3
    # thresholds: "dynamic" or a fixed [tau_in, tau_out] pair
    thresholds: str | tuple[float, float] = "dynamic"
    # parameter set used for calibration and selection scores: "live" or "ema"
    score_params: str = "ema"
    gmm_max_iters: int = 200
    gmm_tol: float = 1e-6
    # module switches for ablations
    use_consistency: bool = True
    use_entropy: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.iterations_per_epoch < 1:
            raise InvalidArgument("epochs and iterations_per_epoch must be >= 1")
        if not 0 < self.stage_switch_fraction < 1:
            raise InvalidArgument("stage_switch_fraction must lie in (0, 1)")
        if self.temperature != "adaptive" and not float(self.temperature) > 0:
            raise InvalidArgument("temperature must be 'adaptive' or a positive number")
        if self.thresholds != "dynamic":
            tau_in, tau_out = self.thresholds
            if not tau_out <= tau_in:
                raise InvalidArgument("fixed thresholds need tau_out <= tau_in")
            self.thresholds = (float(tau_in), float(tau_out))
        self.hidden = tuple(int(h) for h in self.hidden)
        MixupConfig(self.mixup_alpha, self.mixup_mode)

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Reduced schedule: 60 epochs x 100 iterations, 10 warm-up epochs.

        The EMA decay is shortened so the shadow lags about two epochs, as
        0.999 does at 512 iterations per epoch.
        """
        base = dict(epochs=60, iterations_per_epoch=100, temperature_warmup_epochs=10,
                    ema_decay=0.995)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        if isinstance(self.thresholds, tuple):
            d["thresholds"] = list(self.thresholds)
        return d

    def weights(self, epoch) -> LossWeights:
        w = stage_schedule(epoch, self.epochs, self.stage_switch_fraction)
        omega_stage1 = 1.0 if self.use_consistency else 0.0
        if not self.use_entropy:
            return LossWeights(omega_stage1, 0.0, 0.0)
        if w.omega > 0:
            return LossWeights(omega_stage1, 0.0, 0.0)
        return w


@dataclass
class TraceRow:
    epoch: int
    T_t: float
    tau_in: float | None = None
    tau_out: float | None = None
    n_sel_in: int | None = None
    n_sel_out: int | None = None
    loss_s: float = 0.0
    loss_cr: float = 0.0
    loss_emin: float = 0.0
    loss_emax: float = 0.0
    sel_P_in: float | None = None
    sel_R_in: float | None = None
    sel_F_in: float | None = None
    sel_P_out: float | None = None
    sel_R_out: float | None = None
    sel_F_out: float | None = None
    auroc_U: float | None = None


@dataclass
class TrainingTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow):
        if self.rows and row.epoch <= self.rows[-1].epoch:
            raise InvalidArgument("trace epochs must increase")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return [getattr(r, name) for r in self.rows]

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(getattr(r, c)) for c in TRACE_COLUMNS])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class TrainResult:
    params: ParameterSet
    ema: EmaState
    trace: TrainingTrace
    config: TrainConfig
    policy: AugmentationPolicy
    final_scores_U: np.ndarray | None = None
    final_selection: object = None

    @property
    def detector(self) -> ParameterSet:
        """Parameters used at inference: the EMA shadow."""
        return self.ema.shadow


def _streams(seed):
    ss = np.random.SeedSequence([seed, 20220])
    init, aug, mix = ss.spawn(3)
    return (int(init.generate_state(1)[0]), np.random.default_rng(aug), np.random.default_rng(mix))


def _auroc_U(params, XU, truth):
    is_id = truth == OodTruth.ID
    if is_id.all() or not is_id.any():
        return None
    s = kernels.confidence_scores(forward(params, XU), 1.0)
    return auroc(s[is_id], s[~is_id])


def _epoch_temperature(cfg, epoch, params, bundle):
    if cfg.temperature != "adaptive":
        return float(cfg.temperature)
    if epoch <= cfg.temperature_warmup_epochs:
        return 1.0
    res = calibrate_temperature(params, bundle.V.features, bundle.V.labels,
                                cfg.T_min, cfg.T_max, cfg.T_tol)
    return res.T


def _epoch_selection(cfg, params, XU, T, K):
    scores = kernels.confidence_scores(forward(params, XU), T)
    if cfg.thresholds == "dynamic":
        try:
            thr, _ = dynamic_thresholds(scores, K, cfg.gmm_max_iters, cfg.gmm_tol)
        except (DegenerateDistribution, InsufficientData) as exc:
            log.info("selection skipped: %s", exc)
            return scores, None, None
    else:
        thr = ThresholdPair(*cfg.thresholds)
    return scores, thr, select_in_out(scores, thr)


def train(config: TrainConfig, bundle: DatasetBundle) -> TrainResult:
    """Run the full schedule; deterministic for a given config and bundle."""
    cfg = config
    if len(bundle.V) == 0:
        raise InvalidArgument("validation set is empty")
    K = bundle.n_classes
    XL, yL = bundle.L.features, bundle.L.labels
    XU = bundle.unlabeled_features()
    init_seed, rng_aug, rng_mix = _streams(cfg.seed)
    policy = AugmentationPolicy.for_data(
        np.vstack([XL, XU]), cfg.weak_fraction, n_ops=cfg.n_ops, magnitude=cfg.magnitude)
    mix_policy = policy if cfg.use_randaugment else None
    mix_cfg = MixupConfig(cfg.mixup_alpha, cfg.mixup_mode)

    params = init_params((bundle.dim, *cfg.hidden, K), init_seed, cfg.slope)
    ema = EmaState(params.copy(), cfg.ema_decay)
    buf = None
    trace = TrainingTrace()
    scores = selection = None

    for epoch in range(1, cfg.epochs + 1):
        w = cfg.weights(epoch)
        scorer = ema.shadow if cfg.score_params == "ema" else params
        T_t = _epoch_temperature(cfg, epoch, scorer, bundle)
        row = TraceRow(epoch, T_t)
        selection = None
        if w.beta > 0 or w.gamma > 0:
            scores, thr, selection = _epoch_selection(cfg, scorer, XU, T_t, K)
            if selection is not None:
                truth = bundle.U.ood_truth
                p_in = selection_prf(selection, truth, "ID")
                p_out = selection_prf(selection, truth, "OOD")
                row.tau_in, row.tau_out = thr.tau_in, thr.tau_out
                row.n_sel_in, row.n_sel_out = selection.n_in, selection.n_out
                row.sel_P_in, row.sel_R_in, row.sel_F_in = p_in.precision, p_in.recall, p_in.f_score
                row.sel_P_out, row.sel_R_out, row.sel_F_out = p_out.precision, p_out.recall, p_out.f_score
        if selection is not None:
            in_mask_U, out_mask_U = selection.masks(len(XU))

        sums = np.zeros(4)
        batches = make_batches(XL, XU, cfg.batch_L, cfg.batch_U, cfg.seed, epoch,
                               cfg.iterations_per_epoch)
        for iL, iU in batches:
            xb_L, yb_L = XL[iL], yL[iL]
            xb_U = XU[iU]
            nb = len(xb_U)
            x_weak = weak_augment(xb_U, rng_aug, policy.weak_sigma)
            x_strong = rand_transform(xb_U, policy, rng_aug)

            in_rows = out_rows = np.zeros(0, dtype=np.int64)
            x_mixed = None
            if selection is not None:
                in_rows = np.flatnonzero(in_mask_U[iU])
                out_rows = np.flatnonzero(out_mask_U[iU])
                rows = np.concatenate([in_rows, out_rows])
                if rows.size:
                    lam = 1.0 if cfg.mixup_mode == "none" else sample_lambda(mix_cfg, rng_mix)
                    partners = rng_mix.integers(0, nb, nb)
                    x_mixed = mixed_batch(xb_U, rows, lam, mix_policy, rng_aug, partners)

            def closure(tape):
                ls = supervised_term(tape, params, xb_L, yb_L, 1.0)
                lcr = consistency_term(tape, params, x_weak, x_strong, T_t, w.omega)
                lmin = lmax = 0.0
                if x_mixed is not None:
                    lmin = entropy_min_term(tape, params, xb_U[in_rows], x_mixed[:in_rows.size],
                                            nb, w.beta)
                    lmax = entropy_max_term(tape, params, x_mixed[in_rows.size:], nb, w.gamma)
                parts = (ls, lcr, lmin, lmax)
                if any(not math.isfinite(p) or abs(p) > DIVERGENCE_BOUND for p in parts):
                    raise TrainingDiverged(f"epoch {epoch}: loss components {parts}", trace)
                closure.parts = parts
                return total_loss(w, *parts)

            try:
                _, grads = compute_gradients(params, closure)
                params, buf = sgd_step(params, grads, cfg.lr, cfg.momentum, cfg.weight_decay, buf)
            except TrainingDiverged as exc:
                raise TrainingDiverged(str(exc), trace) from exc
            ema = ema_update(ema, params)
            sums += closure.parts

        row.loss_s, row.loss_cr, row.loss_emin, row.loss_emax = (sums / len(batches)).tolist()
        row.auroc_U = _auroc_U(ema.shadow, XU, bundle.U.ood_truth)
        trace.append(row)
        log.debug("epoch %d T=%.3f losses=%s", epoch, T_t, sums / len(batches))

    return TrainResult(params, ema, trace, cfg, policy, scores, selection)
