"""Command-line entry point: ``aiol {gen-data,train,eval,verify-theorem,ablate}``.

Exit codes: 0 success, 1 usage or config error, 2 training diverged,
3 I/O failure, 4 a verified property failed (verify-theorem).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, config_hash, load_config
from .data import DatasetBundle, generate_synthetic, load_bundle, save_bundle
from .errors import ConfigError, IngestionError, InvalidArgument, TrainingDiverged
from .metrics import classification_accuracy, detection_report
from .nn import ParameterSet
from .temperature import verify_theorem1
from .trainer import TrainResult, train

log = logging.getLogger("aiol")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_IO, EXIT_FAILED = 0, 1, 2, 3, 4

METRIC_KEYS = ("seen_auroc", "unseen_auroc_avg", "aupr", "fpr95", "accuracy")

ABLATIONS = {
    "temperature": [
        ("adaptive", {}),
        ("T=0.5", {"temperature": 0.5}),
        ("T=1", {"temperature": 1.0}),
        ("T=2", {"temperature": 2.0}),
    ],
    "thresholds": [
        ("dynamic", {}),
        ("fixed 0.9/0.3", {"thresholds": (0.9, 0.3)}),
        ("fixed 0.7/0.5", {"thresholds": (0.7, 0.5)}),
    ],
    "mixup": [
        ("modified", {}),
        ("vanilla", {"mixup_mode": "vanilla"}),
        ("none", {"mixup_mode": "none"}),
    ],
    "modules": [
        ("full", {}),
        ("supervised only", {"use_consistency": False, "use_entropy": False}),
        ("no entropy terms", {"use_entropy": False}),
        ("no augmentation", {"use_randaugment": False, "mixup_mode": "none"}),
    ],
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# helpers


def _parse_seeds(text):
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def _experiment(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed:
        cfg = cfg.with_seeds(args.seed)
    return cfg


def _out_dir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.eval.out_dir is not None:
        return cfg.eval.out_dir
    return Path("aiol_out")


def _mkdir(path: Path):
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create directory {path}: {exc}", EXIT_IO) from exc


def _write_json(path: Path, obj):
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                        encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def _data_dir_for(root: Path, seed: int) -> Path:
    per_seed = root / f"seed_{seed}"
    return per_seed if per_seed.is_dir() else root


def _bundle(cfg: ExperimentConfig, data_root: Path | None, seed: int) -> DatasetBundle:
    """Bundle for one seed: read from CSV when a data directory is given, else generate."""
    if data_root is None:
        return generate_synthetic(cfg.data_spec(seed))
    d = _data_dir_for(data_root, seed)
    try:
        return load_bundle(d, cfg.data.K, cfg.data.unseen_family)
    except IngestionError as exc:
        if str(exc).startswith("no such data file"):
            raise CliError(str(exc), EXIT_USAGE) from exc
        raise CliError(str(exc), EXIT_IO) from exc
    except InvalidArgument as exc:
        raise CliError(f"{d}: {exc}", EXIT_USAGE) from exc


def _data_root(args, cfg) -> Path | None:
    if getattr(args, "data", None):
        return Path(args.data)
    return cfg.data_dir


def _extra_unseen(cfg: ExperimentConfig, seed: int, families) -> dict:
    out = {}
    for fam in families:
        if fam == cfg.data.unseen_family:
            continue
        try:
            spec = cfg.data_spec(seed, unseen_family=fam)
            out[fam] = generate_synthetic(spec).test_unseen_ood.features
        except InvalidArgument as exc:
            raise CliError(f"[eval] unseen family {fam!r}: {exc}", EXIT_USAGE) from exc
    return out


def evaluate(detector: ParameterSet, bundle: DatasetBundle, extra_unseen=None) -> dict:
    """Report metrics for one detector: seen and unseen OOD scored separately."""
    X_id = bundle.test_id.features
    seen = detection_report(detector, X_id, bundle.test_seen_ood.features)
    families = {bundle.unseen_family: bundle.test_unseen_ood.features}
    families.update(extra_unseen or {})
    unseen = {f: detection_report(detector, X_id, X) for f, X in sorted(families.items())}
    return {
        "seen_auroc": seen["auroc"],
        "unseen_auroc": {f: r["auroc"] for f, r in unseen.items()},
        "unseen_auroc_avg": float(np.mean([r["auroc"] for r in unseen.values()])),
        "aupr": seen["aupr"],
        "fpr95": seen["fpr95"],
        "unseen_aupr_avg": float(np.mean([r["aupr"] for r in unseen.values()])),
        "unseen_fpr95_avg": float(np.mean([r["fpr95"] for r in unseen.values()])),
        "accuracy": classification_accuracy(detector, X_id, bundle.test_id.labels),
    }


def aggregate(per_seed: list[dict], keys=METRIC_KEYS) -> dict:
    out = {}
    for k in keys:
        vals = np.array([m[k] for m in per_seed], dtype=np.float64)
        out[k] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out


def _train_summary(res: TrainResult) -> dict:
    last = res.trace.rows[-1]
    cfg = res.config
    post = res.trace.column("T_t")[cfg.temperature_warmup_epochs:] if cfg.temperature == "adaptive" else []
    return {
        "epochs": len(res.trace),
        "final_T": last.T_t,
        "min_T_after_warmup": min(post) if post else None,
        "final_auroc_U": last.auroc_U,
        "final_sel_F_in": last.sel_F_in,
        "final_sel_F_out": last.sel_F_out,
    }


def _run_training(cfg: ExperimentConfig, bundle, seed, **overrides) -> TrainResult:
    tc = cfg.train_config(seed, **overrides)
    return train(tc, bundle)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    cfg = _experiment(args)
    out = _out_dir(args, cfg) / "data"
    written = []
    for seed in cfg.seeds:
        d = out / f"seed_{seed}"
        _mkdir(d)
        try:
            paths = save_bundle(generate_synthetic(cfg.data_spec(seed)), d)
        except OSError as exc:
            raise CliError(f"cannot write data under {d}: {exc}", EXIT_IO) from exc
        written.extend(str(p) for p in paths)
    print(f"wrote {len(written)} files under {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _experiment(args)
    out = _out_dir(args, cfg)
    root = _data_root(args, cfg)
    if root is None:
        root = out / "data"
    h = config_hash(cfg)
    entries = []
    for seed in cfg.seeds:
        bundle = _bundle(cfg, root, seed)
        run_dir = out / f"seed_{seed}"
        _mkdir(run_dir)
        try:
            res = _run_training(cfg, bundle, seed)
        except TrainingDiverged as exc:
            if exc.trace is not None:
                exc.trace.write_csv(run_dir / "trace.csv")
            print(f"seed {seed}: training diverged: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        try:
            res.trace.write_csv(run_dir / "trace.csv")
            save_checkpoint(run_dir / "checkpoint.npz", res.params, res.ema, h,
                            cfg.model_dict(), seed)
        except OSError as exc:
            raise CliError(f"cannot write outputs under {run_dir}: {exc}", EXIT_IO) from exc
        entry = {"seed": seed, "trace": f"seed_{seed}/trace.csv",
                 "checkpoint": f"seed_{seed}/checkpoint.npz", **_train_summary(res)}
        entries.append(entry)
        print(f"seed {seed}: {entry['epochs']} epochs, final auroc_U {entry['final_auroc_U']}")
    _write_json(out / "train_report.json",
                {"schema_version": SCHEMA_VERSION, "config_hash": h, "config": cfg.to_dict(),
                 "per_seed": entries})
    return EXIT_OK


def _checkpoint_path(root: Path, seed: int) -> Path:
    if root.is_file():
        return root
    return root / f"seed_{seed}" / "checkpoint.npz"


def cmd_eval(args) -> int:
    cfg = _experiment(args)
    out = _out_dir(args, cfg)
    ck_root = Path(args.checkpoint) if args.checkpoint else out
    root = _data_root(args, cfg)
    if root is None:
        root = out / "data"
    h = config_hash(cfg)
    entries = []
    for seed in cfg.seeds:
        path = _checkpoint_path(ck_root, seed)
        if not path.is_file():
            raise CliError(f"no checkpoint at {path}", EXIT_USAGE)
        try:
            ck = load_checkpoint(path, expected_hash=h)
        except OSError as exc:
            raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from exc
        bundle = _bundle(cfg, root, ck.seed)
        metrics = evaluate(ck.detector, bundle, _extra_unseen(cfg, ck.seed, cfg.eval.unseen_families))
        trace = Path(f"seed_{seed}") / "trace.csv"
        entries.append({"seed": ck.seed, "metrics": metrics,
                        "trace": str(trace) if (out / trace).is_file() else None})
    report = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": h,
        "config": cfg.to_dict(),
        "per_seed": entries,
        "aggregate": aggregate([e["metrics"] for e in entries]),
    }
    _mkdir(out)
    _write_json(out / "report.json", report)
    agg = report["aggregate"]
    print(" ".join(f"{k}={agg[k]['mean']:.4f}" for k in METRIC_KEYS))
    return EXIT_OK


def _theorem_pairs(args):
    if args.random is not None:
        if args.random < 1:
            raise CliError("--random needs a positive count", EXIT_USAGE)
        rng = np.random.default_rng(args.pair_seed)
        pairs = []
        while len(pairs) < args.random:
            a, b = rng.uniform(0.5, 1.0, 2)
            if a != b and min(a, b) > 0.5:
                pairs.append((max(a, b), min(a, b)))
        return pairs
    pairs = []
    for chunk in args.pairs.split(";"):
        try:
            s_in, s_out = (float(v) for v in chunk.split(","))
        except ValueError:
            raise CliError(f"bad pair {chunk!r}; expected S_IN,S_OUT", EXIT_USAGE) from None
        if not 0.5 < s_out < s_in < 1:
            raise CliError(f"pair {chunk!r} must satisfy 0.5 < s_out < s_in < 1", EXIT_USAGE)
        pairs.append((s_in, s_out))
    return pairs


def cmd_verify_theorem(args) -> int:
    pairs = _theorem_pairs(args)
    out = Path(args.out) if args.out else Path("aiol_out")
    _mkdir(out)
    reports = [verify_theorem1(a, b, margin=args.margin) for a, b in pairs]
    n_ok = sum(r.eq4_verdict and r.eq5_verdict for r in reports)
    summary = {
        "n_pairs": len(reports),
        "n_all_true": n_ok,
        "n_eq4_true": sum(r.eq4_verdict for r in reports),
        "n_eq5_true": sum(r.eq5_verdict for r in reports),
    }
    _write_json(out / "theorem.json", {"schema_version": SCHEMA_VERSION, "summary": summary,
                                       "pairs": [r.to_dict() for r in reports]})
    try:
        with open(out / "gap_curves.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pair", "s_in", "s_out", "T", "gap"])
            for i, r in enumerate(reports):
                for T, g in r.gap_curve:
                    w.writerow([i, repr(r.s_in), repr(r.s_out), repr(T), repr(g)])
    except OSError as exc:
        raise CliError(f"cannot write gap curves: {exc}", EXIT_IO) from exc
    print(f"{n_ok}/{len(reports)} pairs satisfy both monotonicity claims")
    return EXIT_OK if n_ok == len(reports) else EXIT_FAILED


def cmd_ablate(args) -> int:
    cfg = _experiment(args)
    out = _out_dir(args, cfg)
    _mkdir(out)
    root = _data_root(args, cfg)
    variants = ABLATIONS[args.ablation]
    rows = []
    for name, overrides in variants:
        per_seed = []
        for seed in cfg.seeds:
            bundle = _bundle(cfg, root, seed)
            try:
                res = _run_training(cfg, bundle, seed, **overrides)
            except TrainingDiverged as exc:
                print(f"{name} seed {seed}: training diverged: {exc}", file=sys.stderr)
                return EXIT_DIVERGED
            m = evaluate(res.detector, bundle)
            m.update(_train_summary(res))
            per_seed.append({"seed": seed, **m})
        keys = METRIC_KEYS + ("final_auroc_U", "final_sel_F_in", "final_sel_F_out")
        means = {k: _mean_or_none([p[k] for p in per_seed]) for k in keys}
        rows.append({"variant": name, "overrides": {k: list(v) if isinstance(v, tuple) else v
                                                     for k, v in overrides.items()},
                     "mean": means, "per_seed": per_seed})
    ref = rows[0]["mean"]
    for r in rows:
        r["delta_vs_" + rows[0]["variant"].replace(" ", "_")] = {
            k: None if r["mean"][k] is None or ref[k] is None else r["mean"][k] - ref[k]
            for k in ref}
    _write_json(out / f"ablate_{args.ablation}.json",
                {"schema_version": SCHEMA_VERSION, "config_hash": config_hash(cfg),
                 "ablation": args.ablation, "seeds": list(cfg.seeds), "rows": rows})
    try:
        with open(out / f"ablate_{args.ablation}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            keys = list(ref)
            w.writerow(["variant", *keys])
            for r in rows:
                w.writerow([r["variant"], *("" if r["mean"][k] is None else repr(r["mean"][k]) for k in keys)])
    except OSError as exc:
        raise CliError(f"cannot write ablation table: {exc}", EXIT_IO) from exc
    for r in rows:
        m = r["mean"]
        print(f"{r['variant']:>18}  seen {m['seen_auroc']:.4f}  unseen {m['unseen_auroc_avg']:.4f}  "
              f"U {_f(m['final_auroc_U'])}  F_in {_f(m['final_sel_F_in'])}  F_out {_f(m['final_sel_F_out'])}")
    return EXIT_OK


def _mean_or_none(vals):
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


def _f(v):
    return "  -   " if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.4f}"


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config")
    common.add_argument("--out", help="output directory (default: [eval].out_dir or ./aiol_out)")
    common.add_argument("--seed", type=_parse_seeds, help="seed list, e.g. 0,1,2")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="aiol", description="OOD detection with limited labels and mixed unlabeled data")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", parents=[common], help="write synthetic CSV splits")

    t = sub.add_parser("train", parents=[common], help="train one model per seed")
    t.add_argument("--data", help="data directory (default: OUT/data)")

    e = sub.add_parser("eval", parents=[common], help="evaluate checkpoints and write report.json")
    e.add_argument("--data", help="data directory (default: OUT/data)")
    e.add_argument("--checkpoint", help="checkpoint file or training output directory (default: OUT)")

    v = sub.add_parser("verify-theorem", parents=[common], help="check confidence-gap monotonicity")
    g = v.add_mutually_exclusive_group()
    g.add_argument("--pairs", default="0.999,0.8;0.9,0.7", help="S_IN,S_OUT[;S_IN,S_OUT...]")
    g.add_argument("--random", type=int, metavar="N", help="check N random pairs instead")
    v.add_argument("--pair-seed", type=int, default=0)
    v.add_argument("--margin", type=float, default=1e-12)

    a = sub.add_parser("ablate", parents=[common], help="run a matched ablation group")
    a.add_argument("ablation", choices=sorted(ABLATIONS))
    a.add_argument("--data", help="data directory (default: generate per seed)")
    return p


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify-theorem": cmd_verify_theorem,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"aiol: error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"aiol: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidArgument as exc:
        print(f"aiol: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"aiol: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"aiol: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
