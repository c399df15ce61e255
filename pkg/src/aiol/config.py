"""Experiment configuration: TOML sections [data], [train], [augment], [eval].

Unknown sections or keys are errors. Relative paths resolve against the
config file's directory.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .data import OOD_FAMILIES, SyntheticSpec
from .errors import ConfigError, InvalidArgument
from .trainer import TrainConfig

AUGMENT_KEYS = ("weak_fraction", "n_ops", "magnitude", "mixup_alpha", "mixup_mode", "use_randaugment")
SCHEDULES = ("desk", "full")

_DATA_KEYS = tuple(f.name for f in dataclasses.fields(SyntheticSpec) if f.name != "seed")
_TRAIN_KEYS = tuple(f.name for f in dataclasses.fields(TrainConfig)
                    if f.name not in AUGMENT_KEYS and f.name != "seed")


@dataclass
class EvalOptions:
    # extra unseen families scored besides the bundle's own (synthetic data only)
    unseen_families: tuple[str, ...] = ()
    out_dir: Path | None = None

    def __post_init__(self):
        self.unseen_families = tuple(self.unseen_families)
        bad = [f for f in self.unseen_families if f not in OOD_FAMILIES]
        if bad:
            raise ConfigError(f"unknown unseen families {bad}; expected from {OOD_FAMILIES}")


@dataclass
class ExperimentConfig:
    data: SyntheticSpec = field(default_factory=SyntheticSpec)
    data_dir: Path | None = None
    schedule: str = "desk"
    train_overrides: dict = field(default_factory=dict)
    eval: EvalOptions = field(default_factory=EvalOptions)
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ConfigError("seed list is empty")
        self.train_config(self.seeds[0])
        try:
            self.data.validate()
        except InvalidArgument as exc:
            raise ConfigError(f"[data] {exc}") from exc

    def train_config(self, seed: int, **extra) -> TrainConfig:
        kw = {**self.train_overrides, **extra, "seed": seed}
        try:
            if self.schedule == "desk":
                return TrainConfig.desk(**kw)
            return TrainConfig(**kw)
        except (InvalidArgument, TypeError, ValueError) as exc:
            raise ConfigError(f"[train]/[augment] {exc}") from exc

    def data_spec(self, seed: int, **extra) -> SyntheticSpec:
        return dataclasses.replace(self.data, seed=seed, **extra)

    def with_seeds(self, seeds) -> "ExperimentConfig":
        return dataclasses.replace(self, seeds=tuple(seeds))

    def model_dict(self) -> dict:
        """Everything that shapes a trained model, minus seeds and paths."""
        data = dataclasses.asdict(self.data)
        data.pop("seed")
        train = self.train_config(0).to_dict()
        train.pop("seed")
        return {"data": data, "train": train}

    def to_dict(self) -> dict:
        d = self.model_dict()
        d["schedule"] = self.schedule
        d["seeds"] = list(self.seeds)
        d["eval"] = {"unseen_families": list(self.eval.unseen_families)}
        return d


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.model_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _take(section: dict, allowed, name) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    return dict(section)


def _resolve(p, base: Path | None) -> Path:
    p = Path(p)
    if not p.is_absolute() and base is not None:
        p = base / p
    return p


def from_mapping(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    unknown = sorted(set(doc) - {"data", "train", "augment", "eval"})
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    data = _take(doc.get("data", {}), (*_DATA_KEYS, "data_dir"), "data")
    train = _take(doc.get("train", {}), (*_TRAIN_KEYS, "schedule", "seeds"), "train")
    augment = _take(doc.get("augment", {}), AUGMENT_KEYS, "augment")
    ev = _take(doc.get("eval", {}), ("unseen_families", "out_dir"), "eval")

    data_dir = data.pop("data_dir", None)
    if data_dir is not None:
        data_dir = _resolve(data_dir, base_dir)
        if not data_dir.is_dir():
            raise ConfigError(f"data_dir does not exist: {data_dir}")
    try:
        spec = SyntheticSpec(**data)
    except TypeError as exc:
        raise ConfigError(f"[data] {exc}") from exc
    schedule = train.pop("schedule", "desk")
    seeds = train.pop("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    if "hidden" in train:
        train["hidden"] = tuple(train["hidden"])
    if "thresholds" in train and not isinstance(train["thresholds"], str):
        train["thresholds"] = tuple(train["thresholds"])
    out_dir = ev.pop("out_dir", None)
    eval_opts = EvalOptions(unseen_families=ev.get("unseen_families", ()),
                            out_dir=_resolve(out_dir, base_dir) if out_dir else None)
    return ExperimentConfig(spec, data_dir, schedule, {**train, **augment}, eval_opts, seeds)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_mapping(doc, path.resolve().parent)
