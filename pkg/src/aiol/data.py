"""Synthetic dataset generation, CSV ingestion and batching.

Hidden OOD ground truth travels with every :class:`SampleSet` but the
training code only ever receives ``features`` (and ``labels`` for the
labeled split); see :meth:`DatasetBundle.unlabeled_features`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import IngestionError, InvalidArgument

NO_LABEL = -1
DEFAULT_ITERATIONS = 512


class OodTruth(IntEnum):
    ID = 0
    SEEN_OOD = 1
    UNSEEN_OOD = 2


_TRUTH_NAMES = {OodTruth.ID: "id", OodTruth.SEEN_OOD: "seen", OodTruth.UNSEEN_OOD: "unseen"}
_TRUTH_CODES = {v: k for k, v in _TRUTH_NAMES.items()}

SPLITS = ("L", "U", "V", "test_id", "test_seen_ood", "test_unseen_ood")


@dataclass(frozen=True)
class SampleSet:
    features: np.ndarray
    labels: np.ndarray
    ood_truth: np.ndarray

    def __post_init__(self):
        n = self.features.shape[0]
        if self.features.ndim != 2 or self.labels.shape != (n,) or self.ood_truth.shape != (n,):
            raise InvalidArgument("features, labels and ood_truth lengths disagree")
        if not np.isfinite(self.features).all():
            raise InvalidArgument("features must be finite")
        if ((self.labels != NO_LABEL) & (self.ood_truth != OodTruth.ID)).any():
            raise InvalidArgument("labeled samples must be in-distribution")
        for arr in (self.features, self.labels, self.ood_truth):
            arr.setflags(write=False)

    @classmethod
    def build(cls, features, labels=None, ood_truth=None) -> "SampleSet":
        X = np.asarray(features, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(0, 0) if X.size == 0 else X[None, :]
        n = X.shape[0]
        y = np.full(n, NO_LABEL, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
        t = np.zeros(n, dtype=np.int64) if ood_truth is None else np.asarray(ood_truth, dtype=np.int64)
        return cls(X.copy(), y.copy(), t.copy())

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def has_labels(self) -> bool:
        return bool((self.labels != NO_LABEL).all())


@dataclass(frozen=True)
class DatasetBundle:
    L: SampleSet
    U: SampleSet
    V: SampleSet
    test_id: SampleSet
    test_seen_ood: SampleSet
    test_unseen_ood: SampleSet
    n_classes: int
    unseen_family: str = "uniform-box"

    def __post_init__(self):
        for name in ("L", "V"):
            s = getattr(self, name)
            if (s.ood_truth != OodTruth.ID).any() or not s.has_labels:
                raise InvalidArgument(f"split {name} must contain labeled ID samples only")
        if len(self.U) < 5 * len(self.L):
            raise InvalidArgument(
                f"unlabeled set too small: |U|={len(self.U)} < 5*|L|={5 * len(self.L)}")
        if (self.U.ood_truth == OodTruth.UNSEEN_OOD).any():
            raise InvalidArgument("U must not contain unseen-OOD samples")

    def split(self, name: str) -> SampleSet:
        return getattr(self, name)

    def unlabeled_features(self) -> np.ndarray:
        """Training-facing view of U: features only."""
        return self.U.features

    @property
    def dim(self) -> int:
        return self.L.dim


# ---------------------------------------------------------------------------
# synthetic generation

FAMILIES = ("gaussian-clusters", "two-moons-ring")
OOD_FAMILIES = ("uniform-box", "ring", "blobs")
_SEEN_FAMILY = {"two-moons-ring": "ring", "gaussian-clusters": "blobs"}
_DEFAULT_NOISE = {"two-moons-ring": 0.3, "gaussian-clusters": 0.5}


@dataclass(frozen=True)
class SyntheticSpec:
    family: str = "two-moons-ring"
    d: int = 2
    K: int = 2
    n_per_class: int = 25
    m_in: int = 2000
    m_out: int = 2000
    noise: float | None = None
    unseen_family: str = "uniform-box"
    n_test_id: int = 1000
    n_test_ood: int = 1000
    seed: int = 0

    def validate(self):
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.K < 2 or self.d < 2:
            raise InvalidArgument("need K >= 2 and d >= 2")
        if self.family == "two-moons-ring" and self.K != 2:
            raise InvalidArgument("two-moons-ring has exactly K=2 classes")
        if min(self.n_per_class, self.m_in, self.m_out, self.n_test_id, self.n_test_ood) < 0:
            raise InvalidArgument("counts must be non-negative")
        if self.n_per_class < 1 or self.n_test_id < 10 * self.K:
            raise InvalidArgument("need at least one labeled sample per class and 10*K test-ID samples")
        if self.noise is not None and self.noise < 0:
            raise InvalidArgument("noise must be non-negative")
        if self.unseen_family not in OOD_FAMILIES or self.unseen_family == _SEEN_FAMILY[self.family]:
            raise InvalidArgument(
                f"unseen family {self.unseen_family!r} must be one of {OOD_FAMILIES} "
                f"and differ from the seen family {_SEEN_FAMILY[self.family]!r}")
        if self.m_in + self.m_out < 5 * self.K * self.n_per_class:
            raise InvalidArgument("need m_in + m_out >= 5 * K * n_per_class")

    @property
    def noise_scale(self) -> float:
        return _DEFAULT_NOISE[self.family] if self.noise is None else float(self.noise)


class _Geometry:
    """Class-conditional ID sampler plus OOD samplers for one family."""

    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self.noise = spec.noise_scale
        if spec.family == "two-moons-ring":
            self.center = np.array([0.5, 0.25])
            self.id_radius = 1.6
        else:
            angles = 2 * np.pi * np.arange(spec.K) / spec.K
            self.means = 3.0 * np.column_stack([np.cos(angles), np.sin(angles)])
            self.center = np.zeros(2)
            self.id_radius = 3.0 + 2 * self.noise

    def id_samples(self, counts, rng):
        blocks, labels = [], []
        for k, n in enumerate(counts):
            if self.spec.family == "two-moons-ring":
                t = rng.uniform(0.0, np.pi, n)
                if k == 0:
                    xy = np.column_stack([np.cos(t), np.sin(t)])
                else:
                    xy = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
                xy = xy + rng.normal(0.0, self.noise, (n, 2))
            else:
                xy = self.means[k] + rng.normal(0.0, self.noise, (n, 2))
            blocks.append(xy)
            labels.append(np.full(n, k))
        return self._pad(np.concatenate(blocks), rng), np.concatenate(labels)

    def ood_samples(self, family, n, rng):
        if family == "ring":
            r = 2.5 if self.spec.family == "two-moons-ring" else 6.5
            theta = rng.uniform(0.0, 2 * np.pi, n)
            rad = r + rng.normal(0.0, 0.15, n)
            xy = self.center + rad[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
        elif family == "blobs":
            n_blobs = max(self.spec.K, 3)
            r = 3.5 if self.spec.family == "two-moons-ring" else 6.5
            phase = np.pi / n_blobs
            angles = phase + 2 * np.pi * np.arange(n_blobs) / n_blobs
            centers = self.center + r * np.column_stack([np.cos(angles), np.sin(angles)])
            which = rng.integers(0, n_blobs, n)
            xy = centers[which] + rng.normal(0.0, 0.3, (n, 2))
        else:
            half = 2 * self.id_radius
            xy = self.center + rng.uniform(-half, half, (n, 2))
        return self._pad(xy, rng)

    def _pad(self, xy, rng):
        extra = self.spec.d - 2
        if extra == 0:
            return xy
        return np.hstack([xy, rng.normal(0.0, max(self.noise, 1e-3), (xy.shape[0], extra))])


def _balanced_counts(total, K):
    base, rem = divmod(total, K)
    return [base + (1 if k < rem else 0) for k in range(K)]


def generate_synthetic(spec: SyntheticSpec) -> DatasetBundle:
    """Build all six splits from one seed; identical specs give identical bundles."""
    spec.validate()
    geo = _Geometry(spec)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(6)]
    K = spec.K

    XL, yL = geo.id_samples([spec.n_per_class] * K, streams[0])
    L = SampleSet.build(XL, yL)

    Xin, _ = geo.id_samples(_balanced_counts(spec.m_in, K), streams[1])
    Xout = geo.ood_samples(_SEEN_FAMILY[spec.family], spec.m_out, streams[1])
    XU = np.vstack([Xin, Xout]) if spec.m_out else Xin
    truth = np.concatenate([np.zeros(spec.m_in, int), np.full(spec.m_out, int(OodTruth.SEEN_OOD))])
    perm = streams[1].permutation(len(XU))
    U = SampleSet.build(XU[perm], None, truth[perm])

    Xt, yt = geo.id_samples(_balanced_counts(spec.n_test_id, K), streams[2])
    perm = streams[2].permutation(len(Xt))
    Xt, yt = Xt[perm], yt[perm]
    n_val = int(round(0.1 * spec.n_test_id))
    V = SampleSet.build(Xt[:n_val], yt[:n_val])
    test_id = SampleSet.build(Xt[n_val:], yt[n_val:])

    seen = SampleSet.build(
        geo.ood_samples(_SEEN_FAMILY[spec.family], spec.n_test_ood, streams[3]),
        None, np.full(spec.n_test_ood, int(OodTruth.SEEN_OOD)))
    unseen = SampleSet.build(
        geo.ood_samples(spec.unseen_family, spec.n_test_ood, streams[4]),
        None, np.full(spec.n_test_ood, int(OodTruth.UNSEEN_OOD)))
    return DatasetBundle(L, U, V, test_id, seen, unseen, K, spec.unseen_family)


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, samples: SampleSet, with_label: bool, with_truth: bool):
    """Write a split with header ``f1..fd[,label][,ood_truth]``; floats round-trip exactly."""
    header = [f"f{i + 1}" for i in range(samples.dim)]
    if with_label:
        header.append("label")
    if with_truth:
        header.append("ood_truth")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, y, t in zip(samples.features, samples.labels, samples.ood_truth):
            row = [repr(float(v)) for v in x]
            if with_label:
                row.append("" if y == NO_LABEL else str(int(y)))
            if with_truth:
                row.append(_TRUTH_NAMES[OodTruth(int(t))])
            w.writerow(row)


def load_csv(path, d: int | None = None) -> SampleSet:
    """Read a split written by :func:`write_csv` (or by hand, same schema).

    Labels are 0-based class indices; an empty label cell means unlabeled.
    Every malformed row is collected before raising :class:`IngestionError`.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"no such data file: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IngestionError(f"{path}: missing header row", [1])
    header = [h.strip() for h in rows[0]]
    n_feat = 0
    while n_feat < len(header) and header[n_feat] == f"f{n_feat + 1}":
        n_feat += 1
    rest = header[n_feat:]
    if n_feat == 0 or rest not in ([], ["label"], ["ood_truth"], ["label", "ood_truth"]):
        raise IngestionError(f"{path}: bad header {header}", [1])
    if d is not None and n_feat != d:
        raise IngestionError(f"{path}: expected {d} feature columns, found {n_feat}", [1])
    has_label = "label" in rest
    has_truth = "ood_truth" in rest

    feats, labels, truths, bad = [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            bad.append((lineno, f"expected {len(header)} cells, got {len(row)}"))
            continue
        try:
            x = [float(c) for c in row[:n_feat]]
            if not all(math.isfinite(v) for v in x):
                raise ValueError("non-finite feature")
            y = NO_LABEL
            if has_label and row[n_feat].strip():
                y = int(row[n_feat])
            t = OodTruth.ID
            if has_truth:
                t = _TRUTH_CODES[row[-1].strip()]
            if y != NO_LABEL and t != OodTruth.ID:
                raise ValueError("labeled row must have ood_truth=id")
        except (ValueError, KeyError) as exc:
            bad.append((lineno, str(exc)))
            continue
        feats.append(x)
        labels.append(y)
        truths.append(int(t))
    if bad:
        detail = "; ".join(f"line {ln}: {msg}" for ln, msg in bad[:20])
        raise IngestionError(f"{path}: {len(bad)} malformed row(s): {detail}", [ln for ln, _ in bad])
    X = np.array(feats, dtype=np.float64).reshape(len(feats), n_feat)
    return SampleSet.build(X, labels, truths)


_CSV_LAYOUT = {
    "L": (True, False),
    "U": (False, True),
    "V": (True, False),
    "test_id": (True, True),
    "test_seen_ood": (False, True),
    "test_unseen_ood": (False, True),
}


def save_bundle(bundle: DatasetBundle, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in SPLITS:
        p = directory / f"{name}.csv"
        write_csv(p, bundle.split(name), *_CSV_LAYOUT[name])
        paths.append(p)
    return paths


def load_bundle(directory, n_classes: int | None = None, unseen_family="uniform-box") -> DatasetBundle:
    directory = Path(directory)
    splits = {name: load_csv(directory / f"{name}.csv") for name in SPLITS}
    if n_classes is None:
        n_classes = int(max(splits["L"].labels.max(), splits["V"].labels.max())) + 1
    return DatasetBundle(**splits, n_classes=n_classes, unseen_family=unseen_family)


# ---------------------------------------------------------------------------
# batching


def _index_stream(n, total, rng):
    reps = -(-total // n)
    return np.concatenate([rng.permutation(n) for _ in range(reps)])[:total]


def make_batches(L, U, batch_L, batch_U, seed, epoch, iterations=DEFAULT_ITERATIONS):
    """Index batches for one epoch: a list of ``(idx_L, idx_U)`` pairs.

    ``L`` and ``U`` may be anything with a length. Each split is walked through
    fresh permutations, wrapping around so every batch is full; the shuffle is
    keyed by ``(seed, epoch)``.
    """
    n_L, n_U = len(L), len(U)
    if n_L == 0 or n_U == 0:
        raise InvalidArgument("labeled and unlabeled sets must be non-empty")
    if batch_L < 1 or batch_U < 1 or iterations < 1:
        raise InvalidArgument("batch sizes and iterations must be >= 1")
    rng = np.random.default_rng([seed, epoch, 7919])
    sl = _index_stream(n_L, iterations * batch_L, rng).reshape(iterations, batch_L)
    su = _index_stream(n_U, iterations * batch_U, rng).reshape(iterations, batch_U)
    return list(zip(sl, su))
