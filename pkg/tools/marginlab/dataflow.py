"""
MarginLab - Synthetic datasets, the labeled/unlabeled/erroneous split and batch plans
"""
import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import ConfigurationError, LedgerError
from .rng import make_rng
from .types import BatchPlan, SPLIT_NAMES, Split

logger = logging.getLogger(__name__)

# Blob centers sit on a circle of this radius
BLOB_CENTER_RADIUS = 2.0


def _floor_frac(frac: float, count: int) -> int:
    # round first so 0.29*100 floors to 29, not 28
    return int(math.floor(round(frac * count, 9)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SslDataset:
    """Features, hidden gold labels, split tags and stable ids (0..n-1)"""
    features: np.ndarray       # (n, d) float64
    gold_labels: np.ndarray    # (n,) 0-based task classes
    split: np.ndarray          # (n,) Split codes
    ids: np.ndarray            # (n,)
    num_classes: int

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def ids_in(self, tag: Split) -> np.ndarray:
        return self.ids[self.split == tag]

    def split_sizes(self) -> dict:
        return {SPLIT_NAMES[tag]: int(np.sum(self.split == tag)) for tag in Split}

    def training_view(self) -> "TrainingView":
        """What the trainer may see: labels of the labeled and test splits only"""
        labeled = self.ids_in(Split.LABELED)
        test = self.ids_in(Split.TEST)
        targets = np.full(self.n, -1, dtype=np.int64)
        targets[labeled] = self.gold_labels[labeled]
        return TrainingView(
            features=self.features,
            num_classes=self.num_classes,
            labeled_ids=_frozen(labeled),
            unlabeled_ids=_frozen(self.ids_in(Split.UNLABELED)),
            erroneous_ids=_frozen(self.ids_in(Split.ERRONEOUS)),
            test_ids=_frozen(test),
            labeled_targets=_frozen(targets),
            test_targets=_frozen(self.gold_labels[test]),
        )

    def gold_oracle(self) -> "GoldOracle":
        """Gold labels of the unlabeled pool, for pseudo-label quality metrics only"""
        pool = np.isin(self.split, [Split.UNLABELED, Split.ERRONEOUS])
        return GoldOracle(known=_frozen(pool), labels=self.gold_labels)


@dataclass(frozen=True, eq=False)
class TrainingView:
    """Trainer-facing dataset surface; unlabeled/erroneous gold labels are absent"""
    features: np.ndarray
    num_classes: int
    labeled_ids: np.ndarray
    unlabeled_ids: np.ndarray
    erroneous_ids: np.ndarray
    test_ids: np.ndarray
    labeled_targets: np.ndarray   # indexed by id, -1 outside the labeled split
    test_targets: np.ndarray      # aligned with test_ids


class GoldOracle:
    """Hidden gold labels of the unlabeled pool"""

    def __init__(self, known: np.ndarray, labels: np.ndarray):
        self._known = known
        self._labels = labels

    def labels_of(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= len(self._known) or not np.all(self._known[ids])):
            raise LedgerError("gold label requested for an id outside the unlabeled pool")
        return self._labels[ids]


def _class_counts(n: int, num_classes: int) -> List[int]:
    base, extra = divmod(n, num_classes)
    return [base + (1 if c < extra else 0) for c in range(num_classes)]


def _unsplit(features: np.ndarray, labels: np.ndarray, num_classes: int) -> SslDataset:
    n = len(labels)
    return SslDataset(
        features=_frozen(features.astype(np.float64)),
        gold_labels=_frozen(labels.astype(np.int64)),
        split=_frozen(np.full(n, Split.UNLABELED, dtype=np.int64)),
        ids=_frozen(np.arange(n, dtype=np.int64)),
        num_classes=num_classes,
    )


def gen_two_moons(n: int, noise_sd: float, seed: int) -> SslDataset:
    """
    Two interleaved unit half-circles.

    Class 0 (ceil(n/2) points) lies on the upper circle centered at (0, 0),
    class 1 (floor(n/2) points) on the lower circle centered at (1, 0.5).
    """
    if n < 2:
        raise ConfigurationError("two moons needs n >= 2", key="dataset.n")
    rng = make_rng(seed, "data")
    n_outer = (n + 1) // 2
    n_inner = n // 2

    t_outer = np.linspace(0.0, math.pi, n_outer)
    t_inner = np.linspace(0.0, math.pi, n_inner)
    outer = np.column_stack([np.cos(t_outer), np.sin(t_outer)])
    inner = np.column_stack([1.0 - np.cos(t_inner), 0.5 - np.sin(t_inner)])

    features = np.vstack([outer, inner])
    if noise_sd > 0:
        features = features + rng.normal(0.0, noise_sd, size=features.shape)
    labels = np.concatenate([np.zeros(n_outer), np.ones(n_inner)])
    return _unsplit(features, labels, 2)


def gen_blobs(n: int, num_classes: int, spread: float, seed: int) -> SslDataset:
    """Isotropic Gaussian clusters around centers spaced on a circle"""
    if n < num_classes or num_classes < 2:
        raise ConfigurationError("blobs needs num_classes >= 2 and n >= num_classes", key="dataset.n")
    rng = make_rng(seed, "data")
    counts = _class_counts(n, num_classes)
    angles = 2.0 * math.pi * np.arange(num_classes) / num_classes
    centers = BLOB_CENTER_RADIUS * np.column_stack([np.cos(angles), np.sin(angles)])

    labels = np.repeat(np.arange(num_classes), counts)
    features = centers[labels]
    if spread > 0:
        features = features + rng.normal(0.0, spread, size=features.shape)
    return _unsplit(features, labels, num_classes)


def ring_radius(c: int) -> float:
    """Nominal radius of ring class c"""
    return 1.0 + c


def gen_rings(n: int, num_classes: int, noise_sd: float, seed: int) -> SslDataset:
    """Concentric annuli, class c at radius 1 + c"""
    if n < num_classes or num_classes < 2:
        raise ConfigurationError("rings needs num_classes >= 2 and n >= num_classes", key="dataset.n")
    rng = make_rng(seed, "data")
    counts = _class_counts(n, num_classes)
    labels = np.repeat(np.arange(num_classes), counts)
    radii = np.array([ring_radius(c) for c in labels])
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n)

    features = radii[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
    if noise_sd > 0:
        features = features + rng.normal(0.0, noise_sd, size=features.shape)
    return _unsplit(features, labels, num_classes)


def split_ssl(ds: SslDataset,
              labels_per_class: int,
              erroneous_frac: float,
              test_frac: float,
              seed: int,
              label_noise: float = 0.0) -> SslDataset:
    """
    Assign split tags.

    Per class: the test quota is held out first, then ``labels_per_class``
    examples are labeled. The remaining pool (size u) gives floor(erroneous_frac * u)
    erroneous examples; the rest are unlabeled.

    Args:
        ds: Unsplit dataset
        labels_per_class: Labeled examples per class
        erroneous_frac: Share of the pool moved to the virtual class, in (0, 1)
        test_frac: Per-class share held out for testing
        seed: Split seed
        label_noise: Share of the pool whose hidden gold label is reassigned

    Returns:
        New SslDataset with split tags (and possibly noisier gold labels)
    """
    if not 0.0 < erroneous_frac < 1.0:
        raise ConfigurationError("erroneous_frac must be in (0, 1); the erroneous set cannot be empty",
                                 key="dataset.erroneous_frac")
    if not 0.0 <= test_frac < 1.0:
        raise ConfigurationError("test_frac must be in [0, 1)", key="dataset.test_frac")

    rng = make_rng(seed, "split")
    split = np.full(ds.n, Split.UNLABELED, dtype=np.int64)
    pool_parts = []
    for c in range(ds.num_classes):
        members = rng.permutation(ds.ids[ds.gold_labels == c])
        n_test = _floor_frac(test_frac, len(members))
        if len(members) - n_test < labels_per_class:
            raise ConfigurationError(
                f"class {c} has {len(members)} examples ({n_test} held out for test), "
                f"not enough for {labels_per_class} labels",
                key="dataset.labels_per_class",
            )
        split[members[:n_test]] = Split.TEST
        split[members[n_test:n_test + labels_per_class]] = Split.LABELED
        pool_parts.append(members[n_test + labels_per_class:])

    pool = rng.permutation(np.concatenate(pool_parts))
    n_err = _floor_frac(erroneous_frac, len(pool))
    if n_err < 1:
        raise ConfigurationError(f"erroneous_frac={erroneous_frac} selects no examples from a pool of {len(pool)}",
                                 key="dataset.erroneous_frac")
    if len(pool) - n_err < 1:
        raise ConfigurationError("no unlabeled examples left after the split", key="dataset.n")
    split[pool[:n_err]] = Split.ERRONEOUS

    gold = ds.gold_labels
    n_noisy = _floor_frac(label_noise, len(pool))
    if n_noisy > 0:
        noise_rng = make_rng(seed, "label_noise")
        flipped = noise_rng.choice(pool, size=n_noisy, replace=False)
        gold = np.array(gold, copy=True)
        gold[flipped] = (gold[flipped] + noise_rng.integers(1, ds.num_classes, size=n_noisy)) % ds.num_classes
        logger.info(f"Reassigned gold labels of {n_noisy} unlabeled-pool examples")

    return replace(ds, split=_frozen(split), gold_labels=_frozen(gold))


class _Cycler:
    """Replacement-free draws from a pool, reshuffled whenever exhausted"""

    def __init__(self, pool: np.ndarray, rng: np.random.Generator):
        self.pool = np.asarray(pool, dtype=np.int64)
        self.rng = rng
        self.order = rng.permutation(self.pool) if len(self.pool) else self.pool
        self.pos = 0

    def take(self, k: int) -> np.ndarray:
        if len(self.pool) == 0 or k == 0:
            return np.zeros(0, dtype=np.int64)
        out = []
        while k > 0:
            if self.pos == len(self.order):
                self.order = self.rng.permutation(self.pool)
                self.pos = 0
            chunk = self.order[self.pos:self.pos + k]
            out.append(chunk)
            self.pos += len(chunk)
            k -= len(chunk)
        return np.concatenate(out)


def batches(view: TrainingView, batch_size: int, nu: int, seed: int, epoch: int) -> List[BatchPlan]:
    """
    Batch plans covering every unlabeled id exactly once.

    Chunks of nu*B unlabeled ids; each chunk gets ceil(len/nu) (at most B)
    labeled and erroneous ids. The order is a function of (seed, epoch).
    """
    if batch_size < 1 or nu < 1:
        raise ConfigurationError("batch_size and nu must be >= 1", key="batch_size")
    if len(view.unlabeled_ids) == 0:
        raise ConfigurationError("the unlabeled split is empty", key="dataset.n")

    rng = make_rng(seed, "batches", epoch)
    order = rng.permutation(view.unlabeled_ids)
    labeled = _Cycler(view.labeled_ids, rng)
    erroneous = _Cycler(view.erroneous_ids, rng)

    plans = []
    chunk = nu * batch_size
    for start in range(0, len(order), chunk):
        u_b = order[start:start + chunk]
        k = min(batch_size, -(-len(u_b) // nu))
        plans.append(BatchPlan(
            labeled_ids=labeled.take(k),
            unlabeled_ids=u_b,
            erroneous_ids=erroneous.take(k),
        ))
    return plans


def batches_per_epoch(num_unlabeled: int, batch_size: int, nu: int) -> int:
    return -(-num_unlabeled // (nu * batch_size))


def build_dataset(spec, seed: int) -> SslDataset:
    """Generate and split the dataset described by a DatasetSpec"""
    if spec.name == "two_moons":
        ds = gen_two_moons(spec.n, spec.noise_sd, seed)
    elif spec.name == "blobs":
        ds = gen_blobs(spec.n, spec.num_classes, spec.spread, seed)
    elif spec.name == "rings":
        ds = gen_rings(spec.n, spec.num_classes, spec.noise_sd, seed)
    else:
        raise ConfigurationError(f"unknown dataset '{spec.name}'", key="dataset.name")
    return split_ssl(ds, spec.labels_per_class, spec.erroneous_frac, spec.test_frac, seed,
                     label_noise=spec.label_noise)


def export_csv(ds: SslDataset, filepath: str) -> None:
    """Write id, x_1..x_d, gold_label, split"""
    Path(filepath).parent.mkdir(parents=True, exist_ok=True)
    header = ["id"] + [f"x_{j + 1}" for j in range(ds.dim)] + ["gold_label", "split"]
    with open(filepath, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for i in range(ds.n):
            writer.writerow(
                [int(ds.ids[i])]
                + [repr(float(v)) for v in ds.features[i]]
                + [int(ds.gold_labels[i]), SPLIT_NAMES[Split(int(ds.split[i]))]]
            )


def import_csv(filepath: str, num_classes: Optional[int] = None) -> SslDataset:
    """Read a dataset written by export_csv"""
    by_name = {name: tag for tag, name in SPLIT_NAMES.items()}
    with open(filepath, "r", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        dim = sum(1 for col in header if col.startswith("x_"))
        rows = list(reader)

    ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
    if not np.array_equal(ids, np.arange(len(rows))):
        raise ConfigurationError(f"{filepath}: ids must be 0..n-1 in order")
    features = np.array([[float(v) for v in r[1:1 + dim]] for r in rows], dtype=np.float64).reshape(len(rows), dim)
    gold = np.array([int(r[1 + dim]) for r in rows], dtype=np.int64)
    split = np.array([int(by_name[r[2 + dim]]) for r in rows], dtype=np.int64)
    if num_classes is None:
        num_classes = int(gold.max()) + 1 if len(gold) else 0
    return SslDataset(
        features=_frozen(features),
        gold_labels=_frozen(gold),
        split=_frozen(split),
        ids=_frozen(ids),
        num_classes=num_classes,
    )
