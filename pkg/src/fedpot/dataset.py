"""Labeled intrusion-log data: loading, normalization, splitting and partitioning."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed input data or infeasible split/partition requests."""


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix ``features`` (n, d) with integer ``labels`` in [0, num_classes).

    ``class_names`` maps dense ids back to the labels seen in the source file.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    class_names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {feats.shape}")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != feats.shape[0]:
            raise DatasetError(
                f"{feats.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DatasetError(f"labels must lie in [0, {self.num_classes})")
        feats.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.features.shape[1])

    def samples(self) -> list[Sample]:
        return [Sample(x, int(y)) for x, y in zip(self.features, self.labels)]

    def subset(self, index: Sequence[int] | np.ndarray) -> "LabeledDataset":
        index = np.asarray(index, dtype=np.int64)
        return LabeledDataset(
            self.features[index], self.labels[index], self.num_classes, self.class_names
        )

    def label_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    @staticmethod
    def concat(parts: Sequence["LabeledDataset"]) -> "LabeledDataset":
        if not parts:
            raise DatasetError("cannot concatenate zero datasets")
        first = parts[0]
        for p in parts[1:]:
            if p.dimension != first.dimension or p.num_classes != first.num_classes:
                raise DatasetError("datasets disagree on dimension or class count")
        return LabeledDataset(
            np.concatenate([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
            first.num_classes,
            first.class_names,
        )


@dataclass(frozen=True)
class MinMaxRecord:
    minimum: np.ndarray
    maximum: np.ndarray

    def apply(self, ds: LabeledDataset) -> LabeledDataset:
        span = self.maximum - self.minimum
        safe = np.where(span > 0, span, 1.0)
        scaled = (ds.features - self.minimum) / safe
        scaled = np.where(span > 0, scaled, 0.0)
        # held-out data may fall outside the fitted range
        np.clip(scaled, 0.0, 1.0, out=scaled)
        return LabeledDataset(scaled, ds.labels, ds.num_classes, ds.class_names)


@dataclass(frozen=True)
class PartitionPlan:
    num_clients: int
    mode: str = "iid"  # "iid" | "noniid"
    max_classes_per_client: int = 2
    seed: int = 0
    benign_class: int = 0


@dataclass(frozen=True)
class SyntheticSpec:
    dim: int
    num_classes: int
    per_class: int
    spread: float = 0.05
    seed: int = 0


def load_csv(
    path: str | Path,
    label_column: str = "label",
    class_names: Sequence[str] | None = None,
    max_rows: int | None = None,
) -> LabeledDataset:
    """Read a header-first CSV into a dataset.

    Labels are factorized to dense ids in order of first appearance, unless
    ``class_names`` is given, in which case that order is used and unseen
    labels are rejected (keeps ids consistent across several device files).
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"no such file: {path}")
    names: list[str] = list(class_names) if class_names is not None else []
    fixed = class_names is not None
    index = {n: i for i, n in enumerate(names)}
    rows: list[list[float]] = []
    labels: list[int] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file, header row expected") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DatasetError(f"{path}: label column {label_column!r} not in header")
        label_pos = header.index(label_column)
        feature_cols = [i for i in range(len(header)) if i != label_pos]
        for row_no, row in enumerate(reader):
            if max_rows is not None and row_no >= max_rows:
                break
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}: row {row_no} has {len(row)} cells, header has {len(header)}"
                )
            values = []
            for col in feature_cols:
                cell = row[col].strip()
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DatasetError(
                        f"{path}: non-numeric value {cell!r} at row {row_no}, "
                        f"column {header[col]!r}"
                    ) from None
            lab = row[label_pos].strip()
            if lab not in index:
                if fixed:
                    raise DatasetError(f"{path}: row {row_no} has unknown label {lab!r}")
                index[lab] = len(names)
                names.append(lab)
            rows.append(values)
            labels.append(index[lab])
    feats = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(feature_cols))
    return LabeledDataset(feats, np.asarray(labels, dtype=np.int64), max(len(names), 1), tuple(names))


def normalize_minmax(ds: LabeledDataset) -> tuple[LabeledDataset, MinMaxRecord]:
    if len(ds) == 0:
        raise DatasetError("cannot normalize an empty dataset")
    record = MinMaxRecord(ds.features.min(axis=0), ds.features.max(axis=0))
    return record.apply(ds), record


def _split_evenly(index: np.ndarray, parts: int, offset: int = 0) -> list[np.ndarray]:
    """Deal ``index`` round-robin into ``parts`` buckets starting at bucket ``offset``."""
    buckets: list[list[int]] = [[] for _ in range(parts)]
    for k, i in enumerate(index):
        buckets[(k + offset) % parts].append(int(i))
    return [np.asarray(b, dtype=np.int64) for b in buckets]


def partition(ds: LabeledDataset, plan: PartitionPlan) -> list[LabeledDataset]:
    """Split ``ds`` into ``plan.num_clients`` disjoint local datasets.

    IID deals every class round-robin over clients, so per-class counts differ
    by at most one. Non-IID gives each client at most
    ``max_classes_per_client`` attack classes (cycled over clients from a
    seeded class order); benign samples are shared equally by everybody.
    """
    m = plan.num_clients
    if m < 1:
        raise DatasetError("num_clients must be >= 1")
    if m > len(ds):
        raise DatasetError(f"{m} clients but only {len(ds)} samples")
    rng = np.random.default_rng(plan.seed)
    by_class = [np.flatnonzero(ds.labels == c) for c in range(ds.num_classes)]
    by_class = [rng.permutation(idx) for idx in by_class]
    assigned: list[list[np.ndarray]] = [[] for _ in range(m)]

    if plan.mode == "iid":
        offset = 0
        for idx in by_class:
            for client, part in enumerate(_split_evenly(idx, m, offset)):
                assigned[client].append(part)
            offset = (offset + len(idx)) % m
    elif plan.mode == "noniid":
        if plan.max_classes_per_client < 1:
            raise DatasetError("max_classes_per_client must be >= 1")
        attack = [c for c in range(ds.num_classes) if c != plan.benign_class and len(by_class[c])]
        if not attack:
            raise DatasetError("non-IID partition needs at least one attack class")
        order = [attack[i] for i in rng.permutation(len(attack))]
        k = plan.max_classes_per_client
        # slot j of client i takes class order[(i*k + j) mod A]; repeats collapse
        owners: dict[int, list[int]] = {c: [] for c in attack}
        for client in range(m):
            picked = []
            for j in range(k):
                c = order[(client * k + j) % len(order)]
                if c not in picked:
                    picked.append(c)
            for c in picked:
                owners[c].append(client)
        for c in attack:
            holders = owners[c]
            if not holders:
                # more classes than slots: give the leftover class to the
                # client with the fewest classes that still has a free slot
                counts = [sum(client in owners[a] for a in attack) for client in range(m)]
                free = [cl for cl in range(m) if counts[cl] < k]
                if not free:
                    raise DatasetError(
                        f"{len(attack)} attack classes do not fit in {m} clients "
                        f"with {k} classes each"
                    )
                holders = [min(free, key=lambda cl: (counts[cl], cl))]
                owners[c] = holders
            for h, part in zip(holders, _split_evenly(by_class[c], len(holders))):
                assigned[h].append(part)
        if 0 <= plan.benign_class < ds.num_classes:
            for client, part in enumerate(_split_evenly(by_class[plan.benign_class], m)):
                assigned[client].append(part)
    else:
        raise DatasetError(f"unknown partition mode {plan.mode!r}")

    out = []
    for parts in assigned:
        idx = np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
        out.append(ds.subset(idx))
    return out


def holdout_split(
    ds: LabeledDataset, fraction: float, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified split with round(n * fraction) samples on the test side."""
    if not 0.0 < fraction < 1.0:
        raise DatasetError(f"fraction must lie in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    sizes = np.bincount(ds.labels, minlength=ds.num_classes)
    quota = sizes * fraction
    per_class = np.floor(quota).astype(np.int64)
    # largest remainder so the test side totals round(n * fraction) exactly
    short = int(np.floor(len(ds) * fraction + 0.5)) - int(per_class.sum())
    if short > 0:
        order = np.lexsort((np.arange(ds.num_classes), -(quota - per_class)))
        per_class[order[:short]] += 1
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for c in range(ds.num_classes):
        idx = rng.permutation(np.flatnonzero(ds.labels == c))
        n_test = int(per_class[c])
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    train = np.sort(np.concatenate(train_idx)) if train_idx else np.empty(0, np.int64)
    test = np.sort(np.concatenate(test_idx)) if test_idx else np.empty(0, np.int64)
    if len(train) == 0 or len(test) == 0:
        raise DatasetError(
            f"fraction {fraction} on {len(ds)} samples leaves an empty split"
        )
    return ds.subset(train), ds.subset(test)


def generate_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    """Gaussian blobs in the unit cube, one seeded center per class."""
    if spec.dim < 1:
        raise DatasetError("dim must be >= 1")
    if spec.num_classes < 2:
        raise DatasetError("num_classes must be >= 2")
    if spec.per_class <= 0:
        raise DatasetError("per_class must be positive")
    if spec.spread < 0:
        raise DatasetError("spread must be non-negative")
    rng = np.random.default_rng(spec.seed)
    centers = rng.uniform(0.15, 0.85, size=(spec.num_classes, spec.dim))
    noise = rng.normal(0.0, 1.0, size=(spec.num_classes, spec.per_class, spec.dim))
    points = centers[:, None, :] + spec.spread * noise
    np.clip(points, 0.0, 1.0, out=points)
    labels = np.repeat(np.arange(spec.num_classes), spec.per_class)
    names = tuple(["benign"] + [f"attack_{c}" for c in range(1, spec.num_classes)])
    return LabeledDataset(points.reshape(-1, spec.dim), labels, spec.num_classes, names)


def write_csv(ds: LabeledDataset, path: str | Path, label_column: str = "label") -> None:
    """Write ``ds`` in the format :func:`load_csv` reads (labels as class names)."""
    names = ds.class_names or tuple(str(c) for c in range(ds.num_classes))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(ds.dimension)] + [label_column])
        for x, y in zip(ds.features, ds.labels):
            writer.writerow([repr(float(v)) for v in x] + [names[y]])

