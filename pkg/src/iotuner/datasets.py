"""Labeled feature datasets: synthetic trace harvesting, CSV I/O, toy sets."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .pipeline import (
    NFS_FEATURE_NAMES,
    READAHEAD_FEATURE_NAMES,
    FeatureVector,
    NormalizerState,
    extract_readahead_features,
    window_aggregate,
)
from .tuner import READAHEAD_CANDIDATES
from .workloads import DEFAULT_OPS_PER_SECOND, TRAINING_CLASSES, WorkloadSpec, generate_trace

SCHEMA_FEATURE_NAMES = {
    "readahead": READAHEAD_FEATURE_NAMES,
    "nfs": NFS_FEATURE_NAMES,
}


@dataclass
class Dataset:
    x: np.ndarray          # (n, d) float32, raw (unnormalized) features
    y: np.ndarray          # (n,) int64 class labels
    schema: str
    class_names: tuple[str, ...]

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def class_frequencies(self) -> dict[str, float]:
        counts = np.bincount(self.y, minlength=len(self.class_names))
        total = max(len(self), 1)
        return {name: counts[i] / total for i, name in enumerate(self.class_names)}

    def fit_normalizer(self) -> NormalizerState:
        norm = NormalizerState(self.dim)
        for row in self.x:
            norm.update(row.astype(np.float64))
        return norm


def write_feature_csv(path: str, dataset: Dataset) -> None:
    """Feature rows plus a trailing label column, names from the schema."""
    names = SCHEMA_FEATURE_NAMES.get(dataset.schema)
    if names is None:
        names = tuple(f"f{i}" for i in range(dataset.dim))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, "label"])
        for row, label in zip(dataset.x, dataset.y):
            w.writerow([*(repr(float(v)) for v in row),
                        dataset.class_names[label]])


def read_feature_csv(path: str, schema: str = "readahead",
                     class_names: tuple[str, ...] = TRAINING_CLASSES) -> Dataset:
    """Load a labeled feature CSV; the label column is required."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ConfigError(f"{path}: empty dataset file")
        if "label" not in header:
            raise ConfigError(f"{path}: no 'label' column in {header}")
        label_col = header.index("label")
        feat_cols = [i for i in range(len(header)) if i != label_col]
        index = {name: i for i, name in enumerate(class_names)}
        xs, ys = [], []
        for ln, row in enumerate(reader):
            if len(row) != len(header):
                raise ConfigError(f"{path}: row {ln} has {len(row)} columns")
            xs.append([float(row[i]) for i in feat_cols])
            label = row[label_col]
            if label in index:
                ys.append(index[label])
            else:
                ys.append(int(label))
    return Dataset(np.asarray(xs, dtype=np.float32),
                   np.asarray(ys, dtype=np.int64), schema, class_names)


def harvest_readahead_windows(trace, readahead_sectors: int) -> list[np.ndarray]:
    """Per-second readahead feature rows from one trace, fixed readahead."""
    rows = []
    carry: FeatureVector | None = None
    for win in window_aggregate(trace.events(), scope="per_disk"):
        vec = extract_readahead_features(win, readahead_sectors, carry)
        carry = vec
        rows.append(vec.values.copy())
    return rows


def build_readahead_dataset(seed: int = 0, traces_per_class: int = 8,
                            duration_seconds: int = 24,
                            readahead_values=READAHEAD_CANDIDATES) -> Dataset:
    """Training corpus for the four-class readahead classifier.

    Each trace runs one workload at a jittered rate and file size under one
    fixed readahead setting, and every class cycles through the same
    evenly-spaced slice of the sweep grid.  Balancing the settings per
    class matters: the collection runs sweep readahead for every workload,
    so the current-readahead feature must not leak the label.  One feature
    row per second.
    """
    rng = np.random.default_rng(seed)
    xs: list[np.ndarray] = []
    ys: list[int] = []
    sizes = (2048, 4096, 8192)
    grid = list(readahead_values)
    for class_idx, kind in enumerate(TRAINING_CLASSES):
        base_rate = DEFAULT_OPS_PER_SECOND[kind]
        for i in range(traces_per_class):
            spec = WorkloadSpec(
                kind=kind,
                file_size_pages=int(rng.choice(sizes)),
                duration_seconds=duration_seconds,
                ops_per_second=int(base_rate * rng.uniform(0.6, 1.5)),
                seed=int(rng.integers(0, 2**31)),
                rate_jitter=0.15,
            )
            ra = grid[round(i * (len(grid) - 1) / max(traces_per_class - 1, 1))]
            for row in harvest_readahead_windows(generate_trace(spec), ra):
                xs.append(row)
                ys.append(class_idx)
    return Dataset(np.asarray(xs, dtype=np.float32), np.asarray(ys, dtype=np.int64),
                   "readahead", TRAINING_CLASSES)


# per-class operation budgets sized so every class yields a comparable
# number of one-second windows per run despite very different op costs
NFS_OPS_PER_ITERATION = {
    "readrandom": 10_000,
    "readseq": 45_000,
    "readrandomwriterandom": 16_000,
    "readreverse": 45_000,
}


def build_nfs_dataset(seed: int = 0, net: str = "nvme") -> Dataset:
    """NFS feature corpus: every class swept across all seven rsize values."""
    from .nfssim import run_nfs
    from .tuner import RSIZE_VALUES

    rng = np.random.default_rng(seed)
    xs: list[np.ndarray] = []
    ys: list[int] = []
    for class_idx, kind in enumerate(TRAINING_CLASSES):
        for rsize in RSIZE_VALUES:
            spec = WorkloadSpec(
                kind=kind,
                file_size_pages=8192,
                seed=int(rng.integers(0, 2**31)),
            )
            rep = run_nfs(spec, net=net, iterations=2,
                          ops_per_iteration=NFS_OPS_PER_ITERATION[kind],
                          initial_rsize=rsize, collect_features=True)
            for row in rep.feature_rows:
                xs.append(row)
                ys.append(class_idx)
    return Dataset(np.asarray(xs, dtype=np.float32), np.asarray(ys, dtype=np.int64),
                   "nfs", TRAINING_CLASSES)


def separable_clusters(n_samples: int = 1000, dim: int = 4, classes: int = 4,
                       seed: int = 0, spread: float = 0.25) -> Dataset:
    """Linearly separable Gaussian blobs, one per class."""
    rng = np.random.default_rng(seed)
    centers = np.zeros((classes, dim), dtype=np.float64)
    for c in range(classes):
        centers[c, c % dim] = 2.0
        centers[c, (c + 1) % dim] = -2.0 if c % 2 else 1.0
    y = rng.integers(0, classes, size=n_samples)
    x = centers[y] + rng.normal(0.0, spread, size=(n_samples, dim))
    return Dataset(x.astype(np.float32), y.astype(np.int64), "generic",
                   tuple(f"class{i}" for i in range(classes)))


def xor_dataset(seed: int = 0, n_samples: int = 200, noise: float = 0.05) -> Dataset:
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(n_samples, 2))
    y = (bits[:, 0] ^ bits[:, 1]).astype(np.int64)
    x = bits.astype(np.float64) * 2 - 1 + rng.normal(0, noise, size=(n_samples, 2))
    return Dataset(x.astype(np.float32), y, "generic", ("same", "different"))


def single_signal_dataset(signal_index: int = 2, dim: int = 4, classes: int = 4,
                          per_class: int = 60, seed: int = 0) -> Dataset:
    """All the class signal lives in one feature; the rest is shared noise."""
    rng = np.random.default_rng(seed)
    xs = []
    ys = []
    for c in range(classes):
        block = rng.normal(0.0, 1.0, size=(per_class, dim))
        block[:, signal_index] = c * 4.0 + rng.normal(0.0, 0.3, size=per_class)
        xs.append(block)
        ys.append(np.full(per_class, c, dtype=np.int64))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    order = rng.permutation(x.shape[0])
    return Dataset(x[order].astype(np.float32), y[order], "generic",
                   tuple(f"class{i}" for i in range(classes)))
