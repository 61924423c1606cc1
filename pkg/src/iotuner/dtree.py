"""CART-style decision trees: greedy Gini induction and root-to-leaf prediction.

Candidate thresholds sit at midpoints between consecutive distinct sorted
feature values.  Ties on impurity prefer the lower feature index, then the
lower threshold, so induction is reproducible for a fixed dataset order.
Trees are immutable after induction; concurrent prediction is safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ShapeError


@dataclass
class TreeNode:
    """Internal node (feature_index, threshold, left, right) or leaf (label)."""
    feature_index: int = -1
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    label: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.left is None


class DecisionTree:
    def __init__(self, root: TreeNode, feature_dim: int, class_count: int):
        self.root = root
        self.feature_dim = feature_dim
        self.class_count = class_count
        self.node_count, self.depth = _traverse_stats(root)

    def predict(self, features) -> int:
        """Descend left when feature < threshold, else right."""
        x = np.asarray(features, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.feature_dim:
            raise ShapeError(
                f"tree expects {self.feature_dim} features, got {x.shape[0]}"
            )
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature_index] < node.threshold else node.right
        return node.label

    def stats(self) -> tuple[int, int]:
        """(node_count, depth) from a fresh traversal; a lone leaf is (1, 1)."""
        return _traverse_stats(self.root)


def _traverse_stats(node: TreeNode) -> tuple[int, int]:
    if node.is_leaf:
        return 1, 1
    ln, ld = _traverse_stats(node.left)
    rn, rd = _traverse_stats(node.right)
    return ln + rn + 1, 1 + max(ld, rd)


def _majority(counts: np.ndarray) -> int:
    return int(np.argmax(counts))  # argmax takes the lowest index on ties


def _best_split(x: np.ndarray, y: np.ndarray, class_count: int):
    """Scan every feature's midpoint thresholds for the lowest weighted Gini.

    Returns (feature_index, threshold, impurity) or None when no split
    separates the samples.  Lower feature index, then lower threshold,
    wins impurity ties.
    """
    n = y.shape[0]
    best: tuple[float, int, float] | None = None  # (impurity, feature, threshold)
    total_counts = np.bincount(y, minlength=class_count).astype(np.float64)
    for f in range(x.shape[1]):
        col = x[:, f]
        order = np.argsort(col, kind="stable")
        sv = col[order]
        sy = y[order]
        distinct = np.nonzero(sv[:-1] != sv[1:])[0]
        if distinct.size == 0:
            continue
        onehot = np.zeros((n, class_count), dtype=np.float64)
        onehot[np.arange(n), sy] = 1.0
        cum = np.cumsum(onehot, axis=0)
        left_counts = cum[distinct]
        n_left = (distinct + 1).astype(np.float64)
        n_right = n - n_left
        right_counts = total_counts - left_counts
        gini_left = 1.0 - np.sum((left_counts / n_left[:, None]) ** 2, axis=1)
        gini_right = 1.0 - np.sum((right_counts / n_right[:, None]) ** 2, axis=1)
        imp = (n_left / n) * gini_left + (n_right / n) * gini_right
        # argmin returns the first minimum; thresholds ascend with the index,
        # so equal-impurity ties already land on the lower threshold
        k = int(np.argmin(imp))
        lo, hi = float(sv[distinct[k]]), float(sv[distinct[k] + 1])
        # thresholds are kept exactly float32-representable so a serialized
        # tree predicts bit-identically; nudge up if rounding lands on lo
        thr = float(np.float32((lo + hi) / 2.0))
        if thr <= lo:
            thr = hi
        cand = (float(imp[k]), f, thr)
        if best is None or cand < best:
            best = cand
    if best is None:
        return None
    imp_val, f, thr = best
    return f, thr, imp_val


def induce(dataset, class_count: int, max_depth: int = 9,
           min_samples_split: int = 2) -> DecisionTree:
    """Greedy top-down induction over (features, label) pairs.

    Recursion stops at purity, max_depth, or fewer than min_samples_split
    samples; leaves take the majority class (lowest index on ties).
    """
    pairs = list(dataset)
    if not pairs:
        raise ValueError("cannot induce a tree from an empty dataset")
    # quantize to float32 up front: feature vectors are stored single
    # precision everywhere else, and f32-exact split values survive the
    # deployment-file round trip bitwise
    x = np.asarray(
        [np.asarray(f, dtype=np.float32).reshape(-1) for f, _ in pairs]
    ).astype(np.float64)
    y = np.asarray([int(label) for _, label in pairs], dtype=np.int64)
    if y.min() < 0 or y.max() >= class_count:
        raise ValueError(f"labels must lie in [0, {class_count})")
    root = _grow(x, y, class_count, depth=1, max_depth=max_depth,
                 min_samples_split=min_samples_split)
    return DecisionTree(root, feature_dim=x.shape[1], class_count=class_count)


def _grow(x: np.ndarray, y: np.ndarray, class_count: int, depth: int,
          max_depth: int, min_samples_split: int) -> TreeNode:
    counts = np.bincount(y, minlength=class_count)
    if (
        np.count_nonzero(counts) <= 1
        or depth >= max_depth
        or y.shape[0] < min_samples_split
    ):
        return TreeNode(label=_majority(counts))
    split = _best_split(x, y, class_count)
    if split is None:
        return TreeNode(label=_majority(counts))
    f, thr, _ = split
    mask = x[:, f] < thr
    left = _grow(x[mask], y[mask], class_count, depth + 1, max_depth, min_samples_split)
    right = _grow(x[~mask], y[~mask], class_count, depth + 1, max_depth, min_samples_split)
    return TreeNode(feature_index=f, threshold=thr, left=left, right=right)
