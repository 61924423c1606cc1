"""Offline model evaluation: training loops, k-fold CV, permutation importance."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset
from .dtree import DecisionTree, induce
from .matrix import Matrix
from .nn import Model, build_classifier
from .pipeline import NormalizerState


@dataclass
class ModelTemplate:
    """Everything needed to train one fresh model from scratch."""

    kind: str = "nn"                      # nn | dtree
    hidden: tuple[int, ...] = (5, 15)
    learning_rate: float = 0.01
    momentum: float = 0.99
    epochs: int = 30
    restarts: int = 3                     # independent inits; best one ships
    max_depth: int = 9
    min_samples_split: int = 2

    def __post_init__(self):
        if self.kind not in ("nn", "dtree"):
            raise ValueError(f"unknown model kind {self.kind!r}")


@dataclass
class TrainResult:
    model: object
    normalizer: NormalizerState
    losses: list[float]
    train_accuracy: float


def _fit_normalizer(x: np.ndarray) -> NormalizerState:
    norm = NormalizerState(x.shape[1])
    for row in x:
        norm.update(row.astype(np.float64))
    return norm


def _train_one_nn(x: np.ndarray, y: np.ndarray, template: ModelTemplate, seed: int,
                  class_count: int) -> tuple[Model, float, list[float]]:
    """One training run with best-epoch weight selection.

    The heavy momentum the optimizer defaults to keeps the weights swinging
    between epochs, so the model that ships is the snapshot with the best
    training accuracy rather than whatever the last epoch left behind.
    """
    model = build_classifier(x.shape[1], template.hidden, class_count, seed,
                             learning_rate=template.learning_rate,
                             momentum=template.momentum)
    rng = np.random.default_rng(seed + 1)
    losses: list[float] = []
    n = x.shape[0]
    best_acc = -1.0
    best_model = model
    for _ in range(template.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for i in order:
            col = Matrix(x[i].reshape(-1, 1))
            epoch_loss += model.train_iteration(col, int(y[i]))
        losses.append(epoch_loss / n)
        acc = _accuracy(model, x, y)
        if acc > best_acc:
            best_acc = acc
            best_model = copy.deepcopy(model)
    return best_model, best_acc, losses


def _train_nn(x: np.ndarray, y: np.ndarray, template: ModelTemplate, seed: int,
              class_count: int) -> tuple[Model, list[float]]:
    """Train with a few independent restarts and keep the most accurate fit;
    a high-momentum run occasionally stalls on an unlucky initialization."""
    best = None
    for r in range(max(template.restarts, 1)):
        model, acc, losses = _train_one_nn(x, y, template, seed + 1013 * r,
                                           class_count)
        if best is None or acc > best[1]:
            best = (model, acc, losses)
        if acc >= 0.995:
            break
    return best[0], best[2]


def _accuracy(model, x: np.ndarray, y: np.ndarray) -> float:
    if x.shape[0] == 0:
        return 0.0
    correct = 0
    if isinstance(model, DecisionTree):
        for i in range(x.shape[0]):
            correct += model.predict(x[i]) == int(y[i])
    else:
        for i in range(x.shape[0]):
            cls, _ = model.predict(Matrix(x[i].reshape(-1, 1)))
            correct += cls == int(y[i])
    return correct / x.shape[0]


def train_model(dataset: Dataset, template: ModelTemplate, seed: int,
                class_count: int | None = None) -> TrainResult:
    """Fit the normalizer on the dataset, then train one model on the
    normalized rows (trees train on raw rows; splits are scale-free)."""
    classes = class_count or len(dataset.class_names)
    norm = _fit_normalizer(dataset.x)
    losses: list[float] = []
    if template.kind == "nn":
        xn = norm.snapshot().apply(dataset.x)
        model, losses = _train_nn(xn, dataset.y, template, seed, classes)
        acc = _accuracy(model, xn, dataset.y)
    else:
        model = induce(zip(dataset.x, dataset.y), classes,
                       max_depth=template.max_depth,
                       min_samples_split=template.min_samples_split)
        acc = _accuracy(model, dataset.x, dataset.y)
    return TrainResult(model=model, normalizer=norm, losses=losses,
                       train_accuracy=acc)


def stratified_folds(y: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Index folds with per-class round-robin assignment after a shuffle."""
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        rng.shuffle(idx)
        for j, sample in enumerate(idx):
            folds[j % k].append(int(sample))
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


@dataclass
class CrossValResult:
    fold_accuracies: list[float]
    mean_accuracy: float
    class_frequencies: dict[str, float] = field(default_factory=dict)


def kfold_evaluate(dataset: Dataset, template: ModelTemplate, seed: int,
                   k: int = 10, permute_feature: int | None = None) -> CrossValResult:
    """Stratified k-fold cross-validation of a model template.

    When ``permute_feature`` is set, that column is shuffled within each
    validation fold before scoring (the permutation-importance probe);
    training folds are untouched.
    """
    n = len(dataset)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"k={k} exceeds dataset size {n}")
    if permute_feature is not None and not 0 <= permute_feature < dataset.dim:
        raise ValueError(f"feature index {permute_feature} out of range")
    classes = len(dataset.class_names)
    folds = stratified_folds(dataset.y, k, seed)
    rng = np.random.default_rng(seed + 7)
    accs: list[float] = []
    for fold_idx, val_idx in enumerate(folds):
        mask = np.ones(n, dtype=bool)
        mask[val_idx] = False
        x_train, y_train = dataset.x[mask], dataset.y[mask]
        x_val = dataset.x[val_idx].copy()
        y_val = dataset.y[val_idx]
        if permute_feature is not None and x_val.shape[0] > 1:
            perm = rng.permutation(x_val.shape[0])
            x_val[:, permute_feature] = x_val[perm, permute_feature]
        norm = _fit_normalizer(x_train).snapshot()
        if template.kind == "nn":
            model, _ = _train_nn(norm.apply(x_train), y_train, template,
                                 seed + fold_idx, classes)
            accs.append(_accuracy(model, norm.apply(x_val), y_val))
        else:
            model = induce(zip(x_train, y_train), classes,
                           max_depth=template.max_depth,
                           min_samples_split=template.min_samples_split)
            accs.append(_accuracy(model, x_val, y_val))
    return CrossValResult(
        fold_accuracies=accs,
        mean_accuracy=float(np.mean(accs)),
        class_frequencies=dataset.class_frequencies(),
    )


def permutation_importance(dataset: Dataset, template: ModelTemplate,
                           feature_index: int, seed: int, k: int = 10) -> float:
    """10-fold validation accuracy with one feature column shuffled inside
    each validation fold.  The lower the result, the more the model needed
    that feature."""
    result = kfold_evaluate(dataset, template, seed, k=k,
                            permute_feature=feature_index)
    return result.mean_accuracy
