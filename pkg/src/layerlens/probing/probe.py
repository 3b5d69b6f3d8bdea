from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from layerlens.probing import kernels
from layerlens.probing.stats import significance_test

log = logging.getLogger(__name__)

SPLITS = ("boolean", "color", "material", "number", "shape", "size")

DEFAULT_GRID = {
    "learning_rate": (1e-4, 1e-3, 1e-2),
    "num_epochs": (10, 30, 100),
    "batch_size": (16, 32, 64),
}


class ProbeDivergenceError(FloatingPointError):
    pass


@dataclass
class ProbeDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split_name: str = "custom"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be (n, d), got shape {self.features.shape}")
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels differ in length")
        if self.num_classes < 2:
            raise ValueError("a probing task needs at least 2 classes")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> ProbeDataset:
        return ProbeDataset(self.features[idx], self.labels[idx], self.num_classes, self.split_name)

    def with_labels(self, labels) -> ProbeDataset:
        return ProbeDataset(self.features, labels, self.num_classes, self.split_name)


@dataclass(frozen=True)
class ProbeHyperparams:
    learning_rate: float
    num_epochs: int
    batch_size: int
    hidden_size: int = 512
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.num_epochs > 0 and self.batch_size > 0 and self.hidden_size > 0):
            raise ValueError(f"hyperparameters must be positive: {self}")


@dataclass
class Probe:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    losses: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def params(self):
        return self.w1, self.b1, self.w2, self.b2

    def logits(self, features) -> np.ndarray:
        return kernels.forward_logits(features, self.params)

    def predict(self, features) -> np.ndarray:
        return self.logits(features).argmax(axis=1)


@dataclass
class ProbeResult:
    split: str
    layer: str
    main_accuracy: float
    control_accuracy: float
    n_test: int
    z_score: float
    stars: str
    best_hyperparams: ProbeHyperparams


def mean_pool(tensor) -> np.ndarray:
    """Average over every axis but the last (all token positions, any batch axis)."""
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    arr = arr.reshape(-1, arr.shape[-1])
    if arr.shape[0] == 0:
        raise ValueError("cannot mean-pool an empty token axis")
    return arr.mean(axis=0)


def split_train_test(dataset: ProbeDataset, seed: int = 0) -> tuple[ProbeDataset, ProbeDataset]:
    """Seeded 80/20 partition: ``floor(0.8 n)`` training examples."""
    n = len(dataset)
    n_train = (4 * n) // 5
    if n_train == 0 or n_train == n:
        raise ValueError(f"{n} examples cannot be split into non-empty train and test sets")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))


def init_params(d: int, hidden: int, c: int, seed: int):
    rng = np.random.default_rng([seed, 1])
    lim1, lim2 = 1.0 / math.sqrt(d), 1.0 / math.sqrt(hidden)
    return (
        rng.uniform(-lim1, lim1, (d, hidden)).astype(np.float32),
        rng.uniform(-lim1, lim1, hidden).astype(np.float32),
        rng.uniform(-lim2, lim2, (c, hidden)).astype(np.float32),
        rng.uniform(-lim2, lim2, c).astype(np.float32),
    )


def epoch_order(n: int, epochs: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 2])
    return np.stack([rng.permutation(n) for _ in range(epochs)]) if epochs else np.empty((0, n), np.int64)


def train_probe(train: ProbeDataset, h: ProbeHyperparams) -> Probe:
    """Fit affine(d, hidden) -> ReLU -> affine(hidden, c) by mini-batch SGD.

    Raises:
        ProbeDivergenceError: the training loss became non-finite.
    """
    if len(train) == 0:
        raise ValueError("cannot train a probe on an empty dataset")
    params = init_params(train.dim, h.hidden_size, train.num_classes, h.seed)
    order = epoch_order(len(train), h.num_epochs, h.seed)
    with np.errstate(over="ignore", invalid="ignore"):
        losses = kernels.train_mlp(train.features, train.labels, params, h.learning_rate, order, h.batch_size)
    bad = ~np.isfinite(losses)
    if bad.any() or not all(np.isfinite(p).all() for p in params):
        epoch = int(np.argmax(bad)) if bad.any() else h.num_epochs - 1
        raise ProbeDivergenceError(
            f"non-finite training loss at epoch {epoch} "
            f"(lr={h.learning_rate}, batch={h.batch_size}, n={len(train)}, d={train.dim}); "
            f"last finite loss {losses[:epoch][-1] if epoch else float('nan'):.4g}"
        )
    return Probe(*params, losses=losses)


def evaluate_probe(probe: Probe, test: ProbeDataset) -> float:
    if len(test) == 0:
        raise ValueError("empty test set")
    if test.dim != probe.w1.shape[0]:
        raise ValueError(f"probe expects {probe.w1.shape[0]} features, test set has {test.dim}")
    return float(np.mean(probe.predict(test.features) == test.labels))


def validation_loss(probe: Probe, data: ProbeDataset) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        loss = kernels.cross_entropy(probe.logits(data.features), data.labels)
    return loss if math.isfinite(loss) else math.inf


def shuffled_labels(labels: np.ndarray, seed: int) -> np.ndarray:
    return np.random.default_rng([seed, 3]).permutation(labels)


def control_experiment(train: ProbeDataset, test: ProbeDataset, h: ProbeHyperparams, seed: int) -> float:
    """Accuracy of a probe trained and scored on randomly permuted labels.

    One permutation is drawn over the train and test labels together, so the
    control sees a shuffled copy of the whole dataset with class counts intact.
    """
    joint = shuffled_labels(np.concatenate([train.labels, test.labels]), seed)
    control = train_probe(train.with_labels(joint[: len(train)]), h)
    return evaluate_probe(control, test.with_labels(joint[len(train):]))


def grid_configs(grid: dict | None = None, seed: int = 0, hidden_size: int = 512) -> list[ProbeHyperparams]:
    grid = grid or DEFAULT_GRID
    keys = ("learning_rate", "num_epochs", "batch_size")
    missing = [k for k in keys if k not in grid]
    if missing:
        raise ValueError(f"grid is missing {missing}")
    for k in keys:
        if len(grid[k]) != 3:
            raise ValueError(f"grid[{k!r}] must list exactly 3 options, got {len(grid[k])}")
    return [
        ProbeHyperparams(float(lr), int(ep), int(bs), hidden_size, seed)
        for lr, ep, bs in itertools.product(*(grid[k] for k in keys))
    ]


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng([seed, 4]).permutation(n)
    return np.array_split(perm, k)


def grid_search_cv(train: ProbeDataset, grid: dict | None = None, k: int = 5, seed: int = 0,
                   hidden_size: int = 512, trace: list | None = None) -> ProbeHyperparams:
    """Pick the configuration with the lowest mean k-fold validation loss.

    Ties resolve to the earliest configuration in grid order. Diverging fits
    count as infinite loss. When ``trace`` is a list, one
    ``(config, fold, loss)`` tuple is appended per probe fit.
    """
    if len(train) < k:
        raise ValueError(f"need at least k={k} training examples, got {len(train)}")
    configs = grid_configs(grid, seed, hidden_size)
    folds = kfold_indices(len(train), k, seed)
    for i, val_idx in enumerate(folds):
        fit_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
        if len(np.unique(train.labels[fit_idx])) < 2:
            warnings.warn(f"fold {i}: training part contains a single class", RuntimeWarning, stacklevel=2)

    best, best_loss = None, math.inf
    for cfg in configs:
        losses = []
        for i, val_idx in enumerate(folds):
            fit_idx = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
            try:
                probe = train_probe(train.subset(fit_idx), cfg)
                loss = validation_loss(probe, train.subset(np.sort(val_idx)))
            except ProbeDivergenceError:
                loss = math.inf
            losses.append(loss)
            if trace is not None:
                trace.append((cfg, i, loss))
        mean = float(np.mean(losses))
        log.debug("cv lr=%g epochs=%d batch=%d loss=%.5f", cfg.learning_rate, cfg.num_epochs, cfg.batch_size, mean)
        if best is None or mean < best_loss:
            best, best_loss = cfg, mean
    return best


def probe_dataset(dataset: ProbeDataset, layer: str = "", grid: dict | None = None, k: int = 5,
                  seed: int = 0, hidden_size: int = 512, trace: list | None = None) -> ProbeResult:
    """Full protocol on one (split, layer) feature matrix."""
    train, test = split_train_test(dataset, seed)
    best = grid_search_cv(train, grid, k, seed, hidden_size, trace)
    main = evaluate_probe(train_probe(train, best), test)
    control = control_experiment(train, test, best, seed)
    z, stars = significance_test(main, control, len(test))
    return ProbeResult(dataset.split_name, layer, main, control, len(test), z, stars, best)
