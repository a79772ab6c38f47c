# sitslab/forest.py: CART / Random Forest baseline on flattened object features
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
import pandas as pd

from .config import ForestConfig
from .data import ObjectSample, SitsDataset
from .errors import ArgumentError, StateError
from .numeric import RngStream

log = logging.getLogger(__name__)

__all__ = [
    "ForestConfig", "TreeNode", "Split", "DecisionTree", "RandomForest", "flatten_features", "feature_matrix",
    "gini", "best_split", "fit_forest", "predict_forest", "grid_search", "SOURCES",
]

Source = Literal["S1", "S2", "S1S2"]
SOURCES = ("S1", "S2", "S1S2")

# impurity decreases closer than this count as ties
_TOL = 1e-12


def flatten_features(sample: ObjectSample, source: Source) -> np.ndarray:
    """Date-major feature vector: S2 = optical, S1 = radar, S1S2 = optical then radar."""
    if source == "S2":
        return sample.optical.reshape(-1)
    if source == "S1":
        return sample.radar.reshape(-1)
    if source == "S1S2":
        return np.concatenate([sample.optical.reshape(-1), sample.radar.reshape(-1)])
    raise ArgumentError(f"unknown source '{source}' (choose from {SOURCES})")


def feature_matrix(ds: SitsDataset, source: Source) -> tuple[np.ndarray, np.ndarray]:
    if len(ds) == 0:
        raise ArgumentError("cannot build features from an empty dataset")
    return np.stack([flatten_features(s, source) for s in ds.samples]), ds.labels


def gini(class_counts) -> float:
    counts = np.asarray(class_counts, dtype=np.float64)
    n = counts.sum()
    if n <= 0:
        raise ArgumentError("gini of an empty node")
    p = counts / n
    return float(1.0 - np.dot(p, p))


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    impurity_decrease: float


def best_split(X: np.ndarray, y: np.ndarray, feature_subset, num_classes: int | None = None) -> Split | None:
    """Exhaustive Gini search over midpoints of consecutive distinct values.

    Ties go to the lowest feature index, then the lowest threshold. Rows with
    ``x <= threshold`` go left. ``None`` when nothing lowers the impurity.
    """
    y = np.asarray(y, dtype=int)
    n = y.size
    if n < 2:
        return None
    C = num_classes or int(y.max()) + 1
    total = np.bincount(y, minlength=C).astype(np.float64)
    parent = gini(total)
    if parent == 0.0:
        return None
    onehot = np.eye(C)[y]
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left

    best: Split | None = None
    for f in sorted(int(f) for f in feature_subset):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        distinct = xs[:-1] < xs[1:]
        if not distinct.any():
            continue
        left = np.cumsum(onehot[order], axis=0)[:-1]
        right = total - left
        child = (n_left - (left * left).sum(axis=1) / n_left + n_right - (right * right).sum(axis=1) / n_right) / n
        dec = np.where(distinct, parent - child, -np.inf)
        i = int(np.flatnonzero(dec >= dec.max() - _TOL)[0])
        if dec[i] > _TOL and (best is None or dec[i] > best.impurity_decrease + _TOL):
            best = Split(f, float((xs[i] + xs[i + 1]) / 2.0), float(dec[i]))
    return best


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = float("nan")
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    histogram: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def depth(self) -> int:
        return 0 if self.is_leaf else 1 + max(self.left.depth(), self.right.depth())


class DecisionTree:
    def __init__(self, max_depth: int, features_per_split: int | None = None):
        self.max_depth = max_depth
        self.features_per_split = features_per_split
        self.root: TreeNode | None = None
        self.num_classes = 0

    def fit(self, X: np.ndarray, y: np.ndarray, num_classes: int, rng: RngStream) -> "DecisionTree":
        if len(y) == 0:
            raise ArgumentError("cannot fit a tree on zero rows")
        self.num_classes = num_classes
        F = X.shape[1]
        k = min(self.features_per_split or F, F)

        def build(idx: np.ndarray, depth: int) -> TreeNode:
            counts = np.bincount(y[idx], minlength=num_classes)
            if depth >= self.max_depth or idx.size < 2 or counts.max() == idx.size:
                return TreeNode(histogram=counts)
            feats = np.sort(rng.choice(F, k, replace=False)) if k < F else np.arange(F)
            sp = best_split(X[idx], y[idx], feats, num_classes)
            if sp is None:
                return TreeNode(histogram=counts)
            go_left = X[idx, sp.feature] <= sp.threshold
            return TreeNode(sp.feature, sp.threshold, build(idx[go_left], depth + 1), build(idx[~go_left], depth + 1))

        self.root = build(np.arange(len(y)), 0)
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if self.root is None:
            raise StateError("tree is not fitted")
        out = np.zeros((X.shape[0], self.num_classes))

        def route(node: TreeNode, idx: np.ndarray):
            if idx.size == 0:
                return
            if node.is_leaf:
                out[idx] = node.histogram / node.histogram.sum()
                return
            go_left = X[idx, node.feature] <= node.threshold
            route(node.left, idx[go_left])
            route(node.right, idx[~go_left])

        route(self.root, np.arange(X.shape[0]))
        return out


@dataclass
class RandomForest:
    trees: list[DecisionTree]
    num_classes: int
    config: ForestConfig | None = None

    def tree_probas(self, X: np.ndarray) -> np.ndarray:
        if not self.trees:
            raise StateError("forest is not fitted")
        return np.stack([t.predict_proba(np.atleast_2d(X)) for t in self.trees])

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.tree_probas(X).mean(axis=0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def prefix(self, k: int) -> "RandomForest":
        return RandomForest(self.trees[:k], self.num_classes, self.config and replace(self.config, num_trees=k))


def _fit_tree(args) -> DecisionTree:
    X, y, num_classes, config, k_features, tree_index = args
    rng = RngStream(config.seed).substream("rf", tree_index)
    n = len(y)
    rows = rng.integers(0, n, n) if config.bootstrap else np.arange(n)
    return DecisionTree(config.max_depth, k_features).fit(X[rows], y[rows], num_classes, rng)


def fit_forest(X: np.ndarray, y: np.ndarray, config: ForestConfig, num_classes: int | None = None) -> RandomForest:
    """Bagged CART trees; tree *i* draws only from substream ``("rf", i)``."""
    X, y = np.asarray(X, dtype=np.float64), np.asarray(y, dtype=int)
    if X.ndim != 2 or len(y) == 0 or X.shape[0] != len(y):
        raise ArgumentError(f"fit_forest needs nonempty aligned rows, got X{X.shape}, y{y.shape}")
    C = num_classes or int(y.max()) + 1
    k = config.features_for(X.shape[1])
    jobs = [(X, y, C, config, k, i) for i in range(config.num_trees)]
    if config.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            trees = list(pool.map(_fit_tree, jobs, chunksize=max(1, len(jobs) // (4 * config.n_jobs))))
    else:
        trees = [_fit_tree(j) for j in jobs]
    return RandomForest(trees, C, config)


def predict_forest(forest: RandomForest, row) -> tuple[int, np.ndarray]:
    probs = forest.predict_proba(np.asarray(row, dtype=np.float64)[None, :])[0]
    return int(np.argmax(probs)), probs


def grid_search(train: SitsDataset, validation: SitsDataset, source: Source,
                trees=(100, 200, 300, 400, 500), depths=(20, 40, 60, 80, 100),
                base: ForestConfig | None = None) -> tuple[ForestConfig, RandomForest, pd.DataFrame]:
    """Pick (num_trees, max_depth) on validation accuracy; ties → fewer trees, then shallower.

    Per depth the largest forest is grown once; smaller tree counts are its
    prefixes, which equal separate fits because tree i always uses substream i.
    """
    if len(train) == 0 or len(validation) == 0:
        raise ArgumentError("grid search needs nonempty train and validation parts")
    base = base or ForestConfig()
    X_tr, y_tr = feature_matrix(train, source)
    X_val, y_val = feature_matrix(validation, source)
    C = train.num_classes
    trees, depths = sorted(set(trees)), sorted(set(depths))

    rows, forests = [], {}
    for depth in depths:
        forest = fit_forest(X_tr, y_tr, replace(base, num_trees=trees[-1], max_depth=depth), C)
        forests[depth] = forest
        per_tree = forest.tree_probas(X_val)
        for k in trees:
            # same reduction as RandomForest.predict_proba on the prefix
            acc = float(np.mean(np.argmax(per_tree[:k].mean(axis=0), axis=1) == y_val))
            rows.append({"num_trees": k, "max_depth": depth, "validation_accuracy": acc})
            log.debug("RF(%s) trees=%d depth=%d: val acc %.4f", source, k, depth, acc)

    scores = pd.DataFrame(rows).sort_values(["num_trees", "max_depth"], kind="stable").reset_index(drop=True)
    win = scores.loc[scores["validation_accuracy"].idxmax()]  # first max in (trees, depth) order
    k, depth = int(win["num_trees"]), int(win["max_depth"])
    best = replace(base, num_trees=k, max_depth=depth)
    log.info("RF(%s) grid winner: %d trees, depth %d (val acc %.4f)", source, k, depth, win["validation_accuracy"])
    return best, forests[depth].prefix(k), scores
