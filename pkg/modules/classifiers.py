"""
Binary classifiers behind one train/predict contract.

Families: logistic regression ("lr"), k-nearest neighbours ("knn"), CART
decision tree ("dt"), random forest ("rf") and Gaussian naive Bayes ("nb").
LR and kNN standardize features with a scaler fitted on the training rows;
trees and NB work on raw values. Every model records the width of the rows it
expects and the column subset it reads, so a model refit on selected features
still accepts full feature rows.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import expit

from modules.errors import ContractError

logger = logging.getLogger(__name__)

FAMILIES = ("lr", "knn", "dt", "rf", "nb")
MODEL_FORMAT = "vrid-model"
MODEL_FORMAT_VERSION = 1

LR_TOLERANCE = 1e-6
LR_MAX_ITER = 5000
LR_MIN_STEP = 1e-16
SPLIT_EPS = 1e-12
# both values run the same optimizer
LOGREG_SOLVERS = ("liblinear", "saga")


# ---------------------------------------------------------------------------
# Hyperparameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogRegParams:
    c: float = 1.0
    solver: str = "liblinear"

    def __post_init__(self):
        if not self.c > 0:
            raise ContractError(f"c must be > 0, got {self.c}")
        if self.solver not in LOGREG_SOLVERS:
            raise ContractError(f"solver must be one of {', '.join(LOGREG_SOLVERS)}, got {self.solver!r}")


@dataclass(frozen=True)
class KnnParams:
    n_neighbors: int = 5
    weights: str = "uniform"

    def __post_init__(self):
        if self.n_neighbors < 1:
            raise ContractError(f"n_neighbors must be >= 1, got {self.n_neighbors}")
        if self.weights not in ("uniform", "distance"):
            raise ContractError(f"weights must be 'uniform' or 'distance', got {self.weights!r}")


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 10
    min_samples_split: int = 2

    def __post_init__(self):
        if self.max_depth < 1:
            raise ContractError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_split < 2:
            raise ContractError(f"min_samples_split must be >= 2, got {self.min_samples_split}")


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 20
    max_depth: int = 10
    min_samples_split: int = 2
    bootstrap: bool = True
    max_features: int | None = None

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ContractError(f"n_estimators must be >= 1, got {self.n_estimators}")
        TreeParams(self.max_depth, self.min_samples_split)
        if self.max_features is not None and self.max_features < 1:
            raise ContractError(f"max_features must be >= 1, got {self.max_features}")


@dataclass(frozen=True)
class GnbParams:
    var_smoothing: float = 1e-9

    def __post_init__(self):
        if not self.var_smoothing > 0:
            raise ContractError(f"var_smoothing must be > 0, got {self.var_smoothing}")


PARAM_TYPES = {
    "lr": LogRegParams,
    "knn": KnnParams,
    "dt": TreeParams,
    "rf": ForestParams,
    "nb": GnbParams,
}


def params_from_dict(family: str, values: dict):
    if family not in PARAM_TYPES:
        raise ContractError(f"unknown classifier family {family!r}; expected one of {', '.join(FAMILIES)}")
    return PARAM_TYPES[family](**values)


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------

class StandardScaler:
    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=float)
        self.std = np.asarray(std, dtype=float)

    @classmethod
    def fit(cls, X) -> "StandardScaler":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ContractError("cannot fit a scaler on an empty matrix")
        std = X.std(axis=0)
        std[std == 0] = 1.0
        return cls(X.mean(axis=0), std)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def inverse_transform(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "StandardScaler":
        return cls(np.array(data["mean"]), np.array(data["std"]))


def fit_scaler(X) -> StandardScaler:
    return StandardScaler.fit(X)


def apply_scaler(scaler: StandardScaler, X) -> np.ndarray:
    return scaler.transform(X)


# ---------------------------------------------------------------------------
# Model base
# ---------------------------------------------------------------------------

def _check_training_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ContractError("training matrix is empty")
    if y.shape != (X.shape[0],):
        raise ContractError(f"label vector length {y.shape} does not match {X.shape[0]} rows")
    if not np.isin(y, (0, 1)).all():
        raise ContractError("labels must be binary (0 or 1)")
    return X, y.astype(np.int64)


class TrainedModel:
    family = ""

    def __init__(self, params, n_features_in: int, feature_indices=None):
        self.params = params
        self.n_features_in = int(n_features_in)
        if feature_indices is None:
            feature_indices = range(self.n_features_in)
        self.feature_indices = tuple(int(i) for i in feature_indices)

    def _select(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features_in:
            raise ContractError(f"expected {self.n_features_in} features per row, got {X.shape[1]}")
        if len(self.feature_indices) == self.n_features_in and self.feature_indices == tuple(range(self.n_features_in)):
            return X
        return X[:, list(self.feature_indices)]

    def predict_batch(self, X) -> np.ndarray:
        return self._predict(self._select(X))

    def predict(self, row) -> int:
        return int(self.predict_batch(row)[0])

    def _predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _state(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_FORMAT_VERSION,
            "family": self.family,
            "params": asdict(self.params),
            "n_features_in": self.n_features_in,
            "feature_indices": list(self.feature_indices),
            "state": self._state(),
        }


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------

class LogRegModel(TrainedModel):
    family = "lr"

    def __init__(self, params, n_features_in, feature_indices, weights, bias, scaler, n_iter=0):
        super().__init__(params, n_features_in, feature_indices)
        self.weights = np.asarray(weights, dtype=float)
        self.bias = float(bias)
        self.scaler = scaler
        self.n_iter = n_iter

    def decision_function(self, X) -> np.ndarray:
        return self.scaler.transform(self._select(X)) @ self.weights + self.bias

    def _predict(self, X):
        z = self.scaler.transform(X) @ self.weights + self.bias
        return (z > 0).astype(np.int64)

    def _state(self):
        return {"weights": self.weights.tolist(), "bias": self.bias, "scaler": self.scaler.to_dict(),
                "n_iter": self.n_iter}


def logreg_objective(Xs: np.ndarray, y: np.ndarray, weights: np.ndarray, bias: float, c: float) -> float:
    """Summed logistic loss plus ||w||^2 / (2c); the bias is not penalized."""
    z = Xs @ weights + bias
    return float(np.sum(np.logaddexp(0.0, z) - y * z) + weights @ weights / (2.0 * c))


def _logreg_gradient(Xs, y, weights, bias, c):
    z = Xs @ weights + bias
    residual = expit(z) - y
    return Xs.T @ residual + weights / c, float(residual.sum())


def train_logreg(X, y, params: LogRegParams = LogRegParams(), feature_indices=None,
                 n_features_in=None) -> LogRegModel:
    X, y = _check_training_data(X, y)
    scaler = StandardScaler.fit(X)
    Xs = scaler.transform(X)
    c = params.c
    w = np.zeros(X.shape[1])
    b = 0.0
    step = 1.0
    f = logreg_objective(Xs, y, w, b, c)
    n_iter = 0
    for n_iter in range(1, LR_MAX_ITER + 1):
        gw, gb = _logreg_gradient(Xs, y, w, b, c)
        g_inf = max(np.max(np.abs(gw), initial=0.0), abs(gb))
        if g_inf < LR_TOLERANCE:
            break
        g_sq = gw @ gw + gb * gb
        step = min(step * 2.0, 1e6)
        # Armijo backtracking
        while step >= LR_MIN_STEP:
            w_new = w - step * gw
            b_new = b - step * gb
            f_new = logreg_objective(Xs, y, w_new, b_new, c)
            if f_new <= f - 0.5 * step * g_sq:
                break
            step *= 0.5
        else:
            logger.warning("Logistic regression line search stalled at iteration %s (c=%s, gradient %.3g); "
                           "keeping the last iterate", n_iter, c, g_inf)
            break
        w, b, f = w_new, b_new, f_new
    else:
        logger.debug("Logistic regression stopped at %s iterations (c=%s)", LR_MAX_ITER, c)
    return LogRegModel(params, n_features_in or X.shape[1], feature_indices, w, b, scaler, n_iter)


# ---------------------------------------------------------------------------
# k-nearest neighbours
# ---------------------------------------------------------------------------

class KnnModel(TrainedModel):
    family = "knn"

    def __init__(self, params, n_features_in, feature_indices, X_train, y_train, scaler):
        super().__init__(params, n_features_in, feature_indices)
        self.X_train = np.asarray(X_train, dtype=float)
        self.y_train = np.asarray(y_train, dtype=np.int64)
        self.scaler = scaler

    def _predict(self, X):
        k = self.params.n_neighbors
        distances = cdist(self.scaler.transform(X), self.X_train)
        neighbours = np.argsort(distances, axis=1, kind="stable")[:, :k]
        labels = self.y_train[neighbours]
        if self.params.weights == "uniform":
            ones = labels.sum(axis=1)
            return (2 * ones > k).astype(np.int64)

        nearest = np.take_along_axis(distances, neighbours, axis=1)
        exact = nearest == 0
        with np.errstate(divide="ignore"):
            w = np.where(exact, 0.0, 1.0 / np.where(exact, 1.0, nearest))
        w1 = (w * labels).sum(axis=1)
        w0 = (w * (1 - labels)).sum(axis=1)
        out = (w1 > w0).astype(np.int64)
        has_exact = exact.any(axis=1)
        if has_exact.any():
            # exact matches decide alone, uniform vote among them
            ones = (exact & (labels == 1)).sum(axis=1)
            zeros = (exact & (labels == 0)).sum(axis=1)
            out[has_exact] = (ones > zeros)[has_exact]
        return out

    def _state(self):
        return {"X_train": self.X_train.tolist(), "y_train": self.y_train.tolist(),
                "scaler": self.scaler.to_dict()}


def train_knn(X, y, params: KnnParams = KnnParams(), feature_indices=None, n_features_in=None) -> KnnModel:
    X, y = _check_training_data(X, y)
    if params.n_neighbors > X.shape[0]:
        raise ContractError(f"n_neighbors={params.n_neighbors} exceeds {X.shape[0]} training rows")
    scaler = StandardScaler.fit(X)
    return KnnModel(params, n_features_in or X.shape[1], feature_indices, scaler.transform(X), y, scaler)


# ---------------------------------------------------------------------------
# CART
# ---------------------------------------------------------------------------

class DecisionTree:
    """Flat-array binary tree; feature == -1 marks a leaf."""

    def __init__(self, feature, threshold, left, right, counts):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64).reshape(-1, 2)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def leaf_class(self) -> np.ndarray:
        return (self.counts[:, 1] > self.counts[:, 0]).astype(np.int64)

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature if f >= 0}

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            current = node[rows]
            go_left = X[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_class[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionTree":
        return cls(data["feature"], data["threshold"], data["left"], data["right"], data["counts"])

    def __eq__(self, other):
        if not isinstance(other, DecisionTree):
            return NotImplemented
        return (np.array_equal(self.feature, other.feature)
                and np.array_equal(self.threshold, other.threshold)
                and np.array_equal(self.left, other.left)
                and np.array_equal(self.right, other.right)
                and np.array_equal(self.counts, other.counts))


def gini(n0, n1):
    n = n0 + n1
    with np.errstate(invalid="ignore", divide="ignore"):
        p0 = np.where(n > 0, n0 / np.where(n > 0, n, 1), 0.0)
    p1 = 1.0 - p0
    return 1.0 - p0 ** 2 - p1 ** 2


def best_split(X: np.ndarray, y: np.ndarray, features) -> tuple[int, float, float] | None:
    """Lowest weighted-Gini split over the given features.

    Returns (feature, threshold, impurity) or None when no boundary exists.
    Ties keep the earlier feature, then the lower threshold.
    """
    n = len(y)
    total1 = int(y.sum())
    best = None
    for feature in features:
        order = np.argsort(X[:, feature], kind="stable")
        xs = X[order, feature]
        boundaries = np.nonzero(xs[1:] > xs[:-1])[0] + 1
        if len(boundaries) == 0:
            continue
        ones_left = np.cumsum(y[order])[boundaries - 1]
        n_left = boundaries
        n_right = n - boundaries
        ones_right = total1 - ones_left
        impurity = (n_left * gini(n_left - ones_left, ones_left)
                    + n_right * gini(n_right - ones_right, ones_right)) / n
        pos = int(np.argmin(impurity))
        if best is None or impurity[pos] < best[2] - SPLIT_EPS:
            lo, hi = xs[boundaries[pos] - 1], xs[boundaries[pos]]
            threshold = (lo + hi) / 2.0
            if not lo <= threshold < hi:
                threshold = lo
            best = (int(feature), float(threshold), float(impurity[pos]))
    return best


def build_tree(X: np.ndarray, y: np.ndarray, max_depth: int, min_samples_split: int,
               max_features: int | None = None, rng: np.random.Generator | None = None) -> DecisionTree:
    n_features = X.shape[1]
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        ones = int(y[idx].sum())
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append((len(idx) - ones, ones))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        n0, n1 = counts[node]
        if n0 == 0 or n1 == 0 or depth >= max_depth or len(idx) < min_samples_split:
            continue
        if max_features is not None and max_features < n_features:
            candidates = np.sort(rng.choice(n_features, max_features, replace=False))
        else:
            candidates = range(n_features)
        split = best_split(X[idx], y[idx], candidates)
        # a split that only ties the parent impurity is still taken
        if split is None or split[2] > gini(n0, n1) + SPLIT_EPS:
            continue
        f, thr, _ = split
        go_left = X[idx, f] <= thr
        left_idx, right_idx = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(left_idx)
        right[node] = new_node(right_idx)
        stack.append((right[node], right_idx, depth + 1))
        stack.append((left[node], left_idx, depth + 1))
    return DecisionTree(feature, threshold, left, right, counts)


class TreeModel(TrainedModel):
    family = "dt"

    def __init__(self, params, n_features_in, feature_indices, tree: DecisionTree):
        super().__init__(params, n_features_in, feature_indices)
        self.tree = tree

    def used_features(self) -> set[int]:
        return {self.feature_indices[f] for f in self.tree.used_features()}

    def _predict(self, X):
        return self.tree.predict(X)

    def _state(self):
        return {"tree": self.tree.to_dict()}


def train_tree(X, y, params: TreeParams = TreeParams(), feature_indices=None, n_features_in=None) -> TreeModel:
    X, y = _check_training_data(X, y)
    tree = build_tree(X, y, params.max_depth, params.min_samples_split)
    logger.debug("Built tree with %s nodes, depth %s", tree.n_nodes, tree.depth)
    return TreeModel(params, n_features_in or X.shape[1], feature_indices, tree)


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------

class ForestModel(TrainedModel):
    family = "rf"

    def __init__(self, params, n_features_in, feature_indices, trees, tree_seeds, seed):
        super().__init__(params, n_features_in, feature_indices)
        self.trees = list(trees)
        self.tree_seeds = list(tree_seeds)
        self.seed = seed

    def used_features(self) -> set[int]:
        used = set()
        for tree in self.trees:
            used |= {self.feature_indices[f] for f in tree.used_features()}
        return used

    def _predict(self, X):
        votes = np.zeros(X.shape[0], dtype=np.int64)
        for tree in self.trees:
            votes += tree.predict(X)
        return (2 * votes > len(self.trees)).astype(np.int64)

    def _state(self):
        return {"seed": self.seed, "tree_seeds": self.tree_seeds,
                "trees": [tree.to_dict() for tree in self.trees]}


def tree_seeds(seed: int, count: int) -> list[int]:
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


def train_forest(X, y, params: ForestParams = ForestParams(), seed: int = 0, feature_indices=None,
                 n_features_in=None) -> ForestModel:
    X, y = _check_training_data(X, y)
    n_rows, n_features = X.shape
    max_features = params.max_features or math.ceil(math.sqrt(n_features))
    seeds = tree_seeds(seed, params.n_estimators)
    trees = []
    for tree_seed in seeds:
        rng = np.random.default_rng(tree_seed)
        if params.bootstrap:
            rows = rng.integers(0, n_rows, n_rows)
            Xb, yb = X[rows], y[rows]
        else:
            Xb, yb = X, y
        trees.append(build_tree(Xb, yb, params.max_depth, params.min_samples_split, max_features, rng))
    logger.debug("Built forest of %s trees (seed=%s)", len(trees), seed)
    return ForestModel(params, n_features_in or n_features, feature_indices, trees, seeds, seed)


# ---------------------------------------------------------------------------
# Gaussian naive Bayes
# ---------------------------------------------------------------------------

class GaussianNbModel(TrainedModel):
    family = "nb"

    def __init__(self, params, n_features_in, feature_indices, priors, means, variances):
        super().__init__(params, n_features_in, feature_indices)
        self.priors = np.asarray(priors, dtype=float)
        self.means = np.asarray(means, dtype=float)
        self.variances = np.asarray(variances, dtype=float)

    def _joint_log_likelihood(self, X):
        jll = np.empty((X.shape[0], 2))
        for cls in (0, 1):
            var = self.variances[cls]
            jll[:, cls] = (np.log(self.priors[cls])
                           - 0.5 * np.sum(np.log(2.0 * np.pi * var))
                           - 0.5 * np.sum((X - self.means[cls]) ** 2 / var, axis=1))
        return jll

    def joint_log_likelihood(self, X) -> np.ndarray:
        """Per-class log prior plus summed Gaussian log densities, shape (rows, 2)."""
        return self._joint_log_likelihood(self._select(X))

    def _predict(self, X):
        jll = self._joint_log_likelihood(X)
        return (jll[:, 1] > jll[:, 0]).astype(np.int64)

    def _state(self):
        return {"priors": self.priors.tolist(), "means": self.means.tolist(),
                "variances": self.variances.tolist()}


def train_gnb(X, y, params: GnbParams = GnbParams(), feature_indices=None, n_features_in=None) -> GaussianNbModel:
    X, y = _check_training_data(X, y)
    if not ((y == 0).any() and (y == 1).any()):
        raise ContractError("naive Bayes needs both classes in the training data")
    epsilon = params.var_smoothing * (float(np.var(X, axis=0).max()) or 1.0)
    priors = np.array([np.mean(y == 0), np.mean(y == 1)])
    means = np.vstack([X[y == cls].mean(axis=0) for cls in (0, 1)])
    variances = np.vstack([X[y == cls].var(axis=0) + epsilon for cls in (0, 1)])
    return GaussianNbModel(params, n_features_in or X.shape[1], feature_indices, priors, means, variances)


# ---------------------------------------------------------------------------
# Dispatch and serialization
# ---------------------------------------------------------------------------

def train(family: str, X, y, params=None, seed: int = 0, feature_indices=None) -> TrainedModel:
    """Train one family; with feature_indices, fit on that column subset of X."""
    if family not in PARAM_TYPES:
        raise ContractError(f"unknown classifier family {family!r}; expected one of {', '.join(FAMILIES)}")
    if params is None:
        params = PARAM_TYPES[family]()
    elif not isinstance(params, PARAM_TYPES[family]):
        params = params_from_dict(family, dict(params))
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ContractError("training matrix must be two-dimensional")
    n_features_in = X.shape[1]
    if feature_indices is not None:
        feature_indices = tuple(int(i) for i in feature_indices)
        if not feature_indices:
            raise ContractError("feature subset is empty")
        X = X[:, list(feature_indices)]
    kwargs = {"feature_indices": feature_indices, "n_features_in": n_features_in}
    if family == "lr":
        return train_logreg(X, y, params, **kwargs)
    if family == "knn":
        return train_knn(X, y, params, **kwargs)
    if family == "dt":
        return train_tree(X, y, params, **kwargs)
    if family == "rf":
        return train_forest(X, y, params, seed=seed, **kwargs)
    return train_gnb(X, y, params, **kwargs)


def predict(model: TrainedModel, row) -> int:
    return model.predict(row)


def predict_batch(model: TrainedModel, X) -> np.ndarray:
    return model.predict_batch(X)


def model_from_dict(data: dict) -> TrainedModel:
    if data.get("format") != MODEL_FORMAT:
        raise ContractError("not a model file")
    if data.get("version") != MODEL_FORMAT_VERSION:
        raise ContractError(f"unsupported model format version {data.get('version')}")
    family = data["family"]
    params = params_from_dict(family, data["params"])
    n_in, feats, state = data["n_features_in"], data["feature_indices"], data["state"]
    if family == "lr":
        return LogRegModel(params, n_in, feats, state["weights"], state["bias"],
                           StandardScaler.from_dict(state["scaler"]), state.get("n_iter", 0))
    if family == "knn":
        return KnnModel(params, n_in, feats, state["X_train"], state["y_train"],
                        StandardScaler.from_dict(state["scaler"]))
    if family == "dt":
        return TreeModel(params, n_in, feats, DecisionTree.from_dict(state["tree"]))
    if family == "rf":
        trees = [DecisionTree.from_dict(t) for t in state["trees"]]
        return ForestModel(params, n_in, feats, trees, state["tree_seeds"], state["seed"])
    return GaussianNbModel(params, n_in, feats, state["priors"], state["means"], state["variances"])


def save_model(model: TrainedModel, path, provenance: dict | None = None) -> None:
    data = model.to_dict()
    if provenance is not None:
        data["provenance"] = provenance
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, sort_keys=True)
        f.write("\n")
    logger.info("Saved %s model to %s", model.family, path)


def load_model(path) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return model_from_dict(data)
