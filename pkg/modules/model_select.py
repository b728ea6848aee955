"""
Model selection and evaluation: stratified split, grid search with k-fold
cross-validation, permutation-importance feature selection and the validation
report.
"""

import itertools
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from config.config import CV_FOLDS, DEFAULT_N_REPEATS, TRAIN_FRACTION
from modules.classifiers import FAMILIES, PARAM_TYPES, TrainedModel, train
from modules.errors import ContractError, GridSearchError, VridError
from modules.feature_extract import FEATURE_NAMES, LABEL_NAMES

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = TRAIN_FRACTION
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ContractError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def stratified_split(y, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return sorted (train, validation) row indices, cut per class after a seeded shuffle."""
    y = np.asarray(y)
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        if len(y) < 2:
            raise ContractError("need at least 2 rows to split")
        order = rng.permutation(len(y))
        n_train = min(max(int(round(spec.train_fraction * len(y))), 1), len(y) - 1)
        return np.sort(order[:n_train]), np.sort(order[n_train:])

    train_parts, val_parts = [], []
    for cls in (0, 1):
        members = np.nonzero(y == cls)[0]
        if len(members) < 2:
            raise ContractError(f"class {cls} has {len(members)} rows; at least 2 are needed to split")
        shuffled = rng.permutation(members)
        n_train = min(max(int(round(spec.train_fraction * len(members))), 1), len(members) - 1)
        train_parts.append(shuffled[:n_train])
        val_parts.append(shuffled[n_train:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(val_parts))


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    if k < 2 or k > n:
        raise ContractError(f"cannot make {k} folds from {n} rows")
    order = np.random.default_rng(seed).permutation(n)
    return [np.sort(fold) for fold in np.array_split(order, k)]


def stratified_kfold_indices(y, k: int, seed: int) -> list[np.ndarray]:
    """Folds that each hold about 1/k of every class; sizes differ by at most one."""
    y = np.asarray(y)
    if k < 2 or k > len(y):
        raise ContractError(f"cannot make {k} folds from {len(y)} rows")
    rng = np.random.default_rng(seed)
    dealt = np.concatenate([rng.permutation(np.nonzero(y == cls)[0]) for cls in np.unique(y)])
    slots = np.arange(len(dealt)) % k
    return [np.sort(dealt[slots == fold]) for fold in range(k)]


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------

DEFAULT_GRIDS = {
    "lr": {"solver": ["liblinear", "saga"], "c": [0.1, 1.0]},
    "knn": {"n_neighbors": [5, 10], "weights": ["uniform", "distance"]},
    "dt": {"min_samples_split": [5, 8], "max_depth": [5, 10]},
    "rf": {"n_estimators": [5, 20, 50], "min_samples_split": [5, 8], "max_depth": [5, 10]},
    "nb": {"var_smoothing": [float(v) for v in np.logspace(0, -9, num=100)]},
}


@dataclass(frozen=True)
class GridSpec:
    family: str
    candidates: tuple
    cv_folds: int = CV_FOLDS

    def __post_init__(self):
        if self.family not in PARAM_TYPES:
            raise ContractError(f"unknown classifier family {self.family!r}")
        if not self.candidates:
            raise ContractError("grid has no candidates")
        if self.cv_folds < 2:
            raise ContractError(f"cv_folds must be >= 2, got {self.cv_folds}")
        param_type = PARAM_TYPES[self.family]
        object.__setattr__(self, "candidates", tuple(
            c if isinstance(c, param_type) else param_type(**c) for c in self.candidates))


def expand_grid(family: str, lists: dict, cv_folds: int = CV_FOLDS) -> GridSpec:
    """Cartesian product of the value lists, first key varying slowest."""
    keys = list(lists)
    candidates = [dict(zip(keys, values)) for values in itertools.product(*(lists[k] for k in keys))]
    return GridSpec(family, tuple(candidates), cv_folds)


def default_grid(family: str, cv_folds: int = CV_FOLDS) -> GridSpec:
    if family not in DEFAULT_GRIDS:
        raise ContractError(f"unknown classifier family {family!r}; expected one of {', '.join(FAMILIES)}")
    return expand_grid(family, DEFAULT_GRIDS[family], cv_folds)


@dataclass
class GridResult:
    best_index: int
    best_params: object
    scores: pd.DataFrame
    model: TrainedModel


def _accuracy(model: TrainedModel, X, y) -> float:
    return float(np.mean(model.predict_batch(X) == y))


def grid_search(X, y, grid: GridSpec, seed: int = 0, feature_indices=None) -> GridResult:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    folds = stratified_kfold_indices(y, grid.cv_folds, seed)
    all_rows = np.arange(len(y))
    records = []
    best_index, best_score = 0, -np.inf
    for index, params in enumerate(grid.candidates):
        fold_scores = []
        for held_out in folds:
            fit_rows = np.setdiff1d(all_rows, held_out, assume_unique=True)
            try:
                model = train(grid.family, X[fit_rows], y[fit_rows], params, seed=seed,
                              feature_indices=feature_indices)
            except (VridError, ValueError) as exc:
                raise GridSearchError(f"candidate {index} {asdict(params)} failed: {exc}") from exc
            fold_scores.append(_accuracy(model, X[held_out], y[held_out]))
        mean_score = float(np.mean(fold_scores))
        logger.debug("Candidate %s %s: mean CV accuracy %.5f", index, asdict(params), mean_score)
        records.append({"candidate": index, **asdict(params),
                        **{f"fold_{i}": s for i, s in enumerate(fold_scores)}, "mean_score": mean_score})
        if mean_score > best_score:
            best_index, best_score = index, mean_score

    best_params = grid.candidates[best_index]
    logger.info("Grid search (%s, %s candidates): best %s with mean CV accuracy %.5f",
                grid.family, len(grid.candidates), asdict(best_params), best_score)
    try:
        model = train(grid.family, X, y, best_params, seed=seed, feature_indices=feature_indices)
    except (VridError, ValueError) as exc:
        raise GridSearchError(f"refit of candidate {best_index} {asdict(best_params)} failed: {exc}") from exc
    return GridResult(best_index, best_params, pd.DataFrame(records), model)


# ---------------------------------------------------------------------------
# Permutation importance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureImportance:
    name: str
    index: int
    importance: float
    std: float = 0.0


def permutation_importance(model: TrainedModel, X, y, n_repeats: int = DEFAULT_N_REPEATS, seed: int = 0,
                           feature_names=FEATURE_NAMES) -> list[FeatureImportance]:
    """Accuracy drop when one column is shuffled, averaged over n_repeats; sorted descending."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if len(y) < 2:
        raise ContractError("permutation importance needs at least 2 rows")
    if n_repeats < 1:
        raise ContractError(f"n_repeats must be >= 1, got {n_repeats}")
    n = len(y)
    baseline = int(np.sum(model.predict_batch(X) == y))
    entries = []
    for j in range(X.shape[1]):
        drops = np.empty(n_repeats, dtype=np.int64)
        shuffled = X.copy()
        for r in range(n_repeats):
            perm = np.random.default_rng([seed, j, r]).permutation(n)
            shuffled[:, j] = X[perm, j]
            drops[r] = baseline - int(np.sum(model.predict_batch(shuffled) == y))
        name = feature_names[j] if j < len(feature_names) else f"f{j}"
        entries.append(FeatureImportance(name, j, int(drops.sum()) / (n * n_repeats), float(np.std(drops / n))))
    return sorted(entries, key=lambda e: -e.importance)


def select_features(importances: list[FeatureImportance]) -> tuple[int, ...]:
    kept = tuple(sorted(e.index for e in importances if e.importance > 0))
    if not kept:
        raise ContractError("no feature has positive importance")
    return kept


def importance_frame(importances: list[FeatureImportance]) -> pd.DataFrame:
    return pd.DataFrame([asdict(e) for e in importances], columns=["name", "index", "importance", "std"])


# ---------------------------------------------------------------------------
# Evaluation report
# ---------------------------------------------------------------------------

def _safe_div(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


@dataclass
class EvalReport:
    tn: int
    fp: int
    fn: int
    tp: int
    params: dict = field(default_factory=dict)
    importances: list = field(default_factory=list)
    excluded: list = field(default_factory=list)
    family: str = ""

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    @property
    def accuracy(self) -> float:
        return _safe_div(self.tn + self.tp, self.total)

    @property
    def support(self) -> tuple[int, int]:
        return self.tn + self.fp, self.fn + self.tp

    @property
    def precision(self) -> tuple[float, float]:
        return _safe_div(self.tn, self.tn + self.fn), _safe_div(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> tuple[float, float]:
        return _safe_div(self.tn, self.tn + self.fp), _safe_div(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> tuple[float, float]:
        return tuple(_safe_div(2 * p * r, p + r) for p, r in zip(self.precision, self.recall))

    @property
    def confusion(self) -> np.ndarray:
        """Rows are true labels, columns predicted labels (Non-VR first)."""
        return np.array([[self.tn, self.fp], [self.fn, self.tp]])


def report_from_confusion(tn: int, fp: int, fn: int, tp: int, **extra) -> EvalReport:
    if min(tn, fp, fn, tp) < 0:
        raise ContractError("confusion counts must be non-negative")
    return EvalReport(int(tn), int(fp), int(fn), int(tp), **extra)


def report_from_predictions(y_true, y_pred, **extra) -> EvalReport:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ContractError("label and prediction vectors differ in length")
    return report_from_confusion(
        int(np.sum((y_true == 0) & (y_pred == 0))),
        int(np.sum((y_true == 0) & (y_pred == 1))),
        int(np.sum((y_true == 1) & (y_pred == 0))),
        int(np.sum((y_true == 1) & (y_pred == 1))),
        **extra,
    )


def evaluate(model: TrainedModel, X, y, **extra) -> EvalReport:
    extra.setdefault("family", model.family)
    extra.setdefault("params", asdict(model.params))
    return report_from_predictions(y, model.predict_batch(X), **extra)


def report_frame(report: EvalReport) -> pd.DataFrame:
    rows = []
    for cls in (0, 1):
        rows.append({
            "traffic": LABEL_NAMES[cls],
            "precision": report.precision[cls],
            "recall": report.recall[cls],
            "f1": report.f1[cls],
            "support": report.support[cls],
        })
    rows.append({"traffic": "accuracy", "precision": None, "recall": None,
                 "f1": report.accuracy, "support": report.total})
    return pd.DataFrame(rows, columns=["traffic", "precision", "recall", "f1", "support"])


def confusion_frame(report: EvalReport) -> pd.DataFrame:
    names = [LABEL_NAMES[0], LABEL_NAMES[1]]
    return pd.DataFrame(report.confusion,
                        index=pd.Index([f"true {n}" for n in names], name="true"),
                        columns=[f"predicted {n}" for n in names])


def format_report(report: EvalReport) -> str:
    lines = []
    if report.family:
        lines.append(f"classifier: {report.family}")
    if report.params:
        lines.append("params: " + ", ".join(f"{k}={v}" for k, v in sorted(report.params.items())))
    lines.append(f"accuracy: {report.accuracy:.5f} ({report.tn + report.tp}/{report.total})")
    lines.append("")
    lines.append(f"{'traffic':<10}{'precision':>11}{'recall':>9}{'f1':>9}{'support':>9}")
    for cls in (0, 1):
        lines.append(f"{LABEL_NAMES[cls]:<10}{report.precision[cls]:>11.2f}{report.recall[cls]:>9.2f}"
                     f"{report.f1[cls]:>9.2f}{report.support[cls]:>9d}")
    lines.append("")
    lines.append("confusion matrix (rows: true, columns: predicted)")
    lines.append(f"{'':<10}{LABEL_NAMES[0]:>9}{LABEL_NAMES[1]:>9}")
    lines.append(f"{LABEL_NAMES[0]:<10}{report.tn:>9d}{report.fp:>9d}")
    lines.append(f"{LABEL_NAMES[1]:<10}{report.fn:>9d}{report.tp:>9d}")
    if report.importances:
        lines.append("")
        lines.append("permutation importance")
        for entry in report.importances:
            lines.append(f"  {entry.name:<12}{entry.importance:>10.5f}")
    if report.excluded:
        lines.append("excluded features: " + ", ".join(report.excluded))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# End-to-end selection
# ---------------------------------------------------------------------------

@dataclass
class PipelineResult:
    grid: GridResult
    importances: list
    selected: tuple
    model: TrainedModel
    report: EvalReport
    train_rows: np.ndarray
    validation_rows: np.ndarray


def run_selection_pipeline(X, y, family: str, seed: int = 0, grid: GridSpec | None = None,
                           n_repeats: int = DEFAULT_N_REPEATS,
                           train_fraction: float = TRAIN_FRACTION) -> PipelineResult:
    """Split, grid-search, rank features on the validation rows, refit on the kept features, evaluate."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    grid = grid or default_grid(family)
    train_rows, val_rows = stratified_split(y, SplitSpec(train_fraction, seed))
    logger.info("Split %s rows into %s train / %s validation", len(y), len(train_rows), len(val_rows))

    result = grid_search(X[train_rows], y[train_rows], grid, seed)
    importances = permutation_importance(result.model, X[val_rows], y[val_rows], n_repeats, seed)
    selected = select_features(importances)
    excluded = [FEATURE_NAMES[i] for i in range(X.shape[1]) if i not in selected]
    logger.info("Keeping %s of %s features for %s", len(selected), X.shape[1], family)

    model = train(family, X[train_rows], y[train_rows], result.best_params, seed=seed, feature_indices=selected)
    report = evaluate(model, X[val_rows], y[val_rows], importances=importances, excluded=excluded)
    return PipelineResult(result, importances, selected, model, report, train_rows, val_rows)


def validation_score_table(datasets: dict, families=FAMILIES, seed: int = 0,
                           n_repeats: int = DEFAULT_N_REPEATS, grids: dict | None = None) -> pd.DataFrame:
    """Validation accuracy per (N, omega) setting and family.

    datasets maps (omega_ms, n_subsamples) to an (X, y) pair.
    """
    grids = grids or {}
    rows = []
    for (omega_ms, n_subsamples), (X, y) in sorted(datasets.items(), key=lambda kv: (-kv[0][1], -kv[0][0])):
        row = {"N": n_subsamples, "omega_ms": omega_ms}
        for family in families:
            result = run_selection_pipeline(X, y, family, seed, grids.get(family), n_repeats)
            row[family] = result.report.accuracy
        logger.info("Setting omega=%sms N=%s done", omega_ms, n_subsamples)
        rows.append(row)
    return pd.DataFrame(rows, columns=["N", "omega_ms", *families])
