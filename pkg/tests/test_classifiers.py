import logging

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.stats import norm

from conftest import separable_dataset
from modules.classifiers import (
    FAMILIES,
    ForestParams,
    GnbParams,
    KnnParams,
    LogRegParams,
    StandardScaler,
    TreeParams,
    best_split,
    build_tree,
    gini,
    load_model,
    logreg_objective,
    model_from_dict,
    params_from_dict,
    predict,
    predict_batch,
    save_model,
    train,
    train_forest,
    train_gnb,
    train_knn,
    train_logreg,
    train_tree,
)
from modules.errors import ContractError


def accuracy(model, X, y):
    return float(np.mean(predict_batch(model, X) == y))


def test_scaler_guards_constant_columns():
    X = np.array([[1.0, 5.0], [3.0, 5.0]])
    scaler = StandardScaler.fit(X)
    assert scaler.std.tolist() == [1.0, 1.0]
    assert scaler.transform(X).tolist() == [[-1.0, 0.0], [1.0, 0.0]]
    np.testing.assert_allclose(scaler.inverse_transform(scaler.transform(X)), X)


def test_scaler_rejects_empty_matrix():
    with pytest.raises(ContractError):
        StandardScaler.fit(np.empty((0, 3)))


@pytest.mark.parametrize("family", FAMILIES)
def test_every_family_learns_separable_blobs(family, blobs):
    X, y = blobs
    model = train(family, X, y, seed=1)
    assert model.family == family
    assert accuracy(model, X, y) >= 0.95
    X_test, y_test = separable_dataset(n_per_class=40, seed=99)
    assert accuracy(model, X_test, y_test) >= 0.95


@pytest.mark.parametrize("family", FAMILIES)
def test_predict_single_row_matches_batch(family, blobs):
    X, y = blobs
    model = train(family, X, y, seed=2)
    batch = predict_batch(model, X[:10])
    assert [predict(model, row) for row in X[:10]] == batch.tolist()


@pytest.mark.parametrize("family", FAMILIES)
def test_save_and_load_keeps_predictions(family, blobs, tmp_path):
    X, y = blobs
    model = train(family, X, y, seed=3)
    path = tmp_path / f"{family}.json"
    save_model(model, path, provenance={"command": "train"})
    loaded = load_model(path)
    queries = np.random.default_rng(4).normal(0.0, 5.0, (200, X.shape[1]))
    assert loaded.family == family
    assert loaded.params == model.params
    assert np.array_equal(predict_batch(loaded, queries), predict_batch(model, queries))


def test_training_contract():
    with pytest.raises(ContractError):
        train("svm", np.zeros((2, 2)), np.array([0, 1]))
    with pytest.raises(ContractError):
        train("dt", np.zeros((3, 2)), np.array([0, 1]))
    with pytest.raises(ContractError):
        train("dt", np.zeros((2, 2)), np.array([0, 2]))
    with pytest.raises(ContractError):
        train("dt", np.empty((0, 2)), np.array([]))


def test_wrong_row_width_is_rejected(blobs):
    X, y = blobs
    model = train("dt", X, y)
    with pytest.raises(ContractError):
        predict_batch(model, X[:, :3])


def test_feature_subset_model_accepts_full_rows(blobs):
    X, y = blobs
    model = train("dt", X, y, feature_indices=[0, 2])
    assert model.n_features_in == 4
    assert model.feature_indices == (0, 2)
    assert model.used_features() <= {0, 2}
    assert 0 in model.used_features()
    assert accuracy(model, X, y) >= 0.95
    with pytest.raises(ContractError):
        train("dt", X, y, feature_indices=[])


@pytest.mark.parametrize("family,values", [
    ("lr", {"c": 0.0}),
    ("lr", {"solver": "newton"}),
    ("knn", {"n_neighbors": 0}),
    ("knn", {"weights": "gaussian"}),
    ("dt", {"min_samples_split": 1}),
    ("rf", {"n_estimators": 0}),
    ("nb", {"var_smoothing": -1.0}),
])
def test_invalid_params(family, values):
    with pytest.raises(ContractError):
        params_from_dict(family, values)


def test_train_accepts_param_dicts(blobs):
    X, y = blobs
    model = train("knn", X, y, params={"n_neighbors": 3, "weights": "distance"})
    assert model.params == KnnParams(3, "distance")


# --- logistic regression ----------------------------------------------------------

@pytest.mark.parametrize("c", [0.1, 1.0])
def test_logreg_reaches_the_optimum(c):
    X, y = separable_dataset(n_per_class=50, seed=5, n_features=3)
    X[:, 0] /= 3.0
    model = train_logreg(X, y, LogRegParams(c=c))
    Xs = model.scaler.transform(X)

    def objective(v):
        return logreg_objective(Xs, y, v[:-1], v[-1], c)

    reference = minimize(objective, np.zeros(Xs.shape[1] + 1), method="BFGS", options={"gtol": 1e-8})
    ours = logreg_objective(Xs, y, model.weights, model.bias, c)
    assert ours <= reference.fun + 1e-5 * max(1.0, abs(reference.fun))
    np.testing.assert_allclose(model.weights, reference.x[:-1], atol=1e-3)


def test_logreg_stronger_regularization_shrinks_weights():
    X, y = separable_dataset(n_per_class=50, seed=6, n_features=2)
    weak = train_logreg(X, y, LogRegParams(c=1.0))
    strong = train_logreg(X, y, LogRegParams(c=0.01))
    assert np.linalg.norm(strong.weights) < np.linalg.norm(weak.weights)


def test_logreg_decision_sign_matches_prediction(blobs):
    X, y = blobs
    model = train_logreg(X, y)
    assert np.array_equal(model.decision_function(X) > 0, predict_batch(model, X) == 1)


def test_logreg_bias_vanishes_on_mirrored_classes():
    rng = np.random.default_rng(12)
    X_vr = rng.normal(1.0, 1.0, (50, 2))
    X = np.vstack([X_vr, -X_vr])
    y = np.array([1] * 50 + [0] * 50)
    model = train_logreg(X, y)
    assert abs(model.bias) < 1e-3


def test_logreg_stalled_line_search_keeps_the_last_iterate(monkeypatch, caplog):
    X, y = separable_dataset(n_per_class=20, seed=2, n_features=2)
    start = logreg_objective

    def flat_then_infinite(Xs, y, weights, bias, c):
        if not weights.any() and bias == 0.0:
            return start(Xs, y, weights, bias, c)
        return float("inf")

    monkeypatch.setattr("modules.classifiers.logreg_objective", flat_then_infinite)
    with caplog.at_level(logging.WARNING, logger="modules.classifiers"):
        model = train_logreg(X, y)
    assert model.weights.tolist() == [0.0, 0.0]
    assert model.bias == 0.0
    assert model.n_iter == 1
    assert "line search stalled" in caplog.text


# --- kNN ----------------------------------------------------------------------------

def test_knn_k_larger_than_training_set():
    with pytest.raises(ContractError):
        train_knn(np.zeros((3, 1)), np.array([0, 1, 0]), KnnParams(n_neighbors=4))


def test_knn_one_neighbour_recalls_training_rows(blobs):
    X, y = blobs
    model = train_knn(X, y, KnnParams(n_neighbors=1))
    assert accuracy(model, X, y) == 1.0


def test_knn_uniform_tie_goes_to_non_vr():
    model = train_knn(np.array([[0.0], [2.0]]), np.array([1, 0]), KnnParams(n_neighbors=2))
    assert predict(model, np.array([1.0])) == 0


def test_knn_distance_weighting():
    X = np.array([[0.0], [3.0], [4.0]])
    y = np.array([1, 0, 0])
    model = train_knn(X, y, KnnParams(n_neighbors=3, weights="distance"))
    uniform = train_knn(X, y, KnnParams(n_neighbors=3))
    assert predict(model, np.array([0.5])) == 1
    assert predict(uniform, np.array([0.5])) == 0


def test_knn_exact_match_decides():
    X = np.array([[0.0], [0.1], [0.2]])
    y = np.array([1, 0, 0])
    model = train_knn(X, y, KnnParams(n_neighbors=3, weights="distance"))
    assert predict(model, np.array([0.0])) == 1


# --- CART ---------------------------------------------------------------------------

def test_gini():
    assert gini(5, 5) == pytest.approx(0.5)
    assert gini(4, 0) == 0.0
    assert gini(0, 0) == 0.0


def test_stump_threshold_is_midpoint():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0, 0, 1, 1])
    tree = build_tree(X, y, max_depth=1, min_samples_split=2)
    assert tree.n_nodes == 3
    assert tree.feature[0] == 0
    assert tree.threshold[0] == 2.5
    assert tree.predict(np.array([[2.4], [2.6]])).tolist() == [0, 1]


def test_split_ties_keep_the_lower_feature():
    column = np.array([1.0, 2.0, 3.0, 4.0])
    X = np.column_stack([column, column])
    y = np.array([0, 0, 1, 1])
    feature, threshold, impurity = best_split(X, y, [0, 1])
    assert feature == 0
    assert threshold == 2.5
    assert impurity == 0.0


def test_tree_learns_xor_at_depth_two():
    corners = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    X = np.repeat(corners, 5, axis=0)
    y = np.repeat([0, 1, 1, 0], 5)
    # every root split leaves the impurity at 0.5
    assert best_split(X, y, [0, 1]) == (0, 0.5, 0.5)
    model = train_tree(X, y, TreeParams(max_depth=2, min_samples_split=2))
    assert model.tree.depth == 2
    assert accuracy(model, X, y) == 1.0


def test_best_split_on_constant_column():
    assert best_split(np.ones((4, 1)), np.array([0, 1, 0, 1]), [0]) is None


def test_pure_node_is_a_leaf():
    tree = build_tree(np.array([[1.0], [2.0]]), np.array([1, 1]), 10, 2)
    assert tree.n_nodes == 1
    assert tree.leaf_class.tolist() == [1]


def test_tree_respects_depth_and_split_size():
    rng = np.random.default_rng(8)
    X = rng.random((200, 5))
    y = rng.integers(0, 2, 200)
    for max_depth in (1, 3, 6):
        tree = train_tree(X, y, TreeParams(max_depth=max_depth, min_samples_split=2)).tree
        assert tree.depth <= max_depth
    big_split = train_tree(X, y, TreeParams(max_depth=20, min_samples_split=50)).tree
    internal = big_split.feature >= 0
    assert (big_split.counts[internal].sum(axis=1) >= 50).all()


def test_tree_is_invariant_to_monotone_rescaling():
    rng = np.random.default_rng(9)
    X = rng.random((150, 4))
    y = (X[:, 1] + 0.3 * rng.random(150) > 0.6).astype(int)
    scaled = X.copy()
    scaled[:, 1] = np.exp(3.0 * X[:, 1])
    scaled[:, 2] = 5.0 * X[:, 2] - 7.0
    original = train_tree(X, y, TreeParams(max_depth=6, min_samples_split=2))
    transformed = train_tree(scaled, y, TreeParams(max_depth=6, min_samples_split=2))
    assert np.array_equal(original.tree.feature, transformed.tree.feature)
    assert np.array_equal(predict_batch(original, X), predict_batch(transformed, scaled))


# --- random forest ----------------------------------------------------------------

def test_single_unbagged_tree_forest_equals_cart(blobs):
    X, y = blobs
    params = ForestParams(n_estimators=1, max_depth=5, min_samples_split=2, bootstrap=False, max_features=4)
    forest = train_forest(X, y, params, seed=10)
    tree = train_tree(X, y, TreeParams(max_depth=5, min_samples_split=2))
    assert forest.trees[0] == tree.tree
    queries = np.random.default_rng(11).normal(0.0, 4.0, (100, 4))
    assert np.array_equal(predict_batch(forest, queries), predict_batch(tree, queries))


def test_forest_is_reproducible_from_its_seed(blobs):
    X, y = blobs
    first = train_forest(X, y, ForestParams(n_estimators=5), seed=12)
    second = train_forest(X, y, ForestParams(n_estimators=5), seed=12)
    assert first.tree_seeds == second.tree_seeds
    assert all(a == b for a, b in zip(first.trees, second.trees))
    other = train_forest(X, y, ForestParams(n_estimators=5), seed=13)
    assert first.tree_seeds != other.tree_seeds


def test_forest_vote_tie_goes_to_non_vr():
    X = np.array([[0.0], [1.0]])
    y = np.array([0, 1])
    forest = train_forest(X, y, ForestParams(n_estimators=2, bootstrap=False, max_features=1), seed=0)
    # both trees are identical stumps, so force a split vote
    forest.trees[1].counts[:, [0, 1]] = forest.trees[1].counts[:, [1, 0]]
    assert predict_batch(forest, X).tolist() == [0, 0]


# --- Gaussian naive Bayes ---------------------------------------------------------

def test_gnb_needs_both_classes():
    with pytest.raises(ContractError):
        train_gnb(np.zeros((3, 2)), np.array([1, 1, 1]))


def test_gnb_statistics():
    X = np.array([[0.0], [2.0], [10.0], [14.0]])
    y = np.array([0, 0, 1, 1])
    model = train_gnb(X, y, GnbParams(var_smoothing=1e-9))
    assert model.priors.tolist() == [0.5, 0.5]
    assert model.means[:, 0].tolist() == [1.0, 12.0]
    epsilon = 1e-9 * np.var(X[:, 0])
    np.testing.assert_allclose(model.variances[:, 0], [1.0 + epsilon, 4.0 + epsilon])
    assert predict_batch(model, np.array([[1.0], [12.0], [3.0]])).tolist() == [0, 1, 0]


def test_gnb_boundary_between_mirrored_classes_is_zero():
    offsets = norm.ppf(np.linspace(0.01, 0.99, 99))
    X = np.concatenate([-2.0 + offsets, 2.0 - offsets]).reshape(-1, 1)
    y = np.array([0] * 99 + [1] * 99)
    model = train_gnb(X, y)
    assert predict_batch(model, np.array([[-0.01], [0.01]])).tolist() == [0, 1]
    assert predict_batch(model, np.array([[-2.0], [2.0]])).tolist() == [0, 1]


def test_gnb_smoothing_handles_constant_features():
    X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 5.0], [1.0, 6.0]])
    y = np.array([0, 0, 1, 1])
    model = train_gnb(X, y)
    assert np.all(model.variances > 0)
    assert predict_batch(model, X).tolist() == [0, 0, 1, 1]


def test_gnb_log_likelihood_matches_scipy_density():
    X, y = separable_dataset(n_per_class=40, seed=8, n_features=3)
    model = train_gnb(X, y)
    queries = np.random.default_rng(3).normal(0.0, 3.0, (25, 3))
    expected = np.column_stack([
        np.log(model.priors[cls])
        + norm.logpdf(queries, loc=model.means[cls], scale=np.sqrt(model.variances[cls])).sum(axis=1)
        for cls in (0, 1)
    ])
    np.testing.assert_allclose(model.joint_log_likelihood(queries), expected, rtol=1e-10, atol=1e-10)


def test_model_file_must_be_tagged():
    with pytest.raises(ContractError):
        model_from_dict({"format": "other"})
    with pytest.raises(ContractError):
        model_from_dict({"format": "vrid-model", "version": 99})
