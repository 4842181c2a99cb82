# test_learn.py
import numpy as np
import pytest

from tools.learn import (
    BENIGN, MALWARE, ClassifierSpec, DatasetError, DecisionTree, LabeledDataset, Metrics,
    ModelLayoutError, RandomForestModel, RandomForestParams, compute_metrics, epoch_delta,
    kfold_cv, kfold_indices, knn_predict, load_model, rf_predict, save_model, temporal_eval,
    train_knn, train_model, train_random_forest, write_metrics_report,
)


def blobs(n_per_class=100, d=4, spread=0.5, seed=0, epoch=0, prefix="app"):
    rng = np.random.default_rng(seed)
    benign = rng.normal(0.0, spread, size=(n_per_class, d))
    malware = rng.normal(3.0, spread, size=(n_per_class, d))
    return LabeledDataset(
        X=np.vstack([benign, malware]),
        y=["benign"] * n_per_class + ["malware"] * n_per_class,
        epoch=[epoch] * (2 * n_per_class),
        app_ids=[f"{prefix}{i}" for i in range(2 * n_per_class)],
        name=f"{prefix}-set",
    )


def leaf(votes):
    return DecisionTree(
        feature=np.array([-1]), threshold=np.array([0.0]), left=np.array([-1]),
        right=np.array([-1]), votes=np.array([votes], dtype=float),
    )


def test_forest_fits_separated_blobs():
    d = blobs()
    model = train_random_forest(d, RandomForestParams(n_trees=51, max_depth=8), seed=1)
    accuracy = np.mean(model.predict(d.X) == d.y)
    assert accuracy >= 0.99
    assert rf_predict(model, np.full(4, 3.0)) == MALWARE


def test_forest_memorizes_two_points():
    d = LabeledDataset(X=[[0.0, 0.0], [1.0, 1.0]], y=["benign", "malware"], epoch=[0, 0], app_ids=["b", "m"])
    model = train_random_forest(d, RandomForestParams(n_trees=1, max_depth=8), seed=0)
    assert model.predict(d.X).tolist() == [BENIGN, MALWARE]


def test_forest_is_deterministic_for_any_worker_count():
    d = blobs(seed=2)
    params = RandomForestParams(n_trees=9, max_depth=4)
    first = train_random_forest(d, params, seed=7).to_dict()
    assert train_random_forest(d, params, seed=7).to_dict() == first
    assert train_random_forest(d, params, seed=7, workers=2).to_dict() == first


def test_tree_structure_invariants():
    d = blobs(spread=2.0, seed=3)
    model = train_random_forest(d, RandomForestParams(n_trees=5, max_depth=3), seed=0)
    for tree in model.trees:
        assert tree.depth() <= 3
        leaves = tree.feature == -1
        assert np.all(tree.votes[leaves].sum(axis=1) > 0)
        assert np.all(np.isfinite(tree.threshold))


def test_training_accuracy_grows_with_depth():
    d = blobs(spread=2.5, seed=4)
    accuracies = []
    for depth in (1, 2, 4, 8):
        params = RandomForestParams(n_trees=1, max_depth=depth, features_per_split=4, bootstrap=False)
        model = train_random_forest(d, params, seed=5)
        accuracies.append(np.mean(model.predict(d.X) == d.y))
    assert accuracies == sorted(accuracies)


def test_forest_tie_goes_to_malware():
    forest = RandomForestModel(trees=[leaf([1, 0]), leaf([0, 1])], params=RandomForestParams(n_trees=2), n_features=3)
    assert rf_predict(forest, np.zeros(3)) == MALWARE
    unanimous = RandomForestModel(trees=[leaf([2, 0])] * 3, params=RandomForestParams(n_trees=3), n_features=3)
    assert rf_predict(unanimous, np.zeros(3)) == BENIGN


def test_single_class_training_is_rejected():
    d = LabeledDataset(X=np.zeros((4, 2)), y=["malware"] * 4, epoch=[0] * 4, app_ids=list("abcd"))
    with pytest.raises(DatasetError):
        train_random_forest(d)


def test_prediction_width_is_checked():
    model = train_random_forest(blobs(), RandomForestParams(n_trees=3), seed=0)
    with pytest.raises(ModelLayoutError):
        model.predict(np.zeros((1, 5)))


def test_mode_defaults():
    family = ClassifierSpec.from_name("rf-family")
    package = ClassifierSpec.from_name("rf-package")
    assert (family.rf.n_trees, family.rf.max_depth) == (51, 8)
    assert (package.rf.n_trees, package.rf.max_depth) == (101, 64)
    assert ClassifierSpec.from_name("rf-package", n_trees=11).rf.n_trees == 11
    assert ClassifierSpec.from_name("3nn").k == 3
    with pytest.raises(ValueError):
        ClassifierSpec.from_name("svm")


def test_knn_exact_match_and_majority():
    d = LabeledDataset(
        X=[[0.0], [1.0], [1.1], [5.0]], y=["benign", "malware", "malware", "benign"],
        epoch=[0] * 4, app_ids=list("abcd"),
    )
    assert knn_predict(d, np.array([5.0]), k=1) == BENIGN
    assert knn_predict(d, np.array([0.9]), k=3) == MALWARE


def test_knn_distance_tie_prefers_lower_index():
    d = LabeledDataset(X=[[1.0], [1.0]], y=["malware", "benign"], epoch=[0, 0], app_ids=["first", "second"])
    assert knn_predict(d, np.array([1.0]), k=1) == MALWARE


def exhaustive_knn(X, y, x, k):
    distances = [(float(np.sqrt(np.sum((row - x) ** 2))), i) for i, row in enumerate(X)]
    distances.sort()
    votes = [y[i] for _, i in distances[:k]]
    return MALWARE if 2 * sum(v == MALWARE for v in votes) >= k else BENIGN


def test_knn_matches_exhaustive_scan():
    rng = np.random.default_rng(12)
    X = rng.integers(0, 4, size=(300, 3)).astype(float)
    y = rng.integers(0, 2, size=300)
    d = LabeledDataset(X=X, y=y, epoch=np.zeros(300), app_ids=[str(i) for i in range(300)])
    queries = rng.integers(0, 4, size=(200, 3)).astype(float)
    for k in (1, 3):
        model = train_knn(d, k)
        predicted = model.predict(queries)
        assert predicted.tolist() == [exhaustive_knn(X, y, q, k) for q in queries]


def test_knn_needs_training_rows():
    empty = LabeledDataset(X=np.zeros((0, 2)), y=[], epoch=[], app_ids=[])
    with pytest.raises(DatasetError):
        train_knn(empty, 1)


def test_metric_arithmetic():
    assert Metrics.f_from(0.95, 0.97) == pytest.approx(0.96, abs=0.005)
    perfect = compute_metrics(["malware", "benign"], ["malware", "benign"])
    assert (perfect.precision, perfect.recall, perfect.f_measure) == (1.0, 1.0, 1.0)
    missed = compute_metrics(["malware", "benign", "malware"], ["benign"] * 3)
    assert missed.recall == 0.0 and missed.f_measure == 0.0
    assert compute_metrics([], []) == Metrics()


def test_metrics_counts():
    m = compute_metrics([1, 1, 1, 0, 0], [1, 1, 0, 1, 0])
    assert (m.tp, m.fp, m.fn, m.tn) == (2, 1, 1, 1)
    assert m.precision == pytest.approx(2 / 3)
    assert m.f_measure == 2 * m.precision * m.recall / (m.precision + m.recall)


def test_folds_partition_the_index_set():
    d = blobs(n_per_class=35)
    folds = kfold_indices(d.y, 10, seed=3)
    tests = np.concatenate([test for _, test in folds])
    assert sorted(tests.tolist()) == list(range(len(d)))
    for train, test in folds:
        assert not set(train) & set(test)
        assert 3 <= np.sum(d.y[test] == MALWARE) <= 4


def test_cv_on_separable_data():
    d = blobs(n_per_class=60, seed=8)
    result = kfold_cv(d, 10, ClassifierSpec.from_name("rf-family"), seed=0)
    assert result.metrics.f_measure >= 0.95
    assert len(result.fold_metrics) == 10
    again = kfold_cv(d, 10, ClassifierSpec.from_name("rf-family"), seed=0)
    assert again.metrics == result.metrics


def test_cv_on_shuffled_labels_is_chance():
    d = blobs(n_per_class=100, seed=9)
    d.y = np.random.default_rng(1).permutation(d.y)
    result = kfold_cv(d, 10, ClassifierSpec.from_name("rf-family"), seed=0)
    assert abs(result.metrics.f_measure - 0.5) <= 0.1


def test_too_many_folds_for_the_smallest_class():
    d = blobs(n_per_class=5)
    with pytest.raises(DatasetError):
        kfold_indices(d.y, 10)


def test_epoch_delta_directions():
    assert epoch_delta([2014], 2016) == 2
    assert epoch_delta([2013, 2014], 2014) == 0
    assert epoch_delta([2016], 2014) == -2


def test_temporal_eval_rejects_shared_apps():
    train = blobs(prefix="same")
    with pytest.raises(DatasetError):
        temporal_eval(train, [blobs(prefix="same", epoch=1)], ClassifierSpec.from_name("1nn"))


def test_temporal_eval_rows(tmp_path):
    train = blobs(prefix="old", epoch=2014, seed=1)
    tests = [blobs(prefix=f"new{e}", epoch=e, seed=e) for e in (2015, 2016)]
    rows = temporal_eval(train, tests, ClassifierSpec.from_name("3nn"))
    assert [r.delta_epoch for r in rows] == [1, 2]
    assert all(r.metrics.f_measure >= 0.95 for r in rows)
    path = write_metrics_report(rows, tmp_path / "metrics.csv")
    assert path.read_text().splitlines()[0] == "pipeline,train_set,test_set,delta_epoch,precision,recall,f_measure"


def test_reverse_direction_has_negative_delta():
    train = blobs(prefix="late", epoch=2016)
    rows = temporal_eval(train, [blobs(prefix="early", epoch=2014, seed=3)], ClassifierSpec.from_name("1nn"))
    assert rows[0].delta_epoch == -2


def test_pca_model_refuses_projected_width(tmp_path):
    d = blobs()
    model = train_model(d, ClassifierSpec.from_name("3nn"), pca_components=2)
    assert model.pca is not None and model.classifier.n_features == 2
    with pytest.raises(ModelLayoutError):
        model.predict(np.zeros((1, 2)))
    restored = load_model(save_model(model, tmp_path / "model.json"))
    assert np.array_equal(restored.predict(d.X), model.predict(d.X))


def test_persisted_forest_predicts_identically(tmp_path):
    d = blobs(spread=1.5)
    model = train_model(d, ClassifierSpec.from_name("rf-family", n_trees=7), seed=4)
    path = save_model(model, tmp_path / "model.json")
    restored = load_model(path)
    assert len(restored.classifier.trees) == 7
    assert np.array_equal(restored.predict(d.X), model.predict(d.X))


def test_state_space_width_is_enforced():
    with pytest.raises(ModelLayoutError):
        train_model(blobs(d=4), ClassifierSpec.from_name("1nn"), state_space=["a", "b", "c"])


def test_default_features_per_split_is_floor_sqrt():
    params = RandomForestParams()
    assert params.resolved_features(64) == 8
    assert params.resolved_features(10) == 3
    assert params.resolved_features(116_281) == 341
    assert params.resolved_features(1) == 1
    assert RandomForestParams(features_per_split=20).resolved_features(10) == 10


def test_model_layout_check():
    model = train_model(blobs(d=4), ClassifierSpec.from_name("1nn"), mode="family", state_space=["a", "b"])
    model.check_layout("family", ["a", "b"])
    with pytest.raises(ModelLayoutError):
        model.check_layout("family", ["b", "a"])
    with pytest.raises(ModelLayoutError):
        model.check_layout("package", ["a", "b"])
