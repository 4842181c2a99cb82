"""Classifiers, metrics and evaluation harnesses (cross-validation and temporal drift)."""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union
import json
import logging
import math

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, Field
from sklearn.metrics import confusion_matrix
from sklearn.model_selection import StratifiedKFold, train_test_split
from sklearn.tree import DecisionTreeClassifier

from tools.features import PcaModel, fit_pca

logger = logging.getLogger(__name__)

BENIGN = 0
MALWARE = 1
LABELS = ("benign", "malware")
LAYOUT_VERSION = 1
DEFAULT_FOLDS = 10
_LEAF = -1


class DatasetError(ValueError):
    """Raised for datasets that cannot be trained or evaluated on."""


class ModelLayoutError(ValueError):
    """Raised when feature vectors do not match the layout a model was trained on."""


def label_to_int(label: Union[str, int]) -> int:
    if isinstance(label, (int, np.integer)) and int(label) in (BENIGN, MALWARE):
        return int(label)
    try:
        return LABELS.index(str(label).strip().lower())
    except ValueError:
        raise DatasetError(f"Unknown label: {label!r}") from None


def int_to_label(value: int) -> str:
    return LABELS[int(value)]


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    epoch: np.ndarray
    app_ids: List[str]
    name: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray([label_to_int(v) for v in self.y], dtype=np.int64)
        self.epoch = np.asarray(self.epoch, dtype=np.int64)
        self.app_ids = [str(a) for a in self.app_ids]
        if self.X.ndim != 2:
            raise DatasetError("Feature matrix must be two-dimensional")
        n = self.X.shape[0]
        if not len(self.y) == len(self.epoch) == len(self.app_ids) == n:
            raise DatasetError("Features, labels, epochs and app ids differ in length")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> Tuple[int, int]:
        return int(np.sum(self.y == BENIGN)), int(np.sum(self.y == MALWARE))

    def subset(self, idx: Sequence[int], name: Optional[str] = None) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(
            X=self.X[idx],
            y=self.y[idx],
            epoch=self.epoch[idx],
            app_ids=[self.app_ids[i] for i in idx],
            name=self.name if name is None else name,
        )

    def select(self, labels: Optional[Sequence[str]] = None, epochs: Optional[Sequence[int]] = None,
               name: Optional[str] = None) -> "LabeledDataset":
        mask = np.ones(len(self), dtype=bool)
        if labels is not None:
            mask &= np.isin(self.y, [label_to_int(lbl) for lbl in labels])
        if epochs is not None:
            mask &= np.isin(self.epoch, list(epochs))
        return self.subset(np.flatnonzero(mask), name=name)

    def epochs(self) -> List[int]:
        return sorted(set(self.epoch.tolist()))

    @classmethod
    def concat(cls, parts: Sequence["LabeledDataset"], name: str = "") -> "LabeledDataset":
        return cls(
            X=np.vstack([p.X for p in parts]),
            y=np.concatenate([p.y for p in parts]),
            epoch=np.concatenate([p.epoch for p in parts]),
            app_ids=[a for p in parts for a in p.app_ids],
            name=name,
        )

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, name: str = "") -> "LabeledDataset":
        feature_cols = [c for c in frame.columns if c not in ("app_id", "label", "epoch")]
        return cls(
            X=frame[feature_cols].to_numpy(dtype=np.float64),
            y=frame["label"].tolist(),
            epoch=frame["epoch"].to_numpy(dtype=np.int64),
            app_ids=frame["app_id"].astype(str).tolist(),
            name=name,
        )

    @classmethod
    def from_feature_csv(cls, path: Union[str, Path]) -> "LabeledDataset":
        path = Path(path)
        if not path.is_file():
            raise DatasetError(f"Feature matrix not found: {path}")
        frame = pd.read_csv(path, dtype={"app_id": str, "label": str})
        missing = {"app_id", "label", "epoch"} - set(frame.columns)
        if missing:
            raise DatasetError(f"{path}: missing columns {sorted(missing)}")
        return cls.from_frame(frame, name=path.stem)


def _require_both_classes(d: LabeledDataset, what: str = "training data") -> None:
    benign, malware = d.class_counts()
    if benign == 0 or malware == 0:
        raise DatasetError(f"{what} must contain both benign and malware samples "
                           f"(benign={benign}, malware={malware})")


# Random forest

class RandomForestParams(BaseModel):
    n_trees: int = Field(51, ge=1)
    max_depth: int = Field(8, ge=1)
    features_per_split: Optional[int] = Field(None, ge=1)
    bootstrap: bool = True
    criterion: Literal["gini"] = "gini"

    @classmethod
    def for_mode(cls, mode: str, **overrides: Any) -> "RandomForestParams":
        base = {"n_trees": 51, "max_depth": 8} if mode == "family" else {"n_trees": 101, "max_depth": 64}
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    def resolved_features(self, d: int) -> int:
        if self.features_per_split is not None:
            return min(self.features_per_split, d)
        return max(1, int(math.isqrt(d)))


@dataclass
class DecisionTree:
    """Flat binary tree; leaves have feature == -1 and carry (benign, malware) vote counts."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    votes: np.ndarray

    def leaf_indices(self, X: np.ndarray) -> np.ndarray:
        # Split decisions compare single-precision features, as during induction.
        X32 = np.asarray(X, dtype=np.float32)
        node = np.zeros(X32.shape[0], dtype=np.int64)
        rows = np.arange(X32.shape[0])
        active = self.feature[node] != _LEAF
        while active.any():
            r, n = rows[active], node[active]
            go_left = X32[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] != _LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        leaf_votes = self.votes[self.leaf_indices(X)]
        return np.where(leaf_votes[:, MALWARE] >= leaf_votes[:, BENIGN], MALWARE, BENIGN)

    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=np.int64)
        for node in range(len(self.feature)):
            if self.feature[node] != _LEAF:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def to_dict(self) -> Dict[str, list]:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "votes": self.votes.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> "DecisionTree":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int64),
            threshold=np.asarray(data["threshold"], dtype=np.float64),
            left=np.asarray(data["left"], dtype=np.int64),
            right=np.asarray(data["right"], dtype=np.int64),
            votes=np.asarray(data["votes"], dtype=np.float64),
        )


def _bootstrap_indices(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # Resample within each class so every tree sees both labels.
    parts = [rng.choice(np.flatnonzero(y == c), size=int(np.sum(y == c)), replace=True)
             for c in (BENIGN, MALWARE)]
    return np.concatenate(parts)


def _grow_tree(X: np.ndarray, y: np.ndarray, params: RandomForestParams, seed: int, index: int) -> DecisionTree:
    rng = np.random.default_rng([seed, index])
    idx = _bootstrap_indices(y, rng) if params.bootstrap else np.arange(len(y))
    Xb, yb = X[idx], y[idx]
    clf = DecisionTreeClassifier(
        criterion=params.criterion,
        max_depth=params.max_depth,
        max_features=params.resolved_features(X.shape[1]),
        random_state=int(rng.integers(0, 2**31 - 1)),
    )
    clf.fit(Xb, yb)
    structure = clf.tree_
    is_leaf = structure.children_left == -1
    votes = np.zeros((structure.node_count, 2), dtype=np.float64)
    np.add.at(votes, (clf.apply(Xb), yb), 1.0)
    return DecisionTree(
        feature=np.where(is_leaf, _LEAF, structure.feature).astype(np.int64),
        threshold=np.where(is_leaf, 0.0, structure.threshold).astype(np.float64),
        left=np.where(is_leaf, _LEAF, structure.children_left).astype(np.int64),
        right=np.where(is_leaf, _LEAF, structure.children_right).astype(np.int64),
        votes=votes,
    )


@dataclass
class RandomForestModel:
    trees: List[DecisionTree]
    params: RandomForestParams
    n_features: int
    seed: int = 0

    kind = "random_forest"

    def tree_votes(self, X: np.ndarray) -> np.ndarray:
        """Malware votes per sample."""
        X = _check_width(X, self.n_features)
        return np.sum([tree.predict(X) for tree in self.trees], axis=0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        # A tied vote is resolved to malware.
        return np.where(2 * self.tree_votes(X) >= len(self.trees), MALWARE, BENIGN)

    def to_dict(self) -> Dict[str, Any]:
        params = self.params.model_dump()
        params["features_per_split"] = self.params.resolved_features(self.n_features)
        params.update(bootstrap_rate=1.0 if self.params.bootstrap else 0.0, tie_rule="malware")
        return {
            "kind": self.kind,
            "params": params,
            "n_features": self.n_features,
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], seed: int = 0) -> "RandomForestModel":
        fields = RandomForestParams.model_fields
        params = RandomForestParams(**{k: v for k, v in data["params"].items() if k in fields})
        return cls(
            trees=[DecisionTree.from_dict(t) for t in data["trees"]],
            params=params,
            n_features=int(data["n_features"]),
            seed=seed,
        )


def train_random_forest(
    d: LabeledDataset,
    params: Optional[RandomForestParams] = None,
    seed: int = 0,
    workers: int = 1
) -> RandomForestModel:
    """
    Grow a forest of Gini-split CART trees on bootstrap samples.

    Args:
        d: Training data with both classes present
        params: Forest configuration; defaults to 51 trees of depth 8
        seed: Each tree draws from its own stream derived from (seed, tree index)
        workers: Trees grown in parallel; results are identical for any worker count

    Returns:
        RandomForestModel

    Raises:
        DatasetError: If fewer than two samples or a single class is present
    """
    params = params or RandomForestParams()
    if len(d) < 2:
        raise DatasetError("Random forest needs at least two training samples")
    _require_both_classes(d)
    trees = Parallel(n_jobs=workers)(
        delayed(_grow_tree)(d.X, d.y, params, seed, i) for i in range(params.n_trees)
    )
    logger.info(f"Trained random forest: {params.n_trees} trees, max depth {params.max_depth}, "
                f"{len(d)} samples x {d.n_features} features")
    return RandomForestModel(trees=list(trees), params=params, n_features=d.n_features, seed=seed)


def rf_predict(m: RandomForestModel, x: np.ndarray) -> int:
    return int(m.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


# k-nearest neighbours

@dataclass
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int = 1

    kind = "knn"

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def predict_one(self, x: np.ndarray) -> int:
        distances = np.sqrt(np.sum((self.X - x) ** 2, axis=1))
        # Stable sort: equal distances keep the lower row index first.
        nearest = np.argsort(distances, kind="stable")[: self.k]
        malware_votes = int(np.sum(self.y[nearest] == MALWARE))
        return MALWARE if 2 * malware_votes >= len(nearest) else BENIGN

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = _check_width(X, self.n_features)
        return np.array([self.predict_one(x) for x in X], dtype=np.int64)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "params": {"k": self.k, "distance": "euclidean", "tie_rule": "lower-index, vote-malware"},
            "train_matrix": self.X.tolist(),
            "train_labels": self.y.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "KnnModel":
        return cls(
            X=np.asarray(data["train_matrix"], dtype=np.float64),
            y=np.asarray(data["train_labels"], dtype=np.int64),
            k=int(data["params"]["k"]),
        )


def train_knn(d: LabeledDataset, k: int = 1) -> KnnModel:
    if len(d) == 0:
        raise DatasetError("k-NN needs a non-empty training set")
    if len(d) < k:
        raise DatasetError(f"k-NN with k={k} needs at least {k} training samples")
    return KnnModel(X=d.X.copy(), y=d.y.copy(), k=k)


def knn_predict(train: LabeledDataset, x: np.ndarray, k: int = 1) -> int:
    model = train_knn(train, k)
    return int(model.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def _check_width(X: np.ndarray, width: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != width:
        raise ModelLayoutError(f"Expected {width} features per vector, got {X.shape[1]}")
    return X


# Metrics

@dataclass
class Metrics:
    precision: float = 0.0
    recall: float = 0.0
    f_measure: float = 0.0
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @staticmethod
    def f_from(precision: float, recall: float) -> float:
        return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0

    def as_dict(self) -> Dict[str, float]:
        return {
            "precision": self.precision, "recall": self.recall, "f_measure": self.f_measure,
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
        }


def compute_metrics(y_true: Sequence, y_pred: Sequence) -> Metrics:
    """
    Precision, recall and F-measure with malware as the positive class.

    Args:
        y_true: True labels (ints or `benign`/`malware`)
        y_pred: Predicted labels, same length

    Returns:
        Metrics; all zero for empty input
    """
    if len(y_true) != len(y_pred):
        raise DatasetError("y_true and y_pred differ in length")
    if len(y_true) == 0:
        return Metrics()
    truth = [label_to_int(v) for v in y_true]
    pred = [label_to_int(v) for v in y_pred]
    tn, fp, fn, tp = (int(v) for v in confusion_matrix(truth, pred, labels=[BENIGN, MALWARE]).ravel())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return Metrics(precision, recall, Metrics.f_from(precision, recall), tp, fp, fn, tn)


def average_metrics(parts: Sequence[Metrics]) -> Metrics:
    """Per-fold macro average of precision and recall; counts are summed."""
    if not parts:
        return Metrics()
    precision = float(np.mean([m.precision for m in parts]))
    recall = float(np.mean([m.recall for m in parts]))
    return Metrics(
        precision, recall, Metrics.f_from(precision, recall),
        sum(m.tp for m in parts), sum(m.fp for m in parts),
        sum(m.fn for m in parts), sum(m.tn for m in parts),
    )


# Classifier specs and persisted models

class ClassifierSpec(BaseModel):
    name: str = "rf-family"
    kind: Literal["random_forest", "knn"] = "random_forest"
    k: int = Field(1, ge=1)
    rf: RandomForestParams = Field(default_factory=RandomForestParams)

    @classmethod
    def from_name(cls, name: str, n_trees: Optional[int] = None, max_depth: Optional[int] = None,
                  features_per_split: Optional[int] = None) -> "ClassifierSpec":
        """Build a spec from `rf-family`, `rf-package`, `1nn` or `3nn` plus optional forest overrides."""
        overrides = {"n_trees": n_trees, "max_depth": max_depth, "features_per_split": features_per_split}
        if name in ("rf-family", "rf-package"):
            mode = name.split("-", 1)[1]
            return cls(name=name, kind="random_forest", rf=RandomForestParams.for_mode(mode, **overrides))
        if name in ("1nn", "3nn"):
            return cls(name=name, kind="knn", k=int(name[0]))
        raise ValueError(f"Unknown classifier: {name}")

    @classmethod
    def default_for_mode(cls, mode: str) -> "ClassifierSpec":
        return cls.from_name(f"rf-{mode}")


Classifier = Union[RandomForestModel, KnnModel]


def fit_classifier(d: LabeledDataset, spec: ClassifierSpec, seed: int = 0, workers: int = 1) -> Classifier:
    if spec.kind == "random_forest":
        return train_random_forest(d, spec.rf, seed=seed, workers=workers)
    return train_knn(d, spec.k)


@dataclass
class TrainedModel:
    classifier: Classifier
    mode: Optional[str] = None
    state_space: List[str] = field(default_factory=list)
    pca: Optional[PcaModel] = None
    seed: int = 0
    layout_version: int = LAYOUT_VERSION

    @property
    def input_width(self) -> int:
        if self.state_space:
            return len(self.state_space) ** 2
        return self.pca.n_features if self.pca is not None else self.classifier.n_features

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Labels for raw feature vectors; the PCA projection, if any, is applied here."""
        X = _check_width(X, self.input_width)
        if self.pca is not None:
            X = self.pca.transform(X)
        return self.classifier.predict(X)

    def check_layout(self, mode: str, states: Sequence[str]) -> None:
        """
        Refuse a model whose persisted abstraction differs from the current one.

        Raises:
            ModelLayoutError: If the mode or the state order disagrees
        """
        if self.mode is not None and self.mode != mode:
            raise ModelLayoutError(f"Model was trained in {self.mode} mode, not {mode}")
        if self.state_space and list(self.state_space) != list(states):
            mismatch = next((i for i, (a, b) in enumerate(zip(self.state_space, states)) if a != b),
                            min(len(self.state_space), len(states)))
            raise ModelLayoutError(f"Model state space differs from the catalog's at state {mismatch}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "layout_version": self.layout_version,
            "mode": self.mode,
            "state_space": list(self.state_space),
            "pca": self.pca.to_dict() if self.pca is not None else None,
            "classifier": self.classifier.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainedModel":
        version = data.get("layout_version")
        if version != LAYOUT_VERSION:
            raise ModelLayoutError(f"Unsupported model layout version: {version}")
        payload = data["classifier"]
        seed = int(data.get("seed", 0))
        if payload["kind"] == RandomForestModel.kind:
            classifier: Classifier = RandomForestModel.from_dict(payload, seed=seed)
        elif payload["kind"] == KnnModel.kind:
            classifier = KnnModel.from_dict(payload)
        else:
            raise ModelLayoutError(f"Unknown classifier kind: {payload['kind']}")
        return cls(
            classifier=classifier,
            mode=data.get("mode"),
            state_space=list(data.get("state_space") or []),
            pca=PcaModel.from_dict(data["pca"]) if data.get("pca") else None,
            seed=seed,
        )


def train_model(
    d: LabeledDataset,
    spec: ClassifierSpec,
    seed: int = 0,
    pca_components: Optional[int] = None,
    mode: Optional[str] = None,
    state_space: Optional[Sequence[str]] = None,
    workers: int = 1
) -> TrainedModel:
    """
    Fit the optional PCA projection and the classifier on one training set.

    Raises:
        DatasetError: For single-class or too-small training data
        ModelLayoutError: If the feature width disagrees with the state space
    """
    if state_space and d.n_features != len(state_space) ** 2:
        raise ModelLayoutError(
            f"Feature width {d.n_features} does not match a {len(state_space)}-state space")
    _require_both_classes(d)
    pca = fit_pca(d.X, pca_components) if pca_components else None
    train = d if pca is None else LabeledDataset(pca.transform(d.X), d.y, d.epoch, d.app_ids, d.name)
    return TrainedModel(
        classifier=fit_classifier(train, spec, seed=seed, workers=workers),
        mode=mode,
        state_space=list(state_space or []),
        pca=pca,
        seed=seed,
    )


def save_model(model: TrainedModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict(), sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Saved {model.classifier.kind} model to {path}")
    return path


def load_model(path: Union[str, Path]) -> TrainedModel:
    path = Path(path)
    if not path.is_file():
        raise ModelLayoutError(f"Model file not found: {path}")
    return TrainedModel.from_dict(json.loads(path.read_text(encoding="utf-8")))


# Evaluation harnesses

@dataclass
class CvResult:
    metrics: Metrics
    fold_metrics: List[Metrics]
    folds: List[Tuple[np.ndarray, np.ndarray]]


def kfold_indices(y: np.ndarray, folds: int = DEFAULT_FOLDS, seed: int = 0) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Shuffled, class-stratified (train, test) index pairs; test folds partition the index set."""
    y = np.asarray(y)
    if folds < 2:
        raise DatasetError("Cross-validation needs at least two folds")
    if len(y) < folds:
        raise DatasetError(f"{len(y)} samples cannot be split into {folds} folds")
    smallest = min(int(np.sum(y == BENIGN)), int(np.sum(y == MALWARE)))
    if smallest < folds:
        raise DatasetError(f"{folds} folds exceed the smallest class count ({smallest})")
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    return [(train, test) for train, test in splitter.split(np.zeros(len(y)), y)]


def evaluate_split(
    train: LabeledDataset,
    test: LabeledDataset,
    spec: ClassifierSpec,
    seed: int = 0,
    pca_components: Optional[int] = None,
    workers: int = 1
) -> Metrics:
    model = train_model(train, spec, seed=seed, pca_components=pca_components, workers=workers)
    return compute_metrics(test.y, model.predict(test.X))


def kfold_cv(
    d: LabeledDataset,
    folds: int = DEFAULT_FOLDS,
    spec: Optional[ClassifierSpec] = None,
    seed: int = 0,
    pca_components: Optional[int] = None,
    workers: int = 1
) -> CvResult:
    """
    Stratified k-fold cross-validation.

    Args:
        d: Labeled dataset
        folds: Number of folds (10 by default)
        spec: Classifier specification
        seed: Controls the shuffle and every model trained
        pca_components: Fit PCA on each training fold when set
        workers: Parallel workers for forest training

    Returns:
        CvResult with per-fold and averaged metrics
    """
    spec = spec or ClassifierSpec()
    splits = kfold_indices(d.y, folds, seed)
    fold_metrics = []
    for i, (train_idx, test_idx) in enumerate(splits):
        metrics = evaluate_split(d.subset(train_idx), d.subset(test_idx), spec, seed=seed,
                                 pca_components=pca_components, workers=workers)
        logger.debug(f"Fold {i + 1}/{folds}: F={metrics.f_measure:.4f}")
        fold_metrics.append(metrics)
    result = CvResult(average_metrics(fold_metrics), fold_metrics, splits)
    logger.info(f"{folds}-fold CV ({spec.name}): precision={result.metrics.precision:.4f} "
                f"recall={result.metrics.recall:.4f} F={result.metrics.f_measure:.4f}")
    return result


def holdout_split(d: LabeledDataset, seed: int = 0, test_fraction: float = 1 / 3) -> Tuple[LabeledDataset, LabeledDataset]:
    """Stratified train/test split (2/3 - 1/3 by default)."""
    _require_both_classes(d, "data to split")
    train_idx, test_idx = train_test_split(
        np.arange(len(d)), test_size=test_fraction, random_state=seed, stratify=d.y)
    train, test = d.subset(np.sort(train_idx)), d.subset(np.sort(test_idx))
    for part, what in ((train, "training split"), (test, "test split")):
        _require_both_classes(part, what)
    return train, test


@dataclass
class EvaluationRow:
    pipeline: str
    train_set: str
    test_set: str
    delta_epoch: int
    metrics: Metrics

    def as_record(self) -> Dict[str, Any]:
        return {
            "pipeline": self.pipeline,
            "train_set": self.train_set,
            "test_set": self.test_set,
            "delta_epoch": self.delta_epoch,
            "precision": self.metrics.precision,
            "recall": self.metrics.recall,
            "f_measure": self.metrics.f_measure,
        }


def epoch_delta(train_epochs: Sequence[int], test_epoch: int) -> int:
    """Signed distance from the training epochs; zero when the test epoch lies within them."""
    low, high = min(train_epochs), max(train_epochs)
    if test_epoch > high:
        return test_epoch - high
    if test_epoch < low:
        return test_epoch - low
    return 0


def temporal_eval(
    train: LabeledDataset,
    test_by_epoch: Sequence[LabeledDataset],
    spec: Optional[ClassifierSpec] = None,
    seed: int = 0,
    pca_components: Optional[int] = None,
    workers: int = 1,
    pipeline: str = "markov"
) -> List[EvaluationRow]:
    """
    Train once, then evaluate on each test set separately.

    Works in both directions: older training data against newer test sets,
    or newer training data against older ones (negative deltas).

    Raises:
        DatasetError: If a test set shares app ids with the training set
    """
    spec = spec or ClassifierSpec()
    train_ids = set(train.app_ids)
    for test in test_by_epoch:
        overlap = train_ids.intersection(test.app_ids)
        if overlap:
            raise DatasetError(f"Test set {test.name or '?'} shares {len(overlap)} app id(s) with "
                               f"the training set, e.g. {sorted(overlap)[0]}")

    model = train_model(train, spec, seed=seed, pca_components=pca_components, workers=workers)
    train_epochs = train.epochs()
    rows = []
    for test in test_by_epoch:
        metrics = compute_metrics(test.y, model.predict(test.X))
        deltas = {epoch_delta(train_epochs, e) for e in test.epochs()}
        delta = deltas.pop() if len(deltas) == 1 else int(round(np.mean(sorted(deltas))))
        rows.append(EvaluationRow(pipeline, train.name, test.name, delta, metrics))
        logger.info(f"Temporal {train.name} -> {test.name} (delta {delta:+d}): F={metrics.f_measure:.4f}")
    return rows


def metrics_frame(rows: Sequence[EvaluationRow]) -> pd.DataFrame:
    return pd.DataFrame(
        [row.as_record() for row in rows],
        columns=["pipeline", "train_set", "test_set", "delta_epoch", "precision", "recall", "f_measure"],
    )


def write_metrics_report(rows: Sequence[EvaluationRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metrics_frame(rows).to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
    logger.info(f"Wrote metrics report {path} ({len(rows)} rows)")
    return path
