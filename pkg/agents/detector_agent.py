# agents/detector_agent.py
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import json
import logging

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from tools.abstraction import PackageCatalog, load_catalog
from tools.baseline import baseline_evaluate, write_selected_features
from tools.callgraph import CallGraph, CallGraphParseError, TraversalPolicy, read_call_graph
from tools.characterization import characterize_corpus
from tools.datasets import GeneratorSpec, Manifest, generate_corpus, load_manifest, scenario_spec
from tools.featurize import featurize_file, featurize_graph
from tools.learn import (
    DEFAULT_FOLDS, ClassifierSpec, DatasetError, EvaluationRow, LabeledDataset, compute_metrics,
    holdout_split, int_to_label, kfold_cv, load_model, save_model, temporal_eval, train_model,
    write_metrics_report,
)
from tools.markov import feature_frame, write_feature_matrix
from utils.config import RunConfig
from utils.timing import StageTimer

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _featurize_entry(
    path: Path,
    app_id: str,
    catalog: PackageCatalog,
    mode: str,
    policy: TraversalPolicy
) -> Tuple[Optional[np.ndarray], Optional[str], StageTimer]:
    timer = StageTimer()
    try:
        vector = featurize_file(path, app_id, catalog, mode, policy, timer)
        return vector.values, None, timer
    except (OSError, UnicodeDecodeError, CallGraphParseError) as e:
        return None, str(e), timer


class DetectorAgent:
    def __init__(self, config: Optional[RunConfig] = None):
        """
        Initialize the detector with its catalog, traversal policy and classifier.

        Args:
            config: Run configuration; defaults are used when omitted
        """
        self.config = config or RunConfig()
        self.catalog = load_catalog(self.config.catalog)
        self.space = self.catalog.state_space(self.config.mode)
        self.policy = TraversalPolicy.parse(self.config.policy, self.config.max_depth)
        self.classifier = self._classifier_named(self.config.classifier)
        logger.info(f"Detector ready: mode={self.config.mode}, {len(self.space)} states, "
                    f"policy={self.policy}, classifier={self.classifier.name}")

    @property
    def out_dir(self) -> Path:
        out = Path(self.config.out)
        out.mkdir(parents=True, exist_ok=True)
        return out

    def _failure(self, action: str, e: Exception) -> Dict[str, Any]:
        logger.error(f"Error during {action}: {str(e)}")
        return {"success": False, "error": str(e)}

    # Feature extraction

    def _extract(self, manifest: Manifest, timer: StageTimer) -> Tuple[pd.DataFrame, pd.DataFrame]:
        """Feature rows in manifest order plus a skip report for unparsable apps."""
        jobs = [
            delayed(_featurize_entry)(manifest.resolve(e), e.app_id, self.catalog, self.config.mode, self.policy)
            for e in manifest.entries
        ]
        results = Parallel(n_jobs=self.config.workers)(jobs)

        vectors, labels, epochs, ids, skipped = [], [], [], [], []
        for entry, (values, error, app_timer) in zip(manifest.entries, results):
            timer.merge(app_timer)
            if values is None:
                logger.warning(f"Skipping {entry.app_id}: {error}")
                skipped.append({"app_id": entry.app_id, "label": entry.label, "epoch": entry.epoch, "reason": error})
                continue
            vectors.append(values)
            labels.append(entry.label)
            epochs.append(entry.epoch)
            ids.append(entry.app_id)

        width = self.space.feature_count
        matrix = np.vstack(vectors) if vectors else np.zeros((0, width))
        frame = pd.DataFrame(matrix, columns=self.space.feature_names())
        frame.insert(0, "epoch", epochs)
        frame.insert(0, "label", labels)
        frame.insert(0, "app_id", ids)
        skip_report = pd.DataFrame(skipped, columns=["app_id", "label", "epoch", "reason"])
        return frame, skip_report

    def featurize(self, manifest_path: PathLike) -> Dict[str, Any]:
        """
        Featurize every app of a manifest.

        Args:
            manifest_path: Manifest CSV

        Returns:
            Dict with the feature CSV path and row/skip counts
        """
        try:
            manifest = load_manifest(manifest_path)
            timer = StageTimer()
            frame, skip_report = self._extract(manifest, timer)
            if frame.empty and len(manifest):
                raise DatasetError(f"All {len(manifest)} apps failed to parse")

            out = self.out_dir
            features_path = write_feature_matrix(frame, out / "features.csv")
            skip_report.to_csv(out / "skipped.csv", index=False, lineterminator="\n")
            timer.write(out / "timing.csv")
            empty = int((~frame[self.space.feature_names()].to_numpy().any(axis=1)).sum())
            if empty:
                logger.warning(f"{empty} app(s) have no transitions and got all-zero feature rows")
            logger.info(f"Featurized {len(frame)} apps, skipped {len(skip_report)}")
            return {
                "success": True,
                "features": str(features_path),
                "rows": len(frame),
                "skipped": len(skip_report),
                "empty": empty,
                "error": None,
            }
        except (ValueError, OSError) as e:
            return self._failure("featurization", e)

    def _dataset(self, features_path: PathLike) -> LabeledDataset:
        d = LabeledDataset.from_feature_csv(features_path)
        if d.n_features != self.space.feature_count:
            raise DatasetError(f"{features_path} has {d.n_features} features; the {self.config.mode} "
                               f"space expects {self.space.feature_count}")
        return d

    # Training and inference

    def train(self, features_path: PathLike) -> Dict[str, Any]:
        """
        Train the configured classifier (with optional PCA) and persist it.

        Args:
            features_path: Feature CSV written by `featurize`

        Returns:
            Dict with the model path
        """
        try:
            d = self._dataset(features_path)
            timer = StageTimer()
            with timer.stage("classify"):
                model = train_model(
                    d, self.classifier, seed=self.config.seed, pca_components=self.config.pca,
                    mode=self.config.mode, state_space=self.space.states, workers=self.config.workers,
                )
            path = save_model(model, self.out_dir / "model.json")
            timer.write(self.out_dir / "timing.csv")
            return {"success": True, "model": str(path), "kind": model.classifier.kind, "error": None}
        except (ValueError, OSError) as e:
            return self._failure("training", e)

    def predict(self, model_path: PathLike, features_path: PathLike) -> Dict[str, Any]:
        """Label every row of a feature CSV with a persisted model; writes predictions.csv."""
        try:
            model = load_model(model_path)
            model.check_layout(self.config.mode, self.space.states)
            d = LabeledDataset.from_feature_csv(features_path)
            timer = StageTimer()
            with timer.stage("classify"):
                predictions = model.predict(d.X)
            frame = pd.DataFrame({
                "app_id": d.app_ids,
                "prediction": [int_to_label(p) for p in predictions],
            })
            path = self.out_dir / "predictions.csv"
            frame.to_csv(path, index=False, lineterminator="\n")
            timer.write(self.out_dir / "timing.csv")
            metrics = compute_metrics(d.y, predictions)
            logger.info(f"Predicted {len(frame)} apps; against recorded labels F={metrics.f_measure:.4f}")
            return {"success": True, "predictions": str(path), "metrics": metrics.as_dict(), "error": None}
        except (ValueError, OSError) as e:
            return self._failure("prediction", e)

    # Evaluation

    def evaluate_cv(
        self,
        features_path: PathLike,
        folds: int = DEFAULT_FOLDS,
        benign_epochs: Optional[Sequence[int]] = None,
        malware_epochs: Optional[Sequence[int]] = None,
        classifiers: Optional[Sequence[str]] = None
    ) -> Dict[str, Any]:
        """
        k-fold cross-validation.

        Without a grid it cross-validates the whole feature file with the
        configured classifier and writes the averaged row and one row per fold.
        When benign or malware epochs (or a classifier list) are given, it runs
        one cross-validation per benign epoch x malware epoch x classifier and
        writes one averaged row for each combination.

        Args:
            features_path: Feature CSV
            folds: Number of folds
            benign_epochs: Benign epochs to pair; every epoch in the file when omitted
            malware_epochs: Malware epochs to pair; every epoch in the file when omitted
            classifiers: Classifier names; the configured one when omitted

        Returns:
            Dict with averaged metrics (the first combination for a grid), the
            grid records when one was run, and the report path
        """
        try:
            d = self._dataset(features_path)
            timer = StageTimer()
            if benign_epochs is None and malware_epochs is None and classifiers is None:
                with timer.stage("classify"):
                    result = kfold_cv(d, folds, self.classifier, seed=self.config.seed,
                                      pca_components=self.config.pca, workers=self.config.workers)
                name = d.name or "dataset"
                rows = [EvaluationRow("markov", name, f"{folds}-fold", 0, result.metrics)]
                rows += [EvaluationRow("markov", name, f"fold-{i + 1}", 0, m) for i, m in enumerate(result.fold_metrics)]
                path = write_metrics_report(rows, self.out_dir / "metrics.csv")
                timer.write(self.out_dir / "timing.csv")
                return {"success": True, "metrics": result.metrics.as_dict(), "report": str(path), "error": None}

            specs = [self._classifier_named(n) for n in classifiers] if classifiers else [self.classifier]
            benign = d.select(labels=["benign"])
            malware = d.select(labels=["malware"])
            rows = []
            for b in (benign_epochs if benign_epochs is not None else benign.epochs()):
                for m in (malware_epochs if malware_epochs is not None else malware.epochs()):
                    combined = LabeledDataset.concat(
                        [benign.select(epochs=[b]), malware.select(epochs=[m])], name=f"benign-{b}+malware-{m}")
                    for spec in specs:
                        with timer.stage("classify"):
                            result = kfold_cv(combined, folds, spec, seed=self.config.seed,
                                              pca_components=self.config.pca, workers=self.config.workers)
                        logger.info(f"{spec.name} on {combined.name}: F={result.metrics.f_measure:.3f}")
                        rows.append(EvaluationRow(spec.name, combined.name, f"{folds}-fold", 0, result.metrics))
            if not rows:
                raise DatasetError("Cross-validation grid is empty")
            path = write_metrics_report(rows, self.out_dir / "metrics.csv")
            timer.write(self.out_dir / "timing.csv")
            return {
                "success": True,
                "metrics": rows[0].metrics.as_dict(),
                "rows": [r.as_record() for r in rows],
                "report": str(path),
                "error": None,
            }
        except (ValueError, OSError) as e:
            return self._failure("cross-validation", e)

    def _classifier_named(self, name: str) -> ClassifierSpec:
        return ClassifierSpec.from_name(
            name,
            n_trees=self.config.n_trees,
            max_depth=self.config.max_depth_trees,
            features_per_split=self.config.features_per_split,
        )

    def evaluate_temporal(
        self,
        features_path: PathLike,
        train_epochs: Optional[Sequence[int]] = None,
        test_epochs: Optional[Sequence[int]] = None,
        reverse: bool = False
    ) -> Dict[str, Any]:
        """
        Train on some epochs and test on each other epoch separately.

        The training epochs are split 2/3 - 1/3 so that the report also holds a
        delta-0 row. By default training uses the oldest epoch; with `reverse`
        it uses the newest and tests on older ones.

        Returns:
            Dict with one record per test set and the report path
        """
        try:
            d = self._dataset(features_path)
            epochs = d.epochs()
            if train_epochs is None:
                train_epochs = [epochs[-1] if reverse else epochs[0]]
            if test_epochs is None:
                test_epochs = [e for e in epochs if e not in train_epochs]
                test_epochs = sorted(test_epochs, reverse=reverse)
            label = "+".join(str(e) for e in train_epochs)
            train, holdout = holdout_split(d.select(epochs=train_epochs, name=f"epoch-{label}"), seed=self.config.seed)
            holdout.name = f"epoch-{label}-holdout"
            tests = [holdout] + [d.select(epochs=[e], name=f"epoch-{e}") for e in test_epochs]
            for t in tests:
                if not len(t):
                    raise DatasetError(f"Test set {t.name} is empty")

            timer = StageTimer()
            with timer.stage("classify"):
                rows = temporal_eval(train, tests, self.classifier, seed=self.config.seed,
                                     pca_components=self.config.pca, workers=self.config.workers)
            path = write_metrics_report(rows, self.out_dir / "metrics.csv")
            timer.write(self.out_dir / "timing.csv")
            return {"success": True, "rows": [r.as_record() for r in rows], "report": str(path), "error": None}
        except (ValueError, OSError) as e:
            return self._failure("temporal evaluation", e)

    def _load_graphs(self, manifest: Manifest, timer: StageTimer) -> List[Tuple[CallGraph, Any]]:
        corpus = []
        for entry in manifest.entries:
            try:
                with timer.stage("parse"):
                    graph = read_call_graph(manifest.resolve(entry), entry.app_id)
            except (OSError, CallGraphParseError) as e:
                logger.warning(f"Skipping {entry.app_id}: {e}")
                continue
            corpus.append((graph, entry))
        return corpus

    def evaluate_baseline(
        self,
        manifest_path: PathLike,
        train_epoch: Optional[int] = None,
        gap: int = 2,
        catalog_only: bool = True
    ) -> Dict[str, Any]:
        """
        Markov-chain classifier and frequency baseline on the same split, side by side.

        Args:
            manifest_path: Manifest CSV of the corpus
            train_epoch: Training epoch (oldest by default)
            gap: Test on epoch `train_epoch + gap`; 0 means a 2/3 - 1/3 split of the training epoch
            catalog_only: Restrict the baseline to calls into cataloged API packages

        Returns:
            Dict with both metric rows and the report path
        """
        try:
            manifest = load_manifest(manifest_path)
            timer = StageTimer()
            corpus = self._load_graphs(manifest, timer)
            if not corpus:
                raise DatasetError("No parsable apps in the corpus")
            epochs = sorted({entry.epoch for _, entry in corpus})
            train_epoch = epochs[0] if train_epoch is None else train_epoch
            test_epoch = train_epoch + gap

            vectors = [featurize_graph(g, self.catalog, self.config.mode, self.policy, timer) for g, _ in corpus]
            frame = feature_frame(vectors, [e.label for _, e in corpus], [e.epoch for _, e in corpus],
                                  width=self.space.feature_count)
            d = LabeledDataset.from_frame(frame)
            labeled = [(g, e.label) for g, e in corpus]
            in_train = [i for i, (_, e) in enumerate(corpus) if e.epoch == train_epoch]
            in_test = [i for i, (_, e) in enumerate(corpus) if e.epoch == test_epoch]
            if not in_train or (gap and not in_test):
                raise DatasetError(f"Epochs {train_epoch} and {test_epoch} must both be present (have {epochs})")

            with timer.stage("classify"):
                if gap:
                    train, test = d.subset(in_train), d.subset(in_test)
                    baseline = baseline_evaluate(
                        [labeled[i] for i in in_train], seed=self.config.seed,
                        test_corpus=[labeled[i] for i in in_test],
                        catalog=self.catalog if catalog_only else None)
                else:
                    train, test = holdout_split(d.subset(in_train), seed=self.config.seed)
                    baseline = baseline_evaluate(
                        [labeled[i] for i in in_train], seed=self.config.seed,
                        catalog=self.catalog if catalog_only else None)
                model = train_model(train, self.classifier, seed=self.config.seed,
                                    pca_components=self.config.pca, workers=self.config.workers)
                markov = compute_metrics(test.y, model.predict(test.X))

            train_name = f"epoch-{train_epoch}"
            test_name = f"epoch-{test_epoch}" if gap else f"epoch-{train_epoch}-holdout"
            rows = [
                EvaluationRow("markov", train_name, test_name, gap, markov),
                EvaluationRow("baseline", train_name, test_name, gap, baseline.metrics),
            ]
            path = write_metrics_report(rows, self.out_dir / "metrics.csv")
            write_selected_features(baseline.features, self.out_dir / "baseline_features.txt")
            timer.write(self.out_dir / "timing.csv")
            logger.info(f"Markov F={markov.f_measure:.4f} vs baseline F={baseline.metrics.f_measure:.4f}")
            return {
                "success": True,
                "markov": markov.as_dict(),
                "baseline": baseline.metrics.as_dict(),
                "report": str(path),
                "error": None,
            }
        except (ValueError, OSError) as e:
            return self._failure("baseline comparison", e)

    # Corpora

    def generate_synthetic(
        self,
        scenario: str = "separable",
        spec_file: Optional[PathLike] = None,
        **overrides: Any
    ) -> Dict[str, Any]:
        """
        Write a synthetic corpus into the output directory.

        Args:
            scenario: `separable`, `null` or `overlap` (ignored with `spec_file`)
            spec_file: JSON GeneratorSpec with explicit profiles
            overrides: GeneratorSpec fields such as apps_per_class, epochs or drift

        Returns:
            Dict with the manifest path and app count
        """
        try:
            settings = {k: v for k, v in overrides.items() if v is not None}
            if spec_file:
                data = json.loads(Path(spec_file).read_text(encoding="utf-8"))
                spec = GeneratorSpec.model_validate({**data, **settings})
            else:
                spec = scenario_spec(scenario, mode=self.config.mode, catalog=self.config.catalog,
                                     seed=self.config.seed, **settings)
            manifest = generate_corpus(spec, self.out_dir, workers=self.config.workers)
            return {
                "success": True,
                "manifest": str(self.out_dir / "manifest.csv"),
                "apps": len(manifest),
                "error": None,
            }
        except (ValueError, OSError) as e:
            return self._failure("synthetic generation", e)

    def characterize(self, manifest_path: PathLike) -> Dict[str, Any]:
        """Write unique-call counts, family fractions and a 2-component PCA scatter."""
        try:
            manifest = load_manifest(manifest_path)
            result = characterize_corpus(manifest, self.catalog, self.config.mode, self.policy, self.out_dir)
            return {"success": True, "apps": len(result.unique_calls), "out": str(self.out_dir), "error": None}
        except (ValueError, OSError) as e:
            return self._failure("characterization", e)

    def run(self, task: str, **options: Any) -> Dict[str, Any]:
        """
        Run one pipeline task by name.

        Args:
            task: featurize, train, predict, evaluate-cv, evaluate-temporal,
                evaluate-baseline, gen-synthetic or characterize
            options: Keyword arguments of the matching method

        Returns:
            Dict containing task results
        """
        handlers = {
            "featurize": self.featurize,
            "train": self.train,
            "predict": self.predict,
            "evaluate-cv": self.evaluate_cv,
            "evaluate-temporal": self.evaluate_temporal,
            "evaluate-baseline": self.evaluate_baseline,
            "gen-synthetic": self.generate_synthetic,
            "characterize": self.characterize,
        }
        if task not in handlers:
            logger.error(f"Unknown task type: {task}")
            return {"success": False, "error": f"Unknown task type: {task}"}
        logger.info(f"Executing {task} task")
        try:
            return handlers[task](**options)
        except TypeError as e:
            return self._failure(f"{task} task", e)


def create_detector_agent(config: Optional[RunConfig] = None) -> Optional[DetectorAgent]:
    """
    Create and return a configured detector agent.

    Returns:
        DetectorAgent instance or None if creation fails
    """
    try:
        return DetectorAgent(config)
    except (ValueError, OSError) as e:
        logger.error(f"Failed to create detector agent: {str(e)}")
        return None
