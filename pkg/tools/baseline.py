"""Frequency-analysis baseline: presence of the most malware-frequent API calls, classified with 3-NN."""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
from sklearn.model_selection import train_test_split

from tools.abstraction import PackageCatalog
from tools.callgraph import CallGraph
from tools.learn import BENIGN, MALWARE, LabeledDataset, Metrics, compute_metrics, label_to_int, train_knn

logger = logging.getLogger(__name__)

MIN_GAP = 0.06
TOP_N = 169
BASELINE_K = 3
_GAP_TOLERANCE = 1e-12

LabeledGraph = Tuple[CallGraph, Union[str, int]]


class BaselineError(ValueError):
    """Raised for corpora or splits the baseline cannot evaluate."""


@dataclass
class FrequencyTable:
    """Per raw API call: fraction of malware apps and of benign apps containing it."""

    malware: Dict[str, float] = field(default_factory=dict)
    benign: Dict[str, float] = field(default_factory=dict)
    n_malware: int = 0
    n_benign: int = 0

    def __contains__(self, call: str) -> bool:
        return call in self.malware

    def __len__(self) -> int:
        return len(self.malware)

    def fractions(self, call: str) -> Tuple[float, float]:
        return self.malware[call], self.benign[call]


def app_calls(graph: CallGraph, catalog: Optional[PackageCatalog] = None) -> set:
    """Distinct raw API calls made by an app, optionally restricted to cataloged APIs."""
    calls = set()
    for node in graph.nodes:
        if catalog is None or catalog.match(node) is not None:
            calls.add(node.api_call)
    return calls


def build_frequency_table(
    apps: Sequence[LabeledGraph],
    catalog: Optional[PackageCatalog] = None
) -> FrequencyTable:
    """
    Presence fractions per call and class.

    Args:
        apps: (CallGraph, label) pairs
        catalog: When given, only calls into cataloged API packages are counted

    Returns:
        FrequencyTable holding every call present in at least one app

    Raises:
        BaselineError: If either class is empty
    """
    presence = {MALWARE: {}, BENIGN: {}}
    totals = {MALWARE: 0, BENIGN: 0}
    for graph, label in apps:
        cls = label_to_int(label)
        totals[cls] += 1
        for call in app_calls(graph, catalog):
            presence[cls][call] = presence[cls].get(call, 0) + 1
    if not totals[MALWARE] or not totals[BENIGN]:
        raise BaselineError(f"Both classes are required (malware={totals[MALWARE]}, benign={totals[BENIGN]})")

    calls = sorted(set(presence[MALWARE]) | set(presence[BENIGN]))
    return FrequencyTable(
        malware={c: presence[MALWARE].get(c, 0) / totals[MALWARE] for c in calls},
        benign={c: presence[BENIGN].get(c, 0) / totals[BENIGN] for c in calls},
        n_malware=totals[MALWARE],
        n_benign=totals[BENIGN],
    )


def select_features(t: FrequencyTable, min_gap: float = MIN_GAP, top_n: int = TOP_N) -> List[str]:
    """Calls at least `min_gap` more frequent in malware, ranked by malware frequency, then name."""
    passing = [
        call for call in t.malware
        if t.malware[call] - t.benign[call] >= min_gap - _GAP_TOLERANCE
    ]
    passing.sort(key=lambda call: (-t.malware[call], call))
    return passing[:top_n]


def presence_matrix(
    apps: Sequence[LabeledGraph],
    features: Sequence[str],
    catalog: Optional[PackageCatalog] = None
) -> LabeledDataset:
    column = {call: i for i, call in enumerate(features)}
    X = np.zeros((len(apps), len(features)), dtype=np.float64)
    for row, (graph, _) in enumerate(apps):
        for call in app_calls(graph, catalog):
            if call in column:
                X[row, column[call]] = 1.0
    return LabeledDataset(
        X=X,
        y=[label for _, label in apps],
        epoch=np.zeros(len(apps), dtype=np.int64),
        app_ids=[graph.app_id for graph, _ in apps],
    )


@dataclass
class BaselineResult:
    metrics: Metrics
    features: List[str]
    train_ids: List[str]
    test_ids: List[str]


def baseline_evaluate(
    corpus: Sequence[LabeledGraph],
    seed: int = 0,
    test_corpus: Optional[Sequence[LabeledGraph]] = None,
    catalog: Optional[PackageCatalog] = None,
    min_gap: float = MIN_GAP,
    top_n: int = TOP_N
) -> BaselineResult:
    """
    Train and test the frequency baseline.

    Args:
        corpus: Labeled call graphs; split 2/3 - 1/3 (stratified, seeded) unless
            `test_corpus` supplies the held-out apps
        seed: Controls the split
        test_corpus: Explicit held-out apps, e.g. a newer epoch
        catalog: Restricts counted calls to cataloged API packages

    Returns:
        BaselineResult with held-out metrics and the selected calls

    Raises:
        BaselineError: If a split lacks one of the classes
    """
    if test_corpus is None:
        labels = [label_to_int(label) for _, label in corpus]
        if len(set(labels)) < 2:
            raise BaselineError("Baseline corpus must contain both classes")
        train_idx, test_idx = train_test_split(
            np.arange(len(corpus)), test_size=1 / 3, random_state=seed, stratify=labels)
        train = [corpus[i] for i in sorted(train_idx)]
        test = [corpus[i] for i in sorted(test_idx)]
    else:
        train, test = list(corpus), list(test_corpus)
    for part, what in ((train, "training"), (test, "test")):
        if len({label_to_int(label) for _, label in part}) < 2:
            raise BaselineError(f"Degenerate {what} split: both classes are required")

    # Feature selection sees the training apps only.
    features = select_features(build_frequency_table(train, catalog), min_gap, top_n)
    if not features:
        logger.warning("No call passes the frequency gap; baseline vectors are all zero")
    train_set = presence_matrix(train, features, catalog)
    test_set = presence_matrix(test, features, catalog)
    model = train_knn(train_set, BASELINE_K)
    metrics = compute_metrics(test_set.y, model.predict(test_set.X))
    logger.info(f"Frequency baseline: {len(features)} calls selected, F={metrics.f_measure:.4f}")
    return BaselineResult(metrics, features, train_set.app_ids, test_set.app_ids)


def write_selected_features(features: Sequence[str], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{call}\n" for call in features), encoding="utf-8")
    return path
