"""Per-app Markov chains over abstract states and their flattened feature vectors."""
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union
import logging

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FEATURE_FORMAT = "%.9g"


class ChainError(ValueError):
    """Raised when a transition names a state outside the active state space."""


@dataclass(frozen=True)
class StateSpace:
    """Ordered abstract states; the order is the feature-layout contract."""

    states: Tuple[str, ...]
    mode: str
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.states)) != len(self.states):
            raise ValueError("Duplicate states in state space")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.states)})

    def __len__(self) -> int:
        return len(self.states)

    def __contains__(self, state: object) -> bool:
        return state in self._index

    def index(self, state: str) -> int:
        try:
            return self._index[state]
        except KeyError:
            raise ChainError(f"State {state!r} is not in the {self.mode} state space") from None

    @property
    def feature_count(self) -> int:
        return len(self.states) ** 2

    def feature_names(self) -> list:
        return [f"f{i}" for i in range(self.feature_count)]


@dataclass
class MarkovChain:
    counts: np.ndarray
    probs: np.ndarray
    space: StateSpace

    def row(self, state: str) -> Dict[str, float]:
        """Nonzero outgoing probabilities of one state."""
        values = self.probs[self.space.index(state)]
        return {self.space.states[k]: float(p) for k, p in enumerate(values) if p > 0}


@dataclass
class FeatureVector:
    values: np.ndarray
    app_id: str = ""

    def __len__(self) -> int:
        return len(self.values)


def build_chain(pairs: Union[Counter, Mapping[Tuple[str, str], int]], s: StateSpace) -> MarkovChain:
    """
    Tally state transitions and normalize each row.

    Args:
        pairs: Multiset of (source state, target state) with multiplicities
        s: Active state space

    Returns:
        MarkovChain whose nonzero rows sum to 1; unobserved source rows stay zero

    Raises:
        ChainError: If a pair names a state outside `s`
    """
    n = len(s)
    counts = np.zeros((n, n), dtype=np.float64)
    for (source, target), count in pairs.items():
        counts[s.index(source), s.index(target)] += count

    row_sums = counts.sum(axis=1, keepdims=True)
    probs = np.divide(counts, row_sums, out=np.zeros_like(counts), where=row_sums != 0)
    return MarkovChain(counts=counts, probs=probs, space=s)


def feature_vector(m: MarkovChain, s: StateSpace, app_id: str = "") -> FeatureVector:
    """Row-major (source-state major) flattening of the transition probabilities."""
    if m.space.states != s.states:
        raise ChainError("Markov chain was built over a different state space")
    return FeatureVector(values=m.probs.reshape(-1).copy(), app_id=app_id)


def unflatten(vector: Union[FeatureVector, np.ndarray], s: StateSpace) -> np.ndarray:
    values = vector.values if isinstance(vector, FeatureVector) else np.asarray(vector)
    if values.shape != (s.feature_count,):
        raise ChainError(f"Expected {s.feature_count} features, got {values.shape}")
    return values.reshape(len(s), len(s))


def feature_frame(
    vectors: Sequence[FeatureVector],
    labels: Sequence[str],
    epochs: Sequence[int],
    width: Optional[int] = None
) -> pd.DataFrame:
    """Feature matrix with columns `app_id,label,epoch,f0..f{n-1}`."""
    if width is None:
        width = len(vectors[0]) if vectors else 0
    matrix = np.vstack([v.values for v in vectors]) if vectors else np.zeros((0, width))
    frame = pd.DataFrame(matrix, columns=[f"f{i}" for i in range(width)])
    frame.insert(0, "epoch", list(epochs))
    frame.insert(0, "label", list(labels))
    frame.insert(0, "app_id", [v.app_id for v in vectors])
    return frame


def write_feature_matrix(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FEATURE_FORMAT, lineterminator="\n")
    logger.info(f"Wrote feature matrix {path} ({len(frame)} rows)")
    return path
