"""Principal component analysis for feature reduction and corpus characterization."""
from dataclasses import dataclass
from typing import Any, Dict
import logging

import numpy as np
from sklearn.decomposition import PCA

logger = logging.getLogger(__name__)

DEFAULT_COMPONENTS = 10


class PcaError(ValueError):
    """Raised for invalid component counts or dimension mismatches."""


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    degenerate: bool = False

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def n_features(self) -> int:
        return self.components.shape[1]

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Project one vector (length d) or a matrix (n x d) onto the components."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_features:
            raise PcaError(f"Expected vectors of length {self.n_features}, got {x.shape[-1]}")
        return (x - self.mean) @ self.components.T

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.n_components:
            raise PcaError(f"Expected {self.n_components} coordinates, got {z.shape[-1]}")
        return z @ self.components + self.mean

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PcaModel":
        return cls(
            mean=np.asarray(data["mean"], dtype=np.float64),
            components=np.asarray(data["components"], dtype=np.float64),
            explained_variance=np.asarray(data["explained_variance"], dtype=np.float64),
            explained_variance_ratio=np.asarray(data["explained_variance_ratio"], dtype=np.float64),
            degenerate=bool(data.get("degenerate", False)),
        )


def _orient(components: np.ndarray) -> np.ndarray:
    """Flip each component so that its largest-magnitude coefficient is positive."""
    pivots = np.abs(components).argmax(axis=1)
    signs = np.sign(components[np.arange(len(components)), pivots])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def fit_pca(X: np.ndarray, k: int = DEFAULT_COMPONENTS) -> PcaModel:
    """
    Fit a mean-centered PCA (no scaling or whitening).

    Args:
        X: n x d data matrix, n >= 2
        k: Number of components, 1 <= k <= min(n, d)

    Returns:
        PcaModel with deterministically oriented components

    Raises:
        PcaError: If n < 2 or k is out of range
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise PcaError("PCA needs a 2-D matrix with at least two rows")
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise PcaError(f"Component count {k} out of range [1, {min(n, d)}]")

    mean = X.mean(axis=0)
    total_variance = float(X.var(axis=0, ddof=1).sum())
    if total_variance <= 0.0:
        logger.warning("Zero-variance data: PCA components are arbitrary and flagged degenerate")
        return PcaModel(
            mean=mean,
            components=np.eye(k, d),
            explained_variance=np.zeros(k),
            explained_variance_ratio=np.zeros(k),
            degenerate=True,
        )

    pca = PCA(n_components=k, svd_solver="full")
    pca.fit(X)
    variance = np.asarray(pca.explained_variance_, dtype=np.float64)
    model = PcaModel(
        mean=mean,
        components=_orient(np.asarray(pca.components_, dtype=np.float64)),
        explained_variance=variance,
        explained_variance_ratio=np.clip(variance / total_variance, 0.0, 1.0),
    )
    logger.info(
        f"Fitted PCA with {k} components on {n}x{d} data "
        f"({model.explained_variance_ratio.sum():.1%} of variance)"
    )
    return model


def transform(p: PcaModel, x: np.ndarray) -> np.ndarray:
    return p.transform(x)
