"""Corpus characterization: unique-call counts, family call fractions and a 2-D PCA projection."""
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union
import logging

import numpy as np
import pandas as pd

from tools.abstraction import SPECIAL_STATES, PackageCatalog, family_of
from tools.callgraph import REACHABLE_EDGE, CallGraph, CallGraphParseError, TraversalPolicy, read_call_graph
from tools.datasets import Manifest
from tools.features import PcaModel, fit_pca
from tools.featurize import featurize_graph

logger = logging.getLogger(__name__)

SCATTER_COMPONENTS = 2


@dataclass
class Characterization:
    unique_calls: pd.DataFrame
    family_fractions: pd.DataFrame
    app_family_fractions: pd.DataFrame
    pca_scatter: pd.DataFrame
    pca: Optional[PcaModel] = None


def unique_callees(graph: CallGraph) -> int:
    """Number of distinct methods the app calls."""
    return len({callee for _, callee in graph.edges})


def family_call_counts(graph: CallGraph, catalog: PackageCatalog) -> Counter:
    """Calls per family (active or not), counted once per call site."""
    counts: Counter = Counter()
    for (_, callee), multiplicity in graph.edges.items():
        counts[family_of(callee, catalog)] += multiplicity
    return counts


def _family_fractions(
    graphs: List[CallGraph],
    rows: List[Dict],
    catalog: PackageCatalog
) -> pd.DataFrame:
    families = list(catalog.families) + list(SPECIAL_STATES)
    totals: Dict[tuple, Counter] = {}
    for graph, row in zip(graphs, rows):
        key = (row["label"], row["epoch"])
        totals.setdefault(key, Counter()).update(family_call_counts(graph, catalog))

    records = []
    for (label, epoch) in sorted(totals):
        counts = totals[(label, epoch)]
        calls = sum(counts.values())
        for family in families:
            records.append({
                "dataset": f"{label}-{epoch}",
                "label": label,
                "epoch": epoch,
                "family": family,
                "calls": counts[family],
                "fraction": counts[family] / calls if calls else 0.0,
            })
    return pd.DataFrame(records, columns=["dataset", "label", "epoch", "family", "calls", "fraction"])


def _app_family_fractions(
    graphs: List[CallGraph],
    rows: List[Dict],
    catalog: PackageCatalog
) -> pd.DataFrame:
    """One row per (app, family): the share of the app's calls landing in that family."""
    families = list(catalog.families) + list(SPECIAL_STATES)
    records = []
    for graph, row in zip(graphs, rows):
        counts = family_call_counts(graph, catalog)
        calls = sum(counts.values())
        for family in families:
            records.append({
                **row,
                "family": family,
                "calls": counts[family],
                "fraction": counts[family] / calls if calls else 0.0,
            })
    return pd.DataFrame(records, columns=["app_id", "label", "epoch", "family", "calls", "fraction"])


def characterize_corpus(
    manifest: Manifest,
    catalog: PackageCatalog,
    mode: str = "family",
    policy: TraversalPolicy = REACHABLE_EDGE,
    out_dir: Optional[Union[str, Path]] = None
) -> Characterization:
    """
    Describe a corpus the way a dataset section would.

    Args:
        manifest: Apps to characterize; unparsable ones are skipped with a warning
        catalog: Catalog for family lookup and feature extraction
        mode: Abstraction mode of the feature vectors projected onto two components
        policy: Traversal policy for feature extraction
        out_dir: When given, writes unique_calls.csv, family_fractions.csv (per label-epoch
            dataset), app_family_fractions.csv (per app) and pca_scatter.csv

    Returns:
        Characterization with the three tables
    """
    graphs, rows = [], []
    for entry in manifest.entries:
        try:
            graphs.append(read_call_graph(manifest.resolve(entry), entry.app_id))
        except (OSError, CallGraphParseError) as e:
            logger.warning(f"Skipping {entry.app_id} in characterization: {e}")
            continue
        rows.append({"app_id": entry.app_id, "label": entry.label, "epoch": entry.epoch})

    unique_calls = pd.DataFrame(
        [{**row, "unique_calls": unique_callees(g)} for g, row in zip(graphs, rows)],
        columns=["app_id", "label", "epoch", "unique_calls"],
    )
    fractions = _family_fractions(graphs, rows, catalog)
    app_fractions = _app_family_fractions(graphs, rows, catalog)

    scatter = pd.DataFrame(rows, columns=["app_id", "label", "epoch"])
    pca = None
    if len(graphs) >= SCATTER_COMPONENTS:
        X = np.vstack([featurize_graph(g, catalog, mode, policy).values for g in graphs])
        pca = fit_pca(X, SCATTER_COMPONENTS)
        coords = pca.transform(X)
        scatter["pc1"], scatter["pc2"] = coords[:, 0], coords[:, 1]
    else:
        logger.warning("Fewer than two parsable apps; PCA scatter left empty")
        scatter["pc1"], scatter["pc2"] = np.nan, np.nan

    result = Characterization(unique_calls, fractions, app_fractions, scatter, pca)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        unique_calls.to_csv(out / "unique_calls.csv", index=False, lineterminator="\n")
        fractions.to_csv(out / "family_fractions.csv", index=False, float_format="%.6f", lineterminator="\n")
        app_fractions.to_csv(out / "app_family_fractions.csv", index=False, float_format="%.6f", lineterminator="\n")
        scatter.to_csv(out / "pca_scatter.csv", index=False, float_format="%.9g", lineterminator="\n")
        logger.info(f"Wrote characterization of {len(graphs)} apps to {out}")
    return result
