"""One app through the pipeline: parse -> transitions -> abstraction -> Markov chain -> features."""
from pathlib import Path
from typing import Optional, Union
import logging

from tools.abstraction import PackageCatalog, abstract_pairs
from tools.callgraph import REACHABLE_EDGE, CallGraph, TraversalPolicy, read_call_graph, transition_multiset
from tools.markov import FeatureVector, MarkovChain, build_chain, feature_vector
from utils.timing import StageTimer

logger = logging.getLogger(__name__)


def chain_for_graph(
    graph: CallGraph,
    catalog: PackageCatalog,
    mode: str,
    policy: TraversalPolicy = REACHABLE_EDGE,
    timer: Optional[StageTimer] = None
) -> MarkovChain:
    timer = timer or StageTimer()
    space = catalog.state_space(mode)
    with timer.stage("abstract"):
        transitions = transition_multiset(graph, policy)
        pairs = abstract_pairs(transitions, catalog, mode)
    with timer.stage("markov"):
        return build_chain(pairs, space)


def featurize_graph(
    graph: CallGraph,
    catalog: PackageCatalog,
    mode: str,
    policy: TraversalPolicy = REACHABLE_EDGE,
    timer: Optional[StageTimer] = None
) -> FeatureVector:
    """
    Feature vector of one app's call graph.

    Args:
        graph: Parsed call graph
        catalog: Catalog defining the state space
        mode: `family` or `package`
        policy: Traversal policy for sequence extraction
        timer: Optional stage timer receiving abstract/markov timings

    Returns:
        FeatureVector of length |S|^2
    """
    chain = chain_for_graph(graph, catalog, mode, policy, timer)
    if not chain.counts.any():
        logger.warning(f"App {graph.app_id} has no transitions; emitting an all-zero feature row")
    return feature_vector(chain, chain.space, app_id=graph.app_id)


def featurize_file(
    path: Union[str, Path],
    app_id: str,
    catalog: PackageCatalog,
    mode: str,
    policy: TraversalPolicy = REACHABLE_EDGE,
    timer: Optional[StageTimer] = None
) -> FeatureVector:
    timer = timer or StageTimer()
    with timer.stage("parse"):
        graph = read_call_graph(path, app_id)
    return featurize_graph(graph, catalog, mode, policy, timer)
