# tools/__init__.py
from .callgraph import CallGraph, MethodRef, TraversalPolicy, parse_call_graph, transition_multiset
from .abstraction import PackageCatalog, load_catalog, abstract
from .markov import StateSpace, MarkovChain, build_chain, feature_vector
from .features import PcaModel, fit_pca
from .learn import LabeledDataset, ClassifierSpec, TrainedModel, kfold_cv, temporal_eval
from .baseline import baseline_evaluate
from .datasets import GeneratorSpec, Manifest, generate_corpus, load_manifest
from .characterization import characterize_corpus

__all__ = [
    'CallGraph', 'MethodRef', 'TraversalPolicy', 'parse_call_graph', 'transition_multiset',
    'PackageCatalog', 'load_catalog', 'abstract',
    'StateSpace', 'MarkovChain', 'build_chain', 'feature_vector',
    'PcaModel', 'fit_pca',
    'LabeledDataset', 'ClassifierSpec', 'TrainedModel', 'kfold_cv', 'temporal_eval',
    'baseline_evaluate',
    'GeneratorSpec', 'Manifest', 'generate_corpus', 'load_manifest',
    'characterize_corpus',
]
