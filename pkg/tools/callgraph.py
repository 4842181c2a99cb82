"""Call-graph ingestion: parse `.cg` files, find entry nodes, extract transitions."""
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Set, Tuple, Union
import logging
import re

import networkx as nx

logger = logging.getLogger(__name__)

EDGE_SEPARATOR = " -> "
DEFAULT_MAX_DEPTH = 64

_SIGNATURE_RE = re.compile(
    r"^(?P<qualified>[^\s:()]+): (?P<ret>[^\s()]+) (?P<name>[^\s(),]+)\((?P<params>[^\s()]*)\)$"
)
_FORBIDDEN_IN_PACKAGE = re.compile(r"[\s:()]")
_FORBIDDEN_IN_CLASS = re.compile(r"[\s.:()]")
_FORBIDDEN_IN_TYPE = re.compile(r"[\s()]")
_FORBIDDEN_IN_NAME = re.compile(r"[\s(),]")


class CallGraphParseError(ValueError):
    """Raised when a line of a call-graph file does not match the edge grammar."""

    def __init__(self, lineno: int, text: str, reason: str = "malformed edge"):
        self.lineno = lineno
        self.text = text
        self.reason = reason
        super().__init__(f"line {lineno}: {reason}: {text!r}")


@dataclass(frozen=True, order=True)
class MethodRef:
    """A fully qualified method signature, e.g. `java.lang.Throwable: String getMessage()`."""

    package: str
    class_name: str
    return_type: str
    method_name: str
    params: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        if not self.package or _FORBIDDEN_IN_PACKAGE.search(self.package):
            raise ValueError(f"Invalid package: {self.package!r}")
        if any(not segment for segment in self.package.split(".")):
            raise ValueError(f"Empty package segment in {self.package!r}")
        if not self.class_name or _FORBIDDEN_IN_CLASS.search(self.class_name):
            raise ValueError(f"Invalid class name: {self.class_name!r}")
        if not self.return_type or _FORBIDDEN_IN_TYPE.search(self.return_type):
            raise ValueError(f"Invalid return type: {self.return_type!r}")
        if not self.method_name or _FORBIDDEN_IN_NAME.search(self.method_name):
            raise ValueError(f"Invalid method name: {self.method_name!r}")
        for param in self.params:
            if not param or _FORBIDDEN_IN_NAME.search(param):
                raise ValueError(f"Invalid parameter type {param!r} in {self.method_name}")

    @property
    def qualified_class(self) -> str:
        return f"{self.package}.{self.class_name}"

    @property
    def api_call(self) -> str:
        """Class-qualified method name without return type or parameters."""
        return f"{self.qualified_class}: {self.method_name}"

    def render(self) -> str:
        return f"{self.qualified_class}: {self.return_type} {self.method_name}({','.join(self.params)})"

    def __str__(self) -> str:
        return self.render()

    @classmethod
    def parse(cls, text: str) -> "MethodRef":
        """
        Parse a rendered signature.

        Args:
            text: Signature of the form `<pkg>.<Class>: <ret> <method>(<t1>,<t2>)`

        Returns:
            MethodRef

        Raises:
            ValueError: If the text does not match the signature grammar
        """
        match = _SIGNATURE_RE.match(text)
        if not match:
            raise ValueError(f"Malformed signature: {text!r}")
        package, dot, class_name = match.group("qualified").rpartition(".")
        if not dot:
            raise ValueError(f"Signature has no package: {text!r}")
        params = match.group("params")
        return cls(
            package=package,
            class_name=class_name,
            return_type=match.group("ret"),
            method_name=match.group("name"),
            params=tuple(params.split(",")) if params else (),
        )


Edge = Tuple[MethodRef, MethodRef]


class CallGraph:
    """Directed multigraph of MethodRefs; parallel edges are distinct call sites."""

    def __init__(self, app_id: str, graph: Optional[nx.MultiDiGraph] = None):
        self.app_id = app_id
        self.graph = nx.freeze(graph if graph is not None else nx.MultiDiGraph())

    @classmethod
    def from_edges(
        cls,
        app_id: str,
        edges: Iterable[Edge],
        nodes: Iterable[MethodRef] = ()
    ) -> "CallGraph":
        graph = nx.MultiDiGraph()
        graph.add_nodes_from(nodes)
        graph.add_edges_from(edges)
        return cls(app_id, graph)

    @property
    def nodes(self) -> Set[MethodRef]:
        return set(self.graph.nodes)

    @property
    def edges(self) -> Counter:
        return Counter((u, v) for u, v, _ in self.graph.edges(keys=True))

    def multiplicity(self, caller: MethodRef, callee: MethodRef) -> int:
        return self.graph.number_of_edges(caller, callee)

    def __len__(self) -> int:
        return self.graph.number_of_nodes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CallGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __repr__(self) -> str:
        return (f"CallGraph(app_id={self.app_id!r}, nodes={self.graph.number_of_nodes()}, "
                f"edges={self.graph.number_of_edges()})")


def parse_call_graph(text: str, app_id: str) -> CallGraph:
    """
    Parse the line-oriented call-graph format into a CallGraph.

    Args:
        text: File content; one `caller -> callee` edge per line
        app_id: Identifier of the app the graph belongs to

    Returns:
        CallGraph whose nodes are exactly the signatures appearing on any line

    Raises:
        CallGraphParseError: On the first malformed line
    """
    edges: List[Edge] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(EDGE_SEPARATOR)
        if len(parts) != 2:
            raise CallGraphParseError(lineno, raw, f"expected exactly one {EDGE_SEPARATOR.strip()!r}")
        try:
            edges.append((MethodRef.parse(parts[0]), MethodRef.parse(parts[1])))
        except ValueError as e:
            raise CallGraphParseError(lineno, raw, str(e)) from e

    logger.debug(f"Parsed {len(edges)} edges for {app_id}")
    return CallGraph.from_edges(app_id, edges)


def read_call_graph(path: Union[str, Path], app_id: Optional[str] = None) -> CallGraph:
    path = Path(path)
    return parse_call_graph(path.read_text(encoding="utf-8"), app_id or path.stem)


def render_call_graph(g: CallGraph) -> str:
    """Render a graph back to the `.cg` format, one line per edge occurrence, sorted."""
    lines = sorted(
        f"{u.render()}{EDGE_SEPARATOR}{v.render()}"
        for u, v, _ in g.graph.edges(keys=True)
    )
    return "".join(line + "\n" for line in lines)


def entry_nodes(g: CallGraph) -> Set[MethodRef]:
    """
    Nodes no other code can call into.

    Every strongly connected component without incoming edges from outside
    contributes its nodes: a lone node of in-degree zero, or a whole cycle
    that nothing else calls. Every node is then reachable from some entry.
    """
    condensed = nx.condensation(g.graph)
    entries: Set[MethodRef] = set()
    for scc in condensed.nodes:
        if condensed.in_degree(scc) == 0:
            entries |= condensed.nodes[scc]["members"]
    return entries


@dataclass(frozen=True)
class TraversalPolicy:
    kind: str = "reachable-edge"
    max_depth: int = DEFAULT_MAX_DEPTH

    def __post_init__(self):
        if self.kind not in ("reachable-edge", "path-enum"):
            raise ValueError(f"Unknown traversal policy: {self.kind}")
        if self.max_depth < 1:
            raise ValueError("max_depth must be positive")

    @classmethod
    def parse(cls, text: str, max_depth: Optional[int] = None) -> "TraversalPolicy":
        """Accepts `reachable-edge`, `path-enum` or `path-enum:<depth>`."""
        kind, _, depth = text.strip().partition(":")
        if depth:
            return cls(kind, int(depth))
        return cls(kind, max_depth or DEFAULT_MAX_DEPTH)

    def __str__(self) -> str:
        return self.kind if self.kind == "reachable-edge" else f"{self.kind}:{self.max_depth}"


REACHABLE_EDGE = TraversalPolicy()


@dataclass
class TransitionMultiset:
    pairs: Counter = field(default_factory=Counter)
    policy: TraversalPolicy = REACHABLE_EDGE

    def total(self) -> int:
        return sum(self.pairs.values())

    def __len__(self) -> int:
        return self.total()


def transition_multiset(
    g: CallGraph,
    policy: TraversalPolicy = REACHABLE_EDGE
) -> TransitionMultiset:
    """
    Extract caller -> callee pairs from the graph.

    Args:
        g: Call graph
        policy: `reachable-edge` counts every edge reachable from an entry node
            once per multiplicity; `path-enum` counts every consecutive pair
            along every maximal simple path from an entry, capped at max_depth edges

    Returns:
        TransitionMultiset
    """
    entries = entry_nodes(g)
    if policy.kind == "reachable-edge":
        return TransitionMultiset(_reachable_pairs(g, entries), policy)
    return TransitionMultiset(_path_pairs(g, entries, policy.max_depth), policy)


def _reachable_pairs(g: CallGraph, entries: Set[MethodRef]) -> Counter:
    graph = g.graph
    reachable: Set[MethodRef] = set(entries)
    for entry in entries:
        if entry in reachable and graph.out_degree(entry):
            reachable |= nx.descendants(graph, entry)
    return Counter(
        (u, v) for u, v, _ in graph.edges(keys=True) if u in reachable
    )


def _path_pairs(g: CallGraph, entries: Set[MethodRef], max_depth: int) -> Counter:
    graph = g.graph
    pairs: Counter = Counter()
    # Parallel edges are distinct call sites, so a path weighs the product of multiplicities.
    successors: Dict[MethodRef, List[Tuple[MethodRef, int]]] = {
        node: [(succ, graph.number_of_edges(node, succ)) for succ in sorted(graph.successors(node))]
        for node in graph.nodes
    }
    for entry in sorted(entries):
        for path, weight in _maximal_paths(entry, successors, max_depth):
            for pair in zip(path, path[1:]):
                pairs[pair] += weight
    return pairs


def _maximal_paths(
    entry: MethodRef,
    successors: Dict[MethodRef, List[Tuple[MethodRef, int]]],
    max_depth: int
) -> Iterator[Tuple[List[MethodRef], int]]:
    stack = [(entry, [entry], 1)]
    while stack:
        node, path, weight = stack.pop()
        if len(path) - 1 < max_depth:
            onward = [(succ, m) for succ, m in successors[node] if succ not in path]
        else:
            onward = []
        if not onward:
            yield path, weight
            continue
        for succ, multiplicity in reversed(onward):
            stack.append((succ, path + [succ], weight * multiplicity))
