# test_callgraph.py
from collections import Counter, deque

import numpy as np
import pytest

from tools.callgraph import (
    CallGraph, CallGraphParseError, MethodRef, TraversalPolicy, entry_nodes, parse_call_graph,
    render_call_graph, transition_multiset,
)


def node(name: str) -> MethodRef:
    return MethodRef("com.example.app", name.capitalize() + "Thing", "void", name)


def random_ref(rng: np.random.Generator) -> MethodRef:
    words = ["alpha", "beta", "gamma", "delta", "omega"]
    package = ".".join(str(w) for w in rng.choice(words, size=int(rng.integers(1, 4))))
    params = tuple(str(t) for t in rng.choice(["int", "java.lang.String", "boolean"], size=int(rng.integers(0, 3))))
    return MethodRef(package, f"Cls{int(rng.integers(100))}", "void", f"m{int(rng.integers(100))}", params)


def test_running_example_graph(running_example):
    assert len(running_example.nodes) == 5
    assert sum(running_example.edges.values()) == 4


def test_empty_text_gives_empty_graph():
    g = parse_call_graph("", "empty")
    assert len(g) == 0
    assert not g.edges


def test_render_then_parse_is_identity():
    rng = np.random.default_rng(11)
    edges = [(random_ref(rng), random_ref(rng)) for _ in range(10)]
    g = CallGraph.from_edges("random", edges)
    assert parse_call_graph(render_call_graph(g), "random") == g


def test_duplicate_lines_increase_multiplicity():
    line = "a.B: void x() -> c.D: int y(int)"
    g = parse_call_graph(f"{line}\n{line}\n", "dup")
    caller, callee = MethodRef.parse("a.B: void x()"), MethodRef.parse("c.D: int y(int)")
    assert g.multiplicity(caller, callee) == 2
    assert len(g) == 2


def test_malformed_line_reports_line_number():
    text = "a.B: void x() -> c.D: void y()\n\na.B: void x() => c.D: void y()\n"
    with pytest.raises(CallGraphParseError) as excinfo:
        parse_call_graph(text, "bad")
    assert excinfo.value.lineno == 3
    assert "=>" in excinfo.value.text


def test_signature_without_package_is_rejected():
    with pytest.raises(CallGraphParseError):
        parse_call_graph("Thing: void x() -> a.B: void y()", "bad")


def test_method_ref_validates_package():
    with pytest.raises(ValueError):
        MethodRef("java..lang", "Object", "void", "wait")
    with pytest.raises(ValueError):
        MethodRef("java lang", "Object", "void", "wait")


@pytest.mark.parametrize("fields", [
    ("java.lang", "Thread.State", "void", "run", ()),
    ("java.lang", "Thread State", "void", "run", ()),
    ("java.lang", "Thread:", "void", "run", ()),
    ("java.lang", "Object", "", "wait", ()),
    ("java.lang", "Object", "java lang", "wait", ()),
    ("java.lang", "Object", "void", "", ()),
    ("java.lang", "Object", "void", "wait(", ()),
    ("java.lang", "Object", "void", "wait", ("",)),
    ("java.lang", "Object", "void", "wait", ("long", "int,int")),
])
def test_method_ref_rejects_unrenderable_fields(fields):
    with pytest.raises(ValueError):
        MethodRef(*fields)


def test_constructed_refs_survive_rendering():
    rng = np.random.default_rng(23)
    for _ in range(200):
        m = random_ref(rng)
        assert MethodRef.parse(m.render()) == m


def test_empty_parameter_in_file_is_a_parse_error():
    with pytest.raises(CallGraphParseError):
        parse_call_graph("a.B: void x(int,,int) -> c.D: void y()", "bad")


def test_method_ref_render_round_trip():
    m = MethodRef("java.lang", "Throwable", "java.lang.String", "getMessage")
    assert m.render() == "java.lang.Throwable: java.lang.String getMessage()"
    assert MethodRef.parse(m.render()) == m
    assert m.api_call == "java.lang.Throwable: getMessage"


def test_entry_node_of_running_example(running_example, execute):
    assert entry_nodes(running_example) == {execute}


def test_isolated_node_is_an_entry():
    a = node("a")
    assert entry_nodes(CallGraph.from_edges("one", [], nodes=[a])) == {a}


def test_fully_cyclic_component_falls_back_to_all_nodes():
    a, b = node("a"), node("b")
    assert entry_nodes(CallGraph.from_edges("cycle", [(a, b), (b, a)])) == {a, b}


def test_cycle_feeding_a_rooted_component_is_an_entry():
    a, b, c, d = node("a"), node("b"), node("c"), node("d")
    g = CallGraph.from_edges("feeder", [(a, b), (c, d), (d, c), (d, b)])
    assert entry_nodes(g) == {a, c, d}
    pairs = transition_multiset(g).pairs
    assert pairs == Counter({(a, b): 1, (c, d): 1, (d, c): 1, (d, b): 1})


def test_every_edge_is_reachable_from_some_entry():
    rng = np.random.default_rng(5)
    refs = [node(f"n{i}") for i in range(12)]
    for trial in range(50):
        edges = [(refs[int(u)], refs[int(v)]) for u, v in rng.integers(0, 12, size=(20, 2))]
        g = CallGraph.from_edges(f"random{trial}", edges)
        reachable = brute_force_reachable(g, entry_nodes(g))
        assert reachable == set(g.graph.nodes)
        assert transition_multiset(g).total() == len(edges)


def test_reachable_edges_of_running_example(running_example):
    pairs = transition_multiset(running_example).pairs
    assert len(pairs) == 4
    assert set(pairs.values()) == {1}


def brute_force_reachable(g: CallGraph, sources) -> set:
    seen, queue = set(sources), deque(sources)
    while queue:
        current = queue.popleft()
        for _, succ in g.graph.out_edges(current):
            if succ not in seen:
                seen.add(succ)
                queue.append(succ)
    return seen


def test_cyclic_component_contributes_through_fallback():
    a, b, x, y = node("a"), node("b"), node("x"), node("y")
    g = CallGraph.from_edges("mixed", [(a, b), (x, y), (y, x)])
    pairs = transition_multiset(g).pairs
    reachable = brute_force_reachable(g, entry_nodes(g))
    expected = Counter((u, v) for u, v, _ in g.graph.edges(keys=True) if u in reachable)
    assert pairs == expected
    assert pairs[(x, y)] == 1 and pairs[(y, x)] == 1


def test_path_enum_on_a_chain():
    a, b, c = node("a"), node("b"), node("c")
    g = CallGraph.from_edges("chain", [(a, b), (b, c)])
    pairs = transition_multiset(g, TraversalPolicy("path-enum", 10)).pairs
    assert pairs == Counter({(a, b): 1, (b, c): 1})


def test_path_enum_respects_depth_cap():
    chain = [node(n) for n in "abcdef"]
    g = CallGraph.from_edges("long", list(zip(chain, chain[1:])))
    pairs = transition_multiset(g, TraversalPolicy("path-enum", 2)).pairs
    assert pairs == Counter({(chain[0], chain[1]): 1, (chain[1], chain[2]): 1})


def test_path_enum_never_revisits_a_node():
    a, b = node("a"), node("b")
    entry = node("entry")
    g = CallGraph.from_edges("loop", [(entry, a), (a, b), (b, a)])
    pairs = transition_multiset(g, TraversalPolicy("path-enum", 64)).pairs
    assert pairs == Counter({(entry, a): 1, (a, b): 1})


def test_policies_agree_on_edge_disjoint_acyclic_graphs():
    rng = np.random.default_rng(5)
    for trial in range(30):
        names = [node(f"n{trial}x{i}") for i in range(int(rng.integers(2, 9)))]
        edges, start = [], 0
        while start < len(names) - 1:
            length = int(rng.integers(1, len(names) - start))
            chain = names[start:start + length + 1]
            edges += list(zip(chain, chain[1:]))
            start += length + 1
        g = CallGraph.from_edges(f"chains-{trial}", edges, nodes=names)
        reachable = transition_multiset(g).pairs
        enumerated = transition_multiset(g, TraversalPolicy("path-enum", 64)).pairs
        assert reachable == enumerated


def test_reachable_size_bounded_by_total_multiplicity():
    rng = np.random.default_rng(9)
    names = [node(f"r{i}") for i in range(12)]
    edges = [(names[int(rng.integers(12))], names[int(rng.integers(12))]) for _ in range(40)]
    g = CallGraph.from_edges("random", edges)
    assert transition_multiset(g).total() <= sum(g.edges.values())


def test_traversal_policy_parse():
    policy = TraversalPolicy.parse("path-enum:32")
    assert policy.kind == "path-enum" and policy.max_depth == 32
    assert str(policy) == "path-enum:32"
    assert str(TraversalPolicy.parse("reachable-edge")) == "reachable-edge"
    with pytest.raises(ValueError):
        TraversalPolicy.parse("bfs")
