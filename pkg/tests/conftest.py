# conftest.py
import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest

from tools.abstraction import EVAL_CATALOG, FULL_CATALOG, load_catalog
from tools.callgraph import MethodRef, parse_call_graph
from tools.datasets import generate_corpus, scenario_spec

EXECUTE = "com.fa.c.RootCommandExecutor: void Execute()"
LOG_D = "android.util.Log: int d(java.lang.String,java.lang.String)"
GET_SHELL = "com.stericson.RootTools.RootTools: com.stericson.RootShell.execution.Shell getShell(boolean)"
GET_MESSAGE = "java.lang.Throwable: java.lang.String getMessage()"
ADD = "com.stericson.RootShell.execution.Shell: com.stericson.RootShell.execution.Command add(com.stericson.RootShell.execution.Command)"

RUNNING_EXAMPLE = "\n".join([
    "# try/catch block of RootCommandExecutor.Execute",
    f"{EXECUTE} -> {LOG_D}",
    f"{EXECUTE} -> {GET_SHELL}",
    f"{EXECUTE} -> {GET_MESSAGE}",
    f"{GET_SHELL} -> {ADD}",
    "",
])


@pytest.fixture
def running_example_text():
    return RUNNING_EXAMPLE


@pytest.fixture
def running_example():
    return parse_call_graph(RUNNING_EXAMPLE, "running-example")


@pytest.fixture
def execute():
    return MethodRef.parse(EXECUTE)


@pytest.fixture(scope="session")
def eval_catalog():
    return load_catalog(EVAL_CATALOG)


@pytest.fixture(scope="session")
def full_catalog():
    return load_catalog(FULL_CATALOG)


@pytest.fixture
def write_catalog(tmp_path):
    """Write catalog lines to a temporary file and return its path."""
    def _write(*lines, name="catalog.txt"):
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path
    return _write


@pytest.fixture(scope="session")
def separable_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("separable")
    spec = scenario_spec("separable", seed=3, apps_per_class=40, min_edges=40, max_edges=80)
    generate_corpus(spec, out)
    return out / "manifest.csv"
