# test_abstraction.py
from collections import Counter

import numpy as np
import pytest

from tools.abstraction import (
    OBFUSCATED, SELF_DEFINED, CatalogError, abstract, abstract_pairs, abstract_to_family,
    abstract_to_package, family_of, is_obfuscated, load_catalog,
)
from tools.callgraph import MethodRef, transition_multiset

GET_MESSAGE = MethodRef.parse("java.lang.Throwable: java.lang.String getMessage()")
LOG_D = MethodRef.parse("android.util.Log: int d(java.lang.String,java.lang.String)")
GET_SHELL = MethodRef.parse("com.stericson.RootTools.RootTools: void getShell()")
MANGLED = MethodRef("com.fa.a.b", "d", "void", "run")
DOCUMENT = MethodRef("org.w3c.dom", "Document", "org.w3c.dom.Element", "getDocumentElement")


def test_shipped_catalog_sizes(eval_catalog, full_catalog):
    assert len(eval_catalog.known_packages) == 339
    assert len(eval_catalog.state_space("package")) == 341
    assert len(eval_catalog.state_space("family")) == 8
    assert len(full_catalog.known_packages) == 340 - 2
    assert len(full_catalog.state_space("package")) == 340
    assert len(full_catalog.state_space("family")) == 11


def test_full_family_order(full_catalog):
    assert full_catalog.state_space("family").states == (
        "android", "google", "java", "javax", "xml", "apache", "junit", "json", "dom",
        SELF_DEFINED, OBFUSCATED,
    )


def test_single_package_catalog(write_catalog):
    c = load_catalog(write_catalog("family java active", "package java.lang java"))
    assert c.state_space("package").states == ("java.lang", SELF_DEFINED, OBFUSCATED)


def test_duplicate_package_is_rejected(write_catalog):
    path = write_catalog("family java active", "package java.lang java", "package java.lang java")
    with pytest.raises(CatalogError, match="duplicate package"):
        load_catalog(path)


def test_unknown_family_tag_is_rejected(write_catalog):
    with pytest.raises(CatalogError, match="unknown family"):
        load_catalog(write_catalog("family java active", "package kotlin.io kotlin"))


def test_missing_catalog_file(tmp_path):
    with pytest.raises(CatalogError):
        load_catalog(tmp_path / "nope.txt")


def test_mode_params_set_thresholds(write_catalog):
    c = load_catalog(write_catalog("@mode-params obfusc_class_len=3 obfusc_seg_len=1", "family java active"))
    assert c.thresholds.class_len == 3 and c.thresholds.segment_len == 1


def test_package_abstraction_examples(eval_catalog):
    assert abstract_to_package(GET_MESSAGE, eval_catalog) == "java.lang"
    assert abstract_to_package(LOG_D, eval_catalog) == "android.util"
    assert abstract_to_package(MANGLED, eval_catalog) == OBFUSCATED


def test_family_abstraction_examples(eval_catalog):
    assert abstract_to_family(GET_MESSAGE, eval_catalog) == "java"
    assert abstract_to_family(GET_SHELL, eval_catalog) == SELF_DEFINED
    assert abstract_to_family(DOCUMENT, eval_catalog) is None
    assert family_of(DOCUMENT, eval_catalog) == "dom"


def test_inactive_family_pairs_are_dropped_without_rejoining(eval_catalog):
    a = MethodRef("com.example.app", "Main", "void", "start")
    b = MethodRef("com.example.app", "Worker", "void", "finish")
    pairs = Counter({(a, DOCUMENT): 1, (DOCUMENT, b): 1, (a, GET_MESSAGE): 2})
    assert abstract_pairs(pairs, eval_catalog, "family") == Counter({(SELF_DEFINED, "java"): 2})


def test_obfuscation_heuristic():
    assert is_obfuscated(MANGLED)
    assert not is_obfuscated(MethodRef("com.fa.c", "RootCommandExecutor", "void", "Execute"))
    assert is_obfuscated(MethodRef("a.b", "Cd", "void", "x"))


def test_matching_is_segment_aligned(eval_catalog):
    spoof = MethodRef("java.language", "X", "void", "run")
    assert abstract_to_package(spoof, eval_catalog) == SELF_DEFINED
    nested = MethodRef("java.lang.reflect", "Method", "java.lang.Object", "invoke")
    assert abstract_to_package(nested, eval_catalog) == "java.lang.reflect"
    inner = MethodRef("java.lang", "Thread$State", "int", "ordinal")
    assert abstract_to_package(inner, eval_catalog) == "java.lang"


def test_split_android_entries(eval_catalog):
    resource = MethodRef("android", "R$string", "int", "hashCode")
    assert abstract_to_package(resource, eval_catalog) == "android.R"
    assert abstract_to_family(resource, eval_catalog) == "android"


def test_cataloged_packages_never_fall_to_special_states(eval_catalog):
    for package in eval_catalog.known_packages:
        m = MethodRef(package, "A", "void", "x")
        assert abstract_to_package(m, eval_catalog) == package
        assert abstract_to_package(MethodRef(package + ".sub", "Zz", "void", "x"), eval_catalog) not in (
            SELF_DEFINED, OBFUSCATED)


def test_abstraction_is_total(eval_catalog):
    rng = np.random.default_rng(2)
    segments = ["android", "java", "com", "a", "b", "io", "lang", "util", "x1"]
    for mode in ("family", "package"):
        space = eval_catalog.state_space(mode)
        for _ in range(300):
            package = ".".join(str(s) for s in rng.choice(segments, size=int(rng.integers(1, 4))))
            m = MethodRef(package, str(rng.choice(["A", "Ab", "Handler", "q"])), "void", "f")
            state = abstract(m, eval_catalog, mode)
            assert state is None or state in space


def test_running_example_family_pairs(running_example, eval_catalog):
    pairs = abstract_pairs(transition_multiset(running_example), eval_catalog, "family")
    assert pairs == Counter({
        (SELF_DEFINED, SELF_DEFINED): 2,
        (SELF_DEFINED, "android"): 1,
        (SELF_DEFINED, "java"): 1,
    })
