"""Abstraction of raw method signatures to family or package states."""
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union
import logging
import re

from tools.callgraph import MethodRef, TransitionMultiset
from tools.markov import StateSpace

logger = logging.getLogger(__name__)

SELF_DEFINED = "self-defined"
OBFUSCATED = "obfuscated"
SPECIAL_STATES = (SELF_DEFINED, OBFUSCATED)
MODES = ("family", "package")

DEFAULT_CATALOG_DIR = Path(__file__).resolve().parent.parent / "data"
FULL_CATALOG = DEFAULT_CATALOG_DIR / "catalog_full.txt"
EVAL_CATALOG = DEFAULT_CATALOG_DIR / "catalog_eval.txt"

AbstractState = str

_SEGMENT_BOUNDARY = re.compile(r"[.$]")


class CatalogError(ValueError):
    """Raised for malformed or inconsistent catalog files."""


@dataclass(frozen=True)
class ObfuscationThresholds:
    class_len: int = 2
    segment_len: int = 2


@dataclass
class PackageCatalog:
    """
    Recognized API packages with their owning families.

    Package order and family order are the feature-layout contract: state
    spaces list catalog entries in file order, then the two special states.
    """

    packages: Dict[str, str] = field(default_factory=dict)
    families: Dict[str, bool] = field(default_factory=dict)
    thresholds: ObfuscationThresholds = field(default_factory=ObfuscationThresholds)
    source: Optional[str] = None

    @property
    def known_packages(self) -> List[str]:
        return list(self.packages)

    @property
    def family_set(self) -> List[str]:
        """Active family names in catalog order."""
        return [name for name, active in self.families.items() if active]

    def state_space(self, mode: str) -> StateSpace:
        if mode == "family":
            return StateSpace(tuple(self.family_set) + SPECIAL_STATES, mode)
        if mode == "package":
            return StateSpace(tuple(self.packages) + SPECIAL_STATES, mode)
        raise ValueError(f"Unknown mode: {mode}")

    def match(self, m: MethodRef) -> Optional[str]:
        """
        Longest catalog entry that prefixes the qualified class name on a segment boundary.

        `java.lang` matches `java.lang.Throwable` and `java.lang.reflect.Method`
        but never `java.language.X`.
        """
        qualified = m.qualified_class
        if qualified in self.packages:
            return qualified
        cuts = [b.start() for b in _SEGMENT_BOUNDARY.finditer(qualified)]
        for cut in reversed(cuts):
            candidate = qualified[:cut]
            if candidate in self.packages:
                return candidate
        return None


def load_catalog(file: Union[str, Path]) -> PackageCatalog:
    """
    Load a catalog file.

    Args:
        file: Path to a catalog with `@mode-params`, `family` and `package` lines

    Returns:
        PackageCatalog with file ordering preserved

    Raises:
        CatalogError: On duplicate packages, unknown family tags or malformed lines
    """
    path = Path(file)
    if not path.is_file():
        raise CatalogError(f"Catalog file not found: {path}")

    catalog = PackageCatalog(source=str(path))
    params: Dict[str, int] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "@mode-params":
            for item in parts[1:]:
                key, sep, value = item.partition("=")
                if not sep or not value.isdigit():
                    raise CatalogError(f"{path}:{lineno}: bad mode parameter {item!r}")
                params[key] = int(value)
        elif parts[0] == "family" and len(parts) == 3 and parts[2] in ("active", "inactive"):
            if parts[1] in catalog.families or parts[1] in SPECIAL_STATES:
                raise CatalogError(f"{path}:{lineno}: duplicate family {parts[1]!r}")
            catalog.families[parts[1]] = parts[2] == "active"
        elif parts[0] == "package" and len(parts) == 3:
            if parts[1] in catalog.packages:
                raise CatalogError(f"{path}:{lineno}: duplicate package {parts[1]!r}")
            catalog.packages[parts[1]] = parts[2]
        else:
            raise CatalogError(f"{path}:{lineno}: unrecognized line {raw!r}")

    unknown = sorted({tag for tag in catalog.packages.values() if tag not in catalog.families})
    if unknown:
        raise CatalogError(f"{path}: unknown family tag(s): {', '.join(unknown)}")

    catalog.thresholds = ObfuscationThresholds(
        class_len=params.get("obfusc_class_len", 2),
        segment_len=params.get("obfusc_seg_len", 2),
    )
    logger.info(
        f"Loaded catalog {path.name}: {len(catalog.packages)} packages, "
        f"{len(catalog.family_set)}/{len(catalog.families)} active families"
    )
    return catalog


def is_obfuscated(m: MethodRef, thresholds: ObfuscationThresholds = ObfuscationThresholds()) -> bool:
    """Identifier-mangling heuristic: short class name inside a short last package segment."""
    last_segment = m.package.rsplit(".", 1)[-1]
    return len(m.class_name) <= thresholds.class_len and len(last_segment) <= thresholds.segment_len


def _unknown_state(m: MethodRef, c: PackageCatalog) -> AbstractState:
    return OBFUSCATED if is_obfuscated(m, c.thresholds) else SELF_DEFINED


def abstract_to_package(m: MethodRef, c: PackageCatalog) -> AbstractState:
    matched = c.match(m)
    return matched if matched is not None else _unknown_state(m, c)


def family_of(m: MethodRef, c: PackageCatalog) -> AbstractState:
    """Family of a call regardless of whether that family is active."""
    matched = c.match(m)
    return c.packages[matched] if matched is not None else _unknown_state(m, c)


def abstract_to_family(m: MethodRef, c: PackageCatalog) -> Optional[AbstractState]:
    """Family state of a call, or None when its family is inactive (the call is dropped)."""
    family = family_of(m, c)
    if family in SPECIAL_STATES or c.families.get(family, False):
        return family
    return None


def abstract(m: MethodRef, c: PackageCatalog, mode: str) -> Optional[AbstractState]:
    if mode == "family":
        return abstract_to_family(m, c)
    if mode == "package":
        return abstract_to_package(m, c)
    raise ValueError(f"Unknown mode: {mode}")


def abstract_pairs(
    transitions: Union[TransitionMultiset, Counter],
    c: PackageCatalog,
    mode: str
) -> Counter:
    """
    Map caller -> callee pairs to state pairs.

    Pairs touching a call of an inactive family are deleted; the surrounding
    calls are not re-joined.
    """
    pairs = transitions.pairs if isinstance(transitions, TransitionMultiset) else transitions
    cache: Dict[MethodRef, Optional[AbstractState]] = {}

    def lookup(m: MethodRef) -> Optional[AbstractState]:
        if m not in cache:
            cache[m] = abstract(m, c, mode)
        return cache[m]

    states: Counter = Counter()
    dropped = 0
    for (caller, callee), count in pairs.items():
        source, target = lookup(caller), lookup(callee)
        if source is None or target is None:
            dropped += count
            continue
        states[(source, target)] += count
    if dropped:
        logger.debug(f"Dropped {dropped} transitions touching inactive families")
    return states

