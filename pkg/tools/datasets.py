"""Synthetic corpora with controllable class separation and temporal drift, and manifest handling."""
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union
import logging

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from tools.abstraction import EVAL_CATALOG, OBFUSCATED, SELF_DEFINED, PackageCatalog, load_catalog
from tools.callgraph import CallGraph, MethodRef, render_call_graph
from tools.learn import LABELS
from tools.markov import StateSpace

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["app_id", "label", "epoch", "path"]
SCENARIOS = ("separable", "null", "overlap")

_CLASS_WORDS = ("Manager", "Helper", "Service", "Util", "Handler", "Provider", "Factory", "Builder")
_VENDORS = ("acme", "example", "appstudio", "mobitech")
_APP_CLASSES = ("MainActivity", "NetworkClient", "SettingsStore", "PaymentFlow", "SyncWorker", "CacheLayer")
_RETURN_TYPES = ("void", "int", "boolean", "java.lang.String")
_PARAM_LISTS = ((), ("int",), ("java.lang.String",), ("android.content.Context", "int"))


class ManifestError(ValueError):
    """Raised for manifests with missing files, duplicate ids or unknown labels."""


class ManifestEntry(BaseModel):
    app_id: str = Field(min_length=1)
    label: Literal["benign", "malware"]
    epoch: int
    path: str = Field(min_length=1)


class Manifest(BaseModel):
    entries: List[ManifestEntry] = Field(default_factory=list)
    base_dir: Path = Path(".")

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        path = Path(entry.path)
        return path if path.is_absolute() else self.base_dir / path

    def missing_files(self) -> List[Path]:
        return [self.resolve(e) for e in self.entries if not self.resolve(e).is_file()]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([e.model_dump() for e in self.entries], columns=MANIFEST_COLUMNS)

    def filter(self, labels: Optional[Sequence[str]] = None, epochs: Optional[Sequence[int]] = None) -> "Manifest":
        kept = [e for e in self.entries
                if (labels is None or e.label in labels) and (epochs is None or e.epoch in epochs)]
        return Manifest(entries=kept, base_dir=self.base_dir)

    def epochs(self) -> List[int]:
        return sorted({e.epoch for e in self.entries})


def load_manifest(file: Union[str, Path], check_files: bool = True) -> Manifest:
    """
    Load and validate a manifest CSV (`app_id,label,epoch,path`).

    Relative paths are resolved against the manifest's directory.

    Raises:
        ManifestError: Missing manifest, malformed rows, duplicate app ids,
            unknown labels or absent call-graph files
    """
    path = Path(file)
    if not path.is_file():
        raise ManifestError(f"Manifest not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing_cols = [c for c in MANIFEST_COLUMNS if c not in frame.columns]
    if missing_cols:
        raise ManifestError(f"{path}: missing columns {missing_cols}")

    entries, seen = [], set()
    for lineno, record in enumerate(frame[MANIFEST_COLUMNS].to_dict("records"), 2):
        if record["app_id"] in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate app_id {record['app_id']!r}")
        seen.add(record["app_id"])
        if record["label"] not in LABELS:
            raise ManifestError(f"{path}:{lineno}: unknown label {record['label']!r} for {record['app_id']}")
        try:
            entries.append(ManifestEntry(**record))
        except ValidationError as e:
            raise ManifestError(f"{path}:{lineno}: invalid row: {e.errors()[0]['msg']}") from e

    manifest = Manifest(entries=entries, base_dir=path.parent)
    if check_files:
        absent = manifest.missing_files()
        if absent:
            listing = ", ".join(str(p) for p in absent)
            raise ManifestError(f"{path}: {len(absent)} call-graph file(s) missing: {listing}")
    logger.info(f"Loaded manifest {path} with {len(manifest)} apps")
    return manifest


def write_manifest(manifest: Manifest, file: Union[str, Path]) -> Path:
    path = Path(file)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest.to_frame().to_csv(path, index=False, lineterminator="\n")
    return path


# Synthetic generation

class GeneratorSpec(BaseModel):
    """Ground-truth transition profiles and corpus shape for one synthetic corpus."""

    mode: Literal["family", "package"] = "family"
    catalog: str = str(EVAL_CATALOG)
    benign_profile: List[List[float]]
    malware_profile: List[List[float]]
    apps_per_class: int = Field(50, ge=1)
    epochs: List[int] = Field(default_factory=lambda: [0])
    min_edges: int = Field(40, ge=1)
    max_edges: int = Field(120, ge=1)
    signatures_per_state: int = Field(12, ge=1)
    drift: float = Field(0.0, ge=0.0, le=1.0)
    vocabulary_turnover: float = Field(0.0, ge=0.0, le=1.0)
    label_noise: float = Field(0.0, ge=0.0, lt=0.5)
    seed: int = Field(0, ge=0)

    @field_validator("benign_profile", "malware_profile")
    @classmethod
    def _row_stochastic(cls, profile: List[List[float]]) -> List[List[float]]:
        matrix = np.asarray(profile, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("profile must be a square matrix")
        if (matrix < 0).any():
            raise ValueError("profile has negative entries")
        sums = matrix.sum(axis=1)
        if not np.all((np.abs(sums - 1.0) <= 1e-6) | (sums == 0)):
            raise ValueError("profile rows must sum to 1 (or be all zero)")
        if not sums.any():
            raise ValueError("profile has no transitions")
        return profile

    @model_validator(mode="after")
    def _consistent(self) -> "GeneratorSpec":
        if len(self.benign_profile) != len(self.malware_profile):
            raise ValueError("benign and malware profiles differ in size")
        if self.min_edges > self.max_edges:
            raise ValueError("min_edges exceeds max_edges")
        if not self.epochs or len(set(self.epochs)) != len(self.epochs):
            raise ValueError("epochs must be unique and non-empty")
        return self


def _dirichlet_rows(rng: np.random.Generator, n: int, support: Sequence[int], alpha: float = 1.0) -> np.ndarray:
    profile = np.zeros((n, n))
    for row in support:
        profile[row, list(support)] = rng.dirichlet(np.full(len(support), alpha))
    return profile


def make_profiles(scenario: str, space: StateSpace, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ground-truth (benign, malware) profiles for a named scenario.

    `separable` gives the classes disjoint state supports, `null` gives both
    the same profile and `overlap` mixes 60% of the benign profile into the
    malware one.
    """
    rng = np.random.default_rng([seed, 101])
    n = len(space)
    everything = list(range(n))
    if scenario == "separable":
        half = n // 2
        return _dirichlet_rows(rng, n, everything[:half]), _dirichlet_rows(rng, n, everything[half:])
    if scenario == "null":
        shared = _dirichlet_rows(rng, n, everything)
        return shared, shared.copy()
    if scenario == "overlap":
        benign = _dirichlet_rows(rng, n, everything)
        return benign, 0.6 * benign + 0.4 * _dirichlet_rows(rng, n, everything)
    raise ValueError(f"Unknown scenario {scenario!r}; expected one of {SCENARIOS}")


def scenario_spec(scenario: str, mode: str = "family", catalog: Union[str, Path] = EVAL_CATALOG,
                  seed: int = 0, **overrides) -> GeneratorSpec:
    space = load_catalog(catalog).state_space(mode)
    benign, malware = make_profiles(scenario, space, seed)
    return GeneratorSpec(mode=mode, catalog=str(catalog), benign_profile=benign.tolist(),
                         malware_profile=malware.tolist(), seed=seed, **overrides)


def signature_versions(size: int, epoch_index: int, turnover: float) -> List[int]:
    """
    How many times each signature slot has been replaced by `epoch_index`.

    Every epoch step retires round(turnover * size) slots, rotating through
    the slots so that a turnover of 1.0 renews the whole vocabulary.
    """
    versions = [0] * size
    per_step = int(round(turnover * size))
    for step in range(epoch_index):
        for k in range(per_step):
            versions[(step * per_step + k) % size] += 1
    return versions


def build_vocabulary(
    catalog: PackageCatalog,
    space: StateSpace,
    size: int,
    epoch_index: int = 0,
    turnover: float = 0.0
) -> Dict[str, List[MethodRef]]:
    """
    Synthetic signatures per state; each abstracts back to its own state.

    With a nonzero `turnover`, later epochs rename part of the methods, the
    way API releases introduce and deprecate calls within unchanged packages.
    """
    versions = signature_versions(size, epoch_index, turnover)
    packages_by_state: Dict[str, List[str]] = {}
    for package, family in catalog.packages.items():
        state = family if space.mode == "family" else package
        packages_by_state.setdefault(state, []).append(package)

    vocabulary: Dict[str, List[MethodRef]] = {}
    for s_index, state in enumerate(space.states):
        refs = []
        for j in range(size):
            ret, params = _RETURN_TYPES[j % len(_RETURN_TYPES)], _PARAM_LISTS[j % len(_PARAM_LISTS)]
            if state == SELF_DEFINED:
                package = f"com.{_VENDORS[j % len(_VENDORS)]}.app{j % 3}"
                class_name = _APP_CLASSES[j % len(_APP_CLASSES)]
            elif state == OBFUSCATED:
                package = f"{chr(97 + j % 26)}.{chr(97 + (j // 26) % 26)}"
                class_name = chr(97 + (s_index + j) % 26)
            else:
                candidates = packages_by_state[state]
                package = candidates[j % len(candidates)]
                class_name = f"{_CLASS_WORDS[j % len(_CLASS_WORDS)]}{j // len(_CLASS_WORDS)}"
            method = f"call{j}" if not versions[j] else f"call{j}r{versions[j]}"
            refs.append(MethodRef(package, class_name, ret, method, params))
        vocabulary[state] = refs
    return vocabulary


def drifted_profiles(base: np.ndarray, epochs: int, drift: float, seed: int) -> List[np.ndarray]:
    """
    Profile per epoch: P_0 = base, P_e = rownorm((1 - drift) P_{e-1} + drift U_e).

    U_e is a random row-stochastic matrix over all states, seeded per epoch.
    """
    profiles = [np.asarray(base, dtype=np.float64)]
    n = profiles[0].shape[0]
    for e in range(1, epochs):
        if drift == 0:
            profiles.append(profiles[-1].copy())
            continue
        noise = _dirichlet_rows(np.random.default_rng([seed, 202, e]), n, list(range(n)))
        mixed = (1 - drift) * profiles[-1] + drift * noise
        sums = mixed.sum(axis=1, keepdims=True)
        profiles.append(np.divide(mixed, sums, out=np.zeros_like(mixed), where=sums != 0))
    return profiles


def generate_app_graph(
    app_id: str,
    profile: np.ndarray,
    vocabulary: Dict[str, List[MethodRef]],
    space: StateSpace,
    n_edges: int,
    rng: np.random.Generator
) -> CallGraph:
    """Random walk over signatures whose state transitions follow `profile`."""
    profile = np.asarray(profile, dtype=np.float64)
    live = np.flatnonzero(profile.sum(axis=1) > 0)

    def pick(state_index: int) -> MethodRef:
        refs = vocabulary[space.states[state_index]]
        return refs[int(rng.integers(len(refs)))]

    state = int(rng.choice(live))
    current = pick(state)
    edges = []
    for _ in range(n_edges):
        row = profile[state]
        if row.sum() <= 0:
            state = int(rng.choice(live))
            current = pick(state)
            row = profile[state]
        nxt = int(rng.choice(len(row), p=row / row.sum()))
        callee = pick(nxt)
        edges.append((current, callee))
        state, current = nxt, callee
    return CallGraph.from_edges(app_id, edges)


def _generate_app(
    spec: GeneratorSpec,
    profile: np.ndarray,
    vocabulary: Dict[str, List[MethodRef]],
    space: StateSpace,
    epoch_index: int,
    class_index: int,
    app_index: int,
    out_dir: Path
) -> Dict[str, Union[str, int]]:
    rng = np.random.default_rng([spec.seed, epoch_index, class_index, app_index])
    epoch = spec.epochs[epoch_index]
    app_id = f"{epoch}_{LABELS[class_index]}_{app_index:05d}"
    n_edges = int(rng.integers(spec.min_edges, spec.max_edges + 1))
    graph = generate_app_graph(app_id, profile, vocabulary, space, n_edges, rng)
    label = LABELS[class_index]
    if rng.random() < spec.label_noise:
        label = LABELS[1 - class_index]
    relative = Path("apps") / f"{app_id}.cg"
    (out_dir / relative).write_text(render_call_graph(graph), encoding="utf-8")
    return {"app_id": app_id, "label": label, "epoch": epoch, "path": relative.as_posix()}


def generate_corpus(spec: GeneratorSpec, out_dir: Union[str, Path], workers: int = 1) -> Manifest:
    """
    Write one `.cg` file per app plus `manifest.csv` and `generator_spec.json`.

    Every app draws from its own seed derived from (seed, epoch, class, index),
    so the corpus is byte-identical for any worker count.

    Raises:
        ManifestError: If the output directory cannot be written
    """
    out_dir = Path(out_dir)
    try:
        (out_dir / "apps").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ManifestError(f"Cannot write corpus to {out_dir}: {e}") from e

    catalog = load_catalog(spec.catalog)
    space = catalog.state_space(spec.mode)
    if len(spec.benign_profile) != len(space):
        raise ValueError(f"Profiles have {len(spec.benign_profile)} states; the {spec.mode} space has {len(space)}")
    vocabularies = [
        build_vocabulary(catalog, space, spec.signatures_per_state, e, spec.vocabulary_turnover)
        for e in range(len(spec.epochs))
    ]
    benign = np.asarray(spec.benign_profile, dtype=np.float64)
    malware_by_epoch = drifted_profiles(np.asarray(spec.malware_profile), len(spec.epochs), spec.drift, spec.seed)

    jobs = [
        delayed(_generate_app)(spec, malware_by_epoch[e] if c else benign, vocabularies[e], space, e, c, i, out_dir)
        for e in range(len(spec.epochs))
        for c in (0, 1)
        for i in range(spec.apps_per_class)
    ]
    try:
        rows = Parallel(n_jobs=workers)(jobs)
    except OSError as e:
        raise ManifestError(f"Cannot write corpus to {out_dir}: {e}") from e

    manifest = Manifest(entries=[ManifestEntry(**row) for row in rows], base_dir=out_dir)
    write_manifest(manifest, out_dir / "manifest.csv")
    (out_dir / "generator_spec.json").write_text(spec.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"Generated {len(manifest)} synthetic apps in {out_dir} "
                f"({len(spec.epochs)} epoch(s), drift {spec.drift})")
    return manifest
