"""Molecular graphs: JSONL ingestion, size-filtered sampling and scaling.

File format (one JSON object per line, blank lines ignored)::

    {"id": "mol-0001",
     "features": [[...], ...],       # n rows, 7 or 11 reals each
     "edges": [[0, 1], [1, 2]],      # undirected atom index pairs
     "target": -0.012,               # regression target
     "targets": {"lumo": ..., ...}}  # optional named alternatives

Eleven-wide rows are raw atom descriptors in the order atomic number,
chirality, degree, formal charge, radical electrons, hybridization,
aromaticity, hydrogen count, ring membership, valence, scaled mass; columns
6-9 are dropped on load. A dense symmetric ``"adjacency"`` 0/1 matrix may be
given instead of ``"edges"``.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

NUM_FEATURES = 7
RAW_FEATURES = 11
SELECTED_COLUMNS = (0, 1, 2, 3, 4, 5, 10)
FEATURE_NAMES = (
    "atomic_number", "chirality", "degree", "formal_charge",
    "radical_electrons", "hybridization", "scaled_mass",
)
FEATURE_HIGH = math.pi

FIXTURE_PATH = Path(__file__).with_name("data") / "qm9_fixture.jsonl"


class DatasetError(ValueError):
    """Malformed dataset file or record; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class MolecularGraph:
    id: str
    features: np.ndarray = field(repr=False)
    adjacency: np.ndarray = field(repr=False)
    target: float = 0.0

    def __post_init__(self):
        feats = np.array(self.features, dtype=float)
        adj = np.array(self.adjacency, dtype=bool)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] != NUM_FEATURES:
            raise DatasetError(f"{self.id}: features must be n x {NUM_FEATURES}, got {feats.shape}")
        n = feats.shape[0]
        if adj.shape != (n, n):
            raise DatasetError(f"{self.id}: adjacency must be {n} x {n}, got {adj.shape}")
        if not (adj == adj.T).all():
            raise DatasetError(f"{self.id}: adjacency is not symmetric")
        if adj.diagonal().any():
            raise DatasetError(f"{self.id}: self-loops are not allowed")
        if not np.isfinite(feats).all() or not math.isfinite(self.target):
            raise DatasetError(f"{self.id}: non-finite values")
        feats.setflags(write=False)
        adj.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "target", float(self.target))

    @property
    def num_atoms(self) -> int:
        return self.features.shape[0]

    def neighbors(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[v])

    def directed_edges(self) -> list[tuple[int, int]]:
        """All ``(v, u)`` with ``u`` adjacent to ``v``, sorted."""
        vs, us = np.nonzero(self.adjacency)
        return list(zip(vs.tolist(), us.tolist()))


@dataclass(frozen=True)
class Normalization:
    feature_min: np.ndarray
    feature_max: np.ndarray
    target_min: float
    target_max: float

    def scale_features(self, features: np.ndarray) -> np.ndarray:
        span = self.feature_max - self.feature_min
        safe = np.where(span > 0, span, 1.0)
        out = (features - self.feature_min) / safe * FEATURE_HIGH
        return np.where(span > 0, out, 0.0)

    @property
    def target_span(self) -> float:
        span = self.target_max - self.target_min
        return span if span > 0 else 1.0

    def scale_target(self, y):
        return (np.asarray(y, dtype=float) - self.target_min) / self.target_span

    def invert_target(self, y):
        return np.asarray(y, dtype=float) * self.target_span + self.target_min

    def to_dict(self) -> dict:
        return {
            "feature_min": self.feature_min.tolist(),
            "feature_max": self.feature_max.tolist(),
            "target_min": self.target_min,
            "target_max": self.target_max,
        }


@dataclass(frozen=True)
class DatasetSplit:
    graphs: tuple[MolecularGraph, ...]
    max_atoms: int
    sample_seed: int
    normalization: Normalization | None = None

    @property
    def ids(self) -> list[str]:
        return [g.id for g in self.graphs]

    @property
    def targets(self) -> np.ndarray:
        return np.array([g.target for g in self.graphs])

    def size_histogram(self) -> dict[int, int]:
        return dict(sorted(Counter(g.num_atoms for g in self.graphs).items()))


# ---------------------------------------------------------------------------
# ingestion


def _parse_record(obj, line: int, target_key: str | None) -> MolecularGraph:
    if not isinstance(obj, dict):
        raise DatasetError("record must be a JSON object", line)
    for key in ("id", "features"):
        if key not in obj:
            raise DatasetError(f"missing field {key!r}", line)
    try:
        feats = np.array(obj["features"], dtype=float)
    except (TypeError, ValueError):
        raise DatasetError("features must be a numeric matrix", line) from None
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise DatasetError("features must be a nonempty row-major matrix", line)
    if feats.shape[1] == RAW_FEATURES:
        feats = feats[:, SELECTED_COLUMNS]
    elif feats.shape[1] != NUM_FEATURES:
        raise DatasetError(f"feature width must be {NUM_FEATURES} or {RAW_FEATURES}, got {feats.shape[1]}", line)
    n = feats.shape[0]

    if "adjacency" in obj:
        adj = np.array(obj["adjacency"], dtype=float)
        if adj.shape != (n, n):
            raise DatasetError(f"adjacency must be {n} x {n}", line)
        if not (adj == adj.T).all():
            raise DatasetError("adjacency is not symmetric", line)
        adj = adj != 0
    else:
        adj = np.zeros((n, n), dtype=bool)
        for edge in obj.get("edges", []):
            if len(edge) != 2:
                raise DatasetError(f"edge {edge!r} is not a pair", line)
            u, v = (int(e) for e in edge)
            if not (0 <= u < n and 0 <= v < n):
                raise DatasetError(f"edge {edge!r} out of range for {n} atoms", line)
            if u == v:
                raise DatasetError(f"self-loop on atom {u}", line)
            adj[u, v] = adj[v, u] = True

    if target_key is None:
        if "target" not in obj:
            raise DatasetError("missing field 'target'", line)
        target = obj["target"]
    else:
        try:
            target = obj["targets"][target_key]
        except (KeyError, TypeError):
            raise DatasetError(f"missing targets[{target_key!r}]", line) from None
    try:
        return MolecularGraph(str(obj["id"]), feats, adj, float(target))
    except (TypeError, ValueError) as exc:
        raise DatasetError(str(exc), line) from None


def load_dataset(path, target_key: str | None = None) -> list[MolecularGraph]:
    """Read and validate a JSONL molecule file.

    Raises:
        DatasetError: on the first malformed line (reported 1-based), or if
            the file holds no records.
    """
    path = Path(path)
    graphs = []
    seen = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON ({exc.msg})", line_no) from None
            graph = _parse_record(obj, line_no, target_key)
            if graph.id in seen:
                raise DatasetError(f"duplicate id {graph.id!r}", line_no)
            seen.add(graph.id)
            graphs.append(graph)
    if not graphs:
        raise DatasetError(f"{path} contains no records")
    return graphs


def load_fixture(target_key: str | None = None) -> list[MolecularGraph]:
    """The bundled QM9-style fixture (see ``tools/make_fixture.py``)."""
    return load_dataset(FIXTURE_PATH, target_key)


def graph_to_record(graph: MolecularGraph) -> dict:
    vs, us = np.nonzero(np.triu(graph.adjacency))
    return {
        "id": graph.id,
        "features": graph.features.tolist(),
        "edges": [[int(v), int(u)] for v, u in zip(vs, us)],
        "target": graph.target,
    }


def summarize(graphs: Sequence[MolecularGraph]) -> dict:
    feats = np.vstack([g.features for g in graphs])
    sizes = Counter(g.num_atoms for g in graphs)
    return {
        "count": len(graphs),
        "max_atoms": max(sizes),
        "size_histogram": dict(sorted(sizes.items())),
        "feature_min": feats.min(axis=0).tolist(),
        "feature_max": feats.max(axis=0).tolist(),
        "target_min": min(g.target for g in graphs),
        "target_max": max(g.target for g in graphs),
    }


# ---------------------------------------------------------------------------
# sampling and scaling


def filter_and_sample(graphs: Iterable[MolecularGraph], max_atoms: int, count: int,
                      seed: int) -> DatasetSplit:
    """Uniformly sample ``count`` graphs with at most ``max_atoms`` atoms.

    Raises:
        DatasetError: fewer than ``count`` graphs pass the size filter.
    """
    pool = [g for g in graphs if g.num_atoms <= max_atoms]
    if count < 1:
        raise DatasetError("sample count must be >= 1")
    if len(pool) < count:
        raise DatasetError(f"only {len(pool)} graphs with <= {max_atoms} atoms, need {count}")
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(pool), size=count, replace=False)
    return DatasetSplit(tuple(pool[i] for i in picked), max_atoms, seed)


def fit_normalization(graphs: Sequence[MolecularGraph]) -> Normalization:
    if not graphs:
        raise DatasetError("cannot normalize an empty split")
    feats = np.vstack([g.features for g in graphs])
    targets = [g.target for g in graphs]
    return Normalization(feats.min(axis=0), feats.max(axis=0), min(targets), max(targets))


def normalize(split: DatasetSplit, record: Normalization | None = None) -> DatasetSplit:
    """Map features affinely onto ``[0, pi]`` per column and targets onto ``[0, 1]``.

    Constant columns map to 0. The record used is stored on the returned
    split so predictions can be mapped back with ``invert_target``.
    """
    if not split.graphs:
        raise DatasetError("cannot normalize an empty split")
    norm = record or fit_normalization(split.graphs)
    scaled = tuple(
        replace(g, features=norm.scale_features(g.features), target=float(norm.scale_target(g.target)))
        for g in split.graphs
    )
    return DatasetSplit(scaled, split.max_atoms, split.sample_seed, norm)
