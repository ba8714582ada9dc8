"""
On-disk formats for graphs.

  edges.tsv     UTF-8, one ``u<TAB>v`` pair per line, 0-based
  features.bin  16-byte header (``DRTRFMAT``, u32 rows, u32 cols, LE) + row-major f32 LE
  features.csv  comma-separated fallback, one row per node
  labels.tsv    ``node<TAB>class``; absent nodes are unlabeled
  labeled.txt   one node index per line (the training pool); optional
  noisy.tsv     planted noisy edges, only ever read by post-hoc metrics
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from errors import MalformedInputError
from graph.store import GraphStore, build_graph

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FEATURE_MAGIC = b"DRTRFMAT"
_FEATURE_HEADER = struct.Struct("<8sII")

EDGES_FILE = "edges.tsv"
FEATURES_FILE = "features.bin"
FEATURES_CSV = "features.csv"
LABELS_FILE = "labels.tsv"
LABELED_FILE = "labeled.txt"
NOISY_FILE = "noisy.tsv"


# ---------------------------------------------------------------------------
# Edge lists
# ---------------------------------------------------------------------------

def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedInputError(f"{path.name}: not UTF-8 text (byte offset {exc.start})") from None


def _parse_pairs(text: str, source: str) -> list[tuple[int, int]]:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise MalformedInputError(f"{source}:{lineno}: expected 'u<TAB>v', got {line!r}")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise MalformedInputError(f"{source}:{lineno}: non-integer node index") from None
    return pairs


def read_edge_list(path: PathLike) -> list[tuple[int, int]]:
    path = Path(path)
    return _parse_pairs(_read_text(path), path.name)


def format_edge_list(pairs: Union[GraphStore, Iterable[tuple[int, int]]]) -> str:
    if isinstance(pairs, GraphStore):
        pairs = pairs.edge_pairs()
    return "".join(f"{int(v)}\t{int(u)}\n" for v, u in pairs)


def write_edge_list(path: PathLike, pairs: Union[GraphStore, Iterable[tuple[int, int]]]) -> None:
    Path(path).write_text(format_edge_list(pairs), encoding="utf-8")


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

def encode_features(features: np.ndarray) -> bytes:
    feats = np.asarray(features)
    if feats.ndim != 2:
        raise MalformedInputError("features must be a 2-D matrix")
    rows, cols = feats.shape
    return _FEATURE_HEADER.pack(FEATURE_MAGIC, rows, cols) + feats.astype("<f4").tobytes()


def decode_features(blob: bytes) -> np.ndarray:
    if len(blob) < _FEATURE_HEADER.size:
        raise MalformedInputError("feature file shorter than its header")
    magic, rows, cols = _FEATURE_HEADER.unpack_from(blob)
    if magic != FEATURE_MAGIC:
        raise MalformedInputError(f"bad feature magic {magic!r}")
    expected = _FEATURE_HEADER.size + rows * cols * 4
    if len(blob) != expected:
        raise MalformedInputError(
            f"feature file holds {len(blob)} bytes, header implies {expected}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=_FEATURE_HEADER.size)
    return data.reshape(rows, cols).astype(np.float64)


def read_features(path: PathLike) -> np.ndarray:
    """Read the binary format, falling back to CSV when the magic is absent."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:len(FEATURE_MAGIC)] == FEATURE_MAGIC:
        return decode_features(blob)
    logger.info("[IO] %s has no binary header, reading as CSV", path.name)
    try:
        feats = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise MalformedInputError(f"{path.name}: unreadable CSV features ({exc})") from None
    return feats


def write_features(path: PathLike, features: np.ndarray) -> None:
    Path(path).write_bytes(encode_features(features))


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

def read_labels(path: PathLike) -> dict[int, int]:
    path = Path(path)
    return dict(_parse_pairs(_read_text(path), path.name))


def write_labels(path: PathLike, labels: np.ndarray) -> None:
    text = "".join(f"{v}\t{int(c)}\n" for v, c in enumerate(labels) if c >= 0)
    Path(path).write_text(text, encoding="utf-8")


def read_node_list(path: PathLike) -> list[int]:
    path = Path(path)
    nodes = []
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            nodes.append(int(line))
        except ValueError:
            raise MalformedInputError(f"{path.name}:{lineno}: non-integer node index") from None
    return nodes


def write_node_list(path: PathLike, nodes: Iterable[int]) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in nodes), encoding="utf-8")


# ---------------------------------------------------------------------------
# Graph directories
# ---------------------------------------------------------------------------

def load_graph_dir(directory: PathLike) -> GraphStore:
    directory = Path(directory)
    if not directory.is_dir():
        raise MalformedInputError(f"graph directory {directory} does not exist")

    feat_path = directory / FEATURES_FILE
    if not feat_path.exists():
        feat_path = directory / FEATURES_CSV
    if not feat_path.exists():
        raise MalformedInputError(f"{directory} holds no {FEATURES_FILE} or {FEATURES_CSV}")
    features = read_features(feat_path)

    edges_path = directory / EDGES_FILE
    edges = read_edge_list(edges_path) if edges_path.exists() else []
    labels_path = directory / LABELS_FILE
    labels = read_labels(labels_path) if labels_path.exists() else {}
    labeled_path = directory / LABELED_FILE
    labeled = read_node_list(labeled_path) if labeled_path.exists() else None

    g = build_graph(edges, features, labels, labeled_set=labeled)
    logger.info(
        "[IO] loaded %s: %d nodes, %d edges, %d labeled",
        directory, g.node_count, g.edge_count, g.labeled_set.shape[0],
    )
    return g


def save_graph_dir(
    directory: PathLike,
    g: GraphStore,
    noisy: Optional[Iterable[tuple[int, int]]] = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_edge_list(directory / EDGES_FILE, g)
    write_features(directory / FEATURES_FILE, g.features)
    write_labels(directory / LABELS_FILE, g.labels)
    write_node_list(directory / LABELED_FILE, g.labeled_set)
    if noisy is not None:
        write_edge_list(directory / NOISY_FILE, sorted(noisy))
    return directory


def read_noisy_edges(directory: PathLike) -> set[tuple[int, int]]:
    path = Path(directory) / NOISY_FILE
    if not path.exists():
        return set()
    return {(min(v, u), max(v, u)) for v, u in read_edge_list(path)}


# ---------------------------------------------------------------------------
# Citation-graph layout
# ---------------------------------------------------------------------------

def load_citation_graph(content_path: PathLike, cites_path: PathLike) -> GraphStore:
    """
    Load the common citation layout: ``<id> <f1> ... <fd> <label>`` per line
    in the content file and ``<cited> <citing>`` per line in the cites file.
    Node indices follow content-file order; class names are sorted.
    """
    ids: dict[str, int] = {}
    rows: list[list[float]] = []
    names: list[str] = []
    content_path = Path(content_path)
    for lineno, line in enumerate(_read_text(content_path).splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) < 3:
            raise MalformedInputError(f"{content_path.name}:{lineno}: too few columns")
        ids[parts[0]] = len(ids)
        try:
            rows.append([float(x) for x in parts[1:-1]])
        except ValueError:
            raise MalformedInputError(f"{content_path.name}:{lineno}: non-numeric feature") from None
        names.append(parts[-1])

    if len({len(r) for r in rows}) > 1:
        raise MalformedInputError(f"{content_path.name}: ragged feature rows")
    classes = {name: i for i, name in enumerate(sorted(set(names)))}

    edges, dropped = [], 0
    for line in _read_text(Path(cites_path)).splitlines():
        parts = line.split()
        if len(parts) != 2:
            continue
        a, b = ids.get(parts[0]), ids.get(parts[1])
        if a is None or b is None:
            dropped += 1
            continue
        edges.append((a, b))
    if dropped:
        logger.info("[IO] dropped %d citation(s) to unknown node ids", dropped)

    labels = {i: classes[name] for i, name in enumerate(names)}
    return build_graph(edges, np.asarray(rows, dtype=np.float64), labels)
