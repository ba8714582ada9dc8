"""
Structural graph store.

Holds the undirected topology in compressed-sparse-row layout (stored
symmetrically), the dense node feature matrix and the partial label vector.
A ``GraphStore`` is never mutated in place: topology changes produce a new
instance through :func:`apply_topology_delta`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from errors import (
    DuplicateEdgeError,
    InvalidArgumentError,
    MalformedInputError,
    MissingEntryError,
)

logger = logging.getLogger(__name__)

UNLABELED = -1

EdgeList = Union[Sequence[tuple[int, int]], np.ndarray]


@dataclass(frozen=True, eq=False)
class GraphStore:
    """Immutable CSR graph plus node features and labels."""

    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    labeled_set: np.ndarray
    _adjacency: list = field(default_factory=list, repr=False)

    # ------------------------------------------------------------------
    # Shape
    # ------------------------------------------------------------------

    @property
    def node_count(self) -> int:
        return int(self.indptr.shape[0] - 1)

    @property
    def edge_count(self) -> int:
        """Number of undirected edges."""
        return int(self.indices.shape[0] // 2)

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def class_count(self) -> int:
        known = self.labels[self.labels >= 0]
        return int(known.max()) + 1 if known.size else 0

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    # ------------------------------------------------------------------
    # Structural queries
    # ------------------------------------------------------------------

    def neighbors(self, v: int) -> np.ndarray:
        self._check_node(v)
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        self._check_node(v)
        return int(self.indptr[v + 1] - self.indptr[v])

    def has_edge(self, v: int, u: int) -> bool:
        row = self.neighbors(v)
        pos = np.searchsorted(row, u)
        return bool(pos < row.shape[0] and row[pos] == u)

    def has_edges(self, vs: np.ndarray, us: np.ndarray) -> np.ndarray:
        """Vectorised membership test for many (v, u) pairs."""
        vs = np.asarray(vs, dtype=np.int64)
        us = np.asarray(us, dtype=np.int64)
        if vs.size == 0:
            return np.zeros(0, dtype=bool)
        adj = self.adjacency()
        return np.asarray(adj[vs, us]).ravel() > 0

    def edge_pairs(self) -> np.ndarray:
        """Return every undirected edge once as an ``(m, 2)`` array with v < u, sorted."""
        src = np.repeat(np.arange(self.node_count, dtype=np.int64), self.degrees)
        keep = src < self.indices
        return np.column_stack([src[keep], self.indices[keep]])

    def adjacency(self) -> sp.csr_matrix:
        """0/1 adjacency as a scipy CSR matrix (cached)."""
        if not self._adjacency:
            n = self.node_count
            data = np.ones(self.indices.shape[0], dtype=np.int32)
            self._adjacency.append(
                sp.csr_matrix((data, self.indices, self.indptr), shape=(n, n))
            )
        return self._adjacency[0]

    def labeled_mask(self) -> np.ndarray:
        mask = np.zeros(self.node_count, dtype=bool)
        mask[self.labeled_set] = True
        return mask

    def _check_node(self, v: int) -> None:
        if not 0 <= v < self.node_count:
            raise InvalidArgumentError(f"node {v} out of range [0, {self.node_count})")


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _csr_from_pairs(node_count: int, pairs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric CSR arrays from canonical (v < u) unique pairs."""
    if pairs.size == 0:
        return np.zeros(node_count + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    src = np.concatenate([pairs[:, 0], pairs[:, 1]])
    dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    counts = np.bincount(src, minlength=node_count)
    indptr = np.zeros(node_count + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, dst.astype(np.int64)


def _as_pair_array(edge_list: EdgeList) -> np.ndarray:
    arr = np.asarray(edge_list)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise MalformedInputError(f"edge list must be pairs, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise MalformedInputError("edge list holds non-integer node indices")
    return arr.astype(np.int64)


def _canonical_pairs(pairs: np.ndarray, node_count: int) -> np.ndarray:
    if pairs.size and (pairs.min() < 0 or pairs.max() >= node_count):
        bad = pairs[(pairs < 0).any(axis=1) | (pairs >= node_count).any(axis=1)][0]
        raise MalformedInputError(
            f"edge ({bad[0]}, {bad[1]}) references a node outside [0, {node_count})"
        )
    loops = pairs[:, 0] == pairs[:, 1]
    if loops.any():
        logger.info("[Graph] dropped %d self-loop(s)", int(loops.sum()))
    pairs = pairs[~loops]
    canon = np.sort(pairs, axis=1)
    unique = np.unique(canon, axis=0) if canon.size else canon.reshape(0, 2)
    if unique.shape[0] != canon.shape[0]:
        logger.info(
            "[Graph] dropped %d duplicate edge(s)", canon.shape[0] - unique.shape[0]
        )
    return unique.reshape(-1, 2)


def build_graph(
    edge_list: EdgeList,
    features: np.ndarray,
    labels: Optional[Mapping[int, int]] = None,
    labeled_set: Optional[Iterable[int]] = None,
    node_count: Optional[int] = None,
) -> GraphStore:
    """
    Build a canonical :class:`GraphStore`.

    The node count is inferred from the feature rows.  Self-loops and
    duplicate (or mirrored) edges are dropped; symmetry is enforced.
    ``labeled_set`` defaults to every node carrying a label.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise MalformedInputError(f"features must be a 2-D matrix, got ndim={feats.ndim}")
    n = feats.shape[0]
    if node_count is not None and node_count != n:
        raise MalformedInputError(
            f"feature matrix has {n} rows but the graph declares {node_count} nodes"
        )

    pairs = _canonical_pairs(_as_pair_array(edge_list), n)
    indptr, indices = _csr_from_pairs(n, pairs)

    label_vec = np.full(n, UNLABELED, dtype=np.int64)
    for node, cls in (labels or {}).items():
        node, cls = int(node), int(cls)
        if not 0 <= node < n:
            raise MalformedInputError(f"label for node {node} outside [0, {n})")
        if cls < 0:
            raise MalformedInputError(f"node {node} has negative class {cls}")
        label_vec[node] = cls

    if labeled_set is None:
        lab = np.flatnonzero(label_vec >= 0)
    else:
        lab = np.unique(np.asarray(list(labeled_set), dtype=np.int64))
        if lab.size and (lab.min() < 0 or lab.max() >= n):
            raise MalformedInputError(f"labeled node index outside [0, {n})")
        if lab.size and (label_vec[lab] < 0).any():
            missing = lab[label_vec[lab] < 0][0]
            raise MalformedInputError(f"labeled node {missing} carries no label")

    return GraphStore(
        indptr=indptr,
        indices=indices,
        features=feats,
        labels=label_vec,
        labeled_set=lab.astype(np.int64),
    )


def with_pairs(g: GraphStore, pairs: np.ndarray) -> GraphStore:
    """A copy of *g* whose topology is exactly the canonical *pairs*."""
    indptr, indices = _csr_from_pairs(g.node_count, pairs)
    return GraphStore(
        indptr=indptr,
        indices=indices,
        features=g.features,
        labels=g.labels,
        labeled_set=g.labeled_set,
    )


# ---------------------------------------------------------------------------
# Structural similarity
# ---------------------------------------------------------------------------

def structural_similarity(g: GraphStore, v: int, u: int) -> float:
    """Jaccard overlap of the 1-hop neighborhoods of *v* and *u*."""
    if v == u:
        raise InvalidArgumentError("structural similarity needs two distinct nodes")
    nv, nu = g.neighbors(v), g.neighbors(u)
    union = np.union1d(nv, nu).shape[0]
    if union == 0:
        return 0.0
    return np.intersect1d(nv, nu, assume_unique=True).shape[0] / union


def jaccard_pairs(g: GraphStore, vs: np.ndarray, us: np.ndarray) -> np.ndarray:
    """Vectorised :func:`structural_similarity` for aligned node arrays."""
    vs = np.asarray(vs, dtype=np.int64)
    us = np.asarray(us, dtype=np.int64)
    if vs.size == 0:
        return np.zeros(0, dtype=np.float64)
    adj = g.adjacency()
    inter = np.asarray(adj[vs].multiply(adj[us]).sum(axis=1)).ravel().astype(np.float64)
    deg = g.degrees.astype(np.float64)
    union = deg[vs] + deg[us] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


# ---------------------------------------------------------------------------
# Topology delta
# ---------------------------------------------------------------------------

PrunedEntries = Union[Iterable[tuple[int, int, int]], Mapping[tuple[int, int], Iterable[int]]]


def _normalise_pruned(pruned: Optional[PrunedEntries]) -> list[tuple[int, int, int]]:
    if not pruned:
        return []
    if isinstance(pruned, Mapping):
        return [(int(v), int(k), int(u)) for (v, k), us in pruned.items() for u in us]
    return [(int(v), int(k), int(u)) for v, k, u in pruned]


def apply_topology_delta(
    g: GraphStore,
    added: EdgeList,
    shells,
    pruned: Optional[PrunedEntries] = None,
    radius: Optional[list[np.ndarray]] = None,
):
    """
    Commit one epoch's refinement atomically.

    Every added edge and every pruned shell entry is validated before
    anything is built, so a failure leaves both inputs untouched.  Returns
    ``(graph, shells)``; the shells are a copy with the pruned entries
    flagged inactive (and the DR loss radius replaced when given).
    """
    add = _as_pair_array(added)
    n = g.node_count
    if add.size:
        if add.min() < 0 or add.max() >= n:
            raise MalformedInputError(f"added edge references a node outside [0, {n})")
        if (add[:, 0] == add[:, 1]).any():
            raise InvalidArgumentError("self-loops cannot be added")
        canon = np.sort(add, axis=1)
        if np.unique(canon, axis=0).shape[0] != canon.shape[0]:
            raise DuplicateEdgeError("the added edge list repeats an edge")
        present = g.has_edges(canon[:, 0], canon[:, 1])
        if present.any():
            v, u = canon[present][0]
            raise DuplicateEdgeError(f"edge ({v}, {u}) already exists")
    else:
        canon = np.zeros((0, 2), dtype=np.int64)

    entries = _normalise_pruned(pruned)
    flat = []
    for v, k, u in entries:
        pos = shells.entry_index(v, k, u)
        if pos is None:
            raise MissingEntryError(f"node {u} is not in shell {k} of node {v}")
        if not shells.active[k - 1][pos]:
            raise MissingEntryError(f"node {u} in shell {k} of node {v} is already inactive")
        flat.append((k, pos, (v, k, u)))

    new_shells = shells.copy()
    for k, pos, entry in flat:
        new_shells.active[k - 1][pos] = False
        new_shells.pruned_log.append(entry)
    if radius is not None:
        new_shells.radius = [np.array(r, dtype=np.float64, copy=True) for r in radius]

    if canon.shape[0] == 0:
        return g, new_shells

    pairs = np.unique(np.concatenate([g.edge_pairs(), canon]), axis=0)
    logger.debug("[Graph] committed %d added edge(s), %d prune(s)", canon.shape[0], len(flat))
    return with_pairs(g, pairs), new_shells
