"""
Per-hop neighborhood shells.

Shell *k* of node *v* holds the nodes at shortest-path distance exactly *k*
from *v*.  Each hop is stored CSR-style (``indptr``/``members``) with a
parallel ``active`` flag: pruning clears the flag and appends to
``pruned_log`` instead of deleting, so refinement stays auditable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

from errors import InvalidArgumentError
from graph.store import GraphStore

logger = logging.getLogger(__name__)

# Rows of the BFS frontier expanded per sparse product.
_BFS_CHUNK = 1024


@dataclass
class HopShells:
    K: int
    node_count: int
    indptr: list[np.ndarray]
    members: list[np.ndarray]
    active: list[np.ndarray]
    cap: int
    seed: int
    # Per hop, per node: largest hop-projected distance kept by the last prune
    # (NaN until a prune has run).
    radius: list[np.ndarray] = field(default_factory=list)
    pruned_log: list[tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.radius:
            self.radius = [np.full(self.node_count, np.nan) for _ in range(self.K)]

    # ------------------------------------------------------------------
    # Access
    # ------------------------------------------------------------------

    def _hop(self, k: int) -> int:
        if not 1 <= k <= self.K:
            raise InvalidArgumentError(f"hop {k} outside [1, {self.K}]")
        return k - 1

    def shell(self, v: int, k: int) -> np.ndarray:
        """Every built entry of shell *k* of *v* (active or not)."""
        h = self._hop(k)
        return self.members[h][self.indptr[h][v]:self.indptr[h][v + 1]]

    def active_members(self, v: int, k: int) -> np.ndarray:
        h = self._hop(k)
        lo, hi = self.indptr[h][v], self.indptr[h][v + 1]
        return self.members[h][lo:hi][self.active[h][lo:hi]]

    def entry_index(self, v: int, k: int, u: int) -> Optional[int]:
        """Flat position of *u* within shell *k* of *v*, or None."""
        h = self._hop(k)
        if not 0 <= v < self.node_count:
            return None
        lo, hi = int(self.indptr[h][v]), int(self.indptr[h][v + 1])
        pos = lo + int(np.searchsorted(self.members[h][lo:hi], u))
        if pos < hi and self.members[h][pos] == u:
            return pos
        return None

    def centers(self, k: int) -> np.ndarray:
        """Owning node of every entry in hop *k*, aligned with ``members``."""
        h = self._hop(k)
        return np.repeat(np.arange(self.node_count, dtype=np.int64), np.diff(self.indptr[h]))

    def active_entries(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """``(centers, members)`` of the active entries of hop *k*, in CSR order."""
        h = self._hop(k)
        mask = self.active[h]
        return self.centers(k)[mask], self.members[h][mask]

    def active_counts(self, k: int) -> np.ndarray:
        centers, _ = self.active_entries(k)
        return np.bincount(centers, minlength=self.node_count)

    def pruned_set(self) -> set[tuple[int, int, int]]:
        return set(self.pruned_log)

    # ------------------------------------------------------------------
    # Degree summaries
    # ------------------------------------------------------------------

    def effective_degree(self) -> float:
        """Mean number of active entries per node over all hops."""
        if self.node_count == 0:
            return 0.0
        return float(sum(int(a.sum()) for a in self.active)) / self.node_count

    def original_degree(self) -> float:
        """Mean number of built entries per node over all hops."""
        if self.node_count == 0:
            return 0.0
        return float(sum(m.shape[0] for m in self.members)) / self.node_count

    def copy(self) -> "HopShells":
        return HopShells(
            K=self.K,
            node_count=self.node_count,
            indptr=self.indptr,
            members=self.members,
            active=[a.copy() for a in self.active],
            cap=self.cap,
            seed=self.seed,
            radius=[r.copy() for r in self.radius],
            pruned_log=list(self.pruned_log),
        )


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _sample_row(row: np.ndarray, cap: int, seed: int, k: int, v: int) -> np.ndarray:
    # One generator per (seed, hop, node) so a local edit only resamples
    # the shells it actually changes.
    rng = np.random.default_rng([seed, k, v])
    return np.sort(rng.choice(row, size=cap, replace=False))


def build_hop_shells(g: GraphStore, K: int, cap: int = 32, seed: int = 0) -> HopShells:
    """
    Breadth-first shells to depth *K* for every node.

    Reachability is expanded with sparse boolean products in row chunks;
    shell *k* is reach(<= k) minus reach(<= k-1).  Shells larger than *cap*
    keep a uniform sample of *cap* entries drawn deterministically from
    ``seed``.
    """
    if K < 1:
        raise InvalidArgumentError(f"K must be >= 1, got {K}")
    if cap < 1:
        raise InvalidArgumentError(f"shell cap must be >= 1, got {cap}")
    if seed < 0:
        raise InvalidArgumentError(f"seed must be non-negative, got {seed}")

    n = g.node_count
    step = (g.adjacency() + sp.identity(n, dtype=np.int32, format="csr")).tocsr()
    rows_per_hop: list[list[np.ndarray]] = [[] for _ in range(K)]
    sampled = 0

    for start in range(0, n, _BFS_CHUNK):
        stop = min(n, start + _BFS_CHUNK)
        within = sp.identity(n, dtype=np.int32, format="csr")[start:stop]
        for h in range(K):
            reach = (within @ step).tocsr()
            reach.data[:] = 1
            shell = (reach - within).tocsr()
            shell.eliminate_zeros()
            shell.sort_indices()
            for local in range(stop - start):
                v = start + local
                row = shell.indices[shell.indptr[local]:shell.indptr[local + 1]].astype(np.int64)
                if row.shape[0] > cap:
                    row = _sample_row(row, cap, seed, h + 1, v)
                    sampled += 1
                rows_per_hop[h].append(row)
            within = reach

    indptr, members, active = [], [], []
    for h in range(K):
        counts = np.array([r.shape[0] for r in rows_per_hop[h]], dtype=np.int64)
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        flat = np.concatenate(rows_per_hop[h]) if n else np.zeros(0, dtype=np.int64)
        indptr.append(ptr)
        members.append(flat.astype(np.int64))
        active.append(np.ones(flat.shape[0], dtype=bool))

    shells = HopShells(
        K=K, node_count=n, indptr=indptr, members=members, active=active, cap=cap, seed=seed
    )
    logger.debug(
        "[Shells] built K=%d cap=%d: %d entries, %d capped shell(s)",
        K, cap, sum(m.shape[0] for m in members), sampled,
    )
    return shells


def restore_pruned(shells: HopShells, pruned: Iterable[tuple[int, int, int]]) -> int:
    """
    Re-apply earlier deactivations to freshly built *shells* (in place).

    A pruned neighbor never re-enters a shell.  A restore that would leave
    a non-empty shell with no active entry is skipped for that shell.
    Returns the number of entries deactivated.
    """
    by_shell: dict[tuple[int, int], list[int]] = {}
    for v, k, u in pruned:
        if k > shells.K:
            continue
        pos = shells.entry_index(v, k, u)
        if pos is not None and shells.active[k - 1][pos]:
            by_shell.setdefault((v, k), []).append(pos)

    restored = 0
    for (v, k), positions in sorted(by_shell.items()):
        h = k - 1
        lo, hi = shells.indptr[h][v], shells.indptr[h][v + 1]
        if int(shells.active[h][lo:hi].sum()) <= len(positions):
            logger.debug("[Shells] kept shell %d of node %d alive on restore", k, v)
            continue
        shells.active[h][positions] = False
        restored += len(positions)
    return restored
