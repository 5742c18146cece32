"""Louvain community detection over the symmetrized weighted graph.

Used as labeling assistance: communities group the channels that echo each
other, which is where mastermind/accomplice annotation starts. The
implementation is deterministic: nodes are visited in index order and ties
between candidate communities break toward the smaller community id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GAIN_EPS = 1e-12


@dataclass(frozen=True)
class CommunityPartition:
    assignment: dict[int, int]
    modularity: float
    pass_modularity: tuple[float, ...]

    @property
    def n_communities(self) -> int:
        return len(set(self.assignment.values()))


def symmetrize(weighted: np.ndarray) -> np.ndarray:
    sym = (weighted + weighted.T) / 2.0
    sym = sym.astype(float).copy()
    np.fill_diagonal(sym, 0.0)
    return sym


def modularity(sym: np.ndarray, assignment: dict[int, int]) -> float:
    """Newman modularity of a partition of the symmetric graph `sym`."""
    m2 = sym.sum()
    if m2 == 0:
        return 0.0
    k = sym.sum(axis=1)
    labels = np.array([assignment[i] for i in range(len(sym))])
    q = 0.0
    for c in np.unique(labels):
        members = labels == c
        q += sym[np.ix_(members, members)].sum() / m2 - (k[members].sum() / m2) ** 2
    return float(q)


def _local_moves(adj: np.ndarray, m2: float) -> tuple[np.ndarray, bool]:
    """One phase of index-order local moves; returns (community labels, moved?)."""
    n = len(adj)
    comm = np.arange(n)
    k = adj.sum(axis=1)
    tot = k.copy()
    moved_any = False
    while True:
        moved = False
        for i in range(n):
            old = comm[i]
            # weight from i to each community, self excluded
            links: dict[int, float] = {}
            for j in np.flatnonzero(adj[i]):
                if j != i:
                    links[comm[j]] = links.get(comm[j], 0.0) + adj[i, j]
            tot[old] -= k[i]
            comm[i] = -1
            base = links.get(old, 0.0) / m2 * 2.0 - tot[old] * k[i] * 2.0 / (m2 * m2)
            best_comm, best_gain = old, base
            for c, w in sorted(links.items()):
                if c == old:
                    continue
                gain = w / m2 * 2.0 - tot[c] * k[i] * 2.0 / (m2 * m2)
                if gain > best_gain + _GAIN_EPS:
                    best_comm, best_gain = c, gain
            comm[i] = best_comm
            tot[best_comm] += k[i]
            if best_comm != old:
                moved = True
                moved_any = True
        if not moved:
            break
    return comm, moved_any


def _aggregate(adj: np.ndarray, comm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Collapse communities into super-nodes (labels renumbered by first use)."""
    order: dict[int, int] = {}
    for c in comm:
        if c not in order:
            order[c] = len(order)
    relabeled = np.array([order[c] for c in comm])
    size = len(order)
    agg = np.zeros((size, size))
    for i in range(len(adj)):
        for j in np.flatnonzero(adj[i]):
            agg[relabeled[i], relabeled[j]] += adj[i, j]
    return agg, relabeled


def louvain(weighted: np.ndarray) -> CommunityPartition:
    """Full Louvain on (W + W^T)/2. The reported modularity is recomputed on
    the original symmetrized graph from the returned assignment."""
    sym = symmetrize(weighted)
    n = len(sym)
    m2 = sym.sum()
    if m2 == 0:
        assignment = {i: i for i in range(n)}
        return CommunityPartition(assignment, 0.0, ())

    mapping = np.arange(n)  # original node -> current super-node
    current = sym
    history: list[float] = []
    while True:
        comm, moved = _local_moves(current, m2)
        agg, relabeled = _aggregate(current, comm)
        mapping = relabeled[mapping]
        flat = {i: int(mapping[i]) for i in range(n)}
        history.append(modularity(sym, flat))
        if not moved or len(agg) == len(current):
            break
        current = agg

    # renumber communities by first appearance over node index order
    seen: dict[int, int] = {}
    assignment = {}
    for i in range(n):
        c = int(mapping[i])
        if c not in seen:
            seen[c] = len(seen)
        assignment[i] = seen[c]
    return CommunityPartition(assignment, modularity(sym, assignment), tuple(history))
