"""Whole-graph node measures on the inferred diffusion graphs.

Every function takes a square adjacency matrix: the 0/1 directed matrix for
the unweighted variant, the [0, 1] weight matrix for the weighted one. In the
weighted case distance is the reciprocal of the edge weight, so heavier edges
are shorter.
"""

from __future__ import annotations

import heapq

import numpy as np


def _degrees_sym(adj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sym = np.maximum(adj, adj.T).astype(float)
    np.fill_diagonal(sym, 0.0)
    return sym, (sym > 0).sum(axis=1)


def clustering(adj: np.ndarray, weighted: bool) -> np.ndarray:
    """Local clustering on the undirected projection.

    Unweighted: share of closed neighbor pairs. Weighted: geometric-mean
    coefficient over edge weights scaled by the largest symmetrized weight.
    """
    sym, deg = _degrees_sym(adj)
    denom = deg * (deg - 1)
    if weighted:
        peak = sym.max()
        hat = sym / peak if peak > 0 else sym
        root = np.cbrt(hat)
        closed = np.einsum("ij,jk,ki->i", root, root, root)
    else:
        binary = (sym > 0).astype(float)
        closed = np.einsum("ij,jk,ki->i", binary, binary, binary)
    out = np.zeros(len(adj))
    mask = denom > 0
    out[mask] = closed[mask] / denom[mask]
    return out


def _distances_from(adj: np.ndarray, source: int, weighted: bool) -> np.ndarray:
    """Directed shortest-path distances from one node (inf where unreachable)."""
    n = len(adj)
    dist = np.full(n, np.inf)
    dist[source] = 0.0
    if not weighted:
        frontier = [source]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for u in frontier:
                for v in np.flatnonzero(adj[u]):
                    if np.isinf(dist[v]):
                        dist[v] = d
                        nxt.append(int(v))
            frontier = nxt
        return dist
    heap = [(0.0, source)]
    done = np.zeros(n, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v in np.flatnonzero(adj[u]):
            nd = d + 1.0 / adj[u, v]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, int(v)))
    return dist


def closeness(adj: np.ndarray, weighted: bool) -> np.ndarray:
    """Outgoing-distance closeness, normalized by the reachable share so that
    nodes commanding a small component do not outrank globally central ones."""
    n = len(adj)
    out = np.zeros(n)
    if n <= 1:
        return out
    for v in range(n):
        dist = _distances_from(adj, v, weighted)
        reach = np.isfinite(dist)
        reach[v] = False
        r = int(reach.sum())
        if r == 0:
            continue
        total = float(dist[reach].sum())
        out[v] = (r / total) * (r / (n - 1))
    return out


def betweenness(adj: np.ndarray, weighted: bool) -> np.ndarray:
    """Directed shortest-path betweenness, endpoints excluded, unnormalized.

    Brandes' accumulation: one traversal per source, dependencies pushed back
    through the predecessor DAG.
    """
    n = len(adj)
    score = np.zeros(n)
    for s in range(n):
        pred: list[list[int]] = [[] for _ in range(n)]
        sigma = np.zeros(n)
        sigma[s] = 1.0
        dist = np.full(n, np.inf)
        dist[s] = 0.0
        order: list[int] = []
        if not weighted:
            queue = [s]
            while queue:
                u = queue.pop(0)
                order.append(u)
                for v in np.flatnonzero(adj[u]):
                    v = int(v)
                    if np.isinf(dist[v]):
                        dist[v] = dist[u] + 1
                        queue.append(v)
                    if dist[v] == dist[u] + 1:
                        sigma[v] += sigma[u]
                        pred[v].append(u)
        else:
            heap = [(0.0, s)]
            done = np.zeros(n, dtype=bool)
            while heap:
                d, u = heapq.heappop(heap)
                if done[u]:
                    continue
                done[u] = True
                order.append(u)
                for v in np.flatnonzero(adj[u]):
                    v = int(v)
                    nd = d + 1.0 / adj[u, v]
                    if nd < dist[v]:
                        dist[v] = nd
                        sigma[v] = sigma[u]
                        pred[v] = [u]
                        heapq.heappush(heap, (nd, v))
                    elif nd == dist[v] and not done[v]:
                        sigma[v] += sigma[u]
                        pred[v].append(u)
        delta = np.zeros(n)
        for v in reversed(order):
            for u in pred[v]:
                delta[u] += sigma[u] / sigma[v] * (1.0 + delta[v])
            if v != s:
                score[v] += delta[v]
    return score


def pagerank(
    adj: np.ndarray,
    weighted: bool,
    damping: float = 0.85,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> np.ndarray:
    """Power-iteration pagerank; dangling mass is spread uniformly."""
    n = len(adj)
    if n == 0:
        return np.zeros(0)
    mat = adj.astype(float).copy()
    if not weighted:
        mat = (mat > 0).astype(float)
    np.fill_diagonal(mat, 0.0)
    out = mat.sum(axis=1)
    dangling = out == 0
    trans = np.zeros_like(mat)
    nz = ~dangling
    trans[nz] = mat[nz] / out[nz, None]
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = (1.0 - damping) / n + damping * (x @ trans + x[dangling].sum() / n)
        if np.abs(nxt - x).sum() < tol:
            x = nxt
            break
        x = nxt
    return x
