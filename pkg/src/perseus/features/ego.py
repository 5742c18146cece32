"""Ego-network measures around one node of a diffusion graph.

The out-ego network is the node plus everyone it points at; alters are those
neighbors, and n counts alters only. Redundancy terms t_i count each alter's
outward ties to other alters (the ego's own edges never count as ties). The
in-ratio uses the in-ego network instead. All six measures default to zero
for isolated egos, and density needs at least two alters to mean anything.
"""

from __future__ import annotations

import numpy as np

EGO_KEYS = (
    "in_ratio",
    "out_degree",
    "out_ratio",
    "efficiency",
    "effective_size",
    "density",
)


def ego_features(adj: np.ndarray, v: int, weighted: bool) -> dict[str, float]:
    row = adj[v]
    alters = [int(j) for j in np.flatnonzero(row) if j != v]
    n = len(alters)

    if n == 0:
        feats = {key: 0.0 for key in EGO_KEYS}
    else:
        ties_total = 0.0
        for i in alters:
            for j in alters:
                if i != j and adj[i, j] > 0:
                    ties_total += adj[i, j] if weighted else 1.0
        q = float(row[alters].sum()) if weighted else float(n)
        feats = {
            "effective_size": n - ties_total / n,
            "efficiency": 1.0 - ties_total / (n * n),
            "out_degree": q,
            "out_ratio": q / n,
            "density": 0.0,
        }
        if n >= 2:
            members = [v, *alters]
            m = 0.0
            for i in members:
                for j in members:
                    if i != j and adj[i, j] > 0:
                        m += adj[i, j] if weighted else 1.0
            feats["density"] = 2.0 * m / (n * (n - 1))

    col = adj[:, v]
    in_alters = [int(j) for j in np.flatnonzero(col) if j != v]
    if in_alters:
        indeg = float(col[in_alters].sum()) if weighted else float(len(in_alters))
        feats["in_ratio"] = indeg / len(in_alters)
    else:
        feats["in_ratio"] = 0.0
    return feats


def ego_feature_matrix(adj: np.ndarray, weighted: bool) -> dict[str, np.ndarray]:
    """All six ego measures for every node, keyed like EGO_KEYS."""
    n = len(adj)
    out = {key: np.zeros(n) for key in EGO_KEYS}
    for v in range(n):
        feats = ego_features(adj, v, weighted)
        for key in EGO_KEYS:
            out[key][v] = feats[key]
    return out
