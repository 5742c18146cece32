"""Independent reference implementations the test suite checks the package
against.

Everything here deliberately takes a different route from the package:
dicts and fractions instead of numpy arrays, Floyd-Warshall pair counting
instead of Brandes accumulation, a dense linear solve instead of power
iteration, pure-python scalar loops instead of vectorized layers. Agreement
between the two routes is then evidence, not tautology.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import combinations

import numpy as np


# ---------------------------------------------------------------------------
# cascade-influence reconstruction


def brute_influence(event_logs, mode="dani_product"):
    """Dict-and-fraction reconstruction of the influence matrices.

    ``event_logs`` is a list of events, each a list of ``(entity, time)``
    pairs with distinct entities; time may be anything orderable. Returns a
    dict with ``nodes`` (sorted tuple), ``theta`` and ``w`` (dicts keyed by
    ordered entity pairs, Fractions), ``h`` and ``lam`` (one dict per
    event), and ``w_star`` (set of surviving arrows).
    """
    nodes = sorted({e for log in event_logs for e, _ in log})
    participation = {
        r: frozenset(i for i, log in enumerate(event_logs) if any(e == r for e, _ in log))
        for r in nodes
    }

    theta = {}
    for r in nodes:
        for s in nodes:
            if r == s:
                continue
            union = participation[r] | participation[s]
            inter = participation[r] & participation[s]
            theta[(r, s)] = Fraction(len(inter), len(union)) if union else Fraction(0)

    h_per_event = []
    lam_per_event = []
    for log in event_logs:
        ordered = sorted(log, key=lambda p: (p[1], p[0]))
        rank = {e: i for i, (e, _) in enumerate(ordered, start=1)}
        h = {}
        for r in rank:
            for s in rank:
                if r == s:
                    continue
                if rank[r] < rank[s]:
                    h[(r, s)] = Fraction(1, rank[s] * (rank[s] - rank[r]))
                else:
                    h[(r, s)] = Fraction(0)
        lam = {}
        for r in rank:
            row_total = sum(h[(r, s)] for s in rank if s != r)
            for s in rank:
                if s != r:
                    lam[(r, s)] = h[(r, s)] / row_total if row_total else Fraction(0)
        h_per_event.append(h)
        lam_per_event.append(lam)

    raw = {}
    for r in nodes:
        for s in nodes:
            if r == s:
                continue
            lam_sum = sum(lam.get((r, s), Fraction(0)) for lam in lam_per_event)
            if mode == "dani_product":
                raw[(r, s)] = theta[(r, s)] * lam_sum
            else:
                raw[(r, s)] = theta[(r, s)] / lam_sum if lam_sum else Fraction(0)

    peak = max(raw.values(), default=Fraction(0))
    w = {pair: (v / peak if peak else v) for pair, v in raw.items()}
    w_star = {(r, s) for (r, s), v in w.items() if v > w[(s, r)]}
    return {
        "nodes": tuple(nodes),
        "participation": participation,
        "theta": theta,
        "h": h_per_event,
        "lam": lam_per_event,
        "w": w,
        "w_star": w_star,
    }


# ---------------------------------------------------------------------------
# ego networks


def brute_ego(adj, v, weighted):
    """Set-logic ego measures for node v of a dense adjacency (list of lists)."""
    n_nodes = len(adj)
    alters = [u for u in range(n_nodes) if u != v and adj[v][u] > 0]
    n = len(alters)
    feats = dict.fromkeys(
        ("in_ratio", "out_degree", "out_ratio", "efficiency", "effective_size", "density"),
        0.0,
    )
    if n:
        ties = 0.0
        for a in alters:
            for b in alters:
                if a != b and adj[a][b] > 0:
                    ties += adj[a][b] if weighted else 1.0
        q = sum(adj[v][u] for u in alters) if weighted else float(n)
        feats["effective_size"] = n - ties / n
        feats["efficiency"] = 1.0 - ties / (n * n)
        feats["out_degree"] = q
        feats["out_ratio"] = q / n
        if n >= 2:
            members = [v] + alters
            m = 0.0
            for a in members:
                for b in members:
                    if a != b and adj[a][b] > 0:
                        m += adj[a][b] if weighted else 1.0
            feats["density"] = 2.0 * m / (n * (n - 1))
    in_alters = [u for u in range(n_nodes) if u != v and adj[u][v] > 0]
    if in_alters:
        indeg = sum(adj[u][v] for u in in_alters) if weighted else float(len(in_alters))
        feats["in_ratio"] = indeg / len(in_alters)
    return feats


# ---------------------------------------------------------------------------
# shortest paths: exact Floyd-Warshall plus path counting


def exact_distances(adj, weighted):
    """All-pairs shortest distances as Fractions (None = unreachable)."""
    n = len(adj)
    dist = [[None] * n for _ in range(n)]
    for i in range(n):
        dist[i][i] = Fraction(0)
    for i in range(n):
        for j in range(n):
            if i != j and adj[i][j] > 0:
                dist[i][j] = Fraction(1) if not weighted else Fraction(1) / Fraction(adj[i][j])
    for k in range(n):
        for i in range(n):
            if dist[i][k] is None:
                continue
            for j in range(n):
                if dist[k][j] is None:
                    continue
                via = dist[i][k] + dist[k][j]
                if dist[i][j] is None or via < dist[i][j]:
                    dist[i][j] = via
    return dist


def _path_counts(adj, weighted, dist, s):
    """Number of shortest paths from s to every node, by distance ordering."""
    n = len(adj)
    sigma = [0] * n
    sigma[s] = 1
    order = sorted(
        (v for v in range(n) if v != s and dist[s][v] is not None),
        key=lambda v: dist[s][v],
    )
    for v in order:
        for u in range(n):
            if u == v or adj[u][v] <= 0 or dist[s][u] is None:
                continue
            cost = Fraction(1) if not weighted else Fraction(1) / Fraction(adj[u][v])
            if dist[s][u] + cost == dist[s][v]:
                sigma[v] += sigma[u]
    return sigma


def brute_closeness(adj, weighted):
    """(r / total distance) * (r / (n - 1)) from exact distances.

    The two divisions and the product are done in float exactly like a
    direct transcription of the formula, so integer-valued unweighted
    inputs reproduce the package values bit for bit.
    """
    n = len(adj)
    dist = exact_distances(adj, weighted)
    out = []
    for v in range(n):
        reach = [dist[v][u] for u in range(n) if u != v and dist[v][u] is not None]
        r = len(reach)
        if n <= 1 or r == 0:
            out.append(0.0)
            continue
        total = float(sum(reach))
        out.append((r / total) * (r / (n - 1)))
    return out


def brute_betweenness(adj, weighted):
    """Pair-summation betweenness from exact distances and path counts."""
    n = len(adj)
    dist = exact_distances(adj, weighted)
    sigma = [_path_counts(adj, weighted, dist, s) for s in range(n)]
    scores = []
    for v in range(n):
        acc = Fraction(0)
        for s in range(n):
            if s == v:
                continue
            for t in range(n):
                if t == v or t == s or dist[s][t] is None:
                    continue
                if dist[s][v] is None or dist[v][t] is None:
                    continue
                if dist[s][v] + dist[v][t] == dist[s][t]:
                    acc += Fraction(sigma[s][v] * sigma[v][t], sigma[s][t])
        scores.append(float(acc))
    return scores


def brute_clustering(adj, weighted):
    """Triple-loop clustering on the max-symmetrized projection."""
    n = len(adj)
    sym = [[max(adj[i][j], adj[j][i]) if i != j else 0.0 for j in range(n)] for i in range(n)]
    peak = max((sym[i][j] for i in range(n) for j in range(n)), default=0.0)
    out = []
    for v in range(n):
        nbrs = [u for u in range(n) if sym[v][u] > 0]
        deg = len(nbrs)
        if deg < 2:
            out.append(0.0)
            continue
        closed = 0.0
        for i in nbrs:
            for j in nbrs:
                if i == j or sym[i][j] <= 0:
                    continue
                if weighted:
                    closed += ((sym[v][i] / peak) * (sym[i][j] / peak) * (sym[j][v] / peak)) ** (1.0 / 3.0)
                else:
                    closed += 1.0
        out.append(closed / (deg * (deg - 1)))
    return out


def solve_pagerank(adj, weighted, damping=0.85):
    """Stationary distribution by dense linear solve instead of iteration."""
    a = np.array(adj, dtype=float)
    n = len(a)
    if n == 0:
        return np.zeros(0)
    if not weighted:
        a = (a > 0).astype(float)
    np.fill_diagonal(a, 0.0)
    out = a.sum(axis=1)
    trans = np.zeros_like(a)
    for i in range(n):
        if out[i] > 0:
            trans[i] = a[i] / out[i]
        else:
            trans[i] = 1.0 / n
    system = np.eye(n) - damping * trans.T
    rhs = np.full(n, (1.0 - damping) / n)
    return np.linalg.solve(system, rhs)


# ---------------------------------------------------------------------------
# classification metrics


def pairwise_auc(probabilities, labels):
    """O(n^2) probability-of-correct-ranking with half credit for ties."""
    pos = [p for p, l in zip(probabilities, labels) if l == 1]
    neg = [p for p, l in zip(probabilities, labels) if l == 0]
    if not pos or not neg:
        raise ValueError("both classes required")
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def formula_metrics(tp, fp, fn, tn):
    def ratio(num, den):
        return num / den if den else 0.0

    precision = ratio(tp, tp + fp)
    recall = ratio(tp, tp + fn)
    f1 = ratio(2.0 * precision * recall, precision + recall)
    accuracy = ratio(tp + tn, tp + fp + fn + tn)
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = ratio(tp * tn - fp * fn, math.sqrt(den)) if den else 0.0
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "accuracy": accuracy,
        "mcc": mcc,
    }


# ---------------------------------------------------------------------------
# communities


def brute_modularity(weights, assignment):
    """Loop-wise Newman modularity on the symmetrized half-sum matrix."""
    n = len(weights)
    sym = [
        [0.0 if i == j else (weights[i][j] + weights[j][i]) / 2.0 for j in range(n)]
        for i in range(n)
    ]
    two_m = sum(sym[i][j] for i in range(n) for j in range(n))
    if two_m == 0:
        return 0.0
    k = [sum(sym[i][j] for j in range(n)) for i in range(n)]
    q = 0.0
    for i in range(n):
        for j in range(n):
            if assignment[i] == assignment[j]:
                q += sym[i][j] / two_m - (k[i] * k[j]) / (two_m * two_m)
    return q


def iter_partitions(items):
    """Every set partition of ``items`` (restricted-growth enumeration)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for smaller in iter_partitions(rest):
        for i in range(len(smaller)):
            yield smaller[:i] + [[first] + smaller[i]] + smaller[i + 1 :]
        yield [[first]] + smaller


def best_partition(weights):
    """(max modularity, list of argmax partitions) by exhaustive enumeration."""
    n = len(weights)
    best_q = -math.inf
    argmax = []
    for parts in iter_partitions(range(n)):
        assignment = [0] * n
        for c, members in enumerate(parts):
            for m in members:
                assignment[m] = c
        q = brute_modularity(weights, assignment)
        if q > best_q + 1e-12:
            best_q = q
            argmax = [parts]
        elif abs(q - best_q) <= 1e-12:
            argmax.append(parts)
    return best_q, argmax


# ---------------------------------------------------------------------------
# numerics


def central_difference(f, vec, h=1e-5):
    """Two-sided finite-difference gradient of a scalar function of a vector."""
    grad = np.zeros_like(vec)
    for i in range(len(vec)):
        up = vec.copy()
        up[i] += h
        down = vec.copy()
        down[i] -= h
        grad[i] = (f(up) - f(down)) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# scalar message passing (no numpy)


def _leaky(v):
    return v if v > 0 else 0.2 * v


def _elu(v):
    return v if v > 0 else math.exp(v) - 1.0


def _sigmoid(v):
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    ev = math.exp(v)
    return ev / (1.0 + ev)


def _matmul_rows(rows, weight):
    out_dim = len(weight[0])
    return [
        [sum(row[k] * weight[k][c] for k in range(len(row))) for c in range(out_dim)]
        for row in rows
    ]


def scalar_gat_forward(x, layers, edges):
    """List-based single-head attention forward; edges carry no self loops."""
    h = [list(row) for row in x]
    n = len(h)
    incoming = {d: [d] for d in range(n)}
    for src, dst in edges:
        incoming[dst].append(src)
    last = len(layers) - 1
    for li, layer in enumerate(layers):
        g = _matmul_rows(h, layer["weight"])
        dout = len(layer["bias"])
        a_self = layer["att"][:dout]
        a_neigh = layer["att"][dout:]
        z = []
        for d in range(n):
            scores = [
                _leaky(
                    sum(g[d][k] * a_self[k] for k in range(dout))
                    + sum(g[s][k] * a_neigh[k] for k in range(dout))
                )
                for s in incoming[d]
            ]
            m = max(scores)
            ex = [math.exp(sc - m) for sc in scores]
            tot = sum(ex)
            alpha = [e / tot for e in ex]
            z.append(
                [
                    sum(alpha[i] * g[s][c] for i, s in enumerate(incoming[d]))
                    + layer["bias"][c]
                    for c in range(dout)
                ]
            )
        h = z if li == last else [[_elu(v) for v in row] for row in z]
    return [_sigmoid(row[0]) for row in h]


def scalar_sage_forward(x, layers, edges):
    """List-based self-inclusive mean aggregation; edges carry no self loops."""
    h = [list(row) for row in x]
    n = len(h)
    nbrs = {d: [] for d in range(n)}
    for src, dst in edges:
        nbrs[dst].append(src)
    last = len(layers) - 1
    for li, layer in enumerate(layers):
        agg = []
        for d in range(n):
            cnt = 1 + len(nbrs[d])
            agg.append(
                [
                    (h[d][k] + sum(h[s][k] for s in nbrs[d])) / cnt
                    for k in range(len(h[d]))
                ]
            )
        z = _matmul_rows(agg, layer["weight"])
        z = [
            [z[d][c] + layer["bias"][c] for c in range(len(layer["bias"]))]
            for d in range(n)
        ]
        h = z if li == last else [[_elu(v) for v in row] for row in z]
    return [_sigmoid(row[0]) for row in h]
