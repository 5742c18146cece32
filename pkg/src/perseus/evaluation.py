"""Metrics, ROC analysis, split construction, t-tests and timing summaries.

Every metric with a zero denominator is defined as 0 so single-class
predictions produce numbers instead of NaNs; report consumers can rely on
that convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .ingest import CrowdPumpMessage

DEFAULT_GRID = tuple(round(0.05 * i, 2) for i in range(21))
MIN_SPREADERS_PER_TOKEN = 4
SPLIT_NAMES = ("train", "val", "test")

METRIC_NAMES = ("precision", "recall", "f1", "accuracy", "mcc")


class DegenerateVariance(ValueError):
    """Both samples are constant; the t statistic is undefined."""


class SplitInfeasible(ValueError):
    """Too few usable tokens to form three chronological splits."""


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion_from(y_true: Sequence[int], y_pred: Sequence[int]) -> Confusion:
    t = np.asarray(y_true, dtype=int)
    p = np.asarray(y_pred, dtype=int)
    if t.shape != p.shape:
        raise ValueError("label/prediction length mismatch")
    return Confusion(
        tp=int(np.sum((p == 1) & (t == 1))),
        fp=int(np.sum((p == 1) & (t == 0))),
        fn=int(np.sum((p == 0) & (t == 1))),
        tn=int(np.sum((p == 0) & (t == 0))),
    )


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def metrics(confusion: Confusion) -> dict[str, float]:
    tp, fp, fn, tn = confusion.tp, confusion.fp, confusion.fn, confusion.tn
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    accuracy = _ratio(tp + tn, confusion.total)
    mcc_den = math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    mcc = _ratio(tp * tn - fp * fn, mcc_den)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "accuracy": accuracy,
        "mcc": mcc,
    }


def f1_score(y_true: Sequence[int], y_pred: Sequence[int]) -> float:
    return metrics(confusion_from(y_true, y_pred))["f1"]


def roc_auc(probabilities: Sequence[float], labels: Sequence[int]) -> float:
    """Rank-formulation AUC; tied scores contribute half a concordant pair."""
    p = np.asarray(probabilities, dtype=float)
    y = np.asarray(labels, dtype=int)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    order = np.argsort(p, kind="stable")
    ranks = np.empty(len(p), dtype=float)
    sorted_p = p[order]
    i = 0
    while i < len(p):
        j = i
        while j + 1 < len(p) and sorted_p[j + 1] == sorted_p[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1  # average 1-based rank
        i = j + 1
    pos_rank_sum = float(np.sum(ranks[y == 1]))
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def threshold_sweep(
    probabilities: Sequence[float],
    labels: Sequence[int],
    grid: Sequence[float] = DEFAULT_GRID,
) -> list[dict[str, float]]:
    p = np.asarray(probabilities, dtype=float)
    y = np.asarray(labels, dtype=int)
    rows = []
    for th in grid:
        pred = (p >= th).astype(int)
        row = {"threshold": float(th)}
        row.update(metrics(confusion_from(y, pred)))
        rows.append(row)
    return rows


def best_threshold(sweep: Sequence[Mapping[str, float]]) -> float:
    """Threshold with the highest F1; earliest grid point on ties."""
    if not sweep:
        raise ValueError("empty sweep")
    best = sweep[0]
    for row in sweep[1:]:
        if row["f1"] > best["f1"]:
            best = row
    return best["threshold"]


# ---------------------------------------------------------------------------
# Chronological splitting


@dataclass(frozen=True)
class SplitPlan:
    cut1: datetime
    cut2: datetime
    fractions: tuple[float, float, float]
    tokens: tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]
    dropped: tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]
    message_counts: tuple[int, int, int]

    def split_of(self, message: CrowdPumpMessage) -> Optional[str]:
        """Split name for a message, None when its token was dropped there."""
        t = message.source_datetime
        idx = 0 if t < self.cut1 else (1 if t < self.cut2 else 2)
        if message.cryptocurrency not in self.tokens[idx]:
            return None
        return SPLIT_NAMES[idx]


def _token_census(chunk: Sequence[CrowdPumpMessage]) -> tuple[tuple[str, ...], tuple[str, ...]]:
    spreaders: dict[str, set[str]] = {}
    for m in chunk:
        spreaders.setdefault(m.cryptocurrency, set()).add(m.entity_id)
    kept = tuple(sorted(c for c, s in spreaders.items() if len(s) >= MIN_SPREADERS_PER_TOKEN))
    dropped = tuple(sorted(c for c, s in spreaders.items() if len(s) < MIN_SPREADERS_PER_TOKEN))
    return kept, dropped


def _plan_for(messages: Sequence[CrowdPumpMessage], i: int, j: int) -> SplitPlan:
    chunks = (messages[:i], messages[i:j], messages[j:])
    kept, dropped = zip(*(_token_census(c) for c in chunks))
    total = sum(len(k) for k in kept)
    fractions = tuple(len(k) / total for k in kept) if total else (0.0, 0.0, 0.0)
    return SplitPlan(
        cut1=messages[i].source_datetime,
        cut2=messages[j].source_datetime,
        fractions=fractions,  # type: ignore[arg-type]
        tokens=kept,  # type: ignore[arg-type]
        dropped=dropped,  # type: ignore[arg-type]
        message_counts=tuple(len(c) for c in chunks),  # type: ignore[arg-type]
    )


def _plan_error(plan: SplitPlan, targets: Sequence[float]) -> float:
    if not any(plan.tokens):
        return math.inf
    return sum(abs(f - t) for f, t in zip(plan.fractions, targets))


def chronological_split(
    messages: Sequence[CrowdPumpMessage],
    targets: Sequence[float] = (0.70, 0.15, 0.15),
    coarse: int = 40,
) -> SplitPlan:
    """Search two cut timestamps whose token-count fractions track targets.

    A token (cryptocurrency) counts toward a split only when at least four
    distinct spreaders announce it inside that split; weaker appearances are
    dropped from the split and listed in the plan. The search scans a coarse
    grid of candidate cut indices, then refines exhaustively around the best
    coarse cell, minimizing the L1 distance to the target fractions.
    """
    if len(targets) != 3 or abs(sum(targets) - 1.0) > 1e-9:
        raise ValueError("targets must be three fractions summing to 1")
    msgs = sorted(messages, key=lambda m: (m.source_datetime, m.pid))
    n = len(msgs)
    distinct = {m.cryptocurrency for m in msgs}
    if n < 3 or len(distinct) < 3:
        raise SplitInfeasible(
            f"need at least 3 messages and 3 tokens, have {n} and {len(distinct)}"
        )

    def candidates(lo: int, hi: int, budget: int) -> list[int]:
        span = range(max(1, lo), min(n - 1, hi) + 1)
        if len(span) <= budget:
            return list(span)
        step = len(span) / budget
        return sorted({span[int(k * step)] for k in range(budget)})

    def scan(ci: list[int], cj: list[int]) -> tuple[float, int, int]:
        best = (math.inf, -1, -1)
        for i in ci:
            for j in cj:
                if j <= i:
                    continue
                err = _plan_error(_plan_for(msgs, i, j), targets)
                if err < best[0]:
                    best = (err, i, j)
        return best

    err, bi, bj = scan(candidates(1, n - 1, coarse), candidates(1, n - 1, coarse))
    if bi < 0:
        raise SplitInfeasible("no valid cut pair found")
    stride = max(1, (n - 2) // coarse)
    err2, ri, rj = scan(
        candidates(bi - stride, bi + stride, 2 * stride + 1),
        candidates(bj - stride, bj + stride, 2 * stride + 1),
    )
    if err2 < err:
        bi, bj = ri, rj
    plan = _plan_for(msgs, bi, bj)
    if not any(plan.tokens):
        raise SplitInfeasible("no token reaches four spreaders in any split")
    return plan


# ---------------------------------------------------------------------------
# Welch's t-test with a self-contained t CDF


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz method)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if x < 0.0 or x > 1.0:
        raise ValueError("x outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_bt = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= t) for Student's t."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def welch_t_test(group_a: Sequence[float], group_b: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each group needs at least two observations")
    va = float(np.var(a, ddof=1))
    vb = float(np.var(b, ddof=1))
    if va == 0.0 and vb == 0.0:
        raise DegenerateVariance("both groups are constant")
    sa, sb = va / len(a), vb / len(b)
    statistic = (float(np.mean(a)) - float(np.mean(b))) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (len(a) - 1) + sb**2 / (len(b) - 1))
    if statistic == 0.0:
        return 0.0, 1.0
    return statistic, student_t_sf2(statistic, df)


def feature_t_tests(
    x: np.ndarray,
    y: np.ndarray,
    feature_names: Sequence[str],
) -> dict[str, Optional[tuple[float, float]]]:
    """Per-feature Welch test of mastermind rows against accomplice rows.

    Features where the statistic is undefined (a class missing, too small,
    or both groups constant) map to None.
    """
    if x.shape[1] != len(feature_names):
        raise ValueError("feature name count does not match matrix width")
    y = np.asarray(y, dtype=int)
    out: dict[str, Optional[tuple[float, float]]] = {}
    pos = x[y == 1]
    neg = x[y == 0]
    for k, name in enumerate(feature_names):
        if len(pos) < 2 or len(neg) < 2:
            out[name] = None
            continue
        try:
            out[name] = welch_t_test(pos[:, k], neg[:, k])
        except DegenerateVariance:
            out[name] = None
    return out


# ---------------------------------------------------------------------------
# Timing


def timing_report(
    epoch_seconds: Iterable[float],
    inference_samples: Iterable[tuple[int, float]] = (),
) -> dict:
    """Empirical CDF of epoch times plus mean inference time per graph size."""
    times = sorted(float(t) for t in epoch_seconds)
    cdf = [[t, (i + 1) / len(times)] for i, t in enumerate(times)]
    by_nodes: dict[int, list[float]] = {}
    for n_nodes, seconds in inference_samples:
        by_nodes.setdefault(int(n_nodes), []).append(float(seconds))
    inference = {
        str(n): {"mean_seconds": sum(v) / len(v), "samples": len(v)}
        for n, v in sorted(by_nodes.items())
    }
    return {"epoch_cdf": cdf, "inference_by_node_count": inference}
