"""Cascade-based network inference: ranks, pair strengths, W and W*."""

import sys
from datetime import datetime, timedelta, timezone
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))
import oracles

from perseus.diffusion import (
    AGG_QUOTIENT,
    GraphTooSmall,
    RankingVector,
    build_graph,
    build_graphs,
    derive_directed,
    infer_weighted,
    jaccard_theta,
    lambda_weights,
    load_graph,
    pair_strength,
    ranking_vector,
    save_graph,
)
from perseus.events import ObservationPeriod, build_event_sets
from perseus.ingest import CrowdPumpMessage, TradeDirection

T0 = datetime(2024, 1, 1, tzinfo=timezone.utc)

_pid = iter(range(1, 100000))


def msg(channel, hours, coin="SUI"):
    return CrowdPumpMessage(
        pid=next(_pid),
        entity_id=channel,
        trade_direction=TradeDirection.LONG,
        source_datetime=T0 + timedelta(hours=hours),
        exchange="Unspecified",
        cryptocurrency=coin,
        channel_participants=0,
        entry_prices=(Decimal("1.0"),),
        target_prices=(Decimal("1.1"),),
        stop_loss=None,
        message_text="t",
    )


def events_from(schedule, coin="SUI"):
    """Events for a list of cascades, each a list of (channel, hour)."""
    messages = [msg(c, h, coin) for cascade in schedule for c, h in cascade]
    messages.sort(key=lambda m: (m.source_datetime, m.pid))
    horizon = max(h for cascade in schedule for _, h in cascade) + 1
    period = ObservationPeriod(T0, T0 + timedelta(hours=horizon), "all")
    sets = build_event_sets(messages, [period])
    return sets[("all", coin)]


# the canonical two-cascade fixture: a leads b and c, then a leads c again,
# plus an unrelated singleton x to satisfy the four-spreader floor
CANONICAL = [
    [("a", 0), ("b", 1), ("c", 2)],
    [("a", 200), ("c", 201)],
    [("x", 400)],
]


def test_pair_strength_formula():
    l2 = RankingVector(event_id=0, ranks={"a": 1, "b": 2})
    assert pair_strength(l2, "a", "b") == pytest.approx(0.5)
    l3 = RankingVector(event_id=0, ranks={"a": 1, "b": 2, "c": 3})
    assert pair_strength(l3, "a", "c") == pytest.approx(1 / 6)
    assert pair_strength(l3, "b", "a") == 0.0
    with pytest.raises(ValueError):
        pair_strength(l3, "a", "a")


def test_ranking_vector_orders_by_announcement():
    events = events_from([[("a", 0), ("b", 1), ("c", 2)], [("z", 300)]])
    ranks = ranking_vector(events[0]).ranks
    assert ranks == {"a": 1, "b": 2, "c": 3}
    single = ranking_vector(events[1]).ranks
    assert single == {"z": 1}


def test_lambda_three_chain():
    events = events_from([[("a", 0), ("b", 1), ("c", 2)]])
    lam = lambda_weights(events[0])
    assert lam[("a", "b")] == pytest.approx(0.75)
    assert lam[("a", "c")] == pytest.approx(0.25)
    assert lam[("b", "c")] == pytest.approx(1.0)
    # the last-ranked spreader has nobody to influence
    assert lam[("c", "a")] == 0.0
    assert lam[("c", "b")] == 0.0


def test_lambda_rows_partition_or_vanish():
    rng = np.random.default_rng(5)
    for _ in range(50):
        k = int(rng.integers(2, 7))
        cascade = [(f"s{i}", float(i)) for i in range(k)]
        events = events_from([cascade])
        lam = lambda_weights(events[0])
        spreaders = {r for r, _ in lam}
        for r in spreaders:
            row = sum(v for (rr, _), v in lam.items() if rr == r)
            assert row == pytest.approx(1.0, abs=1e-12) or row == 0.0


def test_jaccard_theta():
    part = {"a": frozenset({1, 2}), "b": frozenset({1}), "c": frozenset({3})}
    assert jaccard_theta(part, "a", "b") == pytest.approx(0.5)
    assert jaccard_theta(part, "a", "a") == pytest.approx(1.0)
    assert jaccard_theta(part, "a", "c") == 0.0


def test_canonical_fixture_weights():
    events = events_from(CANONICAL)
    nodes, w, participation = infer_weighted(events)
    assert nodes == ("a", "b", "c", "x")
    idx = {n: i for i, n in enumerate(nodes)}
    assert w[idx["a"], idx["b"]] == pytest.approx(0.3, abs=1e-12)
    assert w[idx["a"], idx["c"]] == pytest.approx(1.0, abs=1e-12)
    assert w[idx["b"], idx["c"]] == pytest.approx(0.4, abs=1e-12)
    assert participation["a"] == frozenset({0, 1})
    assert participation["x"] == frozenset({2})
    # every other entry, including the whole x row and column, is zero
    mask = np.zeros_like(w, dtype=bool)
    for r, s in [("a", "b"), ("a", "c"), ("b", "c")]:
        mask[idx[r], idx[s]] = True
    assert np.all(w[~mask] == 0.0)

    star = derive_directed(w)
    arrows = {(nodes[r], nodes[s]) for r, s in zip(*np.nonzero(star))}
    assert arrows == {("a", "b"), ("a", "c"), ("b", "c")}


def test_repeated_two_spreader_cascade_tops_the_scale():
    events = events_from(
        [
            [("a", 0), ("b", 1)],
            [("a", 200), ("b", 201)],
            [("c", 400), ("d", 401)],
        ]
    )
    nodes, w, _ = infer_weighted(events)
    idx = {n: i for i, n in enumerate(nodes)}
    assert w[idx["a"], idx["b"]] == pytest.approx(1.0)
    assert w[idx["c"], idx["d"]] == pytest.approx(0.5)


def test_quotient_aggregation_mode():
    events = events_from(CANONICAL)
    nodes, w, _ = infer_weighted(events, mode=AGG_QUOTIENT)
    idx = {n: i for i, n in enumerate(nodes)}
    ref = oracles.brute_influence(
        [[("a", 0), ("b", 1), ("c", 2)], [("a", 0), ("c", 1)], [("x", 0)]],
        mode="paper_literal_quotient",
    )
    for (r, s), val in ref["w"].items():
        assert w[idx[r], idx[s]] == pytest.approx(float(val), abs=1e-12)
    # quotient raw: theta/sum-lambda -> ab 2/3, ac 4/5, bc 1/2, peak 4/5
    assert w[idx["a"], idx["b"]] == pytest.approx(5 / 6, abs=1e-12)
    assert w[idx["a"], idx["c"]] == pytest.approx(1.0, abs=1e-12)
    assert w[idx["b"], idx["c"]] == pytest.approx(0.625, abs=1e-12)


def test_graph_too_small():
    with pytest.raises(GraphTooSmall):
        infer_weighted(events_from([[("a", 0), ("b", 1), ("c", 2)]]))


def test_build_graphs_reports_dropped_coins():
    small = events_from([[("a", 0), ("b", 1)]], coin="ARB")
    big = events_from(CANONICAL)
    graphs, dropped = build_graphs({("all", "ARB"): small, ("all", "SUI"): big})
    assert list(graphs) == ["all/SUI"]
    assert dropped == [("all", "ARB", 2)]
    g = graphs["all/SUI"]
    assert g.graph_id == "all/SUI"
    assert g.n == 4


def test_directed_antisymmetry_and_scale_invariance():
    rng = np.random.default_rng(17)
    for _ in range(30):
        n = int(rng.integers(2, 9))
        w = rng.random((n, n)) * (rng.random((n, n)) < 0.6)
        np.fill_diagonal(w, 0.0)
        star = derive_directed(w)
        assert np.all(star * star.T == 0)
        assert np.array_equal(star, derive_directed(w * float(rng.uniform(0.1, 50.0))))
        # an arrow always points up the weight comparison
        for r, s in zip(*np.nonzero(star)):
            assert w[r, s] > w[s, r]


def test_relabeling_equivariance():
    events = events_from(CANONICAL)
    renamed = {"a": "w_3", "b": "q_1", "c": "m_2", "x": "b_9"}
    schedule = [
        [(renamed[c], h) for c, h in cascade] for cascade in CANONICAL
    ]
    nodes1, w1, _ = infer_weighted(events)
    nodes2, w2, _ = infer_weighted(events_from(schedule))
    perm = [nodes2.index(renamed[n]) for n in nodes1]
    assert np.allclose(w2[np.ix_(perm, perm)], w1, atol=1e-15)


def test_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(23)
    for _ in range(25):
        n_spreaders = int(rng.integers(4, 7))
        names = [f"s{i}" for i in range(n_spreaders)]
        schedule = []
        hour = 0.0
        for _ in range(int(rng.integers(1, 6))):
            size = int(rng.integers(1, n_spreaders + 1))
            members = rng.choice(names, size=size, replace=False)
            schedule.append([(str(m), hour + float(j)) for j, m in enumerate(members)])
            hour += 500.0
        if len({c for cascade in schedule for c, _ in cascade}) < 4:
            continue
        events = events_from(schedule)
        nodes, w, _ = infer_weighted(events)
        idx = {n: i for i, n in enumerate(nodes)}
        base = [[(c, h) for c, h in cascade] for cascade in schedule]
        ref = oracles.brute_influence(base)
        assert nodes == ref["nodes"]
        for (r, s), val in ref["w"].items():
            assert abs(w[idx[r], idx[s]] - float(val)) < 1e-9
        star = derive_directed(w)
        arrows = {(nodes[r], nodes[s]) for r, s in zip(*np.nonzero(star))}
        assert arrows == ref["w_star"]


def test_graph_files_round_trip(tmp_path):
    graph = build_graph("SUI", "all", events_from(CANONICAL))
    save_graph(graph, tmp_path)
    again = load_graph(tmp_path, "SUI", "all")
    assert again.nodes == graph.nodes
    assert again.cryptocurrency == "SUI" and again.period == "all"
    # weights persist at nine decimal places
    assert np.allclose(again.weighted, graph.weighted, atol=5e-10)
    assert np.array_equal(again.directed, graph.directed)
    assert again.event_participation == graph.event_participation
