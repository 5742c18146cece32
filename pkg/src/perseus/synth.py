"""Synthetic ground-truth networks, cascades and price series.

The real corpus is proprietary, so recovery experiments and end-to-end
tests run on generated data: a planted mastermind/accomplice network, an
independent-cascade message process over it rendered as parseable signal
texts, and price series with injected ramps that achieve each event's
targets at a configured rate.

Everything is deterministic under the seed. Target-hit counts are drawn
from a hash of (seed, pair, event index) rather than the shared RNG stream
so that price generation can reproduce them from the messages alone.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional, Sequence

import json

import numpy as np

from .ingest import (
    CrowdPumpMessage,
    RawMessage,
    SkipReport,
    parse_corpus,
    raw_message_to_json,
)
from .market import PriceSeries

EVENT_SPACING_HOURS = 112.0
EVENT_SPACING_JITTER_HOURS = 16.0
COIN_STAGGER_HOURS = 13.0
PEAK_LAG_HOURS = 6.0
DECAY_HOURS = 12.0
CLUSTER_GAP_HOURS = 48.0
MIN_DELAY_HOURS = 1.0 / 900.0  # four seconds
BASE_VOLUME = 1000.0
RAMP_VOLUME_FACTOR = 4.0
DEFAULT_START = datetime(2023, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class SynthConfig:
    n_spreaders: int = 30
    n_masterminds: int = 3
    n_events: int = 40
    n_coins: int = 2
    forward_prob: float = 0.5
    seed: int = 0
    price_drift: float = 0.0
    price_volatility: float = 0.0002
    target_hit_rate: float = 0.5
    intra_edge_prob: float = 0.1
    mean_delay_hours: float = 1.0
    targets_per_message: int = 5
    target_step: float = 0.02
    bar_minutes: int = 5
    start: datetime = DEFAULT_START

    def __post_init__(self) -> None:
        if not 0 < self.n_masterminds < self.n_spreaders:
            raise ValueError("need 0 < n_masterminds < n_spreaders")
        if not 0.0 < self.forward_prob <= 1.0:
            raise ValueError("forward_prob must be in (0, 1]")
        if self.n_events < 1 or self.n_coins < 1:
            raise ValueError("n_events and n_coins must be positive")
        if not 0.0 <= self.target_hit_rate <= 1.0:
            raise ValueError("target_hit_rate must be in [0, 1]")
        if self.start.tzinfo is None:
            raise ValueError("start must be timezone-aware")

    def coin(self, k: int) -> str:
        return f"COIN{k:02d}"

    def pair(self, k: int) -> str:
        return f"{self.coin(k)}USDT"


@dataclass(frozen=True)
class GroundTruth:
    """Planted network: who points at whom, and who the masterminds are."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    labels: dict[str, int]
    communities: dict[str, int]

    @property
    def masterminds(self) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if self.labels[n] == 1)

    def adjacency(self) -> np.ndarray:
        index = {n: i for i, n in enumerate(self.nodes)}
        adj = np.zeros((len(self.nodes), len(self.nodes)))
        for src, dst in self.edges:
            adj[index[src], index[dst]] = 1.0
        return adj

    def to_json(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [list(e) for e in self.edges],
            "labels": self.labels,
            "communities": self.communities,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        return cls(
            nodes=tuple(obj["nodes"]),
            edges=tuple((s, d) for s, d in obj["edges"]),
            labels={k: int(v) for k, v in obj["labels"].items()},
            communities={k: int(v) for k, v in obj["communities"].items()},
        )


@dataclass(frozen=True)
class CascadePlan:
    """One generated event: who was reached and the shared price ladder."""

    coin: str
    cluster_index: int
    root: str
    activations: tuple[tuple[str, datetime], ...]
    entry: float
    targets: tuple[float, ...]
    stop: float


def generate_network(config: SynthConfig) -> GroundTruth:
    """Masterminds feeding disjoint accomplice communities.

    Every mastermind points at each member of its community; accomplices
    get sparse directed edges among community peers.
    """
    rng = np.random.default_rng(config.seed)
    names = tuple(f"channel{i:03d}" for i in range(config.n_spreaders))
    mm_idx = set(
        int(i)
        for i in rng.choice(config.n_spreaders, size=config.n_masterminds, replace=False)
    )
    masterminds = [names[i] for i in sorted(mm_idx)]
    accomplices = [n for i, n in enumerate(names) if i not in mm_idx]
    communities: dict[str, int] = {}
    for c, m in enumerate(masterminds):
        communities[m] = c
    members: list[list[str]] = [[] for _ in masterminds]
    for k, node in enumerate(accomplices):
        c = k % config.n_masterminds
        communities[node] = c
        members[c].append(node)
    edges: list[tuple[str, str]] = []
    for c, m in enumerate(masterminds):
        for node in members[c]:
            edges.append((m, node))
    for c in range(config.n_masterminds):
        group = members[c]
        for a in group:
            for b in group:
                if a != b and rng.random() < config.intra_edge_prob:
                    edges.append((a, b))
    mastermind_set = set(masterminds)
    labels = {n: (1 if n in mastermind_set else 0) for n in names}
    return GroundTruth(
        nodes=names,
        edges=tuple(edges),
        labels=labels,
        communities=communities,
    )


def _hit_count(config: SynthConfig, pair: str, cluster_index: int) -> int:
    """Deterministic Binomial(targets, hit_rate) draw keyed by event identity."""
    digest = hashlib.sha256(
        f"{config.seed}|{pair}|{cluster_index}".encode("utf-8")
    ).digest()
    u = int.from_bytes(digest, "big") / 2.0**256
    n, p = config.targets_per_message, config.target_hit_rate
    cumulative = 0.0
    for k in range(n + 1):
        cumulative += math.comb(n, k) * p**k * (1.0 - p) ** (n - k)
        if u < cumulative:
            return k
    return n


def _snap_to_bar(t: datetime, bar_minutes: int) -> datetime:
    epoch = int(t.timestamp())
    step = bar_minutes * 60
    return datetime.fromtimestamp(epoch - epoch % step, tz=timezone.utc)


def _spread(
    truth: GroundTruth,
    out_neighbors: dict[str, list[str]],
    root: str,
    t0: datetime,
    config: SynthConfig,
    rng: np.random.Generator,
) -> list[tuple[str, datetime]]:
    """Independent cascade from root: each edge fires once with forward_prob."""
    activated: dict[str, datetime] = {}
    heap: list[tuple[float, str]] = [(t0.timestamp(), root)]
    scheduled = {root: t0.timestamp()}
    while heap:
        ts, node = heapq.heappop(heap)
        if node in activated:
            continue
        when = datetime.fromtimestamp(ts, tz=timezone.utc)
        activated[node] = when
        for nxt in out_neighbors.get(node, ()):
            if nxt in activated:
                continue
            if rng.random() >= config.forward_prob:
                continue
            delay = max(float(rng.exponential(config.mean_delay_hours)), MIN_DELAY_HOURS)
            t_next = ts + delay * 3600.0
            if nxt not in scheduled or t_next < scheduled[nxt]:
                scheduled[nxt] = t_next
                heapq.heappush(heap, (t_next, nxt))
    return sorted(activated.items(), key=lambda kv: (kv[1], kv[0]))


def _format_price(value: float) -> str:
    return f"{value:.8f}"


def _render_text(entity: str, pair: str, plan_entry: float, targets: Sequence[float], stop: float) -> str:
    target_text = " ".join(_format_price(t) for t in targets)
    return (
        f"{entity} {pair} LONG Entry {_format_price(plan_entry)} "
        f"Targets {target_text} Stop loss {_format_price(stop)}"
    )


def generate_cascades(
    truth: GroundTruth, config: SynthConfig
) -> tuple[list[RawMessage], list[CascadePlan]]:
    """Render independent-cascade events as parseable signal messages.

    Event j runs on coin j mod n_coins from a mastermind chosen at random;
    every reached spreader posts the event's shared ladder under its own
    channel prefix (texts differ per channel, so no broadcast flags fire).
    """
    rng = np.random.default_rng(config.seed + 1)
    out_neighbors: dict[str, list[str]] = {}
    for src, dst in truth.edges:
        out_neighbors.setdefault(src, []).append(dst)
    for src in out_neighbors:
        out_neighbors[src].sort()
    masterminds = truth.masterminds
    clock_hours = [k * COIN_STAGGER_HOURS for k in range(config.n_coins)]
    per_coin_count = [0] * config.n_coins
    raw: list[RawMessage] = []
    plans: list[CascadePlan] = []
    for j in range(config.n_events):
        k = j % config.n_coins
        pair = config.pair(k)
        clock_hours[k] += EVENT_SPACING_HOURS + float(rng.uniform(0.0, EVENT_SPACING_JITTER_HOURS))
        t0 = _snap_to_bar(
            config.start + timedelta(hours=clock_hours[k]), config.bar_minutes
        )
        root = masterminds[int(rng.integers(len(masterminds)))]
        activations = _spread(truth, out_neighbors, root, t0, config, rng)
        entry = round(float(rng.uniform(0.5, 5.0)), 8)
        targets = tuple(
            round(entry * (1.0 + config.target_step * (i + 1)), 8)
            for i in range(config.targets_per_message)
        )
        stop = round(entry * (1.0 - 2.0 * config.target_step), 8)
        plan = CascadePlan(
            coin=config.coin(k),
            cluster_index=per_coin_count[k],
            root=root,
            activations=tuple(activations),
            entry=entry,
            targets=targets,
            stop=stop,
        )
        per_coin_count[k] += 1
        plans.append(plan)
        for entity, when in activations:
            audience = int.from_bytes(
                hashlib.sha256(entity.encode("utf-8")).digest()[:4], "big"
            )
            raw.append(
                RawMessage(
                    channel_id=entity,
                    timestamp=when,
                    text=_render_text(entity, pair, entry, targets, stop),
                    channel_participants=1000 + audience % 9000,
                )
            )
    raw.sort(key=lambda m: (m.timestamp, m.channel_id))
    return raw, plans


def _cluster_messages(
    messages: Sequence[CrowdPumpMessage],
) -> dict[str, list[list[CrowdPumpMessage]]]:
    """Group parsed messages per coin into events by long gaps."""
    per_coin: dict[str, list[CrowdPumpMessage]] = {}
    for m in sorted(messages, key=lambda m: (m.source_datetime, m.entity_id)):
        per_coin.setdefault(m.cryptocurrency, []).append(m)
    gap = timedelta(hours=CLUSTER_GAP_HOURS)
    out: dict[str, list[list[CrowdPumpMessage]]] = {}
    for coin, msgs in sorted(per_coin.items()):
        clusters: list[list[CrowdPumpMessage]] = [[msgs[0]]]
        for prev, cur in zip(msgs, msgs[1:]):
            if cur.source_datetime - prev.source_datetime > gap:
                clusters.append([cur])
            else:
                clusters[-1].append(cur)
        out[coin] = clusters
    return out


def generate_prices(
    messages: Sequence[CrowdPumpMessage], config: SynthConfig
) -> dict[str, PriceSeries]:
    """Per-pair bar series whose ramps achieve each event's planned hit count.

    The bar at each event's first announcement is pinned to the posted entry
    price. With hit count k the price ramps log-linearly to
    entry·(1 + step·(k + 1/2)) shortly after the cascade ends, then decays;
    outside event windows it follows a geometric random walk, and inside
    them it idles with bounded jitter so no extra target is crossed.
    """
    clusters = _cluster_messages(messages)
    series: dict[str, PriceSeries] = {}
    bar = config.bar_minutes * 60
    for coin, events in clusters.items():
        pair = f"{coin}USDT"
        rng = np.random.default_rng(
            np.random.SeedSequence(
                [config.seed, int(hashlib.sha256(pair.encode()).hexdigest()[:8], 16)]
            )
        )
        plans = []
        for idx, cluster in enumerate(events):
            first = cluster[0]
            entry = float(first.entry_prices[0])
            k = _hit_count(config, pair, idx)
            t0 = _snap_to_bar(first.source_datetime, config.bar_minutes)
            t_last = max(m.source_datetime for m in cluster)
            t_peak = _snap_to_bar(t_last + timedelta(hours=PEAK_LAG_HOURS), config.bar_minutes)
            t_decay = t_peak + timedelta(hours=DECAY_HOURS)
            peak = entry * (1.0 + config.target_step * (k + 0.5)) if k > 0 else entry
            plans.append((t0, t_peak, t_decay, entry, peak))
        t_start = plans[0][0] - timedelta(minutes=config.bar_minutes) - timedelta(hours=73)
        t_end = plans[-1][0] + timedelta(hours=73)
        n_bars = int((t_end - t_start).total_seconds() // bar) + 1
        ts = np.array(
            [t_start.timestamp() + i * bar for i in range(n_bars)], dtype=np.float64
        )
        prices = np.empty(n_bars, dtype=np.float64)
        volumes = np.empty(n_bars, dtype=np.float64)
        log_p = math.log(plans[0][3])
        plan_i = 0
        for i in range(n_bars):
            t = ts[i]
            while plan_i + 1 < len(plans) and t >= plans[plan_i + 1][0].timestamp():
                plan_i += 1
            t0, t_peak, t_decay, entry, peak = plans[plan_i]
            s0, s_peak, s_decay = t0.timestamp(), t_peak.timestamp(), t_decay.timestamp()
            window_end = s0 + 72 * 3600.0
            in_window = s0 <= t <= window_end
            ramp = False
            if t < s0:
                log_p += config.price_drift + config.price_volatility * float(
                    rng.standard_normal()
                )
                level = math.exp(log_p)
            elif t == s0:
                level = entry
                log_p = math.log(entry)
            elif t <= s_peak and peak > entry:
                frac = (t - s0) / (s_peak - s0)
                level = math.exp(
                    math.log(entry) + frac * (math.log(peak) - math.log(entry))
                )
                log_p = math.log(level)
                ramp = True
            elif t <= s_decay and peak > entry:
                frac = (t - s_peak) / (s_decay - s_peak)
                level = math.exp(
                    math.log(peak) + frac * (math.log(entry) - math.log(peak))
                )
                log_p = math.log(level)
                ramp = True
            elif in_window:
                level = math.exp(log_p) * (
                    1.0 + 0.25 * config.price_volatility * float(rng.standard_normal())
                )
            else:
                log_p += config.price_drift + config.price_volatility * float(
                    rng.standard_normal()
                )
                level = math.exp(log_p)
            prices[i] = level
            base = BASE_VOLUME * (1.0 + 0.1 * float(rng.uniform(-1.0, 1.0)))
            volumes[i] = base * (RAMP_VOLUME_FACTOR if ramp else 1.0)
        series[pair] = PriceSeries(pair=pair, ts=ts, price=prices, volume=volumes)
    return series


@dataclass
class SynthCorpus:
    config: SynthConfig
    truth: GroundTruth
    raw_messages: list[RawMessage]
    plans: list[CascadePlan]
    messages: list[CrowdPumpMessage]
    skip_report: SkipReport
    prices: dict[str, PriceSeries] = field(default_factory=dict)


def generate_corpus(config: SynthConfig, with_prices: bool = True) -> SynthCorpus:
    """Network, cascades, parsed messages and (optionally) price series."""
    truth = generate_network(config)
    raw, plans = generate_cascades(truth, config)
    messages, report = parse_corpus(raw_message_to_json(m) for m in raw)
    if report.total:
        raise AssertionError(f"synthetic corpus failed to parse cleanly: {report.as_dict()}")
    prices = generate_prices(messages, config) if with_prices else {}
    return SynthCorpus(
        config=config,
        truth=truth,
        raw_messages=raw,
        plans=plans,
        messages=messages,
        skip_report=report,
        prices=prices,
    )


def score_edge_recovery(
    weighted: np.ndarray,
    nodes: Sequence[str],
    truth: GroundTruth,
    directed: Optional[np.ndarray] = None,
) -> float:
    """Precision at |E| of the strongest inferred edges against the truth.

    Candidates are ranked by inferred weight; when the directed adjacency is
    given, only its surviving arrows compete (the duel already eliminated
    the weaker direction of each pair). Only true edges between nodes
    present in the inferred graph count toward |E|; nodes never observed in
    a cascade cannot be recovered.
    """
    present = set(nodes)
    true_edges = {
        (s, d) for s, d in truth.edges if s in present and d in present
    }
    if not true_edges:
        raise ValueError("no ground-truth edges among the graph's nodes")
    candidates = weighted if directed is None else np.where(directed > 0, weighted, 0.0)
    order = []
    n = len(nodes)
    for r in range(n):
        for s in range(n):
            if r != s and candidates[r, s] > 0.0:
                order.append((-float(candidates[r, s]), nodes[r], nodes[s]))
    order.sort()
    top = order[: len(true_edges)]
    hits = sum(1 for _, src, dst in top if (src, dst) in true_edges)
    return hits / len(true_edges)


def write_truth(path: Path | str, truth: GroundTruth) -> None:
    Path(path).write_text(
        json.dumps(truth.to_json(), indent=1, sort_keys=True), encoding="utf-8"
    )


def load_truth(path: Path | str) -> GroundTruth:
    return GroundTruth.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def write_labels(path: Path | str, labels: dict[str, int]) -> None:
    Path(path).write_text(
        json.dumps({"labels": labels}, indent=1, sort_keys=True), encoding="utf-8"
    )


def load_labels(path: Path | str) -> dict[str, int]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return {k: int(v) for k, v in obj["labels"].items()}
