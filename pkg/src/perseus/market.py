"""Price-series handling and per-message market outcomes.

Outcomes are judged inside a 72-hour window after each announcement: the
direction-aware extreme return, how many of the announced targets the price
actually reached, and how trading volume during the pump compares with the
three days before it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .ingest import CrowdPumpMessage, TradeDirection, parse_timestamp

OUTCOME_WINDOW = timedelta(hours=72)
FORWARD_FILL_LIMIT = timedelta(minutes=10)
BASELINE_MINUTES = 72 * 60

RETURN_DIRECTION_AWARE = "direction_aware"
RETURN_PAPER_LITERAL = "paper_literal"


class MissingData(Exception):
    """The price series does not cover the requested window."""

    def __init__(self, pair: str, window: str, pid: Optional[int] = None):
        self.pair = pair
        self.window = window
        self.pid = pid
        at = f" for pid {pid}" if pid is not None else ""
        super().__init__(f"{pair}: no price data {window}{at}")


@dataclass
class PriceSeries:
    """Strictly time-ordered (timestamp, price, volume) triples for one pair."""

    pair: str
    ts: np.ndarray      # POSIX seconds, float64
    price: np.ndarray
    volume: np.ndarray

    def __post_init__(self) -> None:
        self.ts = np.asarray(self.ts, dtype=np.float64)
        self.price = np.asarray(self.price, dtype=np.float64)
        self.volume = np.asarray(self.volume, dtype=np.float64)
        if not (len(self.ts) == len(self.price) == len(self.volume)):
            raise ValueError(f"{self.pair}: column lengths differ")
        if len(self.ts) == 0:
            raise ValueError(f"{self.pair}: empty series")
        if np.any(np.diff(self.ts) <= 0):
            raise ValueError(f"{self.pair}: timestamps must be strictly increasing")
        if np.any(self.price <= 0):
            raise ValueError(f"{self.pair}: prices must be positive")

    def __len__(self) -> int:
        return len(self.ts)


@dataclass(frozen=True)
class MarketOutcome:
    pid: int
    announcement_price: float
    extreme_price: float
    max_return: float
    targets_achieved: int
    targets_total: int


def _posix(when: datetime) -> float:
    if when.tzinfo is None:
        when = when.replace(tzinfo=timezone.utc)
    return when.timestamp()


def load_price_csv(path: Path | str, pair: str | None = None) -> PriceSeries:
    """Read a `timestamp,price,volume` CSV; timestamps are epoch milliseconds
    or ISO-8601."""
    path = Path(path)
    ts, price, volume = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            stamp = row["timestamp"].strip()
            try:
                ts.append(float(stamp) / 1000.0)
            except ValueError:
                ts.append(_posix(parse_timestamp(stamp)))
            price.append(float(row["price"]))
            volume.append(float(row["volume"]))
    return PriceSeries(pair or path.stem, np.array(ts), np.array(price), np.array(volume))


def load_price_dir(directory: Path | str) -> dict[str, PriceSeries]:
    out = {}
    for path in sorted(Path(directory).glob("*.csv")):
        out[path.stem] = load_price_csv(path)
    return out


def write_price_csv(path: Path | str, series: PriceSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "price", "volume"])
        for t, p, v in zip(series.ts, series.price, series.volume):
            writer.writerow([int(round(t * 1000)), repr(float(p)), repr(float(v))])


def price_at(series: PriceSeries, when: datetime, pid: Optional[int] = None) -> float:
    """Price at `when`: the last point at or before it, else the first point
    within ten minutes after. Raises MissingData when neither exists."""
    t = _posix(when)
    idx = int(np.searchsorted(series.ts, t, side="right")) - 1
    if idx >= 0:
        return float(series.price[idx])
    limit = t + FORWARD_FILL_LIMIT.total_seconds()
    nxt = int(np.searchsorted(series.ts, t, side="left"))
    if nxt < len(series) and series.ts[nxt] <= limit:
        return float(series.price[nxt])
    raise MissingData(series.pair, f"at {when.isoformat()}", pid)


def _window_indices(series: PriceSeries, start: datetime, window: timedelta) -> tuple[int, int]:
    t0 = _posix(start)
    lo = int(np.searchsorted(series.ts, t0, side="right"))
    hi = int(np.searchsorted(series.ts, t0 + window.total_seconds(), side="right"))
    return lo, hi


def _window_extremes(
    series: PriceSeries, message: CrowdPumpMessage, window: timedelta
) -> tuple[float, float, float]:
    """(announcement price, window max, window min); the announcement point
    participates in both extremes."""
    p0 = price_at(series, message.source_datetime, message.pid)
    lo, hi = _window_indices(series, message.source_datetime, window)
    prices = series.price[lo:hi]
    if len(prices) == 0:
        return p0, p0, p0
    return p0, max(p0, float(prices.max())), min(p0, float(prices.min()))


def max_return(
    series: PriceSeries,
    message: CrowdPumpMessage,
    rule: str = RETURN_DIRECTION_AWARE,
    window: timedelta = OUTCOME_WINDOW,
) -> float:
    """Direction-aware extreme return over the outcome window.

    Long measures the rise to the window maximum, short the fall to the window
    minimum. `rule="paper_literal"` applies the long formula regardless of
    direction.
    """
    p0, hi, lo = _window_extremes(series, message, window)
    if rule == RETURN_PAPER_LITERAL or message.trade_direction is TradeDirection.LONG:
        return (hi - p0) / p0
    if rule != RETURN_DIRECTION_AWARE:
        raise ValueError(f"unknown return rule {rule!r}")
    return (p0 - lo) / p0


def targets_achieved(
    series: PriceSeries, message: CrowdPumpMessage, window: timedelta = OUTCOME_WINDOW
) -> tuple[int, int]:
    """(achieved, total): how many announced targets the window reached."""
    _, hi, lo = _window_extremes(series, message, window)
    targets = [float(t) for t in message.target_prices]
    if message.trade_direction is TradeDirection.LONG:
        achieved = sum(1 for t in targets if t <= hi)
    else:
        achieved = sum(1 for t in targets if t >= lo)
    return achieved, len(targets)


def estimate_volume_impact(
    series: PriceSeries, message: CrowdPumpMessage, window: timedelta = OUTCOME_WINDOW
) -> tuple[float, float]:
    """(pump volume, baseline volume) around one announcement.

    The pump lasts from the announcement to the window extreme; the baseline
    is the mean per-minute volume over the three days before, scaled to the
    same duration. Raises MissingData when nothing precedes the announcement.
    """
    p0, hi, lo_ext = _window_extremes(series, message, window)
    lo_ix, hi_ix = _window_indices(series, message.source_datetime, window)
    prices = series.price[lo_ix:hi_ix]
    t0 = _posix(message.source_datetime)

    long_side = message.trade_direction is TradeDirection.LONG
    extreme = hi if long_side else lo_ext
    if len(prices) and extreme != p0:
        # earliest in-window point reaching the extreme
        if long_side:
            rel = int(np.flatnonzero(prices == prices.max())[0])
        else:
            rel = int(np.flatnonzero(prices == prices.min())[0])
        extreme_ts = float(series.ts[lo_ix + rel])
    else:
        extreme_ts = t0  # the announcement itself is the extreme
    duration_minutes = (extreme_ts - t0) / 60.0

    pump_lo = lo_ix
    pump_hi = int(np.searchsorted(series.ts, extreme_ts, side="right"))
    pump_volume = float(series.volume[pump_lo:pump_hi].sum())

    base_lo = int(np.searchsorted(series.ts, t0 - window.total_seconds(), side="left"))
    base_hi = int(np.searchsorted(series.ts, t0, side="left"))
    if base_hi <= base_lo:
        raise MissingData(series.pair, f"before {message.source_datetime.isoformat()}", message.pid)
    per_minute = float(series.volume[base_lo:base_hi].sum()) / BASELINE_MINUTES
    return pump_volume, per_minute * duration_minutes


def compute_outcomes(
    messages: Iterable[CrowdPumpMessage],
    series_by_coin: Mapping[str, PriceSeries],
    rule: str = RETURN_DIRECTION_AWARE,
    window: timedelta = OUTCOME_WINDOW,
) -> tuple[dict[int, MarketOutcome], list[int]]:
    """Outcomes keyed by pid, plus the pids whose coin had no usable data."""
    outcomes: dict[int, MarketOutcome] = {}
    missing: list[int] = []
    for message in messages:
        series = series_by_coin.get(message.cryptocurrency)
        if series is None:
            missing.append(message.pid)
            continue
        try:
            p0, hi, lo = _window_extremes(series, message, window)
            ret = max_return(series, message, rule=rule, window=window)
            achieved, total = targets_achieved(series, message, window=window)
        except MissingData:
            missing.append(message.pid)
            continue
        extreme = hi if (rule == RETURN_PAPER_LITERAL or message.trade_direction is TradeDirection.LONG) else lo
        outcomes[message.pid] = MarketOutcome(
            pid=message.pid,
            announcement_price=p0,
            extreme_price=extreme,
            max_return=ret,
            targets_achieved=achieved,
            targets_total=total,
        )
    return outcomes, missing


def write_outcomes(path: Path | str, outcomes: Mapping[int, MarketOutcome]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pid in sorted(outcomes):
            o = outcomes[pid]
            fh.write(
                json.dumps(
                    {
                        "pid": o.pid,
                        "announcement_price": o.announcement_price,
                        "extreme_price": o.extreme_price,
                        "max_return": o.max_return,
                        "targets_achieved": o.targets_achieved,
                        "targets_total": o.targets_total,
                    }
                )
                + "\n"
            )


def read_outcomes(path: Path | str) -> dict[int, MarketOutcome]:
    out: dict[int, MarketOutcome] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out[int(obj["pid"])] = MarketOutcome(
                pid=int(obj["pid"]),
                announcement_price=float(obj["announcement_price"]),
                extreme_price=float(obj["extreme_price"]),
                max_return=float(obj["max_return"]),
                targets_achieved=int(obj["targets_achieved"]),
                targets_total=int(obj["targets_total"]),
            )
    return out
