"""Pipeline orchestration: stage subcommands over a JSON config.

Each stage reads the previous stage's artifacts from the output directory,
writes its own, and records a manifest with input/output hashes. Re-running
a stage whose config and inputs are unchanged is a no-op. Exit codes:
0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import diffusion, evaluation, market
from . import events as events_mod
from . import ingest
from . import synth as synth_mod
from .evaluation import SplitInfeasible
from .features import (
    FeatureMatrix,
    Standardizer,
    assemble_matrix,
    compute_feature_rows,
    read_features_csv,
    write_features_csv,
)
from .features.community import louvain
from .gnn import (
    GraphData,
    ModelConfig,
    load_params,
    predict,
    save_params,
    train,
    write_history_csv,
)

logger = logging.getLogger("perseus.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

STAGE_ORDER = (
    "parse",
    "split",
    "events",
    "flag",
    "graphs",
    "featurize",
    "train",
    "infer",
    "evaluate",
)


class ConfigError(Exception):
    """Invalid pipeline config; carries one message per bad field."""

    def __init__(self, problems: Sequence[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


class DataError(Exception):
    """Missing or inconsistent input artifacts."""


class NumericalError(Exception):
    """Training or statistics produced non-finite numbers."""


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: Path
    corpus: Path
    prices_dir: Optional[Path]
    labels: Optional[Path]
    split_fractions: tuple[float, float, float]
    event_cap_hours: float
    return_rule: str
    aggregation: str
    threshold_grid: tuple[float, ...]
    model: ModelConfig

    def as_dict(self) -> dict:
        return {
            "out_dir": str(self.out_dir),
            "corpus": str(self.corpus),
            "prices_dir": None if self.prices_dir is None else str(self.prices_dir),
            "labels": None if self.labels is None else str(self.labels),
            "split_fractions": list(self.split_fractions),
            "event_cap_hours": self.event_cap_hours,
            "return_rule": self.return_rule,
            "aggregation": self.aggregation,
            "threshold_grid": list(self.threshold_grid),
            "model": asdict(self.model),
        }


_MODEL_FIELDS = {
    "architecture": str,
    "graph_variant": str,
    "hidden_channels": int,
    "num_layers": int,
    "learning_rate": float,
    "epochs": int,
    "seed": int,
    "threshold": float,
}

_TOP_FIELDS = {
    "out_dir",
    "corpus",
    "prices_dir",
    "labels",
    "split_fractions",
    "event_cap_hours",
    "return_rule",
    "aggregation",
    "threshold_grid",
    "model",
}


def build_config(
    config_path: Optional[str],
    out_override: Optional[str] = None,
    seed_override: Optional[int] = None,
    arch_override: Optional[str] = None,
    variant_override: Optional[str] = None,
) -> PipelineConfig:
    """Load, default, validate. Collects every problem before failing."""
    problems: list[str] = []
    raw: dict = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError([f"config file not found: {path}"])
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config is not valid JSON: {exc}"])
        if not isinstance(raw, dict):
            raise ConfigError(["config root must be a JSON object"])
    for key in sorted(set(raw) - _TOP_FIELDS):
        problems.append(f"unknown config field {key!r}")

    out_dir = Path(out_override or raw.get("out_dir") or "out")

    def path_or_none(name: str, default: Optional[Path]) -> Optional[Path]:
        value = raw.get(name)
        if value is None:
            return default
        if not isinstance(value, str) or not value:
            problems.append(f"{name}: expected a path string, got {value!r}")
            return default
        return Path(value)

    corpus = path_or_none("corpus", out_dir / "data" / "corpus.jsonl")
    prices_dir = path_or_none("prices_dir", out_dir / "data" / "prices")
    labels = path_or_none("labels", out_dir / "data" / "labels.json")

    fractions = raw.get("split_fractions", [0.70, 0.15, 0.15])
    if (
        not isinstance(fractions, (list, tuple))
        or len(fractions) != 3
        or not all(isinstance(f, (int, float)) and 0 < f < 1 for f in fractions)
        or abs(sum(fractions) - 1.0) > 1e-9
    ):
        problems.append(
            f"split_fractions: expected three fractions in (0,1) summing to 1, got {fractions!r}"
        )
        fractions = [0.70, 0.15, 0.15]

    cap = raw.get("event_cap_hours", 72.0)
    if not isinstance(cap, (int, float)) or cap <= 0:
        problems.append(f"event_cap_hours: expected a positive number, got {cap!r}")
        cap = 72.0

    return_rule = raw.get("return_rule", market.RETURN_DIRECTION_AWARE)
    if return_rule not in (market.RETURN_DIRECTION_AWARE, market.RETURN_PAPER_LITERAL):
        problems.append(
            f"return_rule: expected {market.RETURN_DIRECTION_AWARE!r} or "
            f"{market.RETURN_PAPER_LITERAL!r}, got {return_rule!r}"
        )
        return_rule = market.RETURN_DIRECTION_AWARE

    aggregation = raw.get("aggregation", diffusion.AGG_PRODUCT)
    if aggregation not in (diffusion.AGG_PRODUCT, diffusion.AGG_QUOTIENT):
        problems.append(
            f"aggregation: expected {diffusion.AGG_PRODUCT!r} or "
            f"{diffusion.AGG_QUOTIENT!r}, got {aggregation!r}"
        )
        aggregation = diffusion.AGG_PRODUCT

    grid = raw.get("threshold_grid", list(evaluation.DEFAULT_GRID))
    if (
        not isinstance(grid, (list, tuple))
        or not grid
        or not all(isinstance(t, (int, float)) and 0.0 <= t <= 1.0 for t in grid)
        or list(grid) != sorted(grid)
    ):
        problems.append(
            f"threshold_grid: expected a sorted list of values in [0,1], got {grid!r}"
        )
        grid = list(evaluation.DEFAULT_GRID)

    model_raw = raw.get("model", {})
    model_kwargs: dict = {}
    if not isinstance(model_raw, dict):
        problems.append(f"model: expected an object, got {model_raw!r}")
        model_raw = {}
    for key in sorted(set(model_raw) - set(_MODEL_FIELDS)):
        problems.append(f"model.{key}: unknown field")
    for key, kind in _MODEL_FIELDS.items():
        if key not in model_raw:
            continue
        value = model_raw[key]
        if kind is float and isinstance(value, int):
            value = float(value)
        if not isinstance(value, kind) or isinstance(value, bool):
            problems.append(f"model.{key}: expected {kind.__name__}, got {value!r}")
            continue
        model_kwargs[key] = value
    if seed_override is not None:
        model_kwargs["seed"] = seed_override
    if arch_override is not None:
        model_kwargs["architecture"] = arch_override
    if variant_override is not None:
        model_kwargs["graph_variant"] = variant_override
    try:
        model = ModelConfig(**model_kwargs)
    except ValueError as exc:
        problems.append(f"model: {exc}")
        model = ModelConfig()
    else:
        if model.hidden_channels < 1:
            problems.append("model.hidden_channels: must be positive")
        if model.learning_rate <= 0:
            problems.append("model.learning_rate: must be positive")
        if model.epochs < 1:
            problems.append("model.epochs: must be positive")
        if not 0.0 <= model.threshold <= 1.0:
            problems.append("model.threshold: must be in [0, 1]")

    if problems:
        raise ConfigError(problems)
    return PipelineConfig(
        out_dir=out_dir,
        corpus=corpus,
        prices_dir=prices_dir,
        labels=labels,
        split_fractions=tuple(float(f) for f in fractions),  # type: ignore[arg-type]
        event_cap_hours=float(cap),
        return_rule=return_rule,
        aggregation=aggregation,
        threshold_grid=tuple(float(t) for t in grid),
        model=model,
    )


# ---------------------------------------------------------------------------
# Manifests


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _config_hash(cfg: PipelineConfig, extra: dict) -> str:
    payload = json.dumps({"config": cfg.as_dict(), "extra": extra}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def run_stage(
    name: str,
    cfg: PipelineConfig,
    inputs: Sequence[Path],
    runner: Callable[[], Sequence[Path]],
    extra: Optional[dict] = None,
) -> None:
    missing = [str(p) for p in inputs if not p.exists()]
    if missing:
        raise DataError(f"{name}: missing required artifact(s): {', '.join(missing)}")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = cfg.out_dir / "manifests" / f"{name}.json"
    config_hash = _config_hash(cfg, extra or {})
    input_hashes = {str(p): _sha256(p) for p in sorted(inputs)}
    if manifest_path.exists():
        try:
            stored = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            stored = {}
        if (
            stored.get("config_hash") == config_hash
            and stored.get("inputs") == input_hashes
            and all(Path(p).exists() for p in stored.get("outputs", {}))
            and all(
                _sha256(Path(p)) == h for p, h in stored.get("outputs", {}).items()
            )
        ):
            logger.info("%s: inputs unchanged, skipping", name)
            return
    outputs = runner()
    manifest = {
        "stage": name,
        "config_hash": config_hash,
        "inputs": input_hashes,
        "outputs": {str(p): _sha256(Path(p)) for p in sorted(set(outputs))},
    }
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(
        json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8"
    )
    logger.info("%s: wrote %d artifact(s)", name, len(outputs))


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Stages


def stage_parse(cfg: PipelineConfig) -> None:
    def runner() -> list[Path]:
        messages, report = ingest.read_corpus(cfg.corpus)
        if not messages:
            raise DataError(f"parse: no crowd-pump messages found in {cfg.corpus}")
        out = cfg.out_dir / "messages.jsonl"
        ingest.write_messages(out, messages)
        summary = dict(report.as_dict())
        summary["accepted"] = len(messages)
        report_path = _write_json(cfg.out_dir / "skip_report.json", summary)
        return [out, report_path]

    run_stage("parse", cfg, [cfg.corpus], runner)


def stage_split(cfg: PipelineConfig) -> None:
    messages_path = cfg.out_dir / "messages.jsonl"

    def runner() -> list[Path]:
        messages = ingest.read_messages(messages_path)
        try:
            plan = evaluation.chronological_split(messages, cfg.split_fractions)
        except SplitInfeasible as exc:
            raise DataError(f"split: {exc}")
        payload = {
            "cut1": plan.cut1.isoformat(),
            "cut2": plan.cut2.isoformat(),
            "fractions": list(plan.fractions),
            "tokens": [list(t) for t in plan.tokens],
            "dropped": [list(t) for t in plan.dropped],
            "message_counts": list(plan.message_counts),
        }
        return [_write_json(cfg.out_dir / "split_plan.json", payload)]

    run_stage("split", cfg, [messages_path], runner)


def _load_split_plan(cfg: PipelineConfig) -> evaluation.SplitPlan:
    path = cfg.out_dir / "split_plan.json"
    obj = json.loads(path.read_text(encoding="utf-8"))
    return evaluation.SplitPlan(
        cut1=datetime.fromisoformat(obj["cut1"]),
        cut2=datetime.fromisoformat(obj["cut2"]),
        fractions=tuple(obj["fractions"]),
        tokens=tuple(tuple(t) for t in obj["tokens"]),
        dropped=tuple(tuple(t) for t in obj["dropped"]),
        message_counts=tuple(obj["message_counts"]),
    )


def stage_events(cfg: PipelineConfig, single_period: bool = False) -> None:
    messages_path = cfg.out_dir / "messages.jsonl"
    inputs = [messages_path]
    plan_path = cfg.out_dir / "split_plan.json"
    if not single_period:
        inputs.append(plan_path)

    def runner() -> list[Path]:
        messages = ingest.read_messages(messages_path)
        cap = timedelta(hours=cfg.event_cap_hours)
        if single_period:
            t0 = min(m.source_datetime for m in messages)
            t1 = max(m.source_datetime for m in messages) + timedelta(seconds=1)
            periods = [events_mod.ObservationPeriod(start=t0, end=t1, label="all")]
            kept = messages
        else:
            plan = _load_split_plan(cfg)
            t0 = min(m.source_datetime for m in messages)
            t1 = max(m.source_datetime for m in messages) + timedelta(seconds=1)
            periods = [
                events_mod.ObservationPeriod(start=t0, end=plan.cut1, label="train"),
                events_mod.ObservationPeriod(start=plan.cut1, end=plan.cut2, label="val"),
                events_mod.ObservationPeriod(start=plan.cut2, end=t1, label="test"),
            ]
            kept = [m for m in messages if plan.split_of(m) is not None]
        event_sets = events_mod.build_event_sets(kept, periods, cap)
        if not event_sets:
            raise DataError("events: no events produced from the corpus")
        out = cfg.out_dir / "events.jsonl"
        events_mod.write_events(out, event_sets)
        return [out]

    run_stage("events", cfg, inputs, runner, extra={"single_period": single_period})


def _read_event_sets(cfg: PipelineConfig):
    messages = ingest.read_messages(cfg.out_dir / "messages.jsonl")
    by_pid = {m.pid: m for m in messages}
    event_sets = events_mod.read_events(cfg.out_dir / "events.jsonl", by_pid)
    return messages, event_sets


def stage_flag(cfg: PipelineConfig) -> None:
    messages_path = cfg.out_dir / "messages.jsonl"
    events_path = cfg.out_dir / "events.jsonl"

    def runner() -> list[Path]:
        _, event_sets = _read_event_sets(cfg)
        all_events = [e for events in event_sets.values() for e in events]
        all_events.sort(key=lambda e: e.event_id)
        flags = events_mod.flag_concurrent_broadcasts(all_events)
        out = cfg.out_dir / "flags.jsonl"
        events_mod.write_flags(out, flags)
        return [out]

    run_stage("flag", cfg, [messages_path, events_path], runner)


def stage_graphs(cfg: PipelineConfig) -> None:
    messages_path = cfg.out_dir / "messages.jsonl"
    events_path = cfg.out_dir / "events.jsonl"

    def runner() -> list[Path]:
        _, event_sets = _read_event_sets(cfg)
        graphs, dropped = diffusion.build_graphs(event_sets, mode=cfg.aggregation)
        if not graphs:
            raise DataError(
                "graphs: every coin fell below the minimum spreader count "
                f"({diffusion.MIN_SPREADERS})"
            )
        root = cfg.out_dir / "graphs"
        written: list[Path] = []
        index = []
        for graph_id in sorted(graphs):
            graph = graphs[graph_id]
            directory = root / graph.period
            diffusion.save_graph(graph, directory)
            stem = graph.cryptocurrency
            written.extend(
                directory / f"{stem}{suffix}"
                for suffix in (".nodes.tsv", ".weighted.tsv", ".directed.tsv", ".events.json")
            )
            index.append({"period": graph.period, "coin": graph.cryptocurrency})
        index_payload = {
            "graphs": index,
            "dropped": [
                {"period": p, "cryptocurrency": c, "spreaders": n} for p, c, n in dropped
            ],
        }
        written.append(_write_json(root / "index.json", index_payload))
        return written

    run_stage("graphs", cfg, [messages_path, events_path], runner)


def _load_graphs(cfg: PipelineConfig) -> dict[str, diffusion.DiffusionGraph]:
    root = cfg.out_dir / "graphs"
    index_path = root / "index.json"
    if not index_path.exists():
        raise DataError(f"featurize: missing required artifact(s): {index_path}")
    index = json.loads(index_path.read_text(encoding="utf-8"))
    graphs = {}
    for entry in index["graphs"]:
        graph = diffusion.load_graph(root / entry["period"], entry["coin"], entry["period"])
        graphs[graph.graph_id] = graph
    return graphs


def _load_labels(cfg: PipelineConfig) -> dict[str, int]:
    if cfg.labels is None or not Path(cfg.labels).exists():
        return {}
    return synth_mod.load_labels(cfg.labels)


def stage_featurize(cfg: PipelineConfig) -> None:
    messages_path = cfg.out_dir / "messages.jsonl"
    events_path = cfg.out_dir / "events.jsonl"
    index_path = cfg.out_dir / "graphs" / "index.json"

    def runner() -> list[Path]:
        messages, event_sets = _read_event_sets(cfg)
        graphs = _load_graphs(cfg)
        written: list[Path] = []

        series_by_coin: dict[str, market.PriceSeries] = {}
        if cfg.prices_dir is not None and Path(cfg.prices_dir).is_dir():
            for pair, series in market.load_price_dir(cfg.prices_dir).items():
                series_by_coin[ingest.normalize_symbol(pair)] = series
        outcomes, missing = market.compute_outcomes(
            messages, series_by_coin, rule=cfg.return_rule
        )
        out_path = cfg.out_dir / "outcomes.jsonl"
        market.write_outcomes(out_path, outcomes)
        written.append(out_path)
        if missing:
            logger.warning("featurize: %d message(s) had no usable price data", len(missing))

        labels = _load_labels(cfg)
        by_graph_spreader: dict[str, dict[str, list]] = {}
        for (period, coin), events in event_sets.items():
            bucket = by_graph_spreader.setdefault(f"{period}/{coin}", {})
            for event in events:
                for message in event.messages:
                    bucket.setdefault(message.entity_id, []).append(message)

        matrices: dict[str, FeatureMatrix] = {}
        communities = {}
        for graph_id in sorted(graphs):
            graph = graphs[graph_id]
            rows = compute_feature_rows(
                graph, by_graph_spreader.get(graph_id, {}), outcomes
            )
            graph_labels = {n: labels.get(n, -1) for n in graph.nodes}
            matrices[graph_id] = assemble_matrix(graph, rows, graph_labels)
            partition = louvain(graph.weighted)
            communities[graph_id] = {
                "assignment": {
                    node: int(partition.assignment[i]) for i, node in enumerate(graph.nodes)
                },
                "modularity": float(partition.modularity),
                "n_communities": partition.n_communities,
            }
        written.append(_write_json(cfg.out_dir / "features" / "communities.json", communities))

        by_period: dict[str, list[FeatureMatrix]] = {}
        for graph_id in sorted(matrices):
            by_period.setdefault(matrices[graph_id].period, []).append(matrices[graph_id])
        fit_period = "train" if "train" in by_period else sorted(by_period)[0]
        standardizer = Standardizer.fit([m.x for m in by_period[fit_period]])
        std_path = cfg.out_dir / "features" / "standardization.json"
        std_path.parent.mkdir(parents=True, exist_ok=True)
        std_path.write_text(standardizer.to_json(), encoding="utf-8")
        written.append(std_path)
        for period, mats in sorted(by_period.items()):
            csv_path = cfg.out_dir / "features" / f"{period}.csv"
            write_features_csv(csv_path, mats)
            written.append(csv_path)
        return written

    run_stage("featurize", cfg, [messages_path, events_path, index_path], runner)


def _graph_data(
    cfg: PipelineConfig,
    matrices: Sequence[FeatureMatrix],
    standardizer: Standardizer,
    graphs: dict[str, diffusion.DiffusionGraph],
) -> list[GraphData]:
    out = []
    for mat in sorted(matrices, key=lambda m: m.graph_id):
        graph = graphs.get(mat.graph_id)
        if graph is None:
            raise DataError(f"no stored graph for feature matrix {mat.graph_id}")
        if graph.nodes != mat.entity_ids:
            raise DataError(f"{mat.graph_id}: graph/feature node order mismatch")
        out.append(
            GraphData(
                graph_id=mat.graph_id,
                nodes=mat.entity_ids,
                x=standardizer.transform(mat.x),
                y=mat.y,
                weighted=graph.weighted,
                directed=graph.directed.astype(float),
            )
        )
    return out


def _read_split_features(cfg: PipelineConfig, split: str) -> list[FeatureMatrix]:
    path = cfg.out_dir / "features" / f"{split}.csv"
    if not path.exists():
        raise DataError(f"missing required artifact(s): {path}")
    return read_features_csv(path)


def _features_path(cfg: PipelineConfig, split: str) -> Path:
    path = cfg.out_dir / "features" / f"{split}.csv"
    if not path.exists() and split == "test":
        alt = cfg.out_dir / "features" / "all.csv"
        if alt.exists():
            return alt
    return path


def stage_train(cfg: PipelineConfig) -> None:
    train_path = _features_path(cfg, "train")
    if not train_path.exists():
        alt = cfg.out_dir / "features" / "all.csv"
        if alt.exists():
            train_path = alt
    val_path = cfg.out_dir / "features" / "val.csv"
    std_path = cfg.out_dir / "features" / "standardization.json"
    inputs = [train_path, std_path]
    if val_path.exists():
        inputs.append(val_path)

    def runner() -> list[Path]:
        standardizer = Standardizer.from_json(std_path.read_text(encoding="utf-8"))
        graphs = _load_graphs(cfg)
        train_mats = [m for m in read_features_csv(train_path) if np.all(m.y >= 0)]
        if not train_mats:
            raise DataError("train: no fully labeled training graphs")
        val_mats = []
        if val_path.exists():
            val_mats = [m for m in read_features_csv(val_path) if np.all(m.y >= 0)]
        train_graphs = _graph_data(cfg, train_mats, standardizer, graphs)
        val_graphs = _graph_data(cfg, val_mats, standardizer, graphs)
        params, history = train(cfg.model, train_graphs, val_graphs)
        if not all(np.isfinite(r.train_loss) for r in history):
            raise NumericalError("train: loss diverged to a non-finite value")
        model_path = cfg.out_dir / "model.json"
        save_params(model_path, params, cfg.model, in_dim=train_graphs[0].x.shape[1])
        history_path = cfg.out_dir / "history.csv"
        write_history_csv(history_path, history)
        return [model_path, history_path]

    run_stage("train", cfg, inputs, runner)


def stage_infer(cfg: PipelineConfig, split: str = "test") -> None:
    model_path = cfg.out_dir / "model.json"
    feat_path = _features_path(cfg, split)
    std_path = cfg.out_dir / "features" / "standardization.json"

    def runner() -> list[Path]:
        params, model_cfg, _ = load_params(model_path)
        standardizer = Standardizer.from_json(std_path.read_text(encoding="utf-8"))
        graphs = _load_graphs(cfg)
        mats = read_features_csv(feat_path)
        data = _graph_data(cfg, mats, standardizer, graphs)
        rows = []
        timings = []
        for g in data:
            started = time.perf_counter()
            labels_pred, probs = predict(params, model_cfg, g)
            timings.append({"nodes": g.n_nodes, "seconds": time.perf_counter() - started})
            for node, pred, prob in zip(g.nodes, labels_pred, probs):
                rows.append(
                    {
                        "graph_id": g.graph_id,
                        "entity_id": node,
                        "probability": float(prob),
                        "predicted": int(pred),
                    }
                )
        out = cfg.out_dir / "predictions.jsonl"
        with open(out, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        timing_path = _write_json(cfg.out_dir / "inference_timing.json", timings)
        return [out, timing_path]

    run_stage("infer", cfg, [model_path, feat_path, std_path], runner, extra={"split": split})
    detected = []
    with open(cfg.out_dir / "predictions.jsonl", encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            if row["predicted"] == 1:
                detected.append(
                    {
                        "graph_id": row["graph_id"],
                        "entity_id": row["entity_id"],
                        "probability": row["probability"],
                    }
                )
    detected.sort(key=lambda r: (r["graph_id"], -r["probability"], r["entity_id"]))
    print(json.dumps(detected, indent=1))


def stage_evaluate(cfg: PipelineConfig, split: str = "test") -> None:
    pred_path = cfg.out_dir / "predictions.jsonl"
    feat_path = _features_path(cfg, split)
    history_path = cfg.out_dir / "history.csv"

    def runner() -> list[Path]:
        mats = read_features_csv(feat_path)
        label_by_node: dict[tuple[str, str], int] = {}
        rows_by_node: dict[tuple[str, str], np.ndarray] = {}
        for mat in mats:
            for i, node in enumerate(mat.entity_ids):
                label_by_node[(mat.graph_id, node)] = int(mat.y[i])
                rows_by_node[(mat.graph_id, node)] = mat.x[i]
        probs, labels, feature_rows = [], [], []
        with open(pred_path, encoding="utf-8") as fh:
            for line in fh:
                row = json.loads(line)
                key = (row["graph_id"], row["entity_id"])
                label = label_by_node.get(key, -1)
                if label < 0:
                    continue
                probs.append(row["probability"])
                labels.append(label)
                feature_rows.append(rows_by_node[key])
        if not probs:
            raise DataError(f"evaluate: no labeled nodes in split {split!r}")
        p = np.array(probs)
        y = np.array(labels)
        sweep = evaluation.threshold_sweep(p, y, cfg.threshold_grid)
        best = evaluation.best_threshold(sweep)
        at_default = evaluation.metrics(
            evaluation.confusion_from(y, (p >= cfg.model.threshold).astype(int))
        )
        at_best = evaluation.metrics(
            evaluation.confusion_from(y, (p >= best).astype(int))
        )
        try:
            auc = evaluation.roc_auc(p, y)
        except ValueError:
            auc = None
        from .features import FEATURE_COLUMNS

        tests = evaluation.feature_t_tests(np.array(feature_rows), y, FEATURE_COLUMNS)
        t_tests = {
            name: (
                None
                if result is None
                else {"statistic": float(result[0]), "p_value": float(result[1])}
            )
            for name, result in tests.items()
        }
        epoch_seconds = []
        if history_path.exists():
            with open(history_path, encoding="utf-8") as fh:
                header = fh.readline().strip().split(",")
                col = header.index("epoch_seconds")
                for line in fh:
                    if line.strip():
                        epoch_seconds.append(float(line.strip().split(",")[col]))
        inference_samples = []
        timing_path = cfg.out_dir / "inference_timing.json"
        if timing_path.exists():
            for entry in json.loads(timing_path.read_text(encoding="utf-8")):
                inference_samples.append((entry["nodes"], entry["seconds"]))
        timing = (
            evaluation.timing_report(epoch_seconds, inference_samples)
            if epoch_seconds
            else {}
        )
        flags_summary = {}
        flags_path = cfg.out_dir / "flags.jsonl"
        if flags_path.exists():
            n_flags = sum(1 for line in open(flags_path, encoding="utf-8") if line.strip())
            flags_summary = {"events_flagged": n_flags}
        report = {
            "split": split,
            "n_nodes": int(len(y)),
            "n_masterminds": int(np.sum(y == 1)),
            "zero_denominator_rule": "metrics with zero denominators are reported as 0",
            "threshold_default": cfg.model.threshold,
            "metrics_at_default": at_default,
            "best_threshold": best,
            "metrics_at_best": at_best,
            "auc": auc,
            "sweep": sweep,
            "t_tests": t_tests,
            "flags": flags_summary,
            "timing": timing,
        }
        return [_write_json(cfg.out_dir / "report.json", report)]

    run_stage("evaluate", cfg, [pred_path, feat_path], runner, extra={"split": split})


def stage_synth(cfg: PipelineConfig, synth_config: synth_mod.SynthConfig) -> None:
    corpus = synth_mod.generate_corpus(synth_config)
    cfg.corpus.parent.mkdir(parents=True, exist_ok=True)
    ingest.write_raw_messages(cfg.corpus, corpus.raw_messages)
    if cfg.prices_dir is not None:
        prices_dir = Path(cfg.prices_dir)
        prices_dir.mkdir(parents=True, exist_ok=True)
        for pair in sorted(corpus.prices):
            market.write_price_csv(prices_dir / f"{pair}.csv", corpus.prices[pair])
    if cfg.labels is not None:
        cfg.labels.parent.mkdir(parents=True, exist_ok=True)
        synth_mod.write_labels(cfg.labels, corpus.truth.labels)
        synth_mod.write_truth(cfg.labels.with_name("truth.json"), corpus.truth)
    logger.info(
        "synth: %d raw messages, %d events, %d spreaders",
        len(corpus.raw_messages),
        len(corpus.plans),
        synth_config.n_spreaders,
    )


# ---------------------------------------------------------------------------
# Argument parsing and dispatch


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="pipeline config JSON")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="model seed override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perseus",
        description="Crowd-pump diffusion pipeline: parse, segment, infer, classify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (
        ("parse", "extract crowd-pump messages from the raw corpus"),
        ("split", "search chronological train/val/test cuts by token count"),
        ("flag", "flag scripted concurrent broadcasts"),
        ("graphs", "infer diffusion graphs per (period, coin)"),
        ("featurize", "market outcomes, node features, communities"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)

    p = sub.add_parser("events", help="segment messages into crowd-pump events")
    _add_common(p)
    p.add_argument(
        "--single-period",
        action="store_true",
        help="skip the split plan and treat the whole corpus as one period",
    )

    p = sub.add_parser("train", help="train the spreader classifier")
    _add_common(p)
    p.add_argument("--arch", choices=("gat", "graphsage"), help="architecture override")
    p.add_argument(
        "--variant", choices=("weighted", "directed"), help="graph variant override"
    )

    for name, helptext in (
        ("infer", "predict mastermind probabilities"),
        ("evaluate", "metrics, sweeps, t-tests, timing report"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        p.add_argument("--split", default="test", help="feature split to use (default test)")

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    _add_common(p)
    p.add_argument("--spreaders", type=int, default=30)
    p.add_argument("--masterminds", type=int, default=3)
    p.add_argument("--events", type=int, default=40)
    p.add_argument("--coins", type=int, default=6)
    p.add_argument("--forward-prob", type=float, default=0.5)
    p.add_argument("--hit-rate", type=float, default=0.5)
    p.add_argument("--synth-seed", type=int, default=0)

    p = sub.add_parser("all", help="run parse through evaluate in order")
    _add_common(p)
    p.add_argument("--arch", choices=("gat", "graphsage"))
    p.add_argument("--variant", choices=("weighted", "directed"))

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("PERSEUS_LOG", "WARNING").upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(
            args.config,
            out_override=args.out,
            seed_override=args.seed,
            arch_override=getattr(args, "arch", None),
            variant_override=getattr(args, "variant", None),
        )
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "parse":
            stage_parse(cfg)
        elif args.command == "split":
            stage_split(cfg)
        elif args.command == "events":
            stage_events(cfg, single_period=args.single_period)
        elif args.command == "flag":
            stage_flag(cfg)
        elif args.command == "graphs":
            stage_graphs(cfg)
        elif args.command == "featurize":
            stage_featurize(cfg)
        elif args.command == "train":
            stage_train(cfg)
        elif args.command == "infer":
            stage_infer(cfg, split=args.split)
        elif args.command == "evaluate":
            stage_evaluate(cfg, split=args.split)
        elif args.command == "synth":
            try:
                synth_config = synth_mod.SynthConfig(
                    n_spreaders=args.spreaders,
                    n_masterminds=args.masterminds,
                    n_events=args.events,
                    n_coins=args.coins,
                    forward_prob=args.forward_prob,
                    target_hit_rate=args.hit_rate,
                    seed=args.synth_seed,
                )
            except ValueError as exc:
                print(f"config error: synth: {exc}", file=sys.stderr)
                return EXIT_CONFIG
            stage_synth(cfg, synth_config)
        elif args.command == "all":
            stage_parse(cfg)
            stage_split(cfg)
            stage_events(cfg)
            stage_flag(cfg)
            stage_graphs(cfg)
            stage_featurize(cfg)
            stage_train(cfg)
            stage_infer(cfg)
            stage_evaluate(cfg)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
