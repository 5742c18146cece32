"""Model assembly, training loop and parameter files.

A model is a stack of identical message-passing layers narrowing to one
output channel, squashed by a sigmoid into a per-node mastermind
probability. Training runs full-batch per graph with Adam, tracks
validation F1 every epoch and returns the parameters from the best
validation epoch.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .layers import (
    Adam,
    bce_grad_wrt_logits,
    bce_loss,
    gat_backward,
    gat_forward,
    init_gat_layer,
    init_sage_layer,
    sage_backward,
    sage_forward,
    sigmoid,
)

ARCH_GAT = "gat"
ARCH_SAGE = "graphsage"
VARIANT_DIRECTED = "directed"
VARIANT_WEIGHTED = "weighted"

PARAMS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    architecture: str = ARCH_SAGE
    graph_variant: str = VARIANT_WEIGHTED
    hidden_channels: int = 8
    num_layers: int = 2
    learning_rate: float = 0.0005
    epochs: int = 100
    seed: int = 7
    threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.architecture not in (ARCH_GAT, ARCH_SAGE):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.graph_variant not in (VARIANT_DIRECTED, VARIANT_WEIGHTED):
            raise ValueError(f"unknown graph variant {self.graph_variant!r}")
        if self.num_layers < 1:
            raise ValueError("num_layers must be at least 1")

    def dims(self, in_dim: int) -> list[int]:
        return [in_dim] + [self.hidden_channels] * (self.num_layers - 1) + [1]


@dataclass
class GraphData:
    """One graph ready for training: features, labels and both adjacencies."""

    graph_id: str
    nodes: tuple[str, ...]
    x: np.ndarray
    y: np.ndarray
    weighted: np.ndarray
    directed: np.ndarray
    _edge_cache: dict = field(default_factory=dict, repr=False)

    def edges(self, variant: str) -> tuple[np.ndarray, np.ndarray]:
        """(src, dst) arrays for the requested variant, self-loops excluded.

        Directed keeps only the arrows that survived the pairwise duel;
        weighted keeps every influence arrow with a nonzero weight, so a node
        aggregates all of its candidate influencers, not just the duel winners.
        """
        if variant not in self._edge_cache:
            if variant == VARIANT_DIRECTED:
                adj = self.directed > 0
            elif variant == VARIANT_WEIGHTED:
                adj = self.weighted > 0
            else:
                raise ValueError(f"unknown graph variant {variant!r}")
            adj = adj.copy()
            np.fill_diagonal(adj, False)
            src, dst = np.nonzero(adj)
            self._edge_cache[variant] = (src.astype(np.int64), dst.astype(np.int64))
        return self._edge_cache[variant]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def init_params(config: ModelConfig, in_dim: int) -> list[dict[str, np.ndarray]]:
    rng = np.random.default_rng(config.seed)
    dims = config.dims(in_dim)
    init = init_gat_layer if config.architecture == ARCH_GAT else init_sage_layer
    return [init(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 1)]


def forward(
    params: Sequence[dict[str, np.ndarray]],
    config: ModelConfig,
    graph: GraphData,
    keep_caches: bool = False,
):
    """Per-node probabilities; with keep_caches also the layer caches.

    Raises FloatingPointError naming the first layer whose output contains
    a NaN, so a diverged run dies where it diverged instead of three stages
    later in the loss.
    """
    src, dst = graph.edges(config.graph_variant)
    run = gat_forward if config.architecture == ARCH_GAT else sage_forward
    h = graph.x
    caches = []
    last = len(params) - 1
    for i, layer in enumerate(params):
        h, cache = run(h, layer, src, dst, activate=(i != last))
        if np.isnan(h).any():
            raise FloatingPointError(
                f"NaN in layer {i} output on graph {graph.graph_id}"
            )
        caches.append(cache)
    logits = h[:, 0]
    probs = sigmoid(logits)
    if keep_caches:
        return probs, logits, caches
    return probs


def loss_and_grads(
    params: Sequence[dict[str, np.ndarray]],
    config: ModelConfig,
    graph: GraphData,
) -> tuple[float, list[dict[str, np.ndarray]]]:
    probs, logits, caches = forward(params, config, graph, keep_caches=True)
    y = graph.y.astype(float)
    loss = bce_loss(probs, y)
    d_h = bce_grad_wrt_logits(probs, y)[:, None]
    back = gat_backward if config.architecture == ARCH_GAT else sage_backward
    grads: list[dict[str, np.ndarray]] = [None] * len(params)  # type: ignore[list-item]
    for i in range(len(params) - 1, -1, -1):
        d_h, grads[i] = back(caches[i], d_h)
    return loss, grads


def graph_loss(params, config, graph: GraphData) -> float:
    return bce_loss(forward(params, config, graph), graph.y.astype(float))


def _f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    tp = int(np.sum((y_pred == 1) & (y_true == 1)))
    fp = int(np.sum((y_pred == 1) & (y_true == 0)))
    fn = int(np.sum((y_pred == 0) & (y_true == 1)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_f1: float
    epoch_seconds: float


def train(
    config: ModelConfig,
    train_graphs: Sequence[GraphData],
    val_graphs: Sequence[GraphData] = (),
    progress: Optional[Callable[[EpochRecord], None]] = None,
) -> tuple[list[dict[str, np.ndarray]], list[EpochRecord]]:
    """Train on the given graphs, one Adam step per graph per epoch.

    Graphs are visited in the order given (sort upstream for determinism).
    Checkpoint selection: highest validation F1 at threshold 0.5, earliest
    epoch on ties; without validation graphs the final epoch wins.
    """
    if not train_graphs:
        raise ValueError("no training graphs")
    params = init_params(config, train_graphs[0].x.shape[1])
    optimizer = Adam(config.learning_rate)
    best = copy.deepcopy(params)
    best_f1 = -1.0
    history: list[EpochRecord] = []
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        losses = []
        for graph in train_graphs:
            loss, grads = loss_and_grads(params, config, graph)
            optimizer.step(params, grads)
            losses.append(loss)
        if val_graphs:
            val_loss = float(np.mean([graph_loss(params, config, g) for g in val_graphs]))
            y_true = np.concatenate([g.y for g in val_graphs])
            y_pred = np.concatenate(
                [(forward(params, config, g) >= 0.5).astype(int) for g in val_graphs]
            )
            val_f1 = _f1(y_true, y_pred)
            if val_f1 > best_f1:
                best_f1 = val_f1
                best = copy.deepcopy(params)
        else:
            val_loss, val_f1 = 0.0, 0.0
            best = params
        record = EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            val_loss=val_loss,
            val_f1=val_f1,
            epoch_seconds=time.perf_counter() - started,
        )
        history.append(record)
        if progress is not None:
            progress(record)
    return copy.deepcopy(best), history


def predict(
    params: Sequence[dict[str, np.ndarray]],
    config: ModelConfig,
    graph: GraphData,
    threshold: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(labels, probabilities); label 1 wherever probability >= threshold."""
    cut = config.threshold if threshold is None else threshold
    probs = forward(params, config, graph)
    return (probs >= cut).astype(int), probs


def params_to_vector(params: Sequence[dict[str, np.ndarray]]) -> np.ndarray:
    """Flatten all parameters into one vector (layer by layer, sorted names)."""
    return np.concatenate(
        [params[i][name].ravel() for i in range(len(params)) for name in sorted(params[i])]
    )


def vector_to_params(
    vector: np.ndarray, template: Sequence[dict[str, np.ndarray]]
) -> list[dict[str, np.ndarray]]:
    out = []
    pos = 0
    for layer in template:
        rebuilt = {}
        for name in sorted(layer):
            size = layer[name].size
            rebuilt[name] = vector[pos : pos + size].reshape(layer[name].shape).copy()
            pos += size
        out.append(rebuilt)
    if pos != vector.size:
        raise ValueError(f"vector has {vector.size} entries, template needs {pos}")
    return out


def write_history_csv(path: Path | str, history: Sequence[EpochRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss,val_f1,epoch_seconds\n")
        for r in history:
            fh.write(
                f"{r.epoch},{r.train_loss!r},{r.val_loss!r},{r.val_f1!r},{r.epoch_seconds!r}\n"
            )


def save_params(
    path: Path | str,
    params: Sequence[dict[str, np.ndarray]],
    config: ModelConfig,
    in_dim: int,
) -> None:
    payload = {
        "format_version": PARAMS_FORMAT_VERSION,
        "config": asdict(config),
        "in_dim": in_dim,
        "layers": [
            {name: arr.tolist() for name, arr in layer.items()} for layer in params
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")


def load_params(path: Path | str) -> tuple[list[dict[str, np.ndarray]], ModelConfig, int]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("format_version") != PARAMS_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported parameter format {obj.get('format_version')}")
    config = ModelConfig(**obj["config"])
    params = [
        {name: np.array(value, dtype=float) for name, value in layer.items()}
        for layer in obj["layers"]
    ]
    return params, config, int(obj["in_dim"])
