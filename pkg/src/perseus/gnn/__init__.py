"""From-scratch graph neural networks over the inferred diffusion graphs."""

from .layers import (
    Adam,
    add_self_loops,
    bce_grad_wrt_logits,
    bce_loss,
    elu,
    gat_backward,
    gat_forward,
    glorot,
    init_gat_layer,
    init_sage_layer,
    sage_backward,
    sage_forward,
    sigmoid,
)
from .model import (
    ARCH_GAT,
    ARCH_SAGE,
    VARIANT_DIRECTED,
    VARIANT_WEIGHTED,
    EpochRecord,
    GraphData,
    ModelConfig,
    forward,
    graph_loss,
    init_params,
    load_params,
    loss_and_grads,
    params_to_vector,
    predict,
    save_params,
    train,
    vector_to_params,
    write_history_csv,
)

__all__ = [
    "Adam",
    "add_self_loops",
    "bce_grad_wrt_logits",
    "bce_loss",
    "elu",
    "gat_backward",
    "gat_forward",
    "glorot",
    "init_gat_layer",
    "init_sage_layer",
    "sage_backward",
    "sage_forward",
    "sigmoid",
    "ARCH_GAT",
    "ARCH_SAGE",
    "VARIANT_DIRECTED",
    "VARIANT_WEIGHTED",
    "EpochRecord",
    "GraphData",
    "ModelConfig",
    "forward",
    "graph_loss",
    "init_params",
    "load_params",
    "loss_and_grads",
    "params_to_vector",
    "predict",
    "save_params",
    "train",
    "vector_to_params",
    "write_history_csv",
]
