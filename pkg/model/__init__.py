from .split_model import (
    Batch,
    DimensionMismatchError,
    LayerSpec,
    SplitModel,
    accuracy,
    cross_entropy,
    cut_client_dims,
    dims,
    forward_client,
    forward_full_loss,
    forward_server_loss,
    fuse_layers,
    layer_param_counts,
    mlp_layers,
    predict,
    recommend_cut,
)

__all__ = [
    "Batch",
    "DimensionMismatchError",
    "LayerSpec",
    "SplitModel",
    "accuracy",
    "cross_entropy",
    "cut_client_dims",
    "dims",
    "forward_client",
    "forward_full_loss",
    "forward_server_loss",
    "fuse_layers",
    "layer_param_counts",
    "mlp_layers",
    "predict",
    "recommend_cut",
]
