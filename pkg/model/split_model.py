"""
Forward-only MLP split at a cut layer.

Parameters of each dense layer are stored flat as the weight matrix
(in_dim x out_dim, row-major) followed by the bias. Layers 1..cut_layer belong
to the client, the rest to the split server.
"""

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from zo.estimator import NonFiniteLossError

ACTIVATIONS = {
    "relu": lambda z: np.maximum(z, 0.0),
    "tanh": np.tanh,
    "identity": lambda z: z,
}


class DimensionMismatchError(ValueError):
    """Raised when parameters or activations do not fit the architecture."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str = "dense"
    in_dim: int = 0
    out_dim: int = 0
    activation: str = "identity"

    def __post_init__(self):
        if self.kind not in ("dense", "activation"):
            raise ValueError(f"Unknown layer kind: {self.kind}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(
                f"Unknown activation: {self.activation}. Use one of {sorted(ACTIVATIONS)}"
            )
        if self.kind == "dense" and (self.in_dim < 1 or self.out_dim < 1):
            raise ValueError(
                f"Dense layer needs positive dimensions, got {self.in_dim}->{self.out_dim}"
            )

    @property
    def num_params(self) -> int:
        if self.kind != "dense":
            return 0
        return self.in_dim * self.out_dim + self.out_dim


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValueError(f"Batch inputs must be a non-empty matrix, got shape {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError(
                f"Expected {self.inputs.shape[0]} labels, got shape {self.labels.shape}"
            )
        if np.any(self.labels < 0):
            raise ValueError(f"Batch labels must be non-negative class indices, got {self.labels.min()}")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def fuse_layers(layers: Sequence[LayerSpec]) -> list[LayerSpec]:
    """
    Fold standalone activation layers into the dense layer before them.

    The cut can only fall between dense layers, so every activation is owned
    by exactly one dense layer.
    """
    fused: list[LayerSpec] = []
    for layer in layers:
        if layer.kind == "activation":
            if not fused:
                raise ValueError("An activation layer cannot come before the first dense layer")
            fused[-1] = replace(fused[-1], activation=layer.activation)
            continue
        if fused and fused[-1].out_dim != layer.in_dim:
            raise DimensionMismatchError(
                f"Dense layer {len(fused)} outputs {fused[-1].out_dim} features "
                f"but layer {len(fused) + 1} expects {layer.in_dim}"
            )
        fused.append(layer)
    return fused


def mlp_layers(widths: Sequence[int], activation: str = "relu") -> list[LayerSpec]:
    """Dense layers for the given widths; the output layer has no activation."""
    if len(widths) < 2:
        raise ValueError(f"Need at least input and output widths, got {list(widths)}")
    count = len(widths) - 1
    return [
        LayerSpec(
            kind="dense",
            in_dim=widths[i],
            out_dim=widths[i + 1],
            activation=activation if i < count - 1 else "identity",
        )
        for i in range(count)
    ]


@dataclass(frozen=True)
class SplitModel:
    layers: tuple[LayerSpec, ...]
    cut_layer: int
    params_client: np.ndarray = field(default=None, repr=False, compare=False)
    params_server: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        dense = fuse_layers(self.layers)
        object.__setattr__(self, "layers", tuple(dense))
        if len(dense) < 2:
            raise ValueError("A split model needs at least two dense layers")
        if not 1 <= self.cut_layer <= len(dense) - 1:
            raise ValueError(
                f"cut_layer must be in [1, {len(dense) - 1}], got {self.cut_layer}"
            )

    @classmethod
    def init(
        cls,
        widths: Sequence[int],
        cut_layer: int,
        rng: np.random.Generator,
        activation: str = "relu",
    ) -> "SplitModel":
        """Build an MLP and draw weights and biases uniformly in +-1/sqrt(fan_in)."""
        layers = mlp_layers(widths, activation)
        chunks = []
        for layer in layers:
            bound = 1.0 / np.sqrt(layer.in_dim)
            chunks.append(rng.uniform(-bound, bound, size=layer.num_params))
        model = cls(layers=tuple(layers), cut_layer=cut_layer)
        flat = np.concatenate(chunks)
        _, d_c, _ = dims(model)
        return model.with_params(flat[:d_c].copy(), flat[d_c:].copy())

    def with_params(self, params_client: np.ndarray, params_server: np.ndarray) -> "SplitModel":
        return replace(self, params_client=params_client, params_server=params_server)

    def with_cut(self, cut_layer: int) -> "SplitModel":
        """Same layers and parameters, re-split at another cut."""
        flat = np.concatenate([self.params_client, self.params_server])
        model = SplitModel(layers=self.layers, cut_layer=cut_layer)
        _, d_c, _ = dims(model)
        return model.with_params(flat[:d_c].copy(), flat[d_c:].copy())

    @property
    def client_layers(self) -> tuple[LayerSpec, ...]:
        return self.layers[: self.cut_layer]

    @property
    def server_layers(self) -> tuple[LayerSpec, ...]:
        return self.layers[self.cut_layer :]

    @property
    def cut_width(self) -> int:
        return self.layers[self.cut_layer - 1].out_dim

    @property
    def num_classes(self) -> int:
        return self.layers[-1].out_dim

    @property
    def widths(self) -> list[int]:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]


def layer_param_counts(layers: Sequence[LayerSpec]) -> list[int]:
    return [layer.num_params for layer in layers]


def dims(model: SplitModel) -> tuple[int, int, int]:
    """Return (d, d_c, d_s): total, client-side and server-side parameter counts."""
    d_c = sum(layer_param_counts(model.client_layers))
    d_s = sum(layer_param_counts(model.server_layers))
    return d_c + d_s, d_c, d_s


def _run_layers(layers: Sequence[LayerSpec], params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    expected = sum(layer_param_counts(layers))
    if params.shape != (expected,):
        raise DimensionMismatchError(
            f"Expected a parameter vector of length {expected}, got shape {params.shape}"
        )
    if inputs.shape[1] != layers[0].in_dim:
        raise DimensionMismatchError(
            f"Layer expects {layers[0].in_dim} input features, got {inputs.shape[1]}"
        )
    h = inputs
    offset = 0
    for layer in layers:
        n_w = layer.in_dim * layer.out_dim
        W = params[offset : offset + n_w].reshape(layer.in_dim, layer.out_dim)
        b = params[offset + n_w : offset + layer.num_params]
        h = ACTIVATIONS[layer.activation](h @ W + b)
        offset += layer.num_params
    return h


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of integer labels under softmax(logits)."""
    num_classes = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(
            f"Labels must lie in [0, {num_classes}), got range [{labels.min()}, {labels.max()}]"
        )
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1))
    picked = shifted[np.arange(labels.shape[0]), labels]
    return float(np.mean(log_norm - picked))


def forward_client(model: SplitModel, params_client: np.ndarray, batch: Batch) -> np.ndarray:
    """Cut-layer activations (batch x cut_width) for the client's parameters."""
    return _run_layers(model.client_layers, params_client, batch.inputs)


def forward_server_logits(model: SplitModel, params_server: np.ndarray, embedding: np.ndarray) -> np.ndarray:
    if embedding.ndim != 2 or embedding.shape[1] != model.cut_width:
        raise DimensionMismatchError(
            f"Embedding must have {model.cut_width} columns, got shape {embedding.shape}"
        )
    if not np.all(np.isfinite(embedding)):
        raise NonFiniteLossError("cut-layer embedding", float("nan"))
    return _run_layers(model.server_layers, params_server, embedding)


def forward_server_loss(
    model: SplitModel, params_server: np.ndarray, embedding: np.ndarray, labels: np.ndarray
) -> float:
    """Mean cross-entropy of the server part applied to a cut-layer embedding."""
    logits = forward_server_logits(model, params_server, embedding)
    if not np.all(np.isfinite(logits)):
        raise NonFiniteLossError("server logits", float("nan"))
    return cross_entropy(logits, labels)


def forward_full_loss(model: SplitModel, params: np.ndarray, batch: Batch) -> float:
    """Loss through the unsplit network, params = concat(client, server)."""
    logits = _run_layers(model.layers, params, batch.inputs)
    return cross_entropy(logits, batch.labels)


def predict(model: SplitModel, params_client: np.ndarray, params_server: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    h = _run_layers(model.client_layers, params_client, inputs)
    return np.argmax(_run_layers(model.server_layers, params_server, h), axis=1)


def accuracy(
    model: SplitModel,
    params_client: np.ndarray,
    params_server: np.ndarray,
    inputs: np.ndarray,
    labels: np.ndarray,
) -> float:
    return float(np.mean(predict(model, params_client, params_server, inputs) == labels))


def cut_client_dims(widths: Sequence[int]) -> list[int]:
    """d_c for every admissible cut 1..L-1 of an MLP with the given widths."""
    counts = [widths[i] * widths[i + 1] + widths[i + 1] for i in range(len(widths) - 1)]
    return list(np.cumsum(counts[:-1]))


def recommend_cut(widths: Sequence[int] | SplitModel, tau: float) -> int:
    """
    Cut index whose client dimension is closest to sqrt(d / tau).

    Args:
        widths: Layer widths [in, h1, ..., out], or a SplitModel
        tau: Server steps per round, >= 1

    Returns:
        Cut index in [1, L-1]; ties go to the shallower client
    """
    if isinstance(widths, SplitModel):
        widths = widths.widths
    widths = list(widths)
    if len(widths) < 3:
        raise ValueError("Cannot split a network with fewer than two dense layers")
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")

    d = sum(widths[i] * widths[i + 1] + widths[i + 1] for i in range(len(widths) - 1))
    target = np.sqrt(d / tau)
    best_cut, best_gap = 1, None
    for cut, d_c in enumerate(cut_client_dims(widths), start=1):
        gap = abs(d_c - target)
        if best_gap is None or gap < best_gap:
            best_cut, best_gap = cut, gap
    return best_cut
