"""Two-layer graph attention network with hand-written backward pass.

Per layer and attention head: node features are projected by a kernel,
attention scores for every directed edge (neighbour -> node, plus a self
loop on every node) come from LeakyReLU(att_src . Wh_node +
att_dst . Wh_neighbour), and the scores are softmax-normalized over each
node's incoming edges. Head outputs are concatenated (hidden layer) or
averaged (output layer) before the activation.

Everything is plain numpy over an edge list, so a batch of grids is just
one big graph; the block-diagonal structure guarantees nets in a batch
cannot influence each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import CacheMismatch, ShapeError
from .nets import BatchGraph

LEAKY_SLOPE = 0.2
SIGMOID_CLAMP = 30.0

DEFAULT_ATTENTION_DROPOUT = 0.225
DEFAULT_LAYER_DROPOUT = 0.0

IN_FEATURES = 3
HIDDEN_CHANNELS = 2
HIDDEN_HEADS = 8


@dataclass
class GatLayerParams:
    """Weights of one GAT layer.

    kernel has shape (heads, in_dim, out_dim); attention_src pairs with the
    receiving node's projected features and attention_dst with the
    neighbour's, each (heads, out_dim), as does bias.
    """

    kernel: np.ndarray
    attention_src: np.ndarray
    attention_dst: np.ndarray
    bias: np.ndarray
    activation: str  # "elu" | "sigmoid"
    combine: str  # "concat" | "average"

    @property
    def heads(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_dim(self) -> int:
        return self.kernel.shape[1]

    @property
    def out_dim(self) -> int:
        return self.kernel.shape[2]

    def validate(self) -> None:
        h, _, d = self.kernel.shape
        if h < 1:
            raise ShapeError("layer needs at least one head")
        for name in ("attention_src", "attention_dst", "bias"):
            arr = getattr(self, name)
            if arr.shape != (h, d):
                raise ShapeError(f"{name} shape {arr.shape} != ({h}, {d})")
        if self.activation not in ("elu", "sigmoid"):
            raise ShapeError(f"unknown activation {self.activation!r}")
        if self.combine not in ("concat", "average"):
            raise ShapeError(f"unknown combine {self.combine!r}")

    def output_width(self) -> int:
        return self.heads * self.out_dim if self.combine == "concat" else self.out_dim


@dataclass
class ModelParams:
    """All learnable state of the 2-layer model plus its dropout rates."""

    layer1: GatLayerParams
    layer2: GatLayerParams
    attention_dropout_rate: float = DEFAULT_ATTENTION_DROPOUT
    layer_dropout_rate: float = DEFAULT_LAYER_DROPOUT

    def validate(self) -> None:
        self.layer1.validate()
        self.layer2.validate()
        if self.layer2.out_dim != 1 or self.layer2.combine != "average":
            raise ShapeError("output layer must average heads into one channel")
        if self.layer1.output_width() != self.layer2.in_dim:
            raise ShapeError("layer widths do not chain")
        for rate in (self.attention_dropout_rate, self.layer_dropout_rate):
            if not 0.0 <= rate < 1.0:
                raise ShapeError(f"dropout rate {rate} outside [0, 1)")

    def copy(self) -> "ModelParams":
        return ModelParams(
            layer1=GatLayerParams(
                kernel=self.layer1.kernel.copy(),
                attention_src=self.layer1.attention_src.copy(),
                attention_dst=self.layer1.attention_dst.copy(),
                bias=self.layer1.bias.copy(),
                activation=self.layer1.activation,
                combine=self.layer1.combine,
            ),
            layer2=GatLayerParams(
                kernel=self.layer2.kernel.copy(),
                attention_src=self.layer2.attention_src.copy(),
                attention_dst=self.layer2.attention_dst.copy(),
                bias=self.layer2.bias.copy(),
                activation=self.layer2.activation,
                combine=self.layer2.combine,
            ),
            attention_dropout_rate=self.attention_dropout_rate,
            layer_dropout_rate=self.layer_dropout_rate,
        )


@dataclass
class LayerGradients:
    kernel: np.ndarray
    attention_src: np.ndarray
    attention_dst: np.ndarray
    bias: np.ndarray


@dataclass
class Gradients:
    layer1: LayerGradients
    layer2: LayerGradients


PARAM_FIELDS = ("kernel", "attention_src", "attention_dst", "bias")


def named_arrays(obj: ModelParams | Gradients) -> Iterator[tuple[str, np.ndarray]]:
    """(name, array) pairs in a fixed order shared by params and gradients."""
    for layer_name in ("layer1", "layer2"):
        layer = getattr(obj, layer_name)
        for field in PARAM_FIELDS:
            yield f"{layer_name}.{field}", getattr(layer, field)


def init_params(
    seed: int,
    attention_dropout_rate: float = DEFAULT_ATTENTION_DROPOUT,
    layer_dropout_rate: float = DEFAULT_LAYER_DROPOUT,
) -> ModelParams:
    """Fresh model weights, deterministic in the seed.

    Kernels and attention vectors are uniform in +-sqrt(2 / (fan_in +
    fan_out)) (attention vectors have fan_out 1); biases start at zero.
    The PCG64 generator keeps the draw stable across platforms.
    """
    rng = np.random.Generator(np.random.PCG64(seed))

    def layer(in_dim: int, out_dim: int, heads: int, activation: str, combine: str) -> GatLayerParams:
        k_lim = np.sqrt(2.0 / (in_dim + out_dim))
        a_lim = np.sqrt(2.0 / (out_dim + 1))
        return GatLayerParams(
            kernel=rng.uniform(-k_lim, k_lim, size=(heads, in_dim, out_dim)),
            attention_src=rng.uniform(-a_lim, a_lim, size=(heads, out_dim)),
            attention_dst=rng.uniform(-a_lim, a_lim, size=(heads, out_dim)),
            bias=np.zeros((heads, out_dim)),
            activation=activation,
            combine=combine,
        )

    params = ModelParams(
        layer1=layer(IN_FEATURES, HIDDEN_CHANNELS, HIDDEN_HEADS, "elu", "concat"),
        layer2=layer(HIDDEN_CHANNELS * HIDDEN_HEADS, 1, 1, "sigmoid", "average"),
        attention_dropout_rate=attention_dropout_rate,
        layer_dropout_rate=layer_dropout_rate,
    )
    params.validate()
    return params


@dataclass(frozen=True)
class AttentionCoefficients:
    """Raw scores and softmax weights for every directed edge, per head.

    Entry k is the edge src[k] -> dst[k] (message direction); the last
    n_nodes entries are the self loops. weights sum to 1 over each node's
    surviving incoming edges; dropped edges have weight 0.
    """

    dst: np.ndarray  # (E,) receiving node
    src: np.ndarray  # (E,) sending node
    scores: np.ndarray  # (heads, E) pre-softmax, post-LeakyReLU
    raw: np.ndarray  # (heads, E) pre-LeakyReLU
    weights: np.ndarray  # (heads, E)
    keep: np.ndarray  # (heads, E) bool, False = dropped by attention dropout


def directed_edges(graph: BatchGraph) -> tuple[np.ndarray, np.ndarray]:
    """Both directions of every grid edge followed by one self loop per node."""
    n = graph.n_nodes
    und = graph.edges
    loops = np.arange(n, dtype=np.int64)
    dst = np.concatenate([und[:, 0], und[:, 1], loops])
    src = np.concatenate([und[:, 1], und[:, 0], loops])
    return dst, src


def _segment_softmax(scores: np.ndarray, seg: np.ndarray, n: int, keep: np.ndarray) -> np.ndarray:
    """Softmax of scores within groups given by seg, over kept entries only."""
    heads = scores.shape[0]
    out = np.zeros_like(scores)
    for h in range(heads):
        k = keep[h]
        seg_k = seg[k]
        kept_scores = scores[h][k]
        mx = np.full(n, -np.inf)
        np.maximum.at(mx, seg_k, kept_scores)
        ex = np.zeros(scores.shape[1])
        ex[k] = np.exp(kept_scores - mx[seg_k])
        denom = np.zeros(n)
        np.add.at(denom, seg_k, ex[k])
        out[h] = ex / denom[seg]
    return out


def attention_coefficients(
    layer: GatLayerParams,
    h_rows: np.ndarray,
    graph: BatchGraph,
    dropout_mask: np.ndarray | None = None,
) -> AttentionCoefficients:
    """Attention scores and weights of one layer over a batch graph.

    dropout_mask, when given, is a (heads, n_directed_edges) boolean array;
    False entries are removed from the softmax support (self loops must
    stay True so every node keeps at least one incoming edge).
    """
    layer.validate()
    if h_rows.ndim != 2 or h_rows.shape[0] != graph.n_nodes:
        raise ShapeError(f"feature rows {h_rows.shape} do not match {graph.n_nodes} nodes")
    if h_rows.shape[1] != layer.in_dim:
        raise ShapeError(f"feature width {h_rows.shape[1]} != kernel in_dim {layer.in_dim}")
    dst, src = directed_edges(graph)
    z = np.einsum("hio,ni->hno", layer.kernel, h_rows)
    p = np.einsum("hno,ho->hn", z, layer.attention_src)
    q = np.einsum("hno,ho->hn", z, layer.attention_dst)
    raw = p[:, dst] + q[:, src]
    scores = np.where(raw > 0, raw, LEAKY_SLOPE * raw)
    if dropout_mask is None:
        keep = np.ones_like(scores, dtype=bool)
    else:
        if dropout_mask.shape != scores.shape:
            raise ShapeError(f"dropout mask {dropout_mask.shape} != {scores.shape}")
        keep = dropout_mask
    weights = _segment_softmax(scores, dst, graph.n_nodes, keep)
    return AttentionCoefficients(dst=dst, src=src, scores=scores, raw=raw, weights=weights, keep=keep)


def _activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "elu":
        return np.where(pre > 0, pre, np.expm1(np.minimum(pre, 0.0)))
    clamped = np.clip(pre, -SIGMOID_CLAMP, SIGMOID_CLAMP)
    return 1.0 / (1.0 + np.exp(-clamped))


def _activate_backward(dout: np.ndarray, pre: np.ndarray, out: np.ndarray, activation: str) -> np.ndarray:
    if activation == "elu":
        return dout * np.where(pre > 0, 1.0, out + 1.0)
    grad = out * (1.0 - out)
    return dout * np.where(np.abs(pre) < SIGMOID_CLAMP, grad, 0.0)


@dataclass
class LayerCache:
    h_in: np.ndarray  # layer input after feature dropout
    feature_keep: np.ndarray | None  # (N, in_dim) bool, None when no dropout
    z: np.ndarray  # (heads, N, out_dim)
    coeffs: AttentionCoefficients
    pre_activation: np.ndarray  # (N, output_width)
    h_out: np.ndarray


@dataclass
class ForwardCache:
    """Everything the backward pass needs, as produced by model_forward."""

    graph: BatchGraph
    layers: list[LayerCache]
    probabilities: np.ndarray


def _layer_forward(
    layer: GatLayerParams,
    h_rows: np.ndarray,
    graph: BatchGraph,
    attention_keep: np.ndarray | None,
    feature_keep: np.ndarray | None,
    layer_dropout_rate: float,
) -> LayerCache:
    h_in = h_rows
    if feature_keep is not None:
        h_in = h_rows * feature_keep / (1.0 - layer_dropout_rate)
    coeffs = attention_coefficients(layer, h_in, graph, attention_keep)
    z = np.einsum("hio,ni->hno", layer.kernel, h_in)
    agg = np.zeros_like(z)
    for h in range(layer.heads):
        np.add.at(agg[h], coeffs.dst, coeffs.weights[h][:, None] * z[h][coeffs.src])
    agg += layer.bias[:, None, :]
    if layer.combine == "concat":
        pre = agg.transpose(1, 0, 2).reshape(graph.n_nodes, -1)
    else:
        pre = agg.mean(axis=0)
    out = _activate(pre, layer.activation)
    return LayerCache(
        h_in=h_in,
        feature_keep=feature_keep,
        z=z,
        coeffs=coeffs,
        pre_activation=pre,
        h_out=out,
    )


def model_forward(
    params: ModelParams,
    batch: BatchGraph,
    train_seed: int | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Per-node Steiner probabilities for a batch of grids.

    Inference mode (train_seed None) is fully deterministic. Training mode
    draws attention dropout masks for the hidden layer (neighbour edges
    only; self loops always survive) and feature dropout masks for both
    layer inputs when layer_dropout_rate > 0, all from PCG64(train_seed).
    """
    params.validate()
    if batch.features.shape[1] != params.layer1.in_dim:
        raise ShapeError(
            f"batch features are {batch.features.shape[1]}-dimensional, "
            f"model expects {params.layer1.in_dim}"
        )
    attn_keep = None
    feat_keep1 = feat_keep2 = None
    if train_seed is not None:
        rng = np.random.Generator(np.random.PCG64(train_seed))
        n = batch.n_nodes
        n_neighbor = 2 * batch.edges.shape[0]
        if params.attention_dropout_rate > 0.0:
            survive = rng.random((params.layer1.heads, n_neighbor)) >= params.attention_dropout_rate
            attn_keep = np.concatenate(
                [survive, np.ones((params.layer1.heads, n), dtype=bool)], axis=1
            )
        if params.layer_dropout_rate > 0.0:
            feat_keep1 = rng.random((n, params.layer1.in_dim)) >= params.layer_dropout_rate
            feat_keep2 = rng.random((n, params.layer2.in_dim)) >= params.layer_dropout_rate

    cache1 = _layer_forward(
        params.layer1, batch.features, batch, attn_keep, feat_keep1, params.layer_dropout_rate
    )
    cache2 = _layer_forward(
        params.layer2, cache1.h_out, batch, None, feat_keep2, params.layer_dropout_rate
    )
    probs = cache2.h_out[:, 0]
    return probs, ForwardCache(graph=batch, layers=[cache1, cache2], probabilities=probs)


def _layer_backward(
    layer: GatLayerParams,
    cache: LayerCache,
    d_out: np.ndarray,
    layer_dropout_rate: float,
) -> tuple[LayerGradients, np.ndarray]:
    """Gradients of one layer and of its (pre-dropout) input rows."""
    n = cache.h_in.shape[0]
    coeffs = cache.coeffs
    dst, src = coeffs.dst, coeffs.src
    d_pre = _activate_backward(d_out, cache.pre_activation, cache.h_out, layer.activation)
    if layer.combine == "concat":
        d_agg = d_pre.reshape(n, layer.heads, layer.out_dim).transpose(1, 0, 2)
    else:
        d_agg = np.broadcast_to(d_pre / layer.heads, (layer.heads, n, layer.out_dim)).copy()

    d_bias = d_agg.sum(axis=1)
    d_z = np.zeros_like(cache.z)
    d_alpha = np.empty_like(coeffs.weights)
    for h in range(layer.heads):
        d_alpha[h] = np.einsum("eo,eo->e", d_agg[h][dst], cache.z[h][src])
        np.add.at(d_z[h], src, coeffs.weights[h][:, None] * d_agg[h][dst])

    # softmax backward within each receiving node's edge group
    group_dot = np.zeros((layer.heads, n))
    for h in range(layer.heads):
        np.add.at(group_dot[h], dst, coeffs.weights[h] * d_alpha[h])
    d_scores = coeffs.weights * (d_alpha - group_dot[:, dst])
    d_raw = d_scores * np.where(coeffs.raw > 0, 1.0, LEAKY_SLOPE)

    d_p = np.zeros((layer.heads, n))
    d_q = np.zeros((layer.heads, n))
    for h in range(layer.heads):
        np.add.at(d_p[h], dst, d_raw[h])
        np.add.at(d_q[h], src, d_raw[h])

    d_att_src = np.einsum("hno,hn->ho", cache.z, d_p)
    d_att_dst = np.einsum("hno,hn->ho", cache.z, d_q)
    d_z += d_p[:, :, None] * layer.attention_src[:, None, :]
    d_z += d_q[:, :, None] * layer.attention_dst[:, None, :]

    d_kernel = np.einsum("ni,hno->hio", cache.h_in, d_z)
    d_h = np.einsum("hno,hio->ni", d_z, layer.kernel)
    if cache.feature_keep is not None:
        d_h = d_h * cache.feature_keep / (1.0 - layer_dropout_rate)
    grads = LayerGradients(
        kernel=d_kernel, attention_src=d_att_src, attention_dst=d_att_dst, bias=d_bias
    )
    return grads, d_h


def model_backward(params: ModelParams, cache: ForwardCache, d_loss_d_prob: np.ndarray) -> Gradients:
    """Backpropagate d(loss)/d(probabilities) to every parameter array."""
    params.validate()
    if len(cache.layers) != 2:
        raise CacheMismatch("cache does not hold two layers")
    for layer, lc in zip((params.layer1, params.layer2), cache.layers):
        if lc.z.shape != (layer.heads, cache.graph.n_nodes, layer.out_dim):
            raise CacheMismatch("cache was produced by a different model shape")
    d_loss_d_prob = np.asarray(d_loss_d_prob, dtype=np.float64)
    if d_loss_d_prob.shape != cache.probabilities.shape:
        raise ShapeError(
            f"upstream gradient has shape {d_loss_d_prob.shape}, "
            f"expected {cache.probabilities.shape}"
        )
    g2, d_hidden = _layer_backward(
        params.layer2, cache.layers[1], d_loss_d_prob[:, None], params.layer_dropout_rate
    )
    g1, _ = _layer_backward(params.layer1, cache.layers[0], d_hidden, params.layer_dropout_rate)
    return Gradients(layer1=g1, layer2=g2)
