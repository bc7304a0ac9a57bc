"""Transformer encoder classifier over landmark clip tensors.

Architecture: linear embedding of the 144 per-frame coordinates into the
hidden width, sinusoidal positional encoding, a stack of post-norm encoder
layers (multi-head self-attention, then feed-forward, each with residual +
layer norm), masked mean pooling over DATA and EOS rows, and an affine
classification head. PAD rows are masked out of attention keys and pooling,
so logits are invariant to how much padding a batch carries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeMismatch, Tensor
from .landmarks import ClipTensor
from .rng import CounterRng


class SequenceTooLong(ValueError):
    pass


class OddDimension(ValueError):
    pass


class BadK(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 144
    hidden_dim: int = 512
    num_heads: int = 4
    num_layers: int = 2
    ffn_dim: int = 2048
    dropout_p: float = 0.2
    embed_dropout_p: float = 0.2      # applied once after embedding + positions
    num_classes: int = 226
    max_seq_len: int = 17             # t_data + 1 (EOS slot included)
    ln_eps: float = 1e-5

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.num_heads, self.num_layers,
               self.ffn_dim, self.num_classes, self.max_seq_len) < 1:
            raise ValueError("all model dimensions must be >= 1")
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(f"hidden_dim {self.hidden_dim} not divisible by {self.num_heads} heads")
        for p in (self.dropout_p, self.embed_dropout_p):
            if not 0.0 <= p < 1.0:
                raise ValueError(f"dropout probability {p} outside [0, 1)")


@dataclass
class LayerParams:
    attn_q_w: Tensor
    attn_q_b: Tensor
    attn_k_w: Tensor
    attn_k_b: Tensor
    attn_v_w: Tensor
    attn_v_b: Tensor
    attn_out_w: Tensor
    attn_out_b: Tensor
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor
    norm1_gain: Tensor
    norm1_bias: Tensor
    norm2_gain: Tensor
    norm2_bias: Tensor


@dataclass
class ModelParams:
    """All learnable weights; ``named()`` fixes the canonical parameter order."""

    embed_w: Tensor
    embed_b: Tensor
    layers: list[LayerParams] = field(default_factory=list)
    final_norm_gain: Tensor = None
    final_norm_bias: Tensor = None
    head_w: Tensor = None
    head_b: Tensor = None

    def named(self) -> list[tuple[str, Tensor]]:
        out = [("embed_w", self.embed_w), ("embed_b", self.embed_b)]
        for i, layer in enumerate(self.layers):
            for fname in LayerParams.__dataclass_fields__:
                out.append((f"layer{i}.{fname}", getattr(layer, fname)))
        out += [("final_norm_gain", self.final_norm_gain),
                ("final_norm_bias", self.final_norm_bias),
                ("head_w", self.head_w), ("head_b", self.head_b)]
        return out

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named()]

    def _map(self, fn) -> "ModelParams":
        layers = [LayerParams(**{f: fn(f"layer{i}.{f}", getattr(layer, f))
                                 for f in LayerParams.__dataclass_fields__})
                  for i, layer in enumerate(self.layers)]
        return ModelParams(
            embed_w=fn("embed_w", self.embed_w),
            embed_b=fn("embed_b", self.embed_b),
            layers=layers,
            final_norm_gain=fn("final_norm_gain", self.final_norm_gain),
            final_norm_bias=fn("final_norm_bias", self.final_norm_bias),
            head_w=fn("head_w", self.head_w),
            head_b=fn("head_b", self.head_b),
        )

    def replace_values(self, values: dict[str, np.ndarray]) -> "ModelParams":
        """New ModelParams taking arrays from ``values`` where present."""
        return self._map(lambda n, t: Tensor(values.get(n, t.data),
                                             requires_grad=True, dtype=t.dtype))

    def copy(self) -> "ModelParams":
        return self._map(lambda n, t: Tensor(t.data.copy(), requires_grad=True))

    def astype(self, dtype) -> "ModelParams":
        return self._map(lambda n, t: Tensor(t.data.astype(dtype), requires_grad=True))


def init_params(config: ModelConfig, seed: int, dtype=np.float32) -> ModelParams:
    """Glorot-uniform weights, zero biases, unit layer-norm gains.

    Parameter tensors are drawn in ``named()`` order from independent
    substreams of the seed, so the same seed always yields the same bits.
    """
    rng = CounterRng(seed, stream=1)
    counter = [0]

    def glorot(fan_in, fan_out):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        counter[0] += 1
        u = rng.spawn(counter[0]).uniform((fan_in, fan_out))
        return Tensor((2.0 * u - 1.0) * bound, requires_grad=True, dtype=dtype)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True, dtype=dtype)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True, dtype=dtype)

    d, f = config.hidden_dim, config.ffn_dim
    layers = []
    embed_w = glorot(config.input_dim, d)
    for _ in range(config.num_layers):
        layers.append(LayerParams(
            attn_q_w=glorot(d, d), attn_q_b=zeros(d),
            attn_k_w=glorot(d, d), attn_k_b=zeros(d),
            attn_v_w=glorot(d, d), attn_v_b=zeros(d),
            attn_out_w=glorot(d, d), attn_out_b=zeros(d),
            ffn_w1=glorot(d, f), ffn_b1=zeros(f),
            ffn_w2=glorot(f, d), ffn_b2=zeros(d),
            norm1_gain=ones(d), norm1_bias=zeros(d),
            norm2_gain=ones(d), norm2_bias=zeros(d),
        ))
    return ModelParams(
        embed_w=embed_w, embed_b=zeros(d), layers=layers,
        final_norm_gain=ones(d), final_norm_bias=zeros(d),
        head_w=glorot(d, config.num_classes), head_b=zeros(config.num_classes),
    )


def positional_encoding(seq_len: int, dim: int) -> np.ndarray:
    """Sinusoidal position matrix: sin on even columns, cos on odd ones."""
    if dim % 2 != 0:
        raise OddDimension(f"positional encoding needs even width, got {dim}")
    pos = np.arange(seq_len, dtype=np.float64)[:, None]
    i = np.arange(0, dim, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i / dim)
    pe = np.zeros((seq_len, dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def multi_head_attention(x: Tensor, attend: np.ndarray, layer: LayerParams,
                         num_heads: int) -> Tensor:
    """Self-attention over (B, T, d); PAD keys get exactly zero weight."""
    d = x.shape[-1]
    if d % num_heads != 0:
        raise ShapeMismatch(f"width {d} not divisible by {num_heads} heads")
    dk = d // num_heads
    q = ad.add_bias(ad.matmul(x, layer.attn_q_w), layer.attn_q_b)
    k = ad.add_bias(ad.matmul(x, layer.attn_k_w), layer.attn_k_b)
    v = ad.add_bias(ad.matmul(x, layer.attn_v_w), layer.attn_v_b)
    allowed = np.broadcast_to(attend[:, None, :], (x.shape[0], x.shape[1], x.shape[1]))
    heads = []
    for h in range(num_heads):
        lo, hi = h * dk, (h + 1) * dk
        qs, ks, vs = (ad.slice_last(t, lo, hi) for t in (q, k, v))
        scores = ad.scale(ad.matmul(qs, ad.transpose_last(ks)), 1.0 / math.sqrt(dk))
        weights = ad.softmax(ad.mask_fill(scores, allowed))
        heads.append(ad.matmul(weights, vs))
    ctx = ad.concat_last(heads)
    return ad.add_bias(ad.matmul(ctx, layer.attn_out_w), layer.attn_out_b)


def encoder_layer(x: Tensor, attend: np.ndarray, layer: LayerParams,
                  config: ModelConfig, training: bool, rng: CounterRng | None) -> Tensor:
    """Post-norm block: LN(x + Drop(MHA(x))), then LN(y + Drop(FFN(y)))."""
    a = multi_head_attention(x, attend, layer, config.num_heads)
    a = ad.dropout(a, config.dropout_p, training, rng)
    y = ad.layer_norm(ad.add(x, a), layer.norm1_gain, layer.norm1_bias, config.ln_eps)
    f = ad.add_bias(ad.matmul(y, layer.ffn_w1), layer.ffn_b1)
    f = ad.add_bias(ad.matmul(ad.relu(f), layer.ffn_w2), layer.ffn_b2)
    f = ad.dropout(f, config.dropout_p, training, rng)
    return ad.layer_norm(ad.add(y, f), layer.norm2_gain, layer.norm2_bias, config.ln_eps)


def masked_mean_pool(x: Tensor, attend: np.ndarray) -> Tensor:
    """Mean of encoder outputs over DATA + EOS rows only."""
    return ad.masked_mean_rows(x, attend)


def forward(features: np.ndarray, attend: np.ndarray, params: ModelParams,
            config: ModelConfig, training: bool = False,
            rng: CounterRng | None = None) -> Tensor:
    """Batch logits: embed -> +positions -> dropout -> encoder stack -> pool -> head."""
    B, T, F = features.shape
    if F != config.input_dim:
        raise ShapeMismatch(f"feature width {F}, model expects {config.input_dim}")
    if T > config.max_seq_len:
        raise SequenceTooLong(f"sequence length {T} > capacity {config.max_seq_len}")
    if attend.shape != (B, T):
        raise ShapeMismatch(f"mask shape {attend.shape} vs batch ({B}, {T})")
    dtype = params.embed_w.dtype
    x = Tensor(np.asarray(features, dtype=dtype))
    h = ad.add_bias(ad.matmul(x, params.embed_w), params.embed_b)
    pe = positional_encoding(T, config.hidden_dim).astype(dtype)
    h = ad.add(h, Tensor(np.broadcast_to(pe, h.shape)))
    h = ad.dropout(h, config.embed_dropout_p, training, rng)
    for layer in params.layers:
        h = encoder_layer(h, attend, layer, config, training, rng)
    pooled = masked_mean_pool(h, attend)
    pooled = ad.layer_norm(pooled, params.final_norm_gain, params.final_norm_bias,
                           config.ln_eps)
    return ad.add_bias(ad.matmul(pooled, params.head_w), params.head_b)


def forward_clips(clips: list[ClipTensor], params: ModelParams, config: ModelConfig,
                  training: bool = False, rng: CounterRng | None = None) -> Tensor:
    feats, attend, _ = batch_from_clips(clips, dtype=params.embed_w.dtype)
    return forward(feats, attend, params, config, training, rng)


def batch_from_clips(clips: list[ClipTensor], dtype=np.float32):
    """Stack equal-capacity clips into (features, attend mask, labels)."""
    caps = {c.capacity for c in clips}
    if len(caps) != 1:
        raise ShapeMismatch(f"mixed clip capacities {sorted(caps)}")
    feats = np.stack([c.features for c in clips]).astype(dtype)
    attend = np.stack([c.attend_mask() for c in clips])
    labels = np.array([-1 if c.label_index is None else c.label_index for c in clips],
                      dtype=np.int64)
    return feats, attend, labels


def predict_topk(logits, k: int) -> list[tuple[int, float]]:
    """Top-k (class index, softmax probability), ties broken by lower index."""
    arr = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    arr = arr.reshape(-1).astype(np.float64)
    C = arr.shape[0]
    if not 1 <= k <= C:
        raise BadK(f"k={k} outside [1, {C}]")
    e = np.exp(arr - arr.max())
    probs = e / e.sum()
    order = np.argsort(-probs, kind="stable")
    return [(int(i), float(probs[i])) for i in order[:k]]
