"""Hierarchical dialogue-act encoder.

Each slot value is read by a bidirectional LSTM; the final value state is
concatenated with the slot embedding and the resulting pair vectors are
mixed by DA-level multi-head self-attention (no positional encoding, so
the encoder is permutation-equivariant over pairs).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, concat, dropout, layer_norm, linear, lstm_step, softmax, stack, take_rows
from .autodiff.tensor import swapaxes, where


@dataclass(frozen=True)
class EncoderConfig:
    embed_dim: int = 256
    hidden_dim: int = 512
    layers: int = 3
    heads: int = 4
    residual: bool = True
    mode: str = "attention"  # attention | identity | lstm

    def __post_init__(self):
        if self.hidden_dim % self.heads:
            raise ValueError("hidden_dim must be divisible by the number of heads")
        if self.hidden_dim % 2:
            raise ValueError("hidden_dim must be even (two value-LSTM directions)")
        if self.mode not in ("attention", "identity", "lstm"):
            raise ValueError(f"unknown encoder mode {self.mode!r}")


@dataclass
class EncodedDA:
    """Encoder output for a padded batch of dialogue acts."""

    units: Tensor              # (B, n, hidden), the h^e_i
    pair_mask: np.ndarray      # (B, n) real pairs
    copy_mask: np.ndarray      # (B, n) pairs the pointer may select (not the act type)
    value_states: Tensor       # (B*n, L, hidden) per-token bidirectional states
    value_final: Tensor        # (B, n, hidden) h^v_{i, l_i}
    attention: list = field(default_factory=list)  # per layer (B, heads, n, n) arrays

    @property
    def n(self):
        return self.units.shape[1]


def encode_value(params, embeddings, lengths):
    """Run the bidirectional slot-level LSTM over padded value embeddings.

    ``embeddings`` is (N, L, E), ``lengths`` (N,).  Returns per-token states
    (N, L, 2H) and the state at the last real token (N, 2H), i.e. the
    forward state after the whole value joined with the backward state
    that has only read the last token.
    """
    lengths = np.asarray(lengths)
    if np.any(lengths < 1):
        raise ValueError("slot values must contain at least one token")
    fwd_p, bwd_p = params["fwd"], params["bwd"]
    N, L = embeddings.shape[0], embeddings.shape[1]
    H = fwd_p["U"].shape[0]
    zeros = np.zeros((N, H), dtype=embeddings.dtype)

    h, c = Tensor(zeros), Tensor(zeros)
    fwd = []
    for k in range(L):
        h2, c2 = lstm_step(embeddings[:, k], h, c, fwd_p)
        live = (k < lengths)[:, None]
        h, c = where(live, h2, h), where(live, c2, c)
        fwd.append(h)
    h_last = h

    h, c = Tensor(zeros), Tensor(zeros)
    bwd = [None] * L
    for k in reversed(range(L)):
        h2, c2 = lstm_step(embeddings[:, k], h, c, bwd_p)
        live = (k < lengths)[:, None]
        h, c = where(live, h2, h), where(live, c2, c)
        bwd[k] = h

    states = concat([stack(fwd, axis=1), stack(bwd, axis=1)], axis=-1)
    bwd_stack = stack(bwd, axis=1)
    bwd_last = bwd_stack[np.arange(N), lengths - 1]
    return states, concat([h_last, bwd_last], axis=-1)


def embed_slot(table, slot_ids):
    """Slot embedding lookup (unknown slots are expected to carry the UNK id)."""
    return take_rows(table, slot_ids)


def self_attention(params, x, pair_mask, heads, residual):
    """One multi-head scaled dot-product attention layer; returns (output, weights)."""
    B, n, H = x.shape
    dh = H // heads

    def split(t):
        return t.reshape(B, n, heads, dh).transpose(0, 2, 1, 3)

    q, k, v = split(linear(x, params["Wq"])), split(linear(x, params["Wk"])), split(linear(x, params["Wv"]))
    scores = (q @ swapaxes(k, -1, -2)) * (1.0 / np.sqrt(dh))
    weights = softmax(scores, axis=-1, mask=pair_mask[:, None, None, :])
    ctx = (weights @ v).transpose(0, 2, 1, 3).reshape(B, n, H)
    if "Wo" in params:
        ctx = linear(ctx, params["Wo"])
    if residual:
        ctx = layer_norm(x + ctx, params["ln_g"], params["ln_b"])
    return ctx, weights.data


def _pair_lstm(params, x, pair_mask):
    """Bidirectional recurrent pass over the pairs in DA order (ablation encoder)."""
    B, n, _ = x.shape
    lengths = pair_mask.sum(axis=1)
    states, _ = encode_value({"fwd": params["fwd"], "bwd": params["bwd"]}, x, lengths)
    return states


def encode_da(params, config, batch, rng=None, training=False, drop=0.0):
    """Encode a padded batch into unit vectors ``h^e_i``.

    ``batch`` provides ``slot_ids`` (B, n), ``value_ids`` (B, n, L),
    ``value_len`` (B, n), ``pair_mask`` and ``copy_mask``.
    """
    slot_ids, value_ids, value_len = batch.slot_ids, batch.value_ids, batch.value_len
    B, n, L = value_ids.shape
    word_emb = take_rows(params["embed/word"], value_ids.reshape(B * n, L))
    word_emb = dropout(word_emb, drop, rng, training)
    lengths = np.maximum(value_len.reshape(-1), 1)
    value_p = {"fwd": _group(params, "enc/value_fwd"), "bwd": _group(params, "enc/value_bwd")}
    states, final = encode_value(value_p, word_emb, lengths)
    final = final.reshape(B, n, config.hidden_dim)
    slot_vec = embed_slot(params["embed/slot"], slot_ids)
    pairs = concat([slot_vec, final], axis=-1)
    x = linear(pairs, params["enc/pair_in/W"], params["enc/pair_in/b"])
    x = dropout(x, drop, rng, training)

    attn = []
    if config.mode == "attention":
        for layer in range(config.layers):
            x, w = self_attention(_group(params, f"enc/attn{layer}"), x, batch.pair_mask,
                                  config.heads, config.residual)
            attn.append(w)
    elif config.mode == "lstm":
        lp = {"fwd": _group(params, "enc/da_fwd"), "bwd": _group(params, "enc/da_bwd")}
        x = _pair_lstm(lp, x, batch.pair_mask)

    return EncodedDA(units=x, pair_mask=batch.pair_mask, copy_mask=batch.copy_mask,
                     value_states=states, value_final=final, attention=attn)


def init_encoder_params(ps, config, n_words, n_slots, rng):
    from .autodiff import glorot

    E, H = config.embed_dim, config.hidden_dim
    dt = ps.dtype
    ps.add("embed/word", rng.normal(0.0, 0.1, size=(n_words, E)))
    ps.add("embed/slot", rng.normal(0.0, 0.1, size=(n_slots, E)))
    for name in ("enc/value_fwd", "enc/value_bwd"):
        add_lstm(ps, name, E, H // 2, rng)
    ps.add("enc/pair_in/W", glorot(rng, (E + H, H), dt))
    ps.add("enc/pair_in/b", np.zeros(H))
    if config.mode == "attention":
        for layer in range(config.layers):
            pre = f"enc/attn{layer}"
            for w in ("Wq", "Wk", "Wv"):
                ps.add(f"{pre}/{w}", glorot(rng, (H, H), dt))
            if config.heads > 1:
                ps.add(f"{pre}/Wo", glorot(rng, (H, H), dt))
            if config.residual:
                ps.add(f"{pre}/ln_g", np.ones(H))
                ps.add(f"{pre}/ln_b", np.zeros(H))
    elif config.mode == "lstm":
        add_lstm(ps, "enc/da_fwd", H, H // 2, rng)
        add_lstm(ps, "enc/da_bwd", H, H // 2, rng)


def add_lstm(ps, prefix, input_dim, hidden, rng):
    from .autodiff import glorot

    ps.add(f"{prefix}/W", glorot(rng, (input_dim, 4 * hidden), ps.dtype))
    ps.add(f"{prefix}/U", glorot(rng, (hidden, 4 * hidden), ps.dtype))
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # forget gate
    ps.add(f"{prefix}/b", b)


def _group(params, prefix):
    if hasattr(params, "group"):
        return params.group(prefix)
    cut = len(prefix) + 1
    return {k[cut:]: v for k, v in params.items() if k.startswith(prefix + "/")}
