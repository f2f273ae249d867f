"""The renderer set: pointer network, conditional generator, language model.

All three consume the same ``(h_prev, cell, prev)`` interface, where
``h_prev`` is the shared switcher-aggregated decoder state and ``cell`` is
the renderer's private LSTM cell state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat, linear, lstm_step, softmax, tanh

RENDERERS = ("p", "c", "l")


@dataclass
class RendererStepOutput:
    tag: str
    hidden: Tensor
    cell: Tensor
    dist: Tensor                # Q^p over pairs, or Q^c / Q^l over words
    attention: Tensor | None = None   # alpha' for the conditional generator
    logits: Tensor | None = None


def additive_scores(v, w_query, keys_proj, query):
    """``v^T tanh(W q + U h^e_i)`` for every pair; ``keys_proj`` is ``U h^e`` (B, n, A)."""
    q = linear(query, w_query)                       # (B, A)
    act = tanh(keys_proj + q.reshape(q.shape[0], 1, q.shape[1]))
    return (act @ v.reshape(v.shape[0], 1)).reshape(act.shape[0], act.shape[1])


def pointer_step(params, h_prev, cell, prev, units, keys_proj, copy_mask):
    """Pointer network step: update ``g^p`` then attend over copyable pairs."""
    h, c = lstm_step(prev, h_prev, cell, params["cell"])
    beta = additive_scores(params["v_beta"], params["W_beta"], keys_proj, h)
    q = softmax(beta, axis=-1, mask=copy_mask)
    return RendererStepOutput("p", h, c, q, logits=beta)


def cond_gen_step(params, h_prev, cell, prev, units, keys_proj, pair_mask):
    """Conditional generator step.

    Attention is driven by the pre-update state ``h_prev``; the cell reads
    ``prev ⊕ h^a`` and the word distribution comes from ``W_c (h^c ⊕ h^a)``.
    """
    alpha = additive_scores(params["v_alpha"], params["W_alpha"], keys_proj, h_prev)
    a = softmax(alpha, axis=-1, mask=pair_mask)
    B, n = a.shape
    context = (a.reshape(B, 1, n) @ units).reshape(B, units.shape[2])
    h, c = lstm_step(concat([prev, context], axis=-1), h_prev, cell, params["cell"])
    logits = linear(concat([h, context], axis=-1), params["out/W"], params["out/b"])
    return RendererStepOutput("c", h, c, softmax(logits, axis=-1), attention=a, logits=logits)


def lm_step(params, h_prev, cell, prev):
    """Unconditional language model step; it never sees the encoded DA."""
    h, c = lstm_step(prev, h_prev, cell, params["cell"])
    logits = linear(h, params["out/W"], params["out/b"])
    return RendererStepOutput("l", h, c, softmax(logits, axis=-1), logits=logits)


def init_renderer_params(ps, renderers, embed_dim, hidden_dim, vocab_size, rng):
    from .autodiff import glorot
    from .encoder import add_lstm

    E, H, V = embed_dim, hidden_dim, vocab_size
    dt = ps.dtype
    if "p" in renderers:
        add_lstm(ps, "ptr/cell", E, H, rng)
        ps.add("ptr/W_beta", glorot(rng, (H, H), dt))
        ps.add("ptr/U_beta", glorot(rng, (H, H), dt))
        ps.add("ptr/v_beta", rng.uniform(-0.1, 0.1, size=H))
    add_lstm(ps, "cond/cell", E + H, H, rng)
    ps.add("cond/W_alpha", glorot(rng, (H, H), dt))
    ps.add("cond/U_alpha", glorot(rng, (H, H), dt))
    ps.add("cond/v_alpha", rng.uniform(-0.1, 0.1, size=H))
    ps.add("cond/out/W", glorot(rng, (2 * H, V), dt))
    ps.add("cond/out/b", np.zeros(V))
    add_lstm(ps, "lm/cell", E, H, rng)
    ps.add("lm/out/W", glorot(rng, (H, V), dt))
    ps.add("lm/out/b", np.zeros(V))
