"""Mode switcher: picks (or mixes) a renderer at every generation step.

Three variants share one output contract, a weight vector ``o`` over the
renderers in order ``(p, c, l)``:

* ``soft``   -- ``o = z``, the predicted categorical distribution;
* ``gumbel`` -- a Gumbel-softmax sample of ``z`` (one-hot argmax at inference);
* ``vq``     -- nearest renderer hidden state to a reparameterized query,
  one-hot in the forward pass with a straight-through backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat, exp, linear, log, one_hot, softmax, sqrt, stop_gradient, straight_through, tanh
from .autodiff.tensor import where

VARIANTS = ("soft", "gumbel", "vq")
Z_FLOOR = 1e-10


@dataclass
class SwitchDecision:
    o: Tensor
    z: Tensor
    variant: str
    index: np.ndarray
    tau: float | None = None
    mu: Tensor | None = None
    sigma: Tensor | None = None
    hv: Tensor | None = None
    distances: np.ndarray | None = None


def switch_logits(params, h_prev, mask=None):
    """``z = softmax(W_theta tanh(U_theta h))`` over the active renderers."""
    theta = linear(tanh(linear(h_prev, params["U_theta"])), params["W_theta"])
    return softmax(theta, axis=-1, mask=mask)


def switch_gumbel(z, tau, rng=None, hard=False, training=True, mask=None, noise=None):
    """Gumbel-softmax relaxation of a draw from ``z``.

    Outside training the switch is deterministic: one-hot at ``argmax z``.
    With ``hard`` the forward value is the one-hot argmax of the soft
    sample and gradients flow through the soft sample.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if not training:
        return Tensor(one_hot(np.argmax(z.data, axis=-1), z.shape[-1], z.dtype))
    floored = where(z.data < Z_FLOOR, np.asarray(Z_FLOOR, dtype=z.dtype), z)
    if noise is None:
        noise = rng.gumbel(size=z.shape).astype(z.dtype)
    soft = softmax((log(floored) + noise) * (1.0 / tau), axis=-1, mask=mask)
    if hard:
        return straight_through(one_hot(np.argmax(soft.data, axis=-1), z.shape[-1], z.dtype), soft)
    return soft


def reparameterize(params, h_prev, rng=None, training=True, eps=None):
    mu = linear(tanh(linear(h_prev, params["U_mu"])), params["W_mu"])
    sigma = linear(tanh(linear(h_prev, params["U_sigma"])), params["W_sigma"])
    if eps is None:
        eps = rng.standard_normal(mu.shape).astype(mu.dtype) if training else np.zeros(mu.shape, mu.dtype)
    return mu, sigma, mu + exp(sigma) * eps


def quantize(hv, candidates, mask=None):
    """Distances from ``hv`` (B, H) to each candidate (B, R, H) and the argmin.

    Ties go to the earliest renderer.  Returns ``(distances, index, relaxed)``
    where ``relaxed = softmax(-distance)`` carries the straight-through
    gradient; candidates are detached inside it.
    """
    B, H = hv.shape
    diff = hv.reshape(B, 1, H) - stop_gradient(candidates)
    dist = sqrt((diff * diff).sum(axis=-1) + 1e-12)
    d = dist.data.copy()
    if mask is not None:
        d[~np.asarray(mask, dtype=bool)] = np.inf
    index = np.argmin(d, axis=-1)
    relaxed = softmax(-dist, axis=-1, mask=mask)
    return d, index, relaxed


def switch_vq(params, h_prev, candidates, rng=None, training=True, mask=None, eps=None):
    """VQ switch with a dynamic codebook made of this step's renderer states."""
    mu, sigma, hv = reparameterize(params, h_prev, rng, training, eps)
    dist, index, relaxed = quantize(hv, candidates, mask)
    o = straight_through(one_hot(index, candidates.shape[1], hv.dtype), relaxed)
    return SwitchDecision(o=o, z=relaxed, variant="vq", index=index, mu=mu, sigma=sigma,
                          hv=hv, distances=dist)


def aggregate(o, hiddens, dists, renderers):
    """Mix renderer states and distributions with weights ``o``.

    ``hiddens`` and ``dists`` map renderer tags to (B, H) states and their
    distributions.  The result lives on the extended vocabulary: word
    entries first, then one copy entry per pair.
    """
    B = o.shape[0]
    h = None
    word = None
    copy = None
    for r, tag in enumerate(renderers):
        w = o[:, r].reshape(B, 1)
        term = w * hiddens[tag]
        h = term if h is None else h + term
        if tag == "p":
            copy = w * dists[tag]
        else:
            part = w * dists[tag]
            word = part if word is None else word + part
    q = word if copy is None else concat([word, copy], axis=-1)
    return h, q


def decide(variant, params, h_prev, candidates, rng=None, training=True, tau=1.0, hard=False, mask=None):
    """Run the configured switch variant; returns a :class:`SwitchDecision`."""
    if variant == "vq":
        return switch_vq(params, h_prev, candidates, rng, training, mask)
    z = switch_logits(params, h_prev, mask)
    if variant == "soft":
        o = z
    elif variant == "gumbel":
        o = switch_gumbel(z, tau, rng, hard=hard, training=training, mask=mask)
    else:
        raise ValueError(f"unknown switch variant {variant!r}")
    return SwitchDecision(o=o, z=z, variant=variant, index=np.argmax(o.data, axis=-1),
                          tau=tau if variant == "gumbel" else None)


def init_switch_params(ps, variant, hidden_dim, n_renderers, rng):
    from .autodiff import glorot

    H, dt = hidden_dim, ps.dtype
    if variant == "vq":
        for name in ("mu", "sigma"):
            ps.add(f"switch/U_{name}", glorot(rng, (H, H), dt))
            ps.add(f"switch/W_{name}", glorot(rng, (H, H), dt))
    else:
        ps.add("switch/U_theta", glorot(rng, (H, H), dt))
        ps.add("switch/W_theta", glorot(rng, (H, n_renderers), dt))
