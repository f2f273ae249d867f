"""Shared oracles for the test suite."""

import numpy as np

from hrm.autodiff import Tensor, forward_backward, record_stop_gradients, replay_stop_gradients

FD_EPS = 1e-5


def fd_check(closure, params, coords_per_tensor=10, seed=0, eps=FD_EPS):
    """Compare reverse-mode gradients with central differences.

    ``closure`` must be deterministic (rebuild any RNG inside it).  Values
    passed through stop-gradient are frozen during the probes, so the
    oracle differentiates the same surrogate the backward pass does.
    Returns the worst norm-relative error over all probed tensors.
    """
    with record_stop_gradients() as tape:
        _, grads = forward_backward(closure, params)
    frozen = [v.copy() for v in tape]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(coords_per_tensor, flat.size), replace=False)
        num = np.zeros(len(picks))
        for k, idx in enumerate(picks):
            old = flat[idx]
            flat[idx] = old + eps
            with replay_stop_gradients(frozen):
                up = float(closure().data)
            flat[idx] = old - eps
            with replay_stop_gradients(frozen):
                down = float(closure().data)
            flat[idx] = old
            num[k] = (up - down) / (2 * eps)
        ana = grads[name].reshape(-1)[picks]
        scale = max(np.linalg.norm(num), np.linalg.norm(ana), 1e-8)
        err = np.linalg.norm(num - ana) / scale
        worst = max(worst, err)
    return worst


def leaf(rng, *shape, scale=1.0):
    return Tensor(rng.normal(size=shape) * scale, requires_grad=True)


def tiny_config(**overrides):
    from hrm.config import TrainingConfig

    base = dict(embed_dim=8, hidden_dim=8, attn_layers=2, attn_heads=2, dropout=0.0, mask_values=False,
                max_epochs=1, patience=None, batch_size=4, seed=0)
    base.update(overrides)
    return TrainingConfig(**base)


def sample_instances(count=4):
    from hrm.synthetic import load_e2e_sample

    return load_e2e_sample().instances()[:count]


def tiny_model(**overrides):
    """A small randomly initialized model over the bundled sample vocabulary."""
    from hrm.model import HRM, build_vocabularies

    config = tiny_config(**overrides)
    vocab, slots = build_vocabularies(config, sample_instances(32))
    return HRM(config, vocab, slots, rng=np.random.default_rng(config.seed))
