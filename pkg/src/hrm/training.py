"""Loss assembly, temperature annealing and the training loop."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import (
    NonFiniteError,
    OptimizerState,
    Tensor,
    adam_update,
    clip_grad_norm,
    forward_backward,
    gather_last,
    log,
    no_grad,
    stack,
    stop_gradient,
)
from .autodiff.nn import dropout
from .model import HRM, build_vocabularies

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; parameters were restored to the last good state."""


# -- criteria -------------------------------------------------------------

def sequence_loss(step_dists, targets, mask=None, floor=0.0):
    """Cross entropy ``sum_j -log Q_j[y_j]`` per sequence.

    ``step_dists`` is a list of (B, K) distributions, ``targets`` (B, T)
    extended-vocabulary ids.  Returns a (B,) tensor.
    """
    targets = np.asarray(targets)
    terms = []
    for j, q in enumerate(step_dists):
        p = gather_last(q, targets[:, j])
        term = -log(p + floor) if floor else -log(p)
        if mask is not None:
            term = term * np.asarray(mask)[:, j].astype(q.dtype)
        terms.append(term)
    return stack(terms, axis=1).sum(axis=1)


def selected_renderer_loss(o, dists, renderers, targets, vocab_size, floor):
    """``sum_r o_r * -log Q^r[y]`` for one step, each renderer on the extended vocabulary.

    With a one-hot ``o`` the value equals ``-log Q_j[y]``; under a
    straight-through ``o`` the switch gradient per renderer is that
    renderer's own (bounded) loss rather than ``1 / Q_j[y]``.
    """
    targets = np.asarray(targets)
    is_copy = targets >= vocab_size
    B = o.shape[0]
    total = None
    for r, tag in enumerate(renderers):
        if tag == "p":
            idx, live = np.where(is_copy, targets - vocab_size, 0), is_copy
        else:
            idx, live = np.where(is_copy, 0, targets), ~is_copy
        p = gather_last(dists[tag], idx) * live.astype(o.dtype)
        term = o[:, r].reshape(B) * -log(p + floor)
        total = term if total is None else total + term
    return total


def vq_loss(hv, h_sel, rho=0.25):
    """``||sg(hv) - h_sel||^2 + rho ||hv - sg(h_sel)||^2`` along the last axis."""
    a = stop_gradient(hv) - h_sel
    b = hv - stop_gradient(h_sel)
    return (a * a).sum(axis=-1) + (b * b).sum(axis=-1) * rho


def kl_loss(mu, sigma):
    """``sum(mu^2 + exp(sigma) - (1 + sigma))`` along the last axis."""
    return (mu * mu + sigma.exp() - sigma - 1.0).sum(axis=-1)


def anneal_tau(step, tau0=1.0, rate=1e-4, tau_min=0.5, interval=1000):
    """Exponentially decayed temperature, refreshed every ``interval`` steps."""
    anchored = (step // interval) * interval
    return max(tau_min, tau0 * math.exp(-rate * anchored))


def config_tau(config, step):
    return anneal_tau(step, config.tau0, config.tau_decay, config.tau_min, config.tau_interval)


@dataclass
class LossParts:
    total: Tensor
    lc: float
    ld: float
    lv: float
    correct: int
    count: int


def batch_loss(model, batch, rng=None, training=True, tau=1.0):
    """Teacher-forced loss of a batch, averaged over its examples."""
    cfg = model.config
    ctx = model.encode(batch, rng, training)
    state = model.init_state(ctx)
    B, T = batch.target.shape
    rows = np.arange(B)
    mask = batch.step_mask
    dists, ld_terms, lv_terms, lc_terms = [], [], [], []
    hard_switch = cfg.switch == "vq" or (cfg.switch == "gumbel" and cfg.gumbel_hard and training)
    correct = 0
    for j in range(T):
        x = model.embed_prev(ctx, batch.prev_kind[:, j], batch.prev_word[:, j], batch.prev_pair[:, j])
        x = dropout(x, cfg.dropout, rng, training)
        state, res = model.step(state, x, ctx, rng, training, tau)
        m = mask[:, j]
        if hard_switch:
            step_dists = {t: out.dist for t, out in res.outputs.items()}
            lc_terms.append(selected_renderer_loss(res.decision.o, step_dists, model.renderers,
                                                   batch.target[:, j], model.vocab_size, cfg.prob_floor)
                            * m.astype(model.dtype))
        else:
            dists.append(res.q)
        correct += int(np.sum((np.argmax(res.q.data, axis=-1) == batch.target[:, j]) & m))
        dec = res.decision
        if cfg.switch == "vq":
            w = m.astype(model.dtype)
            h_sel = res.candidates[rows, dec.index]
            ld_terms.append(vq_loss(dec.hv, h_sel, cfg.rho) * w)
            lv_terms.append(kl_loss(dec.mu, dec.sigma) * w)
    if hard_switch:
        lc = stack(lc_terms, axis=1).sum(axis=1)
    else:
        lc = sequence_loss(dists, batch.target, mask, cfg.prob_floor)
    total = lc.mean()
    ld_val = lv_val = 0.0
    if ld_terms:
        ld = stack(ld_terms, axis=1).sum(axis=1).mean()
        lv = stack(lv_terms, axis=1).sum(axis=1).mean()
        total = total + ld * cfg.vq_weight + lv * cfg.kl_weight
        ld_val, lv_val = float(ld.data), float(lv.data)
    return LossParts(total, float(lc.mean().data), ld_val, lv_val, correct, int(mask.sum()))


def teacher_forced_accuracy(model, instances, batch_size=64):
    """Fraction of steps (EOS included) where ``argmax Q_j`` is the gold item, in inference mode."""
    correct = count = 0
    with no_grad():
        for start in range(0, len(instances), batch_size):
            chunk = instances[start:start + batch_size]
            batch = model.make_batch([d for d, _ in chunk], [r for _, r in chunk])
            parts = batch_loss(model, batch, training=False)
            correct += parts.correct
            count += parts.count
    return correct / max(count, 1)


# -- loop ---------------------------------------------------------------

@dataclass
class TrainRecord:
    epoch: int
    step: int
    tau: float
    train_lc: float
    train_ld: float
    train_lv: float
    train_acc: float
    valid_lc: float | None = None
    valid_bleu: float | None = None
    elapsed: float = field(default=0.0, compare=False)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class TrainResult:
    model: HRM
    records: list
    best_epoch: int
    best_bleu: float
    stopped_early: bool


def _rngs(seed):
    ss = np.random.SeedSequence(seed)
    init, order, noise = ss.spawn(3)
    return (np.random.default_rng(init), np.random.default_rng(order), np.random.default_rng(noise))


def _snapshot(model):
    return model.params.state_dict()


def _opt_arrays(state):
    arrays = {}
    for name, m in state.m.items():
        arrays[f"opt/m/{name}"] = m
        arrays[f"opt/v/{name}"] = state.v[name]
    return arrays


def _save_last(path, model, opt, epoch, step, records, rngs, best):
    meta = model.metadata()
    meta.update({
        "epoch": epoch, "step": step, "opt_step": opt.step,
        "records": [asdict(r) for r in records],
        "rng_states": [r.bit_generator.state for r in rngs],
        "best": best,
    })
    arrays = model.params.state_dict()
    arrays.update(_opt_arrays(opt))
    from .autodiff import save_checkpoint

    save_checkpoint(path, arrays, meta)


def train(config, train_corpus, valid_corpus=None, out_dir=None, resume=False):
    """Train a model; returns a :class:`TrainResult` holding the best-validation model.

    ``valid_corpus`` defaults to the training corpus.  With ``out_dir`` the
    best parameters go to ``best.npz``, the resumable state to ``last.npz``
    and per-epoch records to ``records.jsonl``.
    """
    config.validate()
    from .decoding import corpus_hypotheses
    from .metrics import corpus_bleu

    instances = train_corpus.instances()
    if not instances:
        raise ValueError("training corpus is empty")
    valid_corpus = valid_corpus if valid_corpus is not None else train_corpus
    valid_instances = valid_corpus.instances()
    init_rng, order_rng, noise_rng = _rngs(config.seed)
    vocab, slot_vocab = build_vocabularies(config, instances)
    model = HRM(config, vocab, slot_vocab, rng=init_rng)
    opt = OptimizerState(lr=config.lr, l2=config.l2)
    records, step, start_epoch = [], 0, 1
    best = {"bleu": -1.0, "epoch": 0, "since": 0}
    best_params = _snapshot(model)

    last_path = os.path.join(out_dir, "last.npz") if out_dir else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    if resume:
        if not last_path or not os.path.exists(last_path):
            raise FileNotFoundError("nothing to resume: last.npz not found")
        model, arrays, meta = HRM.load(last_path)
        if meta["config"] != config.to_dict():
            raise ValueError("resume config differs from checkpoint config")
        for key, arr in arrays.items():
            if key.startswith("opt/m/"):
                opt.m[key[6:]] = arr
            elif key.startswith("opt/v/"):
                opt.v[key[6:]] = arr
        opt.step = meta["opt_step"]
        step, start_epoch = meta["step"], meta["epoch"] + 1
        records = [TrainRecord(**r) for r in meta["records"]]
        for r, st in zip((init_rng, order_rng, noise_rng), meta["rng_states"]):
            r.bit_generator.state = st
        best = meta["best"]
        best_path = os.path.join(out_dir, "best.npz")
        best_params = HRM.load(best_path)[0].params.state_dict() if os.path.exists(best_path) else _snapshot(model)

    params = dict(model.params.items())
    stopped_early = False
    for epoch in range(start_epoch, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = order_rng.permutation(len(instances))
        sums = np.zeros(3)
        correct = count = 0
        for start in range(0, len(order), config.batch_size):
            chunk = [instances[k] for k in order[start:start + config.batch_size]]
            batch = model.make_batch([d for d, _ in chunk], [r for _, r in chunk], noise_rng, training=True)
            tau = config_tau(config, step)
            holder = {}

            def closure():
                holder["parts"] = batch_loss(model, batch, noise_rng, True, tau)
                return holder["parts"].total

            good = _snapshot(model)
            try:
                _, grads = forward_backward(closure, params)
            except NonFiniteError as err:
                model.params.load_state_dict(good)
                if out_dir:
                    model.save(os.path.join(out_dir, "diverged_last_good.npz"))
                raise TrainingDiverged(f"epoch {epoch} step {step}: {err}") from err
            clip_grad_norm(grads, config.grad_clip)
            adam_update(params, grads, opt)
            step += 1
            parts = holder["parts"]
            sums += np.array([parts.lc, parts.ld, parts.lv]) * len(chunk)
            correct += parts.correct
            count += parts.count
        sums /= len(instances)
        rec = TrainRecord(epoch=epoch, step=step, tau=config_tau(config, step), train_lc=float(sums[0]),
                          train_ld=float(sums[1]), train_lv=float(sums[2]), train_acc=correct / max(count, 1))

        if epoch % config.eval_every == 0 or epoch == config.max_epochs:
            rec.valid_lc = _valid_loss(model, valid_instances)
            hyps = corpus_hypotheses(model, [ex.da for ex in valid_corpus.examples], beam_width=config.eval_beam)
            rec.valid_bleu = corpus_bleu(hyps, [ex.refs for ex in valid_corpus.examples])
            if rec.valid_bleu >= best["bleu"]:
                improved = rec.valid_bleu > best["bleu"]
                best.update(bleu=rec.valid_bleu, epoch=epoch)
                best_params = _snapshot(model)
                if out_dir:
                    model.save(os.path.join(out_dir, "best.npz"), {"epoch": epoch})
                if improved:
                    best["since"] = 0
                else:
                    best["since"] += 1
            else:
                best["since"] += 1
        rec.elapsed = time.perf_counter() - t0
        records.append(rec)
        logger.info("epoch %d lc=%.4f ld=%.4f lv=%.4f acc=%.4f bleu=%s", epoch, rec.train_lc, rec.train_ld,
                    rec.train_lv, rec.train_acc, rec.valid_bleu)
        if out_dir:
            with open(os.path.join(out_dir, "records.jsonl"), "a", encoding="utf-8") as fh:
                fh.write(rec.to_json() + "\n")
            _save_last(last_path, model, opt, epoch, step, records, (init_rng, order_rng, noise_rng), best)
        if config.patience is not None and best["since"] >= config.patience:
            stopped_early = True
            break

    model.params.load_state_dict(best_params)
    return TrainResult(model, records, best["epoch"], best["bleu"], stopped_early)


def _valid_loss(model, instances, batch_size=64):
    total = 0.0
    with no_grad():
        for start in range(0, len(instances), batch_size):
            chunk = instances[start:start + batch_size]
            batch = model.make_batch([d for d, _ in chunk], [r for _, r in chunk])
            total += batch_loss(model, batch, training=False).lc * len(chunk)
    return total / max(len(instances), 1)
