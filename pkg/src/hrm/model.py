"""Heterogeneous rendering machine: parameters, batching and the decoder step."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import data as D
from .autodiff import ParameterSet, Tensor, glorot, linear, load_checkpoint, save_checkpoint, stack, take_rows, tanh
from .autodiff.tensor import where
from .config import TrainingConfig
from .encoder import EncodedDA, EncoderConfig, encode_da, init_encoder_params
from .renderers import cond_gen_step, init_renderer_params, lm_step, pointer_step
from .switcher import decide, init_switch_params

PREV_BOS, PREV_WORD, PREV_PHRASE = 0, 1, 2
SLOT_RESERVED = (D.PAD, D.UNK)


@dataclass
class Batch:
    das: list
    slot_ids: np.ndarray
    value_ids: np.ndarray
    value_len: np.ndarray
    pair_mask: np.ndarray
    copy_mask: np.ndarray
    prev_kind: np.ndarray | None = None
    prev_word: np.ndarray | None = None
    prev_pair: np.ndarray | None = None
    target: np.ndarray | None = None
    step_mask: np.ndarray | None = None
    items: list = field(default_factory=list)
    unrepresentable: int = 0

    @property
    def size(self):
        return self.slot_ids.shape[0]


@dataclass
class Context:
    """Encoder output plus the attention keys every decoder step reuses."""

    enc: EncodedDA | None
    units: Tensor
    keys_beta: Tensor | None
    keys_alpha: Tensor
    pair_mask: np.ndarray
    copy_mask: np.ndarray
    renderer_mask: np.ndarray | None

    def take(self, idx):
        idx = np.asarray(idx)
        return Context(None, self.units[idx], None if self.keys_beta is None else self.keys_beta[idx],
                       self.keys_alpha[idx], self.pair_mask[idx], self.copy_mask[idx],
                       None if self.renderer_mask is None else self.renderer_mask[idx])


@dataclass
class DecoderState:
    h: Tensor
    cells: dict

    def take(self, idx):
        idx = np.asarray(idx)
        return DecoderState(self.h[idx], {k: v[idx] for k, v in self.cells.items()})


@dataclass
class StepResult:
    q: Tensor                 # (B, V + n) extended distribution
    decision: object
    outputs: dict
    candidates: Tensor | None


class HRM:
    """Encoder, renderer set and mode switcher sharing one :class:`ParameterSet`."""

    def __init__(self, config, vocab, slot_vocab, rng=None):
        self.config = config.validate()
        self.vocab = vocab
        self.slot_vocab = slot_vocab
        self.renderers = config.renderers
        self.enc_config = EncoderConfig(config.embed_dim, config.hidden_dim, config.attn_layers,
                                        config.attn_heads, config.attn_residual, config.encoder_mode)
        self.dtype = np.dtype(config.dtype)
        if rng is None:
            rng = np.random.default_rng(config.seed)
        ps = ParameterSet(self.dtype)
        E, H = config.embed_dim, config.hidden_dim
        init_encoder_params(ps, self.enc_config, len(vocab), len(slot_vocab), rng)
        ps.add("embed/bos", rng.normal(0.0, 0.1, size=E))
        ps.add("dec/init/W", glorot(rng, (H, H), self.dtype))
        ps.add("dec/init/b", np.zeros(H))
        ps.add("dec/phrase/W", glorot(rng, (H, E), self.dtype))
        init_renderer_params(ps, self.renderers, E, H, len(vocab), rng)
        init_switch_params(ps, config.switch, H, len(self.renderers), rng)
        self.params = ps
        self._views()

    def _views(self):
        ps = self.params
        self.ptr_p = None
        if "p" in self.renderers:
            self.ptr_p = {"cell": ps.group("ptr/cell"), "W_beta": ps["ptr/W_beta"], "v_beta": ps["ptr/v_beta"]}
        self.cond_p = {"cell": ps.group("cond/cell"), "W_alpha": ps["cond/W_alpha"],
                       "v_alpha": ps["cond/v_alpha"], "out/W": ps["cond/out/W"], "out/b": ps["cond/out/b"]}
        self.lm_p = {"cell": ps.group("lm/cell"), "out/W": ps["lm/out/W"], "out/b": ps["lm/out/b"]}
        self.switch_p = ps.group("switch")

    @property
    def vocab_size(self):
        return len(self.vocab)

    # -- targets -----------------------------------------------------
    def target_items(self, da, tokens):
        """Reference tokens as decoder items under the configured ablation."""
        ablation = self.config.ablation
        if ablation == "no-pointer":
            return D.words_only(tokens).items
        if ablation == "delex":
            return D.words_only(D.delexicalize(tokens, da)[0]).items
        return D.segment_utterance(tokens, da).items

    def item_ids(self, item):
        """``(prev kind, word id, pair index, extended target id)`` for one item."""
        if isinstance(item, D.Word):
            wid = self.vocab.id(item.token)
            return PREV_WORD, wid, 0, wid
        if item.pair is None or "p" not in self.renderers:
            return None
        return PREV_PHRASE, 0, item.pair, self.vocab_size + item.pair

    # -- batching ----------------------------------------------------
    def make_batch(self, das, refs=None, rng=None, training=False):
        """Pad dialogue acts (and optionally reference token lists) into arrays.

        In training, value tokens are masked to UNK with probability
        ``1/(1+p)``; this draws from ``rng`` and is re-sampled per call.
        """
        B = len(das)
        n = max(da.n for da in das)
        L = max(len(v) for da in das for _, v in da.pairs)
        slot_ids = np.zeros((B, n), dtype=np.int64)
        value_ids = np.zeros((B, n, L), dtype=np.int64)
        value_len = np.zeros((B, n), dtype=np.int64)
        pair_mask = np.zeros((B, n), dtype=bool)
        copy_mask = np.zeros((B, n), dtype=bool)
        mask_values = training and self.config.mask_values
        for b, da in enumerate(das):
            for i, (slot, value) in enumerate(da.pairs):
                slot_ids[b, i] = self.slot_vocab.id(slot)
                toks = list(value)
                if mask_values and i > 0:
                    toks = D.mask_value_tokens(toks, self.vocab, rng)
                value_ids[b, i, :len(toks)] = self.vocab.ids(toks)
                value_len[b, i] = len(toks)
                pair_mask[b, i] = True
                copy_mask[b, i] = i > 0
        batch = Batch(list(das), slot_ids, value_ids, value_len, pair_mask, copy_mask)
        if refs is None:
            return batch

        seqs, bad = [], 0
        for da, tokens in zip(das, refs):
            rows = []
            for item in self.target_items(da, tokens):
                ids = self.item_ids(item)
                if ids is None:
                    bad += 1
                    ids = (PREV_WORD, self.vocab.unk_id, 0, self.vocab.unk_id)
                rows.append(ids)
            seqs.append(rows)
            batch.items.append(self.target_items(da, tokens))
        T = max(len(s) for s in seqs) + 1
        kind = np.zeros((B, T), dtype=np.int64)
        word = np.zeros((B, T), dtype=np.int64)
        pair = np.zeros((B, T), dtype=np.int64)
        target = np.zeros((B, T), dtype=np.int64)
        mask = np.zeros((B, T), dtype=bool)
        eos = self.vocab.eos_id
        for b, rows in enumerate(seqs):
            m = len(rows)
            for j, (k, w, p, t) in enumerate(rows):
                target[b, j] = t
                kind[b, j + 1], word[b, j + 1], pair[b, j + 1] = k, w, p
            target[b, m] = eos
            mask[b, :m + 1] = True
        batch.prev_kind, batch.prev_word, batch.prev_pair = kind, word, pair
        batch.target, batch.step_mask, batch.unrepresentable = target, mask, bad
        return batch

    # -- encoder / decoder --------------------------------------------
    def encode(self, batch, rng=None, training=False):
        enc = encode_da(self.params, self.enc_config, batch, rng, training, self.config.dropout)
        ps = self.params
        keys_beta = linear(enc.units, ps["ptr/U_beta"]) if "p" in self.renderers else None
        keys_alpha = linear(enc.units, ps["cond/U_alpha"])
        rmask = None
        if "p" in self.renderers and not batch.copy_mask.any(axis=1).all():
            rmask = np.ones((batch.size, len(self.renderers)), dtype=bool)
            rmask[:, self.renderers.index("p")] = batch.copy_mask.any(axis=1)
        return Context(enc, enc.units, keys_beta, keys_alpha, batch.pair_mask, batch.copy_mask, rmask)

    def init_state(self, ctx):
        units = ctx.units
        B, n, H = units.shape
        weights = ctx.pair_mask.astype(self.dtype) / ctx.pair_mask.sum(axis=1, keepdims=True)
        pooled = (Tensor(weights.reshape(B, 1, n)) @ units).reshape(B, H)
        h = tanh(linear(pooled, self.params["dec/init/W"], self.params["dec/init/b"]))
        zeros = np.zeros((B, H), dtype=self.dtype)
        return DecoderState(h, {tag: Tensor(zeros) for tag in self.renderers})

    def embed_prev(self, ctx, kind, word, pair):
        """Decoder input for the previous item: word row, projected ``h^e_i``, or BOS."""
        kind = np.asarray(kind)
        B = kind.shape[0]
        ps = self.params
        x = ps["embed/bos"].reshape(1, self.config.embed_dim)
        if np.any(kind == PREV_WORD):
            x = where((kind == PREV_WORD)[:, None], take_rows(ps["embed/word"], word), x)
        if np.any(kind == PREV_PHRASE):
            picked = ctx.units[np.arange(B), np.asarray(pair)]
            x = where((kind == PREV_PHRASE)[:, None], linear(picked, ps["dec/phrase/W"]), x)
        if x.shape[0] != B:
            x = x + np.zeros((B, 1), dtype=self.dtype)
        return x

    def step(self, state, x, ctx, rng=None, training=False, tau=1.0):
        """Run every renderer, the switcher and the aggregation for one item."""
        outs = {}
        if "p" in self.renderers:
            outs["p"] = pointer_step(self.ptr_p, state.h, state.cells["p"], x, ctx.units,
                                     ctx.keys_beta, ctx.copy_mask)
        outs["c"] = cond_gen_step(self.cond_p, state.h, state.cells["c"], x, ctx.units,
                                  ctx.keys_alpha, ctx.pair_mask)
        outs["l"] = lm_step(self.lm_p, state.h, state.cells["l"], x)
        candidates = None
        if self.config.switch == "vq":
            candidates = stack([outs[t].hidden for t in self.renderers], axis=1)
        decision = decide(self.config.switch, self.switch_p, state.h, candidates, rng, training,
                          tau, self.config.gumbel_hard, ctx.renderer_mask)
        from .switcher import aggregate

        h, q = aggregate(decision.o, {t: outs[t].hidden for t in self.renderers},
                         {t: outs[t].dist for t in self.renderers}, self.renderers)
        new_state = DecoderState(h, {t: outs[t].cell for t in self.renderers})
        return new_state, StepResult(q, decision, outs, candidates)

    # -- items ---------------------------------------------------------
    def decode_id(self, ext_id, da):
        """Map an extended-vocabulary id back to an item."""
        V = self.vocab_size
        if ext_id < V:
            return D.Word(self.vocab.token(ext_id))
        i = ext_id - V
        return D.Phrase(da.pairs[i][1], i)

    # -- persistence ---------------------------------------------------
    def metadata(self):
        return {"config": self.config.to_dict(), "vocab": self.vocab.to_json(),
                "slot_vocab": self.slot_vocab.to_json()}

    def save(self, path, extra=None):
        meta = self.metadata()
        if extra:
            meta.update(extra)
        save_checkpoint(path, self.params.state_dict(), meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_checkpoint(path)
        config = TrainingConfig.from_dict(meta["config"])
        model = cls(config, D.Vocabulary.from_json(meta["vocab"]), D.Vocabulary.from_json(meta["slot_vocab"]),
                    rng=np.random.default_rng(0))
        model.params.load_state_dict({k: v for k, v in arrays.items() if not k.startswith("opt/")})
        return model, arrays, meta


def build_vocabularies(config, instances):
    """Word and slot vocabularies from training ``(da, ref tokens)`` pairs."""
    sentences, slots = [], []
    for da, tokens in instances:
        if config.ablation == "delex":
            sentences.append(D.delexicalize(tokens, da)[0])
        else:
            sentences.append(tokens)
        for _, value in da.pairs[1:]:
            sentences.append(list(value))
        slots.append(da.slots)
    vocab = D.build_vocab(sentences, min_freq=config.min_freq)
    slot_vocab = D.build_vocab(slots, min_freq=1, reserved=SLOT_RESERVED)
    return vocab, slot_vocab
