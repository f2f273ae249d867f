"""Greedy and beam-search decoding with per-step interpretability traces."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import data as D
from .autodiff import no_grad
from .model import PREV_BOS, PREV_PHRASE, PREV_WORD

LABELS = {"p": "P", "c": "C", "l": "L"}


@dataclass
class StepInfo:
    ext_id: int
    z: list
    o: list
    qp: list | None
    alpha: list
    logprob: float


@dataclass
class Hypothesis:
    items: list = field(default_factory=list)
    ext_ids: list = field(default_factory=list)
    logprob: float = 0.0
    steps: list = field(default_factory=list)
    finished: bool = False
    truncated: bool = False

    @property
    def score(self):
        """Length-normalized log-probability (EOS step included in the count)."""
        return self.logprob / max(len(self.ext_ids), 1)


@dataclass
class TraceStep:
    text: str
    renderer: str              # "P", "C", "L", or "EOS"
    source: int | None
    source_slot: str | None
    z: list
    o: list
    qp: list | None
    alpha: list
    soft: bool = False

    @property
    def label(self):
        if self.renderer in ("P", "C"):
            return f"{self.renderer}({self.source})"
        return self.renderer

    @property
    def slot_label(self):
        if self.renderer in ("P", "C"):
            return f"{self.renderer}({self.source_slot})"
        return self.renderer


@dataclass
class RenderTrace:
    da: D.DialogueAct
    steps: list
    score: float
    truncated: bool = False

    def annotated(self):
        """``item[LABEL]`` rendering, e.g. ``the[L] blue spice[P(name)] ...``."""
        return " ".join(f"{s.text}[{s.slot_label}]" for s in self.steps if s.renderer != "EOS")

    def to_json(self):
        return {
            "da": {"act": self.da.act_type, "pairs": [[s, list(v)] for _, s, v in self.da.slot_pairs()]},
            "items": [
                {"text": s.text, "label": s.label, "renderer": s.renderer, "source": s.source,
                 "source_slot": s.source_slot, "z": s.z, "o": s.o, "Qp": s.qp, "alpha": s.alpha,
                 "soft": s.soft}
                for s in self.steps
            ],
            "score": self.score,
            "truncated": self.truncated,
        }

    @classmethod
    def from_json(cls, obj):
        da = D.DialogueAct(((obj["da"]["act"], (D.TYPE_TOKEN,)),)
                           + tuple((s, tuple(v)) for s, v in obj["da"]["pairs"]))
        steps = [TraceStep(it["text"], it["renderer"], it["source"], it["source_slot"], it["z"], it["o"],
                           it["Qp"], it["alpha"], it["soft"]) for it in obj["items"]]
        return cls(da, steps, obj["score"], obj.get("truncated", False))


# -- decoding primitives ------------------------------------------------

def _prev_arrays(model, hyps):
    kind = np.full(len(hyps), PREV_BOS, dtype=np.int64)
    word = np.zeros(len(hyps), dtype=np.int64)
    pair = np.zeros(len(hyps), dtype=np.int64)
    V = model.vocab_size
    for r, h in enumerate(hyps):
        if h.ext_ids:
            last = h.ext_ids[-1]
            if last < V:
                kind[r], word[r] = PREV_WORD, last
            else:
                kind[r], pair[r] = PREV_PHRASE, last - V
    return kind, word, pair


def decode_step(model, state, hyps, ctx):
    """One inference step for a batch of live hypotheses.

    Returns ``(next_state, q, result)`` where ``q`` is the (B, V + n)
    extended distribution as a numpy array.
    """
    kind, word, pair = _prev_arrays(model, hyps)
    with no_grad():
        x = model.embed_prev(ctx, kind, word, pair)
        new_state, res = model.step(state, x, ctx, training=False)
    return new_state, res.q.data, res


def _step_info(model, res, row, ext_id, logp, n):
    qp = res.outputs["p"].dist.data[row, :n].tolist() if "p" in res.outputs else None
    return StepInfo(int(ext_id), res.decision.z.data[row].tolist(), res.decision.o.data[row].tolist(), qp,
                    res.outputs["c"].attention.data[row, :n].tolist(), float(logp))


def _start(model, da):
    batch = model.make_batch([da])
    with no_grad():
        ctx = model.encode(batch)
        state = model.init_state(ctx)
    return ctx, state


def _safe_log(q):
    with np.errstate(divide="ignore"):
        return np.log(q)


def greedy_decode(model, da, max_len=80):
    """Pick ``argmax Q_j`` at every step until EOS or ``max_len`` items."""
    ctx, state = _start(model, da)
    hyp = Hypothesis()
    eos = model.vocab.eos_id
    for _ in range(max_len):
        state, q, res = decode_step(model, state, [hyp], ctx)
        ext = int(np.argmax(q[0]))
        logp = float(_safe_log(q[0, ext]))
        hyp.steps.append(_step_info(model, res, 0, ext, logp, da.n))
        hyp.ext_ids.append(ext)
        hyp.logprob += logp
        if ext == eos:
            hyp.finished = True
            break
        hyp.items.append(model.decode_id(ext, da))
    else:
        hyp.truncated = True
    return hyp


def beam_search(model, da, beam_width=10, top_k=5, max_len=80):
    """Over-generate with a beam and return up to ``top_k`` ranked hypotheses.

    Finished hypotheses are ranked by length-normalized log-probability,
    ties by the order they finished.  If nothing emits EOS within
    ``max_len`` items, the best truncated hypotheses are returned with
    ``truncated=True``.
    """
    if not beam_width >= top_k >= 1:
        raise ValueError("need beam_width >= top_k >= 1")
    ctx0, state = _start(model, da)
    eos = model.vocab.eos_id
    live = [Hypothesis()]
    finished = []
    for _ in range(max_len):
        ctx = ctx0.take(np.zeros(len(live), dtype=np.int64))
        new_state, q, res = decode_step(model, state, live, ctx)
        logq = _safe_log(q)
        scores = np.array([h.logprob for h in live])[:, None] + logq
        flat = scores.reshape(-1)
        order = np.argsort(-flat, kind="stable")
        order = order[np.isfinite(flat[order])][:beam_width]
        K = q.shape[1]
        keep_rows, next_live = [], []
        for idx in order:
            row, ext = divmod(int(idx), K)
            parent = live[row]
            logp = float(logq[row, ext])
            child = Hypothesis(list(parent.items), parent.ext_ids + [ext], parent.logprob + logp,
                               parent.steps + [_step_info(model, res, row, ext, logp, da.n)])
            if ext == eos:
                child.finished = True
                finished.append(child)
            else:
                child.items.append(model.decode_id(ext, da))
                next_live.append(child)
                keep_rows.append(row)
        if len(finished) >= beam_width or not next_live:
            live = next_live
            break
        live = next_live
        state = new_state.take(np.asarray(keep_rows, dtype=np.int64))
    else:
        for h in live:
            h.truncated = True
    pool = finished if finished else live
    ranked = sorted(enumerate(pool), key=lambda t: (-t[1].score, t[0]))
    return [h for _, h in ranked[:top_k]]


def hypothesis_tokens(model, hyp, da):
    """Surface tokens of a hypothesis (placeholders refilled under the delex ablation)."""
    tokens = [t for item in hyp.items for t in item.tokens]
    if model.config.ablation == "delex":
        tokens = D.relexicalize(tokens, da)
    return tokens


def corpus_hypotheses(model, das, beam_width=1, top_k=1, max_len=None):
    """Rank-1 token lists for every DA."""
    max_len = max_len or model.config.max_len
    out = []
    for da in das:
        if beam_width == 1:
            hyp = greedy_decode(model, da, max_len)
        else:
            hyp = beam_search(model, da, beam_width, min(top_k, beam_width), max_len)[0]
        out.append(hypothesis_tokens(model, hyp, da))
    return out


# -- traces -------------------------------------------------------------

def render_trace(model, hyp, da):
    """Label every generated item with the renderer that produced it.

    ``P(i)``: pointer selected, ``i = argmax Q^p``; ``C(i)``: conditional
    generator, ``i = argmax alpha'``; ``L``: language model.  With a soft
    switch the label follows ``argmax o`` and the step is flagged ``soft``.
    """
    steps = []
    V = model.vocab_size
    eos = model.vocab.eos_id
    for info in hyp.steps:
        o = np.asarray(info.o)
        r = int(np.argmax(o))
        tag = model.renderers[r]
        soft = not (np.count_nonzero(o) == 1 and o[r] == 1.0)
        source = None
        if tag == "p":
            source = int(np.argmax(info.qp))
        elif tag == "c":
            source = int(np.argmax(info.alpha))
        if info.ext_id == eos:
            text, renderer = D.EOS, "EOS"
        else:
            item = model.decode_id(info.ext_id, da)
            text, renderer = " ".join(item.tokens), LABELS[tag]
        slot = da.pairs[source][0] if source is not None else None
        steps.append(TraceStep(text, renderer, source if renderer != "EOS" else None,
                               slot if renderer != "EOS" else None,
                               list(info.z), list(info.o), None if info.qp is None else list(info.qp),
                               list(info.alpha), soft))
    return RenderTrace(da, steps, hyp.score, hyp.truncated)


def write_traces(path, traces):
    with open(path, "w", encoding="utf-8") as fh:
        for t in traces:
            fh.write(json.dumps(t.to_json(), sort_keys=True) + "\n")


def read_traces(path):
    with open(path, encoding="utf-8") as fh:
        return [RenderTrace.from_json(json.loads(line)) for line in fh if line.strip()]
