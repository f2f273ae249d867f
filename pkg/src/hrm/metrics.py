"""Corpus BLEU, slot error rate and alignment bookkeeping."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

# zero-count guards used by the E2E challenge scorer
TINY = 1e-15
SMALL = 1e-9


def _ngrams(tokens, n):
    return Counter(tuple(tokens[k:k + n]) for k in range(len(tokens) - n + 1))


def _norm(tokens, lowercase):
    if isinstance(tokens, str):
        tokens = tokens.split()
    return [t.lower() for t in tokens] if lowercase else list(tokens)


def corpus_bleu(hypotheses, references, max_n=4, smoothing=0.0, lowercase=True):
    """Corpus-level BLEU with clipped n-gram counts and a brevity penalty.

    ``hypotheses`` is a list of token lists (or strings), ``references`` a
    parallel list of reference lists.  The effective reference length is
    the closest reference length per sentence (shorter wins ties).  With
    ``smoothing=0`` this follows the E2E challenge scorer, including its
    tiny-count floors for empty n-gram orders.
    """
    if not hypotheses:
        raise ValueError("no hypotheses to score")
    if len(hypotheses) != len(references):
        raise ValueError("hypotheses and references must be aligned")
    hits = [0] * max_n
    cand = [0] * max_n
    ref_len = 0
    for hyp, refs in zip(hypotheses, references):
        hyp = _norm(hyp, lowercase)
        refs = [_norm(r, lowercase) for r in refs]
        if not refs:
            raise ValueError("every hypothesis needs at least one reference")
        for n in range(1, max_n + 1):
            pred = _ngrams(hyp, n)
            best = Counter()
            for r in refs:
                best |= _ngrams(r, n)
            hits[n - 1] += sum(min(c, best[g]) for g, c in pred.items())
            cand[n - 1] += max(len(hyp) - n + 1, 0)
        ref_len += len(min(refs, key=lambda r: (abs(len(r) - len(hyp)), len(r))))
    bp = 1.0
    if cand[0] <= ref_len:
        bp = math.exp(1.0 - ref_len / (cand[0] if cand[0] else 1e-5))
    log_sum = 0.0
    for h, c in zip(hits, cand):
        h = max(h + smoothing, TINY)
        c = max(c + smoothing, SMALL)
        log_sum += math.log(h / c)
    return bp * math.exp(log_sum / max_n)


def count_occurrences(tokens, pattern):
    pattern = list(pattern)
    size = len(pattern)
    return sum(1 for k in range(len(tokens) - size + 1) if tokens[k:k + size] == pattern)


@dataclass
class SlotDetail:
    missing: list = field(default_factory=list)
    redundant: list = field(default_factory=list)
    scored: int = 0
    excluded: int = 0


def slot_error_rate(das, utterances, references=None, patterns=None, lexicon=None):
    """ERR = (missing + redundant) / N over verbatim-matchable slots.

    A slot is scored when its value (or a pattern from ``patterns``, keyed
    by ``(slot, value tokens)``) occurs verbatim in at least one reference;
    without references every slot is scored.  A scored slot is missing when
    none of its realizations occurs in the utterance, and redundant when it
    occurs more often than in any reference (more than once without
    references).  ``lexicon`` maps slot -> known values; a known value of a
    slot that the DA does not carry with that value counts as redundant.

    Returns ``(err, details)``; reworded (unscored) slots are counted in
    ``details[i].excluded``.
    """
    patterns = patterns or {}
    p = q = N = 0
    details = []
    for k, (da, utt) in enumerate(zip(das, utterances)):
        utt = list(utt)
        refs = [list(r) for r in references[k]] if references is not None else None
        det = SlotDetail()
        for _, slot, value in da.slot_pairs():
            forms = [list(value)] + [list(f) for f in patterns.get((slot, tuple(value)), [])]

            def count(tokens):
                return sum(count_occurrences(tokens, f) for f in forms)

            if refs is not None:
                ref_counts = [count(r) for r in refs]
                if max(ref_counts) == 0:
                    det.excluded += 1
                    continue
                allowed = max(ref_counts)
            else:
                allowed = 1
            det.scored += 1
            seen = count(utt)
            if seen == 0:
                det.missing.append(slot)
            elif seen > allowed:
                det.redundant.append(slot)
        if lexicon:
            own = {(s, tuple(v)) for _, s, v in da.slot_pairs()}
            own_values = {tuple(v) for _, _, v in da.slot_pairs()}
            for slot, values in lexicon.items():
                for value in values:
                    value = tuple(value)
                    if (slot, value) in own or value in own_values:
                        continue
                    if count_occurrences(utt, value):
                        det.redundant.append(slot)
        p += len(det.missing)
        q += len(det.redundant)
        N += det.scored
        details.append(det)
    err = (p + q) / N if N else 0.0
    return err, details


# -- alignment bookkeeping -------------------------------------------------

def alignment_claims(trace):
    """Slot -> list of (step index, item text, label) claimed by a trace."""
    claims = {}
    for j, step in enumerate(trace.steps):
        if step.renderer in ("P", "C") and step.source is not None and step.source > 0:
            claims.setdefault(step.source_slot, []).append((j, step.text, step.label))
    return claims


def alignment_tally(traces, gold=None):
    """Per-slot alignment claims and, given gold alignments, the score p / N.

    ``gold`` is a list (parallel to ``traces``) of dicts mapping slot ->
    list of item indices that slot is realized by.  A slot counts as
    correctly aligned when the set of items the trace ties to it equals the
    gold set.  N is the number of non-dummy slots across all DAs.
    """
    records = []
    p = N = 0
    for k, trace in enumerate(traces):
        claims = alignment_claims(trace)
        da_slots = [s for _, s, _ in trace.da.slot_pairs()]
        unknown = [s for s in claims if s not in da_slots]
        if unknown:
            raise ValueError(f"trace {k} aligns slots absent from its DA: {unknown}")
        records.append({"index": k, "claims": {s: [[j, t, lab] for j, t, lab in v] for s, v in claims.items()}})
        N += len(da_slots)
        if gold is not None:
            g = gold[k]
            for slot in da_slots:
                claimed = sorted(j for j, _, _ in claims.get(slot, []))
                expected = sorted(g.get(slot, []))
                if claimed and claimed == expected:
                    p += 1
    score = p / N if (gold is not None and N) else None
    return {"records": records, "claimed": sum(len(r["claims"]) for r in records), "p": p if gold is not None else None,
            "N": N, "score": score}


@dataclass
class EvalReport:
    bleu: float
    err: float
    n_examples: int
    n_scored_slots: int
    n_excluded_slots: int
    missing: dict = field(default_factory=dict)
    redundant: dict = field(default_factory=dict)
    alignment: dict | None = None

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    def text(self):
        lines = [f"BLEU  {self.bleu:.4f}", f"ERR   {self.err:.4f}",
                 f"examples {self.n_examples}  scored slots {self.n_scored_slots}  "
                 f"excluded (reworded) {self.n_excluded_slots}"]
        if self.alignment and self.alignment.get("score") is not None:
            lines.append(f"alignment {self.alignment['score']:.4f} ({self.alignment['p']}/{self.alignment['N']})")
        return "\n".join(lines)


def evaluate(das, hypotheses, references, patterns=None, lexicon=None, traces=None, gold=None):
    bleu = corpus_bleu(hypotheses, references)
    err, details = slot_error_rate(das, hypotheses, references, patterns, lexicon)
    missing = {str(k): d.missing for k, d in enumerate(details) if d.missing}
    redundant = {str(k): d.redundant for k, d in enumerate(details) if d.redundant}
    align = alignment_tally(traces, gold) if traces is not None else None
    return EvalReport(bleu, err, len(das), sum(d.scored for d in details), sum(d.excluded for d in details),
                      missing, redundant, align)
