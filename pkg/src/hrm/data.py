"""Dialogue acts, segmented utterances, vocabularies and dataset readers."""

from __future__ import annotations

import csv
import io
import json
import re
from collections import Counter
from dataclasses import dataclass, field

TYPE_TOKEN = "TYPE"
E2E_ACT = "inform"

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
RESERVED = (PAD, UNK, BOS, EOS)

_TOKEN_RE = re.compile(r"[\w£$€'&\-]+|[^\w\s]")


class DAParseError(ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class DataError(ValueError):
    """Malformed dataset file; message carries the row number."""


def tokenize(text):
    """Lowercase and split on whitespace, with punctuation as separate tokens."""
    return _TOKEN_RE.findall(text.lower())


# -- dialogue acts ------------------------------------------------------

@dataclass(frozen=True)
class DialogueAct:
    """Ordered (slot, value tokens) pairs; pair 0 is ``(act_type, ("TYPE",))``."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple((str(s), tuple(v)) for s, v in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not pairs:
            raise ValueError("a dialogue act needs at least the act-type pair")
        if pairs[0][1] != (TYPE_TOKEN,):
            raise ValueError(f"first pair must carry the dummy value {TYPE_TOKEN!r}")
        seen = set()
        for slot, value in pairs:
            if slot in seen:
                raise ValueError(f"duplicate slot {slot!r}")
            seen.add(slot)
            if not value:
                raise ValueError(f"empty value for slot {slot!r}")

    @classmethod
    def make(cls, act_type, slot_values):
        """Build from an act type and ``[(slot, tokens-or-string), ...]``."""
        pairs = [(act_type, (TYPE_TOKEN,))]
        for slot, value in slot_values:
            pairs.append((slot, tuple(tokenize(value) if isinstance(value, str) else value)))
        return cls(tuple(pairs))

    @property
    def act_type(self):
        return self.pairs[0][0]

    @property
    def n(self):
        return len(self.pairs)

    @property
    def slots(self):
        return [s for s, _ in self.pairs]

    def value(self, slot):
        for s, v in self.pairs:
            if s == slot:
                return v
        raise KeyError(slot)

    def slot_pairs(self):
        """``(index, slot, value)`` for every non-dummy pair."""
        return [(i, s, v) for i, (s, v) in enumerate(self.pairs) if i > 0]

    def permuted(self, order):
        """Reorder the slot-value pairs; ``order`` indexes ``1..n-1`` and the act pair stays first."""
        if sorted(order) != list(range(1, self.n)):
            raise ValueError("order must permute pair indices 1..n-1")
        return DialogueAct((self.pairs[0],) + tuple(self.pairs[i] for i in order))


_E2E_ITEM = re.compile(r"\s*([^\[\],]+?)\s*\[([^\]]*)\]\s*")
_RNNLG_ACT = re.compile(r"\s*([^()\s]+)\s*\((.*)\)\s*$", re.S)


def _check_duplicates(pairs, on_duplicate):
    seen = Counter()
    out = []
    for slot, value, offset in pairs:
        seen[slot] += 1
        if seen[slot] > 1:
            if on_duplicate == "error":
                raise DAParseError(f"duplicate slot {slot!r}", offset)
            slot = f"{slot}_{seen[slot]}"
        out.append((slot, value))
    return out


def _parse_e2e(text, on_duplicate):
    pos, items = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _E2E_ITEM.match(text, pos)
        if not m:
            raise DAParseError("expected slot[value]", pos)
        slot, raw = m.group(1).strip(), m.group(2)
        value = tokenize(raw)
        if not value:
            raise DAParseError(f"empty value for slot {slot!r}", m.start(2))
        items.append((slot, tuple(value), m.start(1)))
        pos = m.end()
        if pos < len(text):
            if text[pos] != ",":
                raise DAParseError("expected ',' between slot entries", pos)
            pos += 1
    if not items:
        raise DAParseError("no slot entries", 0)
    return DialogueAct(((E2E_ACT, (TYPE_TOKEN,)),) + tuple(_check_duplicates(items, on_duplicate)))


def _split_quoted(body, base):
    """Split ``body`` on ';' outside quotes; yields ``(chunk, offset)``."""
    chunks, start, quote = [], 0, None
    for k, ch in enumerate(body):
        if quote:
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch == ";":
            chunks.append((body[start:k], base + start))
            start = k + 1
    if quote:
        raise DAParseError("unterminated quote", base + len(body))
    chunks.append((body[start:], base + start))
    return chunks


def _parse_rnnlg(text, on_duplicate):
    m = _RNNLG_ACT.match(text)
    if not m:
        raise DAParseError("expected acttype(slot=value;...)", 0)
    act, body = m.group(1), m.group(2)
    items = []
    for chunk, offset in _split_quoted(body, m.start(2)):
        if not chunk.strip():
            continue
        if "=" in chunk:
            slot, raw = chunk.split("=", 1)
            raw = raw.strip()
            if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
                raw = raw[1:-1]
            value = tokenize(raw)
            if not value:
                raise DAParseError(f"empty value for slot {slot.strip()!r}", offset)
        else:
            slot, value = chunk, ["?"]
        slot = slot.strip()
        if not slot or re.search(r"[\s()\[\]]", slot):
            raise DAParseError(f"malformed slot name {slot!r}", offset)
        items.append((slot, tuple(value), offset))
    return DialogueAct(((act, (TYPE_TOKEN,)),) + tuple(_check_duplicates(items, on_duplicate)))


def parse_da(text, fmt="e2e-csv", on_duplicate="error"):
    """Parse a dialogue-act string.

    ``fmt`` is ``"e2e-csv"`` (``name[Blue Spice], eatType[pub]``) or
    ``"rnnlg-json"`` (``inform(name='red victoria';type=hotel)``).  Values
    are lowercased and tokenized.  Repeated slots raise unless
    ``on_duplicate="suffix"``, which renames them ``slot_2``, ``slot_3``...
    """
    if fmt == "e2e-csv":
        return _parse_e2e(text, on_duplicate)
    if fmt == "rnnlg-json":
        return _parse_rnnlg(text, on_duplicate)
    raise ValueError(f"unknown DA format {fmt!r}")


def serialize_da(da, fmt="e2e-csv"):
    if fmt == "e2e-csv":
        if da.act_type != E2E_ACT:
            raise ValueError("E2E dialogue acts only carry the 'inform' act type")
        return ", ".join(f"{s}[{' '.join(v)}]" for _, s, v in da.slot_pairs())
    if fmt == "rnnlg-json":
        parts = []
        for _, s, v in da.slot_pairs():
            text = " ".join(v)
            quote = '"' if "'" in text else "'"
            parts.append(f"{s}={quote}{text}{quote}")
        return f"{da.act_type}({';'.join(parts)})"
    raise ValueError(f"unknown DA format {fmt!r}")


def da_key(da):
    """Grouping key for multi-reference corpora."""
    return json.dumps([[s, list(v)] for s, v in da.pairs])


# -- segmented utterances -----------------------------------------------

@dataclass(frozen=True)
class Word:
    token: str

    @property
    def tokens(self):
        return (self.token,)


@dataclass(frozen=True)
class Phrase:
    tokens: tuple
    pair: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))


@dataclass(frozen=True)
class SegmentedUtterance:
    items: tuple

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))

    @property
    def m(self):
        return len(self.items)

    def tokens(self):
        return [t for item in self.items for t in item.tokens]

    def text(self):
        return " ".join(self.tokens())


def _longest_match(tokens, k, candidates):
    best = None
    for idx, value in candidates:
        size = len(value)
        if size and tuple(tokens[k:k + size]) == value and (best is None or size > len(best[1])):
            best = (idx, value)
    return best


def segment_utterance(tokens, da):
    """Merge verbatim slot-value matches into phrases (leftmost-longest, greedy).

    The dummy act-type value never matches.  Ties between equally long
    values resolve to the lowest pair index.
    """
    tokens = list(tokens)
    candidates = [(i, v) for i, _, v in da.slot_pairs()]
    items, k = [], 0
    while k < len(tokens):
        hit = _longest_match(tokens, k, candidates)
        if hit is None:
            items.append(Word(tokens[k]))
            k += 1
        else:
            items.append(Phrase(hit[1], hit[0]))
            k += len(hit[1])
    return SegmentedUtterance(tuple(items))


def words_only(tokens):
    return SegmentedUtterance(tuple(Word(t) for t in tokens))


def delexicalize(tokens, da):
    """Replace verbatim value spans with ``SLOT_<slot>`` placeholders.

    Returns ``(template, slot_map)`` where ``slot_map`` maps each placeholder
    to the tokens it replaced.
    """
    seg = segment_utterance(tokens, da)
    template, slot_map = [], {}
    for item in seg.items:
        if isinstance(item, Phrase):
            placeholder = f"SLOT_{da.pairs[item.pair][0]}"
            template.append(placeholder)
            slot_map[placeholder] = list(item.tokens)
        else:
            template.append(item.token)
    return template, slot_map


def relexicalize(template, slot_map):
    """Inverse of :func:`delexicalize`; ``slot_map`` may also be a :class:`DialogueAct`."""
    if isinstance(slot_map, DialogueAct):
        slot_map = {f"SLOT_{s}": list(v) for _, s, v in slot_map.slot_pairs()}
    out = []
    for tok in template:
        out.extend(slot_map.get(tok, [tok]))
    return out


# -- vocabulary ---------------------------------------------------------

@dataclass
class Vocabulary:
    """Token <-> id map with reserved ids and training-set frequencies."""

    tokens: list
    freq: dict = field(default_factory=dict)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")

    @classmethod
    def from_counts(cls, counts, min_freq=1, reserved=RESERVED):
        kept = sorted((t for t, c in counts.items() if c >= min_freq and t not in reserved),
                      key=lambda t: (-counts[t], t))
        return cls(list(reserved) + kept, dict(counts))

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    @property
    def unk_id(self):
        return self.index[UNK]

    @property
    def eos_id(self):
        return self.index[EOS]

    def id(self, token):
        return self.index.get(token, self.index[UNK])

    def ids(self, tokens):
        return [self.id(t) for t in tokens]

    def token(self, i):
        return self.tokens[i]

    def frequency(self, token):
        return self.freq.get(token, 0)

    def to_json(self):
        return {"tokens": self.tokens, "freq": self.freq}

    @classmethod
    def from_json(cls, obj):
        return cls(list(obj["tokens"]), dict(obj["freq"]))


def build_vocab(sentences, min_freq=1, reserved=RESERVED):
    """Vocabulary over token sequences (training split only).

    Tokens seen fewer than ``min_freq`` times are left out and map to UNK;
    all counts are kept for value masking.
    """
    counts = Counter()
    for sent in sentences:
        counts.update(sent)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    return Vocabulary.from_counts(counts, min_freq=min_freq, reserved=reserved)


def mask_value_tokens(value, vocab, rng):
    """Replace each token by UNK with probability ``1 / (1 + p)``, p its training frequency."""
    out = []
    for tok in value:
        p = vocab.frequency(tok)
        out.append(UNK if rng.random() < 1.0 / (1.0 + p) else tok)
    return out


# -- corpora ------------------------------------------------------------

@dataclass
class Example:
    da: DialogueAct
    refs: list  # raw reference token lists


@dataclass
class Corpus:
    split: str
    examples: list

    def instances(self):
        """Flattened ``(da, reference tokens)`` pairs."""
        return [(ex.da, ref) for ex in self.examples for ref in ex.refs]

    def __len__(self):
        return len(self.examples)

    def n_instances(self):
        return sum(len(ex.refs) for ex in self.examples)


def group_examples(rows):
    """Group ``(da, ref tokens)`` rows by identical DA, keeping first-seen order."""
    groups = {}
    for da, ref in rows:
        key = da_key(da)
        if key not in groups:
            groups[key] = Example(da, [])
        groups[key].refs.append(list(ref))
    return list(groups.values())


def read_e2e_csv(source):
    """Rows of an E2E-NLG CSV (``mr,ref`` header) as ``(da, ref tokens)``."""
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip().lower() for h in header[:2]] != ["mr", "ref"]:
        raise DataError("row 1: expected header 'mr,ref'")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) < 2:
            raise DataError(f"row {lineno}: expected 2 columns, got {len(row)}")
        try:
            da = parse_da(row[0], "e2e-csv")
        except (DAParseError, ValueError) as err:
            raise DataError(f"row {lineno}: {err}") from err
        ref = tokenize(row[1])
        if not ref:
            raise DataError(f"row {lineno}: empty reference")
        rows.append((da, ref))
    return rows


def read_rnnlg_json(source, on_duplicate="suffix"):
    """Rows of an RNN-LG JSON file (array of ``[da, reference, ...]``)."""
    text = _read_text(source)
    data = json.loads("\n".join(line for line in text.splitlines() if not line.lstrip().startswith("#")))
    rows = []
    for k, entry in enumerate(data, start=1):
        if not isinstance(entry, list) or len(entry) < 2:
            raise DataError(f"row {k}: expected [da, reference, ...]")
        try:
            da = parse_da(entry[0], "rnnlg-json", on_duplicate=on_duplicate)
        except (DAParseError, ValueError) as err:
            raise DataError(f"row {k}: {err}") from err
        ref = tokenize(entry[1])
        if not ref:
            raise DataError(f"row {k}: empty reference")
        rows.append((da, ref))
    return rows


def _read_text(source):
    if hasattr(source, "read"):
        return source.read()
    with open(source, encoding="utf-8") as fh:
        return fh.read()


# -- canonical line-delimited records -----------------------------------

def item_to_json(item):
    if isinstance(item, Word):
        return {"kind": "word", "tokens": [item.token]}
    rec = {"kind": "phrase", "tokens": list(item.tokens)}
    if item.pair is not None:
        rec["pair"] = item.pair
    return rec


def item_from_json(obj):
    if obj["kind"] == "word":
        return Word(obj["tokens"][0])
    return Phrase(tuple(obj["tokens"]), obj.get("pair"))


def example_record(da, ref_tokens):
    seg = segment_utterance(ref_tokens, da)
    return {
        "act": da.act_type,
        "pairs": [[s, list(v)] for _, s, v in da.slot_pairs()],
        "items": [item_to_json(it) for it in seg.items],
    }


def record_to_instance(rec):
    da = DialogueAct(((rec["act"], (TYPE_TOKEN,)),) + tuple((s, tuple(v)) for s, v in rec["pairs"]))
    seg = SegmentedUtterance(tuple(item_from_json(it) for it in rec["items"]))
    return da, seg.tokens()


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_split(path, split):
    """Read a canonical ``.jsonl`` split into a :class:`Corpus`."""
    rows = [record_to_instance(rec) for rec in read_jsonl(path)]
    return Corpus(split, group_examples(rows))
