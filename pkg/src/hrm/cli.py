"""Command-line entry point: prepare, train, generate, trace, evaluate."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter

from . import data as D
from .config import ConfigError, TrainingConfig

SPLITS = ("train", "valid", "test")


class CLIError(Exception):
    """Reported as a one-line diagnostic with a nonzero exit status."""


# -- helpers ------------------------------------------------------------

def _split_inputs(values):
    """``--in`` values: ``split=path`` or a bare path (taken as train)."""
    out = {}
    for raw in values:
        split, sep, path = raw.partition("=")
        if not sep:
            split, path = "train", raw
        if split not in SPLITS:
            raise CLIError(f"unknown split {split!r} in --in {raw!r} (use {', '.join(SPLITS)})")
        if split in out:
            raise CLIError(f"split {split!r} given twice")
        out[split] = path
    if "train" not in out:
        raise CLIError("prepare needs a training split (--in train=PATH)")
    return out


def _read_rows(fmt, path):
    if not os.path.exists(path):
        raise CLIError(f"{path}: no such file")
    try:
        if fmt == "e2e-csv":
            return D.read_e2e_csv(path)
        return D.read_rnnlg_json(path)
    except D.DataError as err:
        raise CLIError(f"{path}: {err}") from err
    except json.JSONDecodeError as err:
        raise CLIError(f"{path}: line {err.lineno}: {err.msg}") from err


def _data_file(data, split):
    if os.path.isdir(data):
        path = os.path.join(data, f"{split}.jsonl")
    else:
        path = data
    if not os.path.exists(path):
        raise CLIError(f"{path}: no such file")
    return path


def _load_corpus(data, split):
    path = _data_file(data, split)
    try:
        return D.load_split(path, split)
    except (KeyError, ValueError) as err:
        raise CLIError(f"{path}: malformed record ({err})") from err


def _checkpoint_path(path):
    if os.path.isdir(path):
        path = os.path.join(path, "best.npz")
    if not os.path.exists(path):
        raise CLIError(f"{path}: no such checkpoint")
    return path


_DIMENSION_KEYS = ("embed_dim", "hidden_dim", "attn_layers", "attn_heads", "attn_residual", "switch", "ablation")


def _load_model(args):
    from .model import HRM

    path = _checkpoint_path(args.checkpoint)
    try:
        model, _, meta = HRM.load(path)
    except (KeyError, ValueError) as err:
        raise CLIError(f"{path}: checkpoint does not match its stored config ({err})") from err
    if getattr(args, "config", None):
        wanted = _read_config(args.config)
        stored = meta["config"]
        diff = [k for k in _DIMENSION_KEYS if stored.get(k) != getattr(wanted, k)]
        if diff:
            detail = ", ".join(f"{k}: checkpoint {stored.get(k)!r} vs config {getattr(wanted, k)!r}" for k in diff)
            raise CLIError(f"checkpoint/config dimension mismatch ({detail})")
    return model


def _read_config(path):
    if not os.path.exists(path):
        raise CLIError(f"{path}: no such config file")
    try:
        return TrainingConfig.load(path)
    except ConfigError as err:
        raise CLIError(f"{path}: {err}") from err
    except TypeError as err:
        raise CLIError(f"{path}: {err}") from err


# -- commands -----------------------------------------------------------

def cmd_prepare(args):
    inputs = _split_inputs(args.inputs)
    os.makedirs(args.out, exist_ok=True)
    corpora = {}
    for split in SPLITS:
        if split in inputs:
            corpora[split] = D.Corpus(split, D.group_examples(_read_rows(args.format, inputs[split])))
    for split, corpus in corpora.items():
        D.write_jsonl(os.path.join(args.out, f"{split}.jsonl"),
                      [D.example_record(da, ref) for da, ref in corpus.instances()])
    train_inst = corpora["train"].instances()
    vocab = D.build_vocab([ref for _, ref in train_inst] + [list(v) for da, _ in train_inst for _, v in da.pairs[1:]])
    with open(os.path.join(args.out, "vocab.json"), "w", encoding="utf-8") as fh:
        json.dump(vocab.to_json(), fh, ensure_ascii=False, sort_keys=True)
        fh.write("\n")
    freq = Counter()
    for _, ref in train_inst:
        freq.update(ref)
    with open(os.path.join(args.out, "freq.tsv"), "w", encoding="utf-8") as fh:
        for tok, count in sorted(freq.items(), key=lambda t: (-t[1], t[0])):
            fh.write(f"{tok}\t{count}\n")
    acts = {da.act_type for c in corpora.values() for ex in c.examples for da in [ex.da]}
    slots = {s for c in corpora.values() for ex in c.examples for s in ex.da.slots}
    for split, corpus in corpora.items():
        print(f"{split}: {len(corpus)} DAs, {corpus.n_instances()} utterances")
    print(f"act types: {len(acts)}  slots: {len(slots)}  vocabulary: {len(vocab)}")
    return 0


def cmd_train(args):
    from .training import TrainingDiverged, train

    config = _read_config(args.config) if args.config else TrainingConfig()
    changes = {"switch": args.switch, "seed": args.seed, "max_epochs": args.epochs}
    if args.ablation is not None:
        changes["ablation"] = None if args.ablation == "none" else args.ablation
    try:
        config = config.override(**changes)
        config.validate()
    except ConfigError as err:
        raise CLIError(str(err)) from err
    train_corpus = _load_corpus(args.data, "train")
    valid_path = os.path.join(args.data, "valid.jsonl") if os.path.isdir(args.data) else None
    valid_corpus = D.load_split(valid_path, "valid") if valid_path and os.path.exists(valid_path) else None
    os.makedirs(args.out, exist_ok=True)
    if not args.resume:
        records = os.path.join(args.out, "records.jsonl")
        if os.path.exists(records):
            os.remove(records)
    with open(os.path.join(args.out, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    try:
        result = train(config, train_corpus, valid_corpus, out_dir=args.out, resume=args.resume)
    except TrainingDiverged as err:
        raise CLIError(f"training diverged: {err}") from err
    except (FileNotFoundError, ValueError) as err:
        raise CLIError(str(err)) from err
    if not os.path.exists(os.path.join(args.out, "best.npz")):
        result.model.save(os.path.join(args.out, "best.npz"), {"epoch": result.best_epoch})
    print(f"trained {len(result.records)} epochs; best epoch {result.best_epoch} "
          f"valid BLEU {result.best_bleu:.4f}; checkpoint {os.path.join(args.out, 'best.npz')}")
    return 0


def _generate(model, corpus, beam, topk):
    from .decoding import beam_search, greedy_decode

    out = []
    for ex in corpus.examples:
        if beam == 1:
            hyps = [greedy_decode(model, ex.da, model.config.max_len)]
        else:
            hyps = beam_search(model, ex.da, beam, min(topk, beam), model.config.max_len)
        out.append((ex, hyps))
    return out


def cmd_generate(args):
    from .decoding import hypothesis_tokens

    if not args.beam >= args.topk >= 1:
        raise CLIError("need --beam >= --topk >= 1")
    model = _load_model(args)
    corpus = _load_corpus(args.data, args.split)
    os.makedirs(args.out, exist_ok=True)
    results = _generate(model, corpus, args.beam, args.topk)
    with open(os.path.join(args.out, "hypotheses.txt"), "w", encoding="utf-8") as hf, \
            open(os.path.join(args.out, "topk.jsonl"), "w", encoding="utf-8") as kf:
        for k, (ex, hyps) in enumerate(results):
            hf.write(f"{k}\t{' '.join(hypothesis_tokens(model, hyps[0], ex.da))}\n")
            rec = {"id": k, "da": D.serialize_da(ex.da),
                   "hypotheses": [{"text": " ".join(hypothesis_tokens(model, h, ex.da)), "score": h.score,
                                   "logprob": h.logprob, "truncated": h.truncated} for h in hyps]}
            kf.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    print(f"wrote {len(results)} hypotheses to {args.out}")
    return 0


def cmd_trace(args):
    from .decoding import render_trace, write_traces

    model = _load_model(args)
    corpus = _load_corpus(args.data, args.split)
    os.makedirs(args.out, exist_ok=True)
    results = _generate(model, corpus, args.beam, 1)
    traces = [render_trace(model, hyps[0], ex.da) for ex, hyps in results]
    write_traces(os.path.join(args.out, "traces.jsonl"), traces)
    with open(os.path.join(args.out, "traces.txt"), "w", encoding="utf-8") as fh:
        for k, t in enumerate(traces):
            fh.write(f"{k}\t{D.serialize_da(t.da)}\n{k}\t{t.annotated()}\n")
    print(f"wrote {len(traces)} traces to {args.out}")
    return 0


def read_hypotheses(path):
    """``id<TAB>text`` lines (a bare line takes the next id)."""
    if not os.path.exists(path):
        raise CLIError(f"{path}: no such file")
    hyps = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            key, sep, text = line.partition("\t")
            if sep:
                try:
                    idx = int(key)
                except ValueError as err:
                    raise CLIError(f"{path}: line {lineno}: bad example id {key!r}") from err
            else:
                idx, text = len(hyps), line
            hyps[idx] = text.split()
    return hyps


def cmd_evaluate(args):
    from .decoding import read_traces
    from .metrics import evaluate

    corpus = _load_corpus(args.data, args.split)
    hyps = read_hypotheses(args.hyp)
    missing = [k for k in range(len(corpus)) if k not in hyps]
    if missing or len(hyps) != len(corpus):
        raise CLIError(f"{args.hyp}: expected hypotheses for ids 0..{len(corpus) - 1}, "
                       f"got {len(hyps)} (first missing: {missing[0] if missing else 'none'})")
    traces = read_traces(args.traces) if args.traces else None
    gold = None
    if args.gold:
        with open(args.gold, encoding="utf-8") as fh:
            gold = [json.loads(line) for line in fh if line.strip()]
    try:
        report = evaluate([ex.da for ex in corpus.examples], [hyps[k] for k in range(len(corpus))],
                          [ex.refs for ex in corpus.examples], traces=traces, gold=gold)
    except ValueError as err:
        raise CLIError(str(err)) from err
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
        with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(report.text() + "\n")
    print(report.text())
    return 0


# -- parser ---------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="hrm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prepare", help="canonicalize a raw corpus")
    s.add_argument("--format", choices=("e2e-csv", "rnnlg-json"), default="e2e-csv")
    s.add_argument("--in", dest="inputs", action="append", required=True, metavar="[SPLIT=]PATH")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("train", help="train a model")
    s.add_argument("--config")
    s.add_argument("--data", required=True, help="prepared corpus directory")
    s.add_argument("--out", required=True)
    s.add_argument("--switch", choices=("soft", "gumbel", "vq"))
    s.add_argument("--ablation", choices=("none", "no-self-attn", "lstm-enc", "no-pointer", "delex"))
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--resume", action="store_true")
    s.set_defaults(func=cmd_train)

    for name, func, helptext in (("generate", cmd_generate, "decode hypotheses"),
                                 ("trace", cmd_trace, "decode with per-item renderer labels")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--checkpoint", required=True, help="checkpoint file or training directory")
        s.add_argument("--config", help="check the checkpoint against this config")
        s.add_argument("--data", required=True)
        s.add_argument("--split", default="test")
        s.add_argument("--beam", type=int, default=10)
        if name == "generate":
            s.add_argument("--topk", type=int, default=5)
        s.add_argument("--seed", type=int, default=0, help="accepted for symmetry; decoding is noise-free")
        s.add_argument("--out", required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("evaluate", help="BLEU, ERR and alignment claims")
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test")
    s.add_argument("--hyp", required=True)
    s.add_argument("--traces")
    s.add_argument("--gold", help="line-delimited slot -> item indices per example")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CLIError as err:
        print(f"hrm {args.command}: error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"hrm {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
