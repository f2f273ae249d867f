"""
Training on the bundled E2E sample
==================================

Fit the model to the 32 bundled E2E examples, then decode with beam search
and print an annotated trace showing which renderer produced each item.
Pass a switch variant and an epoch count, e.g. ``python3 04_memorize_sample.py gumbel 200``.
"""

import sys
import time

from hrm import data as D
from hrm.config import TrainingConfig
from hrm.decoding import beam_search, corpus_hypotheses, render_trace
from hrm.metrics import corpus_bleu, slot_error_rate
from hrm.synthetic import load_e2e_sample
from hrm.training import teacher_forced_accuracy, train

switch = sys.argv[1] if len(sys.argv) > 1 else "gumbel"
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 60

corpus = load_e2e_sample()
extra = dict(kl_weight=1e-2, vq_weight=1e-2) if switch == "vq" else {}
cfg = TrainingConfig(embed_dim=32, hidden_dim=64, attn_heads=4, dropout=0.0, lr=3e-3, batch_size=32,
                     max_epochs=epochs, patience=None, eval_every=10 ** 6, switch=switch, **extra)

t0 = time.time()
result = train(cfg, corpus)
model = result.model
print(f"{switch}: {epochs} epochs in {time.time() - t0:.0f}s, final train L^c {result.records[-1].train_lc:.3f}")
print("teacher-forced accuracy", round(teacher_forced_accuracy(model, corpus.instances()), 4))

das = [e.da for e in corpus.examples]
refs = [e.refs for e in corpus.examples]
hyps = corpus_hypotheses(model, das, beam_width=10, top_k=5)
print("BLEU", round(corpus_bleu(hyps, refs), 4), " ERR", round(slot_error_rate(das, hyps, refs)[0], 4))

# which renderer produced what
da = das[0]
hyp = beam_search(model, da, beam_width=10, top_k=1)[0]
print(D.serialize_da(da))
print(render_trace(model, hyp, da).annotated())
