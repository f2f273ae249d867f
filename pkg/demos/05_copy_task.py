"""
Copying names the model has never seen
======================================

A synthetic corpus ``the NAME is a ADJ place`` with made-up names.  With the
pointer the model copies unseen names whole; without it the names are
unknown words and cannot be produced.
"""

from hrm.config import TrainingConfig
from hrm.decoding import beam_search, hypothesis_tokens, render_trace
from hrm.metrics import count_occurrences
from hrm.synthetic import make_copy_corpus
from hrm.training import train

train_set, test_set = make_copy_corpus(0)
print(len(train_set), "training names,", len(test_set), "held-out names")
print(train_set.instances()[0])

base = dict(embed_dim=16, hidden_dim=32, attn_heads=2, attn_layers=1, dropout=0.0, lr=3e-3, batch_size=32,
            max_epochs=40, patience=None, eval_every=10 ** 6, switch="gumbel")

for ablation in (None, "no-pointer"):
    model = train(TrainingConfig(ablation=ablation, **base), train_set).model
    hits = 0
    for ex in test_set.examples:
        hyp = beam_search(model, ex.da, beam_width=4, top_k=1, max_len=12)[0]
        hits += count_occurrences(hypothesis_tokens(model, hyp, ex.da), list(ex.da.pairs[1][1])) == 1
    print(f"{ablation or 'full model'}: copied {hits}/{len(test_set)} unseen names")
    print("   ", render_trace(model, hyp, ex.da).annotated())
