"""
Dialogue acts, segmentation and vocabularies
============================================

Parse an E2E meaning representation, split a reference into words and
copyable phrases, and look at what the decoder actually predicts.
"""

from hrm import data as D

# an E2E meaning representation becomes a dialogue act with a dummy act pair first
da = D.parse_da("name[Blue Spice], eatType[coffee shop], area[city centre]")
print(da)
print("pairs:", da.n, "slots:", da.slots)

# the same act in RNN-LG notation
print(D.serialize_da(da, "rnnlg-json"))

# a reference is segmented greedily: the longest value that matches verbatim is one phrase
tokens = D.tokenize("Blue Spice is a coffee shop in the city centre.")
seg = D.segment_utterance(tokens, da)
for item in seg.items:
    print(f"  {item}")

# delexicalized templates are only used by the ``delex`` ablation
template, slot_map = D.delexicalize(tokens, da)
print(" ".join(template))
print(" ".join(D.relexicalize(template, slot_map)))

# vocabularies reserve pad / unk / bos / eos
vocab = D.build_vocab([tokens])
print(len(vocab), "word types;", vocab.id("spice"), vocab.id("never-seen") == vocab.unk_id)
