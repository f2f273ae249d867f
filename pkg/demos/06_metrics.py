"""
BLEU and slot error rate
========================
"""

from hrm import data as D
from hrm.metrics import corpus_bleu, slot_error_rate

refs = [[D.tokenize("blue spice is a pub in riverside"), D.tokenize("there is a pub called blue spice in riverside")]]
for hyp in ("blue spice is a pub in riverside", "blue spice is a pub", "the cat"):
    print(f"{hyp!r:40} BLEU {corpus_bleu([D.tokenize(hyp)], refs):.4f}")

# missing and repeated slot values
da = D.parse_da("name[blue spice], eatType[pub], area[riverside], near[the bridge]")
for utt in ("blue spice is a pub in riverside near the bridge",
            "blue spice is a pub near the bridge",
            "blue spice is a pub pub near the bridge"):
    err, det = slot_error_rate([da], [D.tokenize(utt)])
    print(f"ERR {err:.2f}  missing {det[0].missing}  redundant {det[0].redundant}")
