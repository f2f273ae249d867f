"""
Three ways to pick a renderer
=============================

The switcher weighs the pointer (p), the conditional generator (c) and the
language model (l).  ``soft`` mixes them, ``gumbel`` samples, ``vq`` picks
the renderer whose hidden state is nearest to a noisy query.
"""

import numpy as np

from hrm.autodiff import Tensor
from hrm.switcher import quantize, switch_gumbel

rng = np.random.default_rng(0)
z = np.array([0.2, 0.5, 0.3])

# Gumbel-softmax samples at decreasing temperature
for tau in (5.0, 1.0, 0.1):
    o = switch_gumbel(Tensor(z[None]), tau, rng)
    print(f"tau={tau:<4} sample {np.round(o.data[0], 3)}")

# the argmax of a Gumbel-perturbed log z is a draw from z
draws = switch_gumbel(Tensor(np.tile(z, (100000, 1))), 1.0, rng)
print("argmax frequencies", np.bincount(draws.data.argmax(axis=1), minlength=3) / 100000)

# nearest-neighbour choice over this step's renderer states; ties go to the pointer
states = Tensor(np.array([[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]]))
for query in ([0.9, 0.1], [0.5, 0.5], [0.1, 0.2]):
    dist, idx, relaxed = quantize(Tensor([query]), states)
    print(f"query {query} -> {'pcl'[idx[0]]}  distances {np.round(dist[0], 3)}")
