"""Stopping generations for a weight with a single bad spot.

The weight is 1 everywhere except a bump of height h on one leaf cell.
Raising lambda thins the generations down to the bad cell alone; lowering
it makes every ancestor of the bad cell stop in turn.
"""

import numpy as np

from dyadweights.stopping import build_tree, decay_report, pointwise_bound_max
from dyadweights.weights import MatrixWeight

cells = np.ones(64)
cells[37] = 200.0
W = MatrixWeight(cells)
for lam in (2, 4, 8, 32, 128):
    tree = build_tree(W, W, lam)
    rep = decay_report(tree)
    gens = [[(I.level, I.index) for I in g] for g in tree.generations]
    print(f"lambda {lam:4d}: measures {np.round(rep.measures, 4).tolist()}, delta {rep.delta_fit:.3f}, "
          f"pass {rep.passed}, free-cell max {pointwise_bound_max(tree):.2f}")
    print(f"             generations {gens}")
