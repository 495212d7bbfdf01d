"""Weighted martingale transforms against the factorization bound.

For a pair (U, V) the transform T_sigma flips Haar coefficient signs. Its
norm from L2(V) to L2(U) is bounded by the product of two diagonal-block
norms. The scan below shows how tight that product is for random pairs.
"""

import numpy as np

from dyadweights.conditions import joint_a2
from dyadweights.operators import BandSpec, band_weighted_bound, diagonal_product_norm, sigma_norm_scan
from dyadweights.weights import generate

print(f"{'cond':>5} {'N':>2} {'max |T_s|':>10} {'bound':>8} {'ratio':>6} {'diag^2':>9} {'A2':>9}")
for cond in (2, 5, 20):
    for N in (1, 2):
        U = generate("random_logbounded", {"cond_max": cond}, N=N, D=4, seed=cond)
        V = generate("random_logbounded", {"cond_max": cond}, N=N, D=4, seed=100 + cond)
        scan = sigma_norm_scan(U, V, num_sigma=16, seed=1, with_bound=True)
        prod = scan.bound[2]
        print(f"{cond:5d} {N:2d} {scan.max:10.4f} {prod:8.4f} {scan.max / prod:6.3f} "
              f"{diagonal_product_norm(U, V) ** 2:9.4f} {joint_a2(U, V).constant:9.4f}")

# band operators: a random radius-2 band and its split bound
U = generate("random_logbounded", {"cond_max": 5}, N=1, D=4, seed=7)
spec = BandSpec.random(U.grid, 2, np.random.default_rng(3))
norm, bound, terms = band_weighted_bound(spec, U, U)
print(f"\nradius-2 band with {len(spec.phi)} coefficients in {len(terms['parts'])} parts: "
      f"norm {norm:.3f}, bound {bound:.3f}")
