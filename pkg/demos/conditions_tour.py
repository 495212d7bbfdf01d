"""How the weight-condition constants react to a growing jump.

A scalar weight equal to 1 on the left half and b on the right half has
joint A2 constant (1 + b)^2 / (4b) at the root. The A2,0 constant tracks
the determinant instead, and reverse Hoelder reports a moment ratio.
"""

import numpy as np

from dyadweights.conditions import a2zero, joint_a2, reverse_holder, rh_exponent_search
from dyadweights.weights import generate

print(f"{'b':>6} {'joint A2':>10} {'closed form':>12} {'A2,0':>8} {'RH r=4':>8}")
for b in (1, 4, 16, 64, 256):
    W = generate("two_value", {"a": 1, "b": b}, D=3)
    print(f"{b:6d} {joint_a2(W, W).constant:10.4f} {(1 + b) ** 2 / (4 * b):12.4f} "
          f"{a2zero(W).constant:8.4f} {reverse_holder(W, 4).constant:8.4f}")

# a rotating 2x2 weight: each cell is a rotated ellipse, so averages mix directions
print()
for ecc in (2, 8, 32):
    W = generate("rotating", {"frequency": 1, "eccentricity": ecc}, N=2, D=6)
    rep = joint_a2(W, W)
    r, _ = rh_exponent_search(W, budget=2.0)
    print(f"eccentricity {ecc:3d}: joint A2 {rep.constant:8.3f} at {rep.witness_interval}, "
          f"direction {np.round(rep.witness_direction, 3)}, largest RH exponent within 2: {r}")
