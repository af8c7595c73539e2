"""
Geometry of the sampled-sinusoid curve
======================================

The curve ``omega -> (e^{j omega}, ..., e^{j N omega})`` has closed-form
reach, volume and geodesic distance.  Here we check them numerically.
"""

import math

from stable_embed import manifolds

for N in (1, 4, 16, 256):
    g = manifolds.sinusoid_geometry(N)
    # 1/tau shrinks like N^(-1/2)
    print(f"N={N:4d}  tau={g.tau:9.4f}  tau/sqrt(N)={g.tau / math.sqrt(N):.4f}  V={g.V:10.3f}")

model = manifolds.sinusoid_manifold(8)

# chords closer than 3 tau / 8 must satisfy the self-avoidance inequalities
report = manifolds.verify_self_avoidance(model, pair_count=5000, seed=1)
print(report)

# the estimated curvature of unit-speed geodesics never exceeds 1/tau
print(manifolds.verify_curvature_bound(model, sample_count=200))

# claiming a reach ten times too large is caught
print(manifolds.verify_self_avoidance(model, 10 * model.geometry.tau, pair_count=5000, seed=1))
