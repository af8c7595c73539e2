"""
How much do structured operators distort a manifold?
====================================================

We sample chords of the sinusoid curve, push them through several
operator families, and look at the worst squared-norm distortion.  The
numbers are lower-bound estimates: sampling can only miss bad chords.
"""

from stable_embed import bounds, harness, manifolds

N = 128
model = manifolds.sinusoid_manifold(N)

families = ["dense_gaussian", "subsampled_dft", "partial_circulant", "random_convolution", "dbd"]
table = harness.compare_families(model, families, [16, 32, 64, 128],
                                 chords_per_trial=2000, seeds_per_cell=5, base_seed=3)

for fam, medians in table.medians().items():
    row = "  ".join(f"m={m:3d}: {d:.3f}" for m, d in medians.items())
    print(f"{fam:20s} {row}")

# at m = n the Fourier families are unitary, so the distortion vanishes

# for contrast, the worst-case theory asks for a far larger RIP order
budget = bounds.embedding_budget(model.geometry, 0.5, 0.05)
print(f"RIP order required for delta_m=0.5: {budget.S_required:.0f}, "
      f"with RIP constant at most {budget.delta_required:.4f}")
