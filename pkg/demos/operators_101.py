"""
Structured operators in a few lines
===================================

Every operator is matrix-free: it knows how to apply itself and its
adjoint, and a small JSON descriptor is enough to rebuild it exactly.
"""

import numpy as np

from stable_embed import linops

# a subsampled DFT keeps 32 of 128 frequencies, rescaled so that the
# squared norm is preserved on average
phi = linops.make_subsampled_dft(32, 128, seed=7)
x = np.random.default_rng(0).standard_normal(128)
print("||x||^2      ", np.linalg.norm(x) ** 2)
print("||Phi x||^2  ", np.linalg.norm(phi(x)) ** 2)

# signs on the right turn an RIP matrix into a JL embedding
phi_hat = linops.compose(phi, linops.make_rademacher_diag(128, seed=7))
print(phi_hat)

# adjoint identity <A x, y> = <x, A* y>
y = np.random.default_rng(1).standard_normal(32)
print("adjoint gap  ", abs(np.vdot(y, phi_hat(x)) - np.vdot(phi_hat.H(y), x)))

# descriptors round-trip through JSON
text = phi_hat.descriptor.to_json()
again = linops.from_descriptor(linops.OperatorDescriptor.from_json(text))
print("rebuilt equal", np.array_equal(again(x), phi_hat(x)))

# the deterministic binary construction: columns are graphs of polynomials
dev = linops.materialize_dense(linops.make_devore_binary(3, 1)).real
print((dev != 0).astype(int))
