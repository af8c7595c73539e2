"""Seeded random streams.

Every random quantity in the package is drawn from a Philox-4x64 counter-based
generator keyed by ``SeedSequence([seed, purpose])``.  ``purpose`` is a small
integer naming what the stream is for (matrix entries, row selection, sign
sequence, ...), so an operator seed always reproduces the same draws on any
platform numpy supports, and independent parts of one operator never share a
stream.
"""

import numpy as np

ENTRIES = 0
SELECTION = 1
SIGNS = 2
PROBE = 3
SAMPLES = 4

_MASK64 = (1 << 64) - 1


def stream(seed, purpose):
    """Return the generator for ``(seed, purpose)``."""
    seed = int(seed)
    if seed < 0 or seed > _MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, purpose])))


def derive_seed(*keys):
    """Deterministically combine integer keys into a new 64-bit seed."""
    words = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint32)
    return (int(words[0]) << 32) | int(words[1])


def rademacher(n, seed):
    """Length-``n`` vector of i.i.d. equiprobable +1/-1 values."""
    bits = stream(seed, SIGNS).integers(0, 2, size=n)
    return 1.0 - 2.0 * bits


def partial_fisher_yates(n, m, rng):
    """Sorted ``m``-subset of ``range(n)``, uniform without replacement.

    Only the first ``m`` positions of the permutation are shuffled.
    """
    if m > n:
        raise ValueError(f"cannot select {m} of {n} items")
    perm = np.arange(n)
    for i in range(m):
        j = int(rng.integers(i, n))
        perm[i], perm[j] = perm[j], perm[i]
    return np.sort(perm[:m])
