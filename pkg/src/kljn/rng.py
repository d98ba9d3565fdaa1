"""Deterministic random-number streams for reproducible simulations.

All randomness in this package is drawn from the Philox 4x64 counter-based
bit generator (``numpy.random.Philox``).  A stream is addressed by a
(master seed, stream tag) pair used as the 128-bit Philox key, and by a
clock-period index used to jump the counter.  Because Philox is
counter-based, any (seed, tag, index) triple can be opened in O(1) without
generating the preceding values, which makes sequential, batched, and
networked runs produce bit-identical noise for the same seed.

Each clock period is allotted ``2**40`` draws, far more than any bit
period consumes.
"""

from __future__ import annotations

import numpy as np

# Stream tags. One tag per independent consumer of randomness; party
# streams never overlap, so no ordering between parties can change results.
ALICE_NOISE = 1
BOB_NOISE = 2
ALICE_COIN = 3
BOB_COIN = 4
EVE_NOISE_A = 5
EVE_NOISE_B = 6
EVE_COIN = 7
INJECT = 8
EVE_GUESS = 9
QKD = 10
HARNESS = 11

_DRAWS_PER_PERIOD = 1 << 40
_MASK64 = (1 << 64) - 1


def stream(seed: int, tag: int, index: int = 0) -> np.random.Generator:
    """Open the generator for (seed, tag) positioned at clock period `index`.

    Parameters
    ----------
    seed : int
        64-bit master seed.
    tag : int
        Stream tag (one of the module constants, or any small integer).
    index : int
        Clock-period index; each index owns a disjoint block of draws.
    """
    if index < 0:
        raise ValueError("stream index must be >= 0")
    key = np.array([seed & _MASK64, tag & _MASK64], dtype=np.uint64)
    bitgen = np.random.Philox(key=key)
    if index:
        bitgen.advance(index * _DRAWS_PER_PERIOD)
    return np.random.Generator(bitgen)


def derive_seed(master: int, *path: int) -> int:
    """Derive a 64-bit sub-seed from a master seed and an index path.

    Used by the experiment harness to give every (sweep point, trial)
    pair an independent session seed that does not depend on execution
    order or parallelism.
    """
    ss = np.random.SeedSequence(entropy=master & _MASK64, spawn_key=tuple(path))
    return int(ss.generate_state(1, np.uint64)[0])
