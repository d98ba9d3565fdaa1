"""Intercept-resend detection baseline for the BB84 protocol.

Qubits are modelled abstractly as (basis, value) pairs with the
measurement-collapse rule: measuring in the preparation basis returns the
value; measuring in the other basis returns a fair coin.  Eve measures in
a random basis and resends in that basis; Bob checks every bit in Alice's
basis (the worst case for Eve).  Each intercepted bit is disturbed with
probability 1/4, so the probability of catching an interception of N bits
is ``1 - (3/4)**N``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class InterceptResult:
    n_bits: int
    detected: bool
    disturbed_count: int

    def __post_init__(self):
        if self.disturbed_count > self.n_bits:
            raise ValueError("disturbed_count cannot exceed n_bits")


def detection_probability(n: int) -> float:
    """Exact detection probability 1 - (3/4)**n for n intercepted bits."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return 1.0 - 0.75**n


def intercept_once(n: int, rnd: np.random.Generator, eve_knows_basis: bool = False) -> InterceptResult:
    """Simulate one intercept-resend attempt on `n` checked bits."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return InterceptResult(n_bits=0, detected=False, disturbed_count=0)
    alice_basis = rnd.integers(0, 2, size=n)
    alice_value = rnd.integers(0, 2, size=n)
    eve_basis = alice_basis if eve_knows_basis else rnd.integers(0, 2, size=n)
    wrong_basis = eve_basis != alice_basis
    eve_value = np.where(wrong_basis, rnd.integers(0, 2, size=n), alice_value)
    # Bob measures Eve's resent qubit in Alice's basis; a basis mismatch
    # between Eve and Alice randomizes his outcome.
    bob_value = np.where(wrong_basis, rnd.integers(0, 2, size=n), eve_value)
    disturbed = bob_value != alice_value
    return InterceptResult(
        n_bits=n, detected=bool(np.any(disturbed)), disturbed_count=int(np.sum(disturbed))
    )


def simulate_intercept_resend(
    n: int,
    trials: int,
    rnd: np.random.Generator | None = None,
    eve_knows_basis: bool = False,
) -> float:
    """Empirical detection probability over many independent trials."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if n < 0:
        raise ValueError("n must be >= 0")
    if rnd is None:
        rnd = np.random.default_rng()
    if n == 0:
        return 0.0
    shape = (trials, n)
    alice_basis = rnd.integers(0, 2, size=shape)
    alice_value = rnd.integers(0, 2, size=shape)
    eve_basis = alice_basis if eve_knows_basis else rnd.integers(0, 2, size=shape)
    wrong_basis = eve_basis != alice_basis
    eve_value = np.where(wrong_basis, rnd.integers(0, 2, size=shape), alice_value)
    bob_value = np.where(wrong_basis, rnd.integers(0, 2, size=shape), eve_value)
    detected = np.any(bob_value != alice_value, axis=1)
    return float(np.mean(detected))
