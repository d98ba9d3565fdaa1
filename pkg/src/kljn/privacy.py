"""XOR-pair privacy amplification with analytic and empirical leak models.

One step XORs subsequent key-bit pairs, halving the key length (a trailing
odd bit is dropped).  N steps shrink the key by 2^N and drive the
eavesdropper's knowledge down super-exponentially:

* certainty model: Eve knows an output bit only if she knows both parents,
  so a known-bit fraction ``x`` becomes ``x**2`` per step;
* advantage model: a per-bit guess probability ``p = (1+a)/2`` becomes
  ``p' = p**2 + (1-p)**2``, i.e. the advantage ``a = 2p-1`` also squares.

Both models therefore follow ``leak_N = leak_0 ** (2**N)``; they differ in
what the input fraction means.  Keys serialize as hex strings alongside an
explicit bit length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODELS = ("certainty", "advantage")


@dataclass(frozen=True)
class AmplificationReport:
    steps: int
    key_len_before: int
    key_len_after: int
    model: str
    predicted_leak: float
    empirical_leak: float | None = None

    def __post_init__(self):
        expect = self.key_len_before
        for _ in range(self.steps):
            expect //= 2
        if self.key_len_after != expect:
            raise ValueError("key_len_after must floor-halve per step")

    @property
    def slowdown(self) -> int:
        return 1 << self.steps


def _as_bits(key) -> np.ndarray:
    bits = np.asarray(key, dtype=np.uint8)
    if bits.ndim != 1:
        raise ValueError("key must be a 1-d bit vector")
    if np.any(bits > 1):
        raise ValueError("key must contain only 0/1")
    return bits


def xor_halve(key) -> np.ndarray:
    """XOR subsequent pairs: out[i] = key[2i] ^ key[2i+1]; odd tail dropped."""
    bits = _as_bits(key)
    if bits.size < 2:
        raise ValueError("need at least 2 bits")
    n = bits.size - (bits.size % 2)
    return bits[0:n:2] ^ bits[1:n:2]


def amplify(key, steps: int) -> np.ndarray:
    """Apply `steps` rounds of xor_halve (identity for steps == 0)."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    bits = _as_bits(key)
    if steps > 0 and bits.size < (1 << steps):
        raise ValueError("key exhausted: need at least 2**steps bits")
    for _ in range(steps):
        bits = xor_halve(bits)
    return bits


def predict_leak(initial: float, steps: int, model: str) -> float:
    """Predicted leak after `steps` rounds.

    `initial` is the fraction of bits Eve knows (certainty model) or her
    guessing advantage 2p-1 (advantage model); both square per step.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}")
    if not 0.0 <= initial <= 1.0:
        raise ValueError("initial leak must be in [0, 1]")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    return float(initial ** (1 << steps))


def empirical_leak(alice_key, eve_guesses, steps: int) -> float:
    """Eve's post-amplification agreement advantage 2p - 1 (may be negative)."""
    a = _as_bits(alice_key)
    e = _as_bits(eve_guesses)
    if a.size != e.size:
        raise ValueError("key and guess streams must have equal length")
    a_out = amplify(a, steps)
    e_out = amplify(e, steps)
    p = float(np.mean(a_out == e_out))
    return 2.0 * p - 1.0


def bits_to_hex(bits) -> str:
    """Hex encoding of a bit vector, MSB-first within bytes, zero-padded."""
    b = _as_bits(bits)
    return np.packbits(b).tobytes().hex()


def hex_to_bits(hex_str: str, n_bits: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(hex_str), dtype=np.uint8)
    bits = np.unpackbits(raw)
    if n_bits > bits.size:
        raise ValueError("hex string shorter than the declared bit length")
    return bits[:n_bits]
