"""Order-independent seed derivation.

Every job seed is a pure function of its key, so results do not depend on
which worker runs a job or in what order.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> int:
    z = (state + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def epsilon_key(epsilon: float) -> int:
    """Fixed-point (1e-6) integer encoding of a privacy budget."""
    return int(round(float(epsilon) * 1_000_000))


def derive_seed(*parts: int) -> int:
    """Fold integer key parts into one 63-bit seed."""
    h = 0x243F6A8885A308D3
    for part in parts:
        h = splitmix64(h ^ (int(part) & _MASK))
    return h >> 1
