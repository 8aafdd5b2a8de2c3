"""Counter-based random streams.

Every (seed, purpose) pair maps to its own Philox stream, so a replicate can
draw its signal, rotations and noise independently of each other and of any
other replicate, in any order and on any worker.
"""
import hashlib

import numpy as np

from core.errors import ConfigError

PURPOSES = {
    "signal": 1,
    "rotation": 2,
    "noise": 3,
}

U64_MASK = (1 << 64) - 1


def stream(seed: int, purpose: str) -> np.random.Generator:
    if purpose not in PURPOSES:
        raise ConfigError("unknown random stream purpose", purpose=purpose)
    seq = np.random.SeedSequence(int(seed) & U64_MASK, spawn_key=(PURPOSES[purpose],))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(base_seed: int, *parts) -> int:
    """base XOR hash(parts), as an unsigned 64-bit integer."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return (int(base_seed) ^ int.from_bytes(h.digest(), "little")) & U64_MASK
