from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass
class RngState:
    """Counter-based random stream.

    Each call to :meth:`generator` consumes one counter value, so a given
    (seed, counter) pair always yields the same draws.
    """

    seed: int
    counter: int = 0

    def generator(self) -> np.random.Generator:
        g = np.random.Generator(np.random.Philox(key=self.seed & (2**64 - 1), counter=[0, 0, 0, self.counter]))
        self.counter += 1
        return g

    def derive(self, *keys: int | str) -> "RngState":
        return RngState(derive_seed(self.seed, *keys))


def derive_seed(seed: int, *keys: int | str) -> int:
    h = hashlib.sha256(repr((int(seed),) + tuple(keys)).encode())
    return int.from_bytes(h.digest()[:8], "little")
