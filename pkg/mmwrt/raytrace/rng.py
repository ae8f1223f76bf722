"""Keyed random streams: the same key always yields the same sequence."""
import hashlib
from dataclasses import dataclass
from typing import Tuple

import numpy as np

PURPOSES = {
    "reflection_loss": 1,
    "diffuse": 2,
    "qd_stats": 3,
    "scene": 4,
}


def stable_hash(value) -> int:
    """64-битный хэш, не зависящий от PYTHONHASHSEED и от процесса."""
    digest = hashlib.blake2b(repr(value).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def tuple_hash(triangle_tuple: Tuple[int, ...]) -> int:
    return stable_hash(tuple(int(i) for i in triangle_tuple))


@dataclass(frozen=True)
class RngStream:
    seed: int
    key: Tuple[int, ...] = ()

    def child(self, *parts) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(_key_part(p) for p in parts))

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=self.key))


def _key_part(part) -> int:
    if isinstance(part, (int, np.integer)) and part >= 0:
        return int(part)
    return stable_hash(part)


def stream(seed: int, purpose: str, *parts) -> RngStream:
    return RngStream(seed, (PURPOSES[purpose],)).child(*parts)
