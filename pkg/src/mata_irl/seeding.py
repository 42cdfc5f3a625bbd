"""Named, counter-based random streams derived from one master seed.

Each consumer (environment resets, network init, action sampling, replay
sampling, the reward-inference module) draws from its own stream, so turning
one consumer off never shifts the numbers another one sees.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(name: str, counters) -> tuple[int, ...]:
    return (zlib.crc32(name.encode("utf-8")), *(int(c) for c in counters))


def stream(master_seed: int, name: str, *counters: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=_key(name, counters))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(master_seed: int, name: str, *counters: int) -> int:
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=_key(name, counters))
    return int(seq.generate_state(1, dtype=np.uint64)[0])
