"""Deterministic RNG substreams for replicated experiments.

The splitting rule is frozen: the substream for (master_seed, replicate,
task) is ``default_rng(SeedSequence(master_seed, spawn_key=(replicate,
crc32(task))))``.  Any replicate of any task can be reproduced in
isolation from these three values.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "substream_key"]


def substream_key(replicate: int, task: str) -> tuple:
    return (int(replicate), zlib.crc32(task.encode("utf-8")))


def substream(master_seed: int, replicate: int, task: str) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=substream_key(replicate, task))
    return np.random.default_rng(ss)
