"""Keyed, counter-based random streams.

Every random draw in the package comes from ``substream(seed, stream, *keys)``.
The stream name is hashed with crc32 (never ``hash()``, which is salted per
process) and combined with integer keys (device, session, iteration, ...) into a
``SeedSequence`` spawn key, which seeds a Philox generator. Two calls with the
same arguments return generators producing identical sequences, regardless of
what else was drawn in between.
"""

import zlib

import numpy as np

STREAMS = (
    "workload",
    "verify",
    "predictor-init",
    "predictor-split",
    "sim",
    "bootstrap",
    "profile",
    "fleet",
)


def stream_key(stream: str) -> int:
    return zlib.crc32(stream.encode("utf-8")) & 0xFFFFFFFF


def substream(seed: int, stream: str, *keys: int) -> np.random.Generator:
    spawn_key = (stream_key(stream),) + tuple(int(k) & 0xFFFFFFFFFFFFFFFF for k in keys)
    seq = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed: int, stream: str, *keys: int) -> int:
    """A 63-bit integer seed for libraries that take plain ints (torch)."""
    return int(substream(seed, stream, *keys).integers(0, 2**63 - 1))
