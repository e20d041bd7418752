"""Labelled random substreams derived from one master seed.

Streams are keyed by (node kind, node index, purpose) so that, for example, RSU
backoff draws do not shift when the number of vehicles changes.
"""

from __future__ import annotations

import zlib

import numpy as np

KINDS = {"vehicle": 0, "rsu": 1, "global": 2}


def _label_code(text: str) -> int:
    # crc32 is stable across interpreter runs, unlike hash()
    return zlib.crc32(text.encode())


def rng_for(seed: int, kind: str, index: int, purpose: str) -> np.random.Generator:
    """Independent, reproducible generator for one (node, purpose) pair."""
    if kind not in KINDS:
        raise ValueError(f"unknown node kind {kind!r}")
    if index < 0:
        raise ValueError("index must be >= 0")
    seq = np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=(KINDS[kind], int(index), _label_code(purpose)),
    )
    return np.random.Generator(np.random.PCG64(seq))
