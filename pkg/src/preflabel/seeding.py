"""Stage-specific seeds derived from one global seed."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *keys) -> int:
    payload = repr((int(seed),) + tuple(str(k) for k in keys)).encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


def stage_rng(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))
