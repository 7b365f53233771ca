"""Named, independent random substreams derived from a single master seed.

Every consumer of randomness (population init, pairing, lambda draws, store
init, dataset, batch shuffling, ...) gets its own stream keyed by a label,
so adding draws to one consumer never perturbs the others.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def named_rng(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream_key(label)]))


def generator_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def restore_generator(state: dict) -> np.random.Generator:
    rng = np.random.default_rng(0)
    rng.bit_generator.state = state
    return rng
