"""Deterministic random-number-stream derivation.

Every stochastic entry point takes either an integer seed or a
``numpy.random.Generator``.  Experiment cells (a given sample size,
replicate, path index, ...) derive their own independent stream from the
master seed and their integer/string keys, so results do not depend on
execution order or worker count.
"""

import hashlib

import numpy as np

__all__ = ["derive_rng", "derive_seed_sequence"]


def _key_words(master_seed, keys):
    words = [int(master_seed) & 0xFFFFFFFF]
    for k in keys:
        if isinstance(k, str):
            digest = hashlib.sha256(k.encode("utf-8")).digest()
            words.append(int.from_bytes(digest[:4], "little"))
        else:
            words.append(int(k) & 0xFFFFFFFF)
    return words


def derive_seed_sequence(master_seed, *keys):
    """SeedSequence determined by ``master_seed`` and a tuple of keys."""
    return np.random.SeedSequence(_key_words(master_seed, keys))


def derive_rng(master_seed, *keys):
    """Generator determined by ``master_seed`` and a tuple of keys.

    Keys may be integers or strings; strings are hashed, so
    ``derive_rng(7, "data", 64, 3)`` names the same stream in every
    process and on every platform.
    """
    return np.random.default_rng(derive_seed_sequence(master_seed, *keys))
