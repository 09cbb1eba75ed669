"""Deterministic random-stream derivation.

Every run owns a single integer root seed.  All stochastic components
(init design, observation noise, probe draws, candidate sampling, warp
initialization) pull from child streams derived from the root seed plus a
stable text label, so adding or removing one consumer never shifts the
draws seen by another.
"""

import zlib

import numpy as np


def child_sequence(root_seed, label):
    """SeedSequence for stream ``label`` under ``root_seed``."""
    tag = zlib.crc32(str(label).encode("utf-8"))
    return np.random.SeedSequence([int(root_seed) & 0xFFFFFFFF, tag])


def child_rng(root_seed, label):
    """Generator for stream ``label`` under ``root_seed``."""
    return np.random.Generator(np.random.PCG64(child_sequence(root_seed, label)))


def child_seed_int(root_seed, label):
    """A 63-bit integer seed for APIs that want a plain int."""
    return int(child_sequence(root_seed, label).generate_state(1, np.uint64)[0] >> 1)
