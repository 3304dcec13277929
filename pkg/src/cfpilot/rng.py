"""Named, reproducible random streams.

Every consumer of randomness asks for its own stream by name so that adding
draws in one component never shifts the samples seen by another.
"""
import zlib

import numpy as np


def stream(master_seed, replica, name):
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(replica), key]))
