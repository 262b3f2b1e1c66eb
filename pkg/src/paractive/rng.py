"""Named random sub-streams derived from one 64-bit run seed."""
import zlib

import numpy as np


def substream(seed: int, name: str, *ids: int) -> np.random.Generator:
    """Independent generator for (seed, name, ids); stable across processes."""
    key = (zlib.crc32(name.encode()),) + tuple(int(i) for i in ids)
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def node_stream(seed: int, node_id: int) -> np.random.Generator:
    return substream(seed, "node", node_id)
