"""Versioned binary snapshot container for learner state.

Layout: magic ``PALM`` | u16 version | u8 learner-tag length | tag |
u32 params-json length | params json | npz payload (uncompressed).
"""
import io
import json
import struct

import numpy as np

from paractive.learners.finite import FiniteERM
from paractive.learners.nn import NeuralNet
from paractive.learners.svm import KernelSVM

MAGIC = b"PALM"
VERSION = 1
_CLASSES = {cls.tag: cls for cls in (KernelSVM, NeuralNet, FiniteERM)}


def dumps(learner) -> bytes:
    tag = learner.tag.encode()
    params = json.dumps(learner.params(), sort_keys=True).encode()
    buf = io.BytesIO()
    np.savez(buf, **{k: np.asarray(v) for k, v in learner.state_arrays().items()})
    return b"".join([
        MAGIC, struct.pack("<HB", VERSION, len(tag)), tag,
        struct.pack("<I", len(params)), params, buf.getvalue(),
    ])


def loads(blob: bytes):
    if blob[:4] != MAGIC:
        raise ValueError("not a model snapshot")
    version, tlen = struct.unpack_from("<HB", blob, 4)
    if version != VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    off = 7
    tag = blob[off:off + tlen].decode()
    off += tlen
    (plen,) = struct.unpack_from("<I", blob, off)
    off += 4
    params = json.loads(blob[off:off + plen])
    off += plen
    with np.load(io.BytesIO(blob[off:])) as npz:
        arrays = {k: npz[k] for k in npz.files}
    return _CLASSES[tag].from_state(params, arrays)


def save(learner, path):
    with open(path, "wb") as f:
        f.write(dumps(learner))


def load(path):
    with open(path, "rb") as f:
        return loads(f.read())
