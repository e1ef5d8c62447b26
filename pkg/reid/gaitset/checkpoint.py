"""
Model checkpoints.

Layout (little endian)::

    b"GBM1" | uint32 config_length | config JSON (utf-8)
    uint32 tensor_count
    tensor_count x ( uint32 name_length | name | uint32 rank | rank x uint32 | float32 data )
"""

import json
import struct

import numpy as np

from gaitdata.files import atomic_write
from partialgait.exceptions import BadMagic, DimMismatch, Truncated

from .models import GaitModel, ModelConfig

MAGIC = b'GBM1'
UINT = struct.Struct('<I')
FLOAT = np.dtype('<f4')


def dumps_model(model):
    config = json.dumps(model.config.to_dict(), sort_keys=True).encode('utf-8')
    chunks = [MAGIC, UINT.pack(len(config)), config, UINT.pack(len(model.weights))]
    for name, tensor in model.weights.items():
        encoded = name.encode('utf-8')
        chunks += [UINT.pack(len(encoded)), encoded, UINT.pack(tensor.ndim)]
        chunks += [UINT.pack(d) for d in tensor.shape]
        chunks.append(np.ascontiguousarray(tensor).astype(FLOAT).tobytes())
    return b''.join(chunks)


def save_checkpoint(path, model):
    atomic_write(path, dumps_model(model))


class _Reader:

    def __init__(self, payload):
        self.payload = payload
        self.offset = 0

    def take(self, size):
        if self.offset + size > len(self.payload):
            raise Truncated('checkpoint is truncated')
        chunk = self.payload[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def uint(self):
        return UINT.unpack(self.take(UINT.size))[0]


def loads_model(payload):
    reader = _Reader(payload)
    if reader.take(len(MAGIC)) != MAGIC:
        raise BadMagic('not a model checkpoint')
    config = ModelConfig(**json.loads(reader.take(reader.uint()).decode('utf-8')))
    expected = config.weight_shapes()
    weights = {}
    for _ in range(reader.uint()):
        name = reader.take(reader.uint()).decode('utf-8')
        shape = tuple(reader.uint() for _ in range(reader.uint()))
        if expected.get(name) != shape:
            raise DimMismatch(f'tensor {name} has shape {shape}, config expects {expected.get(name)}')
        count = int(np.prod(shape))
        data = np.frombuffer(reader.take(count * FLOAT.itemsize), dtype=FLOAT)
        weights[name] = data.astype(np.float64).reshape(shape)
    missing = set(expected) - set(weights)
    if missing:
        raise DimMismatch(f'checkpoint lacks tensors {sorted(missing)}')
    return GaitModel(config, {name: weights[name] for name in expected})


def load_checkpoint(path):
    with open(path, 'rb') as handle:
        return loads_model(handle.read())
