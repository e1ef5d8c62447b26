"""
Binary embedding store.

Layout (little endian)::

    b"GBE1" | uint32 version | uint32 dim | uint32 count
    count x ( uint32 id_length | id utf-8 | dim x float32 )
"""

import struct

import numpy as np

from partialgait.exceptions import BadMagic, DimMismatch, DuplicateId, Truncated

from .files import atomic_write
from .models import EmbeddingEntry

MAGIC = b'GBE1'
VERSION = 1
HEADER = struct.Struct('<4sIII')
ID_LENGTH = struct.Struct('<I')
FLOAT = np.dtype('<f4')


def dumps_embeddings(entries):
    entries = list(entries)
    dims = {np.asarray(e.vector).size for e in entries}
    if len(dims) > 1:
        raise DimMismatch(f'embedding dims differ: {sorted(dims)}')
    ids = [e.tracklet_id for e in entries]
    if len(set(ids)) != len(ids):
        raise DuplicateId('embedding store ids must be unique')
    dim = dims.pop() if dims else 0
    chunks = [HEADER.pack(MAGIC, VERSION, dim, len(entries))]
    for entry in entries:
        name = entry.tracklet_id.encode('utf-8')
        chunks.append(ID_LENGTH.pack(len(name)))
        chunks.append(name)
        chunks.append(np.asarray(entry.vector).astype(FLOAT).reshape(-1).tobytes())
    return b''.join(chunks)


def write_embeddings(path, entries):
    atomic_write(path, dumps_embeddings(entries))


def loads_embeddings(payload, expected_dim=None):
    if len(payload) < HEADER.size:
        if payload[:4] != MAGIC[:len(payload[:4])]:
            raise BadMagic('not an embedding store')
        raise Truncated('embedding store header is truncated')
    magic, version, dim, count = HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise BadMagic(f'bad magic {magic!r}, expected {MAGIC!r}')
    if version != VERSION:
        raise BadMagic(f'unsupported store version {version}')
    if expected_dim is not None and dim != expected_dim:
        raise DimMismatch(f'store dim {dim} differs from expected {expected_dim}')
    offset = HEADER.size
    vector_bytes = dim * FLOAT.itemsize
    entries = []
    for index in range(count):
        if offset + ID_LENGTH.size > len(payload):
            raise Truncated(f'record {index} is truncated')
        (length,) = ID_LENGTH.unpack_from(payload, offset)
        offset += ID_LENGTH.size
        if offset + length + vector_bytes > len(payload):
            raise Truncated(f'record {index} is truncated')
        tracklet_id = payload[offset:offset + length].decode('utf-8')
        offset += length
        vector = np.frombuffer(payload, dtype=FLOAT, count=dim, offset=offset).copy()
        offset += vector_bytes
        entries.append(EmbeddingEntry(tracklet_id, vector))
    if offset != len(payload):
        raise DimMismatch(f'{len(payload) - offset} trailing bytes; header dim {dim} is inconsistent')
    return entries


def read_embeddings(path, expected_dim=None):
    with open(path, 'rb') as handle:
        return loads_embeddings(handle.read(), expected_dim)


def read_header(path):
    with open(path, 'rb') as handle:
        payload = handle.read(HEADER.size)
    if len(payload) < HEADER.size:
        raise Truncated('embedding store header is truncated')
    magic, version, dim, count = HEADER.unpack(payload)
    if magic != MAGIC:
        raise BadMagic(f'bad magic {magic!r}, expected {MAGIC!r}')
    return {'version': version, 'dim': dim, 'count': count}
