import numpy as np

from gaitdata.models import EmbeddingEntry
from partialgait.exceptions import DuplicateId, IdMismatch

from .metrics import l2_normalize


def fuse(a, b):
    return np.concatenate([l2_normalize(a), l2_normalize(b)])


def fuse_stores(first, second):
    """
    Fuse two embedding stores entry by entry.

    Both stores must hold the same tracklet ids; the output follows the order
    of ``first``.
    """
    by_id = {}
    for entry in second:
        if entry.tracklet_id in by_id:
            raise DuplicateId(f'duplicate tracklet id {entry.tracklet_id!r}')
        by_id[entry.tracklet_id] = entry.vector
    first = list(first)
    ids = [e.tracklet_id for e in first]
    if set(ids) != set(by_id) or len(ids) != len(by_id):
        missing = sorted(set(ids) ^ set(by_id))
        raise IdMismatch('stores cover different tracklets', tracklet_ids=missing[:10])
    return [EmbeddingEntry(e.tracklet_id, fuse(e.vector, by_id[e.tracklet_id])) for e in first]
