"""
Cross-camera retrieval metrics.

Each tracklet is used as a query once. Its gallery is every tracklet
recorded by another camera; same-camera items never enter a ranking.
Rankings sort by Euclidean distance with ties kept in gallery order.
"""

import logging

import numpy as np
from scipy.spatial.distance import cdist

from partialgait.exceptions import (
    DimensionMismatch, InvalidConfig, NoPositives, NoValidQueries, ZeroVector,
)

from .models import MetricsReport

logger = logging.getLogger(__name__)

DEFAULT_RANKS = (1, 5, 10)


def l2_normalize(vector):
    vector = np.asarray(vector, dtype=np.float64)
    norm = np.linalg.norm(vector)
    if norm == 0:
        raise ZeroVector('cannot normalize a zero vector')
    return vector / norm


def distance_matrix(queries, gallery):
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    gallery = np.atleast_2d(np.asarray(gallery, dtype=np.float64))
    if queries.shape[1] != gallery.shape[1]:
        raise DimensionMismatch(
            f'query dim {queries.shape[1]} differs from gallery dim {gallery.shape[1]}')
    return cdist(queries, gallery, metric='euclidean')


def average_precision(flags):
    """Mean over positives of the precision at each positive's rank."""
    flags = np.asarray(flags, dtype=bool)
    positives = flags.sum()
    if positives == 0:
        raise NoPositives('ranking has no positive item')
    hits = np.cumsum(flags)
    ranks = np.arange(1, flags.size + 1)
    return float(np.sum((hits / ranks)[flags]) / positives)


def _ranked_flags(distances, query_person, person_ids, candidates):
    order = candidates[np.argsort(distances[candidates], kind='stable')]
    return order, person_ids[order] == query_person


def cross_camera_eval(gallery_set, ranks=DEFAULT_RANKS):
    if len(set(gallery_set.camera_ids.tolist())) < 2:
        raise InvalidConfig('cross-camera evaluation needs at least two cameras')
    person_ids = gallery_set.person_ids
    camera_ids = gallery_set.camera_ids
    distances = distance_matrix(gallery_set.vectors, gallery_set.vectors)

    per_query = []
    first_hits = []
    excluded = 0
    for q, entry in enumerate(gallery_set.entries):
        candidates = np.flatnonzero(camera_ids != camera_ids[q])
        _, flags = _ranked_flags(distances[q], person_ids[q], person_ids, candidates)
        if not flags.any():
            excluded += 1
            continue
        per_query.append((entry.tracklet_id, average_precision(flags)))
        first_hits.append(int(np.argmax(flags)) + 1)

    if not per_query:
        raise NoValidQueries('no query has a positive match in another camera',
                             excluded=excluded)
    if excluded:
        logger.info('queries without cross-camera positives excluded',
                    extra={'excluded': excluded, 'valid': len(per_query)})
    first_hits = np.array(first_hits)
    return MetricsReport(
        mAP=float(np.mean([ap for _, ap in per_query])),
        ranks={k: float(np.mean(first_hits <= k)) for k in ranks},
        per_query_ap=per_query,
        excluded=excluded,
        valid=len(per_query),
    )


def top_matches(gallery_set, query_index, k=5):
    """The k nearest other-camera tracklets for one query, with correctness flags."""
    entries = gallery_set.entries
    query = entries[query_index]
    distances = distance_matrix(query.vector[None], gallery_set.vectors)[0]
    candidates = np.flatnonzero(gallery_set.camera_ids != query.camera_id)
    order, flags = _ranked_flags(distances, query.person_id, gallery_set.person_ids, candidates)
    return [
        {
            'rank': rank,
            'tracklet_id': entries[i].tracklet_id,
            'person_id': entries[i].person_id,
            'camera_id': entries[i].camera_id,
            'distance': float(distances[i]),
            'correct': bool(flag),
        }
        for rank, (i, flag) in enumerate(zip(order[:k], flags[:k]), start=1)
    ]
