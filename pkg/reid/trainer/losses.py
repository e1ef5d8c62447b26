"""
Batch-All triplet loss on strip embeddings.

Every (anchor, positive, negative) combination in the batch is a triplet.
The hinge is computed on each strip separately with Euclidean distances and
the strip losses are averaged.
"""

import numpy as np
from scipy.spatial.distance import cdist

from partialgait.exceptions import NoValidTriplets, ShapeMismatch

from .models import LossConfig, LossResult


def triplet_mask(labels):
    """valid[a, p, n]: a != p share a label, n has another label."""
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    positive = same & ~np.eye(len(labels), dtype=bool)
    return positive[:, :, None] & ~same[:, None, :]


def batch_all_triplet_loss(embeddings, labels, config=None):
    """
    Loss and gradient for an n x strips x D batch.

    The gradient of a distance at zero is taken to be zero.
    """
    config = config or LossConfig()
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 3 or len(embeddings) != len(labels):
        raise ShapeMismatch(f'embeddings {embeddings.shape} do not match {len(labels)} labels')
    valid = triplet_mask(labels)
    triplets = int(valid.sum())
    if triplets == 0:
        raise NoValidTriplets('batch has no anchor/positive/negative combination')

    n, strips, _ = embeddings.shape
    strip_losses = np.zeros(strips)
    grad = np.zeros_like(embeddings)
    nonzero = 0
    for s in range(strips):
        points = embeddings[:, s, :]
        dist = cdist(points, points)
        hinge = config.margin + dist[:, :, None] - dist[:, None, :]
        active = valid & (hinge > 0)
        count = int(active.sum())
        nonzero += count
        denominator = triplets if config.averaging == 'all-triplets' else count
        if denominator == 0:
            continue
        strip_losses[s] = np.sum(hinge[active]) / denominator

        # d loss / d dist[a, b] for this strip
        weight = (active.sum(axis=2) - active.sum(axis=1)) / (denominator * strips)
        diff = points[:, None, :] - points[None, :, :]
        safe = np.where(dist > 0, dist, 1.0)
        unit = np.where((dist > 0)[:, :, None], diff / safe[:, :, None], 0.0)
        pull = weight[:, :, None] * unit
        grad[:, s, :] = pull.sum(axis=1) - pull.sum(axis=0)

    return LossResult(float(strip_losses.mean()), strip_losses, nonzero, triplets, grad)

