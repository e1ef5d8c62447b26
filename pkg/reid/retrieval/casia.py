"""
CASIA-B cross-view protocol.

The gallery is NM#1-4. Probes are NM#5-6, BG#1-2 or CL#1-2. Rank-1 accuracy
is measured for every (probe view, gallery view) pair with identical views
left out, then grouped into frontal, oblique and lateral probe views.
"""

import numpy as np

from partialgait import settings
from partialgait.exceptions import InvalidConfig, MissingView

from .metrics import distance_matrix
from .models import CasiaReport

GALLERY_SEQUENCES = (1, 2, 3, 4)
PROBE_SEQUENCES = {'NM': (5, 6), 'BG': (1, 2), 'CL': (1, 2)}
FRONTAL = (0, 180)
OBLIQUE = (18, 36, 54, 72, 108, 126, 144, 162)
LATERAL = (90,)


def _select(meta, condition, sequences):
    return np.array([m.condition == condition and m.sequence in sequences for m in meta])


def rank1_accuracy(probe_vectors, probe_ids, gallery_vectors, gallery_ids):
    distances = distance_matrix(probe_vectors, gallery_vectors)
    # argmin keeps the first gallery item on ties
    nearest = distances.argmin(axis=1)
    return float(np.mean(gallery_ids[nearest] == probe_ids) * 100.0)


def group_views(per_view):
    """Frontal, oblique, lateral and overall means of per-probe-view accuracies."""
    def mean(views):
        return float(np.mean([per_view[v] for v in views]))
    return mean(FRONTAL), mean(OBLIQUE), mean(LATERAL), mean(settings.CASIA_VIEWS)


def casia_b_eval(features, meta, probe_condition):
    if probe_condition not in PROBE_SEQUENCES:
        raise InvalidConfig(f'probe condition must be one of {sorted(PROBE_SEQUENCES)}')
    features = np.asarray(features, dtype=np.float64)
    meta = list(meta)
    if len(features) != len(meta):
        raise InvalidConfig(f'{len(features)} feature vectors for {len(meta)} meta entries')
    views = np.array([m.view for m in meta])
    person_ids = np.array([m.person_id for m in meta])
    gallery = _select(meta, 'NM', GALLERY_SEQUENCES)
    probes = _select(meta, probe_condition, PROBE_SEQUENCES[probe_condition])

    missing = [f'gallery view {v}' for v in settings.CASIA_VIEWS if not np.any(gallery & (views == v))]
    missing += [f'{probe_condition} probe view {v}' for v in settings.CASIA_VIEWS
                if not np.any(probes & (views == v))]
    if missing:
        raise MissingView(f'no sequences for {", ".join(missing)}', views=missing)

    count = len(settings.CASIA_VIEWS)
    matrix = np.full((count, count), np.nan)
    for i, probe_view in enumerate(settings.CASIA_VIEWS):
        probe_mask = probes & (views == probe_view)
        for j, gallery_view in enumerate(settings.CASIA_VIEWS):
            if i == j:
                continue
            gallery_mask = gallery & (views == gallery_view)
            matrix[i, j] = rank1_accuracy(features[probe_mask], person_ids[probe_mask],
                                          features[gallery_mask], person_ids[gallery_mask])

    per_view = {view: float(np.nanmean(matrix[i])) for i, view in enumerate(settings.CASIA_VIEWS)}
    frontal, oblique, lateral, mean = group_views(per_view)
    return CasiaReport(probe_condition, tuple(settings.CASIA_VIEWS), matrix, per_view,
                       frontal, oblique, lateral, mean)
