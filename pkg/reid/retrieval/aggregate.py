"""Turning per-frame features from an external extractor into one tracklet vector."""

import numpy as np
import pandas as pd

from partialgait.exceptions import EmptyInput, InvalidConfig

MODES = ('frame-mean', 'chunk-mean')


def aggregate_external_features(frame_vectors, mode='frame-mean', chunk_size=None):
    frames = np.asarray(frame_vectors, dtype=np.float64)
    if frames.size == 0 or frames.ndim != 2:
        raise EmptyInput('no frame features to aggregate')
    if mode == 'frame-mean':
        return frames.mean(axis=0)
    if mode != 'chunk-mean':
        raise InvalidConfig(f'aggregation mode must be one of {MODES}, got {mode!r}')
    if not chunk_size or chunk_size < 1:
        raise InvalidConfig('chunk-mean needs a positive chunk_size')
    complete = len(frames) // chunk_size
    if complete == 0:
        # a short tracklet is its own chunk
        return frames.mean(axis=0)
    chunks = frames[:complete * chunk_size].reshape(complete, chunk_size, -1)
    return chunks.mean(axis=1).mean(axis=0)


def read_frame_features(path):
    """
    Frame features table: one row per frame with ``tracklet_id`` and
    ``frame`` columns followed by the feature columns.
    """
    table = pd.read_csv(path)
    missing = {'tracklet_id', 'frame'} - set(table.columns)
    if missing:
        raise InvalidConfig(f'feature table lacks columns {sorted(missing)}')
    table = table.sort_values(['tracklet_id', 'frame'], kind='stable')
    feature_columns = [c for c in table.columns if c not in ('tracklet_id', 'frame')]
    return {
        str(tracklet_id): group[feature_columns].to_numpy(dtype=np.float64)
        for tracklet_id, group in table.groupby('tracklet_id', sort=True)
    }
