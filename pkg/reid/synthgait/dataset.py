import json
import logging
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from gaitdata.codecs import write_label_map
from gaitdata.files import atomic_write
from gaitdata.models import TrackletRecord
from gaitdata.serializers import write_manifest
from partialgait.exceptions import InvalidConfig

from .generator import gen_identity, render_sequence
from .models import VIEW_ANGLES, CameraSpec

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.jsonl'
IDENTITIES_NAME = 'identities.json'
DEFAULT_SPLITS = (0.5, 0.25, 0.25)


def split_counts(n, fractions):
    if len(fractions) != 3 or min(fractions) < 0 or not np.isclose(sum(fractions), 1.0):
        raise InvalidConfig(
            f'split fractions must be three non-negative values summing to 1, got {fractions}')
    train = min(max(int(round(n * fractions[0])), 1), n - 1)
    val = min(int(round(n * fractions[1])), n - train)
    return train, val, n - train - val


def assign_splits(person_ids, fractions, seed):
    """Identity-disjoint split assignment, person_id -> split name."""
    order = np.random.default_rng([seed, 1]).permutation(len(person_ids))
    train, val, _ = split_counts(len(person_ids), fractions)
    names = ['train'] * train + ['val'] * val
    names += ['test'] * (len(person_ids) - len(names))
    return {person_ids[i]: name for i, name in zip(order, names)}


def _render_identity(out_dir, index, person_id, split, cameras, tracklets_per_camera, frames, seed):
    params = gen_identity([seed, index])
    rng = np.random.default_rng([seed, index, 2])
    records = []
    for c, camera in enumerate(cameras):
        camera_id = f'cam{c}'
        for k in range(tracklets_per_camera):
            tracklet_id = f'{person_id}-{camera_id}-{k:02d}'
            start = int(rng.integers(params.period_frames))
            shot = camera.with_seed(int(rng.integers(2 ** 31)))
            paths = []
            for t, label_map in enumerate(render_sequence(params, shot, frames, start=start)):
                relative = Path('labels', person_id, camera_id, tracklet_id, f'{t:03d}.png')
                write_label_map(out_dir / relative, label_map)
                paths.append(relative.as_posix())
            records.append(TrackletRecord(tracklet_id, person_id, camera_id, split, paths,
                                          view=VIEW_ANGLES[camera.view]))
    return params, records


def gen_dataset(out_dir, n_identities, cameras=None, tracklets_per_camera=1, frames=30,
                seed=0, split_fractions=DEFAULT_SPLITS, n_jobs=1):
    """
    Render a labelled dataset under ``out_dir``.

    Files: ``labels/<person>/<camera>/<tracklet>/<t>.png``, one JSON line per
    tracklet in ``manifest.jsonl`` and the identity parameters in
    ``identities.json``. Output is byte-identical for equal arguments.
    """
    if n_identities < 2:
        raise InvalidConfig('a dataset needs at least two identities')
    if tracklets_per_camera < 1:
        raise InvalidConfig('tracklets_per_camera must be positive')
    cameras = [c if isinstance(c, CameraSpec) else CameraSpec.from_dict(c)
               for c in (cameras or [CameraSpec(), CameraSpec()])]
    out_dir = Path(out_dir)
    person_ids = [f'p{i:03d}' for i in range(n_identities)]
    splits = assign_splits(person_ids, split_fractions, seed)

    results = Parallel(n_jobs=n_jobs)(
        delayed(_render_identity)(out_dir, i, pid, splits[pid], cameras,
                                  tracklets_per_camera, frames, seed)
        for i, pid in enumerate(person_ids)
    )
    records = [r for _, identity_records in results for r in identity_records]
    write_manifest(out_dir / MANIFEST_NAME, records)
    identities = {pid: params.to_dict() for pid, (params, _) in zip(person_ids, results)}
    atomic_write(out_dir / IDENTITIES_NAME,
                 json.dumps(identities, indent=2, sort_keys=True).encode('utf-8'))
    logger.info('synthetic dataset written', extra={
        'path': str(out_dir), 'identities': n_identities, 'tracklets': len(records)})
    return records
