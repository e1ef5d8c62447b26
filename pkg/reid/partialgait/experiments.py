"""
Full-body versus partial silhouettes on a synthetic frontal-view dataset.

One dataset is rendered and prepared twice, once per part subset. For every
seed both variants are trained with identical settings, the test split is
embedded and scored cross-camera, and the two embeddings are also fused.
"""

import logging
from dataclasses import replace
from pathlib import Path

import pandas as pd

from gaitdata.codecs import read_tracklet
from gaitdata.files import atomic_write
from gaitdata.serializers import parse_manifest
from gaitset.network import embed_many
from retrieval.fusion import fuse
from retrieval.metrics import cross_camera_eval
from retrieval.models import GalleryEntry, GallerySet
from silhouettes.models import FULL_BODY, PARTIAL, PipelineConfig
from synthgait.dataset import gen_dataset
from synthgait.models import CameraSpec

from .workflows import MANIFEST_NAME, filter_splits, prepare_silhouettes, train_model

logger = logging.getLogger(__name__)

VARIANTS = {'full': FULL_BODY, 'partial': PARTIAL}
SPLITS = (0.5, 0.125, 0.375)


def _test_gallery(root, records, model, n_jobs):
    embeddings = embed_many(model, [read_tracklet(root, r) for r in records], n_jobs=n_jobs)
    return {r.tracklet_id: e.flat for r, e in zip(records, embeddings)}


def _score(records, vectors):
    gallery = GallerySet([
        GalleryEntry(r.tracklet_id, r.person_id, r.camera_id, vectors[r.tracklet_id])
        for r in records
    ])
    report = cross_camera_eval(gallery)
    return {'mAP': report.mAP, 'rank-1': report.ranks[1], 'rank-5': report.ranks[5]}


def run_experiment(out_dir, model_config, spec, loss_config, train_config, seeds=(0, 1, 2, 3, 4),
                   identities=16, tracklets_per_camera=2, frames=30, data_seed=0, n_jobs=1):
    """Returns one row per (variant, seed) with mAP, rank-1 and rank-5."""
    out_dir = Path(out_dir)
    synth_dir = out_dir / 'synth'
    gen_dataset(synth_dir, identities, [CameraSpec(seed=1), CameraSpec(seed=2)],
                tracklets_per_camera, frames, data_seed, SPLITS, n_jobs=n_jobs)
    config = PipelineConfig(n_jobs=n_jobs)
    for name, parts in VARIANTS.items():
        prepare_silhouettes(synth_dir, out_dir / name, parts, config)

    rows = []
    for seed in seeds:
        vectors = {}
        test_records = {}
        for name in VARIANTS:
            root = out_dir / name
            result = train_model(
                root, replace(model_config, seed=seed), replace(spec, seed=seed), loss_config,
                replace(train_config, seed=seed),
                history=out_dir / 'history' / f'{name}-seed{seed}.csv', n_jobs=n_jobs)
            records = filter_splits(parse_manifest(root / MANIFEST_NAME), ('test',))
            test_records[name] = records
            vectors[name] = _test_gallery(root, records, result.model, n_jobs)
            rows.append({'variant': name, 'seed': seed, **_score(records, vectors[name])})
            logger.info('variant scored', extra=rows[-1])

        # fusion needs tracklets both variants kept
        shared = [r for r in test_records['full'] if r.tracklet_id in vectors['partial']]
        fused = {r.tracklet_id: fuse(vectors['full'][r.tracklet_id], vectors['partial'][r.tracklet_id])
                 for r in shared}
        rows.append({'variant': 'fused', 'seed': seed, **_score(shared, fused)})

    table = pd.DataFrame(rows, columns=['variant', 'seed', 'mAP', 'rank-1', 'rank-5'])
    atomic_write(out_dir / 'results.csv', table.to_csv(index=False).encode('utf-8'))
    return table


def summarize(table):
    """Mean and standard deviation per variant."""
    return table.groupby('variant', sort=False)[['mAP', 'rank-1', 'rank-5']].agg(['mean', 'std'])
