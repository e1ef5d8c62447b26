"""
Dataset-level steps behind the command line.

Each function reads a manifest and the files it points to, runs one module
over every tracklet and writes its outputs next to a new manifest. Inputs
are never modified.
"""

import json
import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np

from gaitdata.codecs import (
    read_label_map, read_mask, read_silhouette, read_tracklet, write_silhouette,
)
from gaitdata.files import atomic_write, resolve
from gaitdata.models import EmbeddingEntry
from gaitdata.serializers import parse_manifest, write_manifest
from gaitdata.store import read_embeddings, write_embeddings
from gaitset.checkpoint import load_checkpoint, save_checkpoint
from gaitset.network import embed_many, init_model
from retrieval.aggregate import aggregate_external_features, read_frame_features
from retrieval.casia import casia_b_eval
from retrieval.fusion import fuse_stores
from retrieval.metrics import cross_camera_eval
from retrieval.models import CasiaMeta, GalleryEntry, GallerySet
from silhouettes.models import InstanceMaskSet, InstanceSource
from silhouettes.pipeline import process_tracklet, subtract_torso
from trainer.loop import train
from trainer.models import LabelledTracklet, TrackletIndex
from trainer.sampler import split_identities

from . import settings
from .exceptions import AllFramesDropped, DimensionMismatch, InvalidConfig

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.jsonl'
REPORT_NAME = 'prep_report.json'
MASK_SUFFIXES = ('.png', '.pgm')


def manifest_path(root, manifest=None):
    return Path(manifest) if manifest else Path(root) / MANIFEST_NAME


def filter_splits(records, splits):
    if not splits:
        return list(records)
    return [r for r in records if r.split in splits]


def external_instances(instances_dir, frame, shape):
    """Masks stored as ``<instances_dir>/<frame path without suffix>/*.png``."""
    if instances_dir is None:
        return None
    mask_dir = Path(instances_dir) / Path(frame).with_suffix('')
    if not mask_dir.is_dir():
        return None
    paths = sorted(p for p in mask_dir.iterdir() if p.suffix.lower() in MASK_SUFFIXES)
    return InstanceMaskSet([read_mask(p, shape) for p in paths], InstanceSource.EXTERNAL_FILE)


def _write_prepared(out_dir, records, report):
    out_dir = Path(out_dir)
    if not records:
        raise AllFramesDropped('no tracklet produced a silhouette', skipped=report['skipped'])
    write_manifest(out_dir / MANIFEST_NAME, records)
    atomic_write(out_dir / REPORT_NAME, json.dumps(report, indent=2, sort_keys=True).encode('utf-8'))
    logger.info('silhouettes written', extra={
        'path': str(out_dir), 'tracklets': len(records), 'skipped': len(report['skipped'])})
    return report


def prepare_silhouettes(root, out_dir, parts, config, manifest=None, instances_dir=None):
    root, out_dir = Path(root), Path(out_dir)
    out_records = []
    report = {'parts': sorted(parts.included), 'source': config.source.value,
              'skipped': [], 'dropped': {}}
    for record in parse_manifest(manifest_path(root, manifest)):
        frames = []
        for frame in record.frames:
            label_map = read_label_map(resolve(root, frame))
            frames.append((label_map, external_instances(instances_dir, frame, label_map.shape)))
        try:
            result = process_tracklet(frames, parts, config)
        except AllFramesDropped as exc:
            logger.warning('tracklet skipped', extra={'tracklet_id': record.tracklet_id,
                                                      'reasons': exc.detail.get('reasons')})
            report['skipped'].append(record.tracklet_id)
            continue
        paths = []
        for index, silhouette in zip(result.kept, result.silhouettes):
            relative = Path('silhouettes', record.tracklet_id, f'{index:03d}.pgm')
            write_silhouette(out_dir / relative, silhouette)
            paths.append(relative.as_posix())
        if result.dropped:
            report['dropped'][record.tracklet_id] = [asdict(d) for d in result.dropped]
        out_records.append(record.with_frames(paths))
    report['tracklets'] = len(out_records)
    return _write_prepared(out_dir, out_records, report)


def subtract_torso_dataset(root, torso_dir, out_dir, min_foreground, manifest=None):
    """Remove torso masks from silhouettes that already exist on disk."""
    root, out_dir = Path(root), Path(out_dir)
    expected = (settings.SILHOUETTE_HEIGHT, settings.SILHOUETTE_WIDTH)
    out_records = []
    report = {'torso_dir': str(torso_dir), 'skipped': [], 'dropped': {}}
    for record in parse_manifest(manifest_path(root, manifest)):
        paths, dropped = [], []
        for index, frame in enumerate(record.frames):
            pixels = read_silhouette(resolve(root, frame))
            if pixels.shape != expected:
                raise DimensionMismatch(
                    f'{frame}: silhouettes must be {expected}, got {pixels.shape}',
                    tracklet_id=record.tracklet_id)
            torso = read_mask(resolve(torso_dir, frame), pixels.shape)
            result = subtract_torso(pixels, torso)
            if int(result.sum()) < min_foreground:
                dropped.append({'index': index, 'reason': 'below-min-foreground'})
                continue
            relative = Path('silhouettes', record.tracklet_id, f'{index:03d}.pgm')
            write_silhouette(out_dir / relative, result)
            paths.append(relative.as_posix())
        if dropped:
            report['dropped'][record.tracklet_id] = dropped
        if not paths:
            report['skipped'].append(record.tracklet_id)
            continue
        out_records.append(record.with_frames(paths))
    report['tracklets'] = len(out_records)
    return _write_prepared(out_dir, out_records, report)


def load_tracklets(root, records):
    return [
        LabelledTracklet(r.tracklet_id, r.person_id, r.camera_id, read_tracklet(root, r))
        for r in records
    ]


def training_sets(records, train_fraction, seed):
    """
    Training and validation records.

    A ``val`` split in the manifest is used as is; otherwise the training
    identities are split ``train_fraction`` / rest.
    """
    train_records = [r for r in records if r.split == 'train']
    validation = [r for r in records if r.split == 'val']
    if not train_records:
        raise InvalidConfig('manifest has no training tracklets')
    if validation or train_fraction is None:
        return train_records, validation
    train_ids, val_ids = split_identities([r.person_id for r in train_records], train_fraction, seed)
    val_ids = set(val_ids)
    return ([r for r in train_records if r.person_id not in val_ids],
            [r for r in train_records if r.person_id in val_ids])


def train_model(root, model_config, spec, loss_config, train_config, checkpoint=None,
                history=None, manifest=None, train_fraction=0.6, n_jobs=1):
    root = Path(root)
    records = parse_manifest(manifest_path(root, manifest))
    train_records, val_records = training_sets(records, train_fraction, train_config.seed)
    index = TrackletIndex(load_tracklets(root, train_records))
    validation = load_tracklets(root, val_records)
    logger.info('training', extra={
        'train_tracklets': len(train_records), 'validation_tracklets': len(val_records),
        'identities': len(index), 'parameters': init_model(model_config).parameter_count()})
    result = train(init_model(model_config), index, spec, loss_config, train_config,
                   validation, n_jobs=n_jobs)
    if checkpoint:
        save_checkpoint(checkpoint, result.model)
    if history:
        result.write_history(history)
    return result


def embed_dataset(root, checkpoint, out, splits=(), manifest=None, n_jobs=1):
    root = Path(root)
    model = load_checkpoint(checkpoint)
    records = filter_splits(parse_manifest(manifest_path(root, manifest)), splits)
    embeddings = embed_many(model, [read_tracklet(root, r) for r in records], n_jobs=n_jobs)
    entries = [EmbeddingEntry(r.tracklet_id, e.flat) for r, e in zip(records, embeddings)]
    write_embeddings(out, entries)
    return entries


def _vectors_for(records, store):
    vectors = {e.tracklet_id: e.vector for e in read_embeddings(store)}
    missing = [r.tracklet_id for r in records if r.tracklet_id not in vectors]
    if missing:
        raise InvalidConfig(f'embedding store lacks {len(missing)} tracklets',
                            tracklet_ids=missing[:10])
    return [vectors[r.tracklet_id] for r in records]


def gallery_set(manifest, store, splits=()):
    records = filter_splits(parse_manifest(manifest), splits)
    return GallerySet([
        GalleryEntry(r.tracklet_id, r.person_id, r.camera_id, v)
        for r, v in zip(records, _vectors_for(records, store))
    ])


def evaluate_store(manifest, store, splits=()):
    gallery = gallery_set(manifest, store, splits)
    return gallery, cross_camera_eval(gallery)


def evaluate_casia(manifest, store, conditions=('NM', 'BG', 'CL'), splits=('test',)):
    records = filter_splits(parse_manifest(manifest), splits)
    incomplete = [r.tracklet_id for r in records
                  if r.view is None or r.condition is None or r.sequence is None]
    if incomplete:
        raise InvalidConfig('records lack view, condition or sequence', tracklet_ids=incomplete[:10])
    meta = [CasiaMeta(r.person_id, r.view, r.condition, r.sequence) for r in records]
    features = np.stack(_vectors_for(records, store))
    return [casia_b_eval(features, meta, condition) for condition in conditions]


def fuse_embedding_stores(first, second, out):
    entries = fuse_stores(read_embeddings(first), read_embeddings(second))
    write_embeddings(out, entries)
    return entries


def aggregate_feature_table(features, out, mode, chunk_size=None):
    entries = [
        EmbeddingEntry(tracklet_id, aggregate_external_features(frames, mode, chunk_size))
        for tracklet_id, frames in read_frame_features(features).items()
    ]
    write_embeddings(out, entries)
    return entries
