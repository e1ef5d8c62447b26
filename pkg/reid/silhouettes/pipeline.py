"""
Label maps to aligned 64x44 gait silhouettes.

Alignment crops the rows holding the person, rescales them to height 64
and cuts a 44 column window centred on the foreground centroid. The frame is always measured on the full-body
silhouette so partial silhouettes of the same frame share it.
"""

import logging
import math

import numpy as np
from joblib import Parallel, delayed
from scipy import ndimage

from partialgait import settings
from partialgait.exceptions import (
    AllFramesDropped, DimensionMismatch, EmptySilhouette, InvalidConfig,
)

from .models import (
    FULL_BODY, AlignmentFrame, DroppedFrame, InstanceMaskSet, InstanceSource,
    PipelineConfig, Silhouette, SilhouetteSource, TrackletSilhouettes,
)

logger = logging.getLogger(__name__)

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def compose_silhouette(label_map, parts, instances=None):
    """Binary grid of the pixels whose label is in ``parts``, gated by the largest instance."""
    instances = instances or InstanceMaskSet()
    instances.check_shape(label_map.shape)
    grid = np.isin(label_map.labels, parts.as_array())
    largest = instances.largest()
    if largest is not None:
        grid &= largest
    return grid.astype(np.uint8)


def connected_component_instances(label_map):
    """One instance per 4-connected component of the full-body foreground."""
    labelled, count = ndimage.label(label_map.labels > 0, structure=FOUR_CONNECTED)
    masks = tuple(labelled == index for index in range(1, count + 1))
    return InstanceMaskSet(masks, InstanceSource.CONNECTED_COMPONENTS)


def _rescale(cropped, scale):
    # pixel-centre convention, edges clamped
    height, width = cropped.shape
    out_width = max(1, int(math.floor(width * scale + 0.5)))
    rows = (np.arange(settings.SILHOUETTE_HEIGHT) + 0.5) / scale - 0.5
    cols = (np.arange(out_width) + 0.5) / scale - 0.5
    grid_rows, grid_cols = np.meshgrid(rows, cols, indexing='ij')
    values = ndimage.map_coordinates(
        cropped.astype(np.float64), [grid_rows, grid_cols], order=1, mode='nearest')
    return (values >= 0.5).astype(np.uint8)


def compute_alignment(full_body):
    full_body = np.asarray(full_body) > 0
    rows = np.flatnonzero(full_body.any(axis=1))
    if rows.size == 0:
        raise EmptySilhouette('cannot align a grid without foreground')
    row_top, row_bottom = int(rows[0]), int(rows[-1])
    scale = settings.SILHOUETTE_HEIGHT / (row_bottom - row_top + 1)
    cropped = full_body[row_top:row_bottom + 1]
    rescaled = _rescale(cropped, scale)
    _, cols = np.nonzero(rescaled)
    if cols.size:
        center_x = float(cols.mean())
    else:
        # thin shapes can vanish when downscaled; fall back to the source centroid
        _, source_cols = np.nonzero(cropped)
        center_x = float((source_cols.mean() + 0.5) * scale - 0.5)
    return AlignmentFrame(row_top, row_bottom, scale, center_x, tuple(full_body.shape))


def apply_alignment(target, frame):
    target = np.asarray(target) > 0
    if frame.source_shape is not None and target.shape != tuple(frame.source_shape):
        raise DimensionMismatch(
            f'target shape {target.shape} does not match frame source {frame.source_shape}')
    rescaled = _rescale(target[frame.row_top:frame.row_bottom + 1], frame.scale)
    width = settings.SILHOUETTE_WIDTH
    start = int(math.floor(frame.center_x + 0.5)) - width // 2
    window = np.zeros((settings.SILHOUETTE_HEIGHT, width), dtype=np.uint8)
    lo, hi = max(start, 0), min(start + width, rescaled.shape[1])
    if hi > lo:
        window[:, lo - start:hi - start] = rescaled[:, lo:hi]
    if not window.any():
        raise EmptySilhouette('aligned silhouette has no foreground')
    return Silhouette(window)


def subtract_torso(silhouette_img, torso_mask):
    silhouette_img = np.asarray(silhouette_img)
    torso_mask = np.asarray(torso_mask)
    if silhouette_img.shape != torso_mask.shape:
        raise DimensionMismatch(
            f'silhouette {silhouette_img.shape} and torso mask {torso_mask.shape} differ')
    return ((silhouette_img > 0) & ~(torso_mask > 0)).astype(np.uint8)


def _frame_grids(label_map, instances, parts, config):
    if config.connected_components and not instances.masks:
        instances = connected_component_instances(label_map)
    if config.source is SilhouetteSource.INSTANCE:
        instance = instances.largest()
        if instance is None:
            instance = label_map.labels > 0
        grid = instance.astype(np.uint8)
        return grid, grid
    full_body = compose_silhouette(label_map, FULL_BODY, instances)
    if parts == FULL_BODY:
        return full_body, full_body
    return full_body, compose_silhouette(label_map, parts, instances)


def _process_frame(index, label_map, instances, parts, config):
    instances = instances or InstanceMaskSet()
    full_body, target = _frame_grids(label_map, instances, parts, config)
    if not full_body.any():
        return DroppedFrame(index, 'empty-full-body')
    frame = compute_alignment(full_body)
    try:
        silhouette = apply_alignment(target, frame)
    except EmptySilhouette:
        return DroppedFrame(index, 'below-min-foreground')
    if silhouette.foreground_count < config.min_foreground:
        return DroppedFrame(index, 'below-min-foreground')
    return silhouette


def process_tracklet(frames, parts, config=None):
    """
    Turn a tracklet's label maps into silhouettes.

    ``frames`` is a list of ``(LabelMap, InstanceMaskSet or None)`` pairs.
    Degenerate frames are dropped and listed in the returned report; the
    surviving silhouettes keep the input order.
    """
    config = config or PipelineConfig()
    if not frames:
        raise InvalidConfig('process_tracklet needs at least one frame')
    results = Parallel(n_jobs=config.n_jobs)(
        delayed(_process_frame)(index, label_map, instances, parts, config)
        for index, (label_map, instances) in enumerate(frames)
    )
    output = TrackletSilhouettes(silhouettes=[])
    for index, result in enumerate(results):
        if isinstance(result, DroppedFrame):
            output.dropped.append(result)
        else:
            output.silhouettes.append(result)
            output.kept.append(index)
    if output.dropped:
        logger.info('dropped frames', extra={
            'dropped': len(output.dropped), 'total': len(frames)})
    if not output.silhouettes:
        raise AllFramesDropped(f'all {len(frames)} frames were dropped',
                               reasons=sorted({d.reason for d in output.dropped}))
    return output
