"""8-bit PNG / PGM readers and writers for label maps, masks and silhouettes."""

from io import BytesIO
from pathlib import Path

import numpy as np
from PIL import Image

from partialgait import settings
from partialgait.exceptions import DimensionMismatch, InvalidLabelMap
from silhouettes.models import LabelMap

from .files import atomic_write, resolve

FORMATS = {'.png': 'PNG', '.pgm': 'PPM'}


def _read_gray(path):
    with Image.open(path) as image:
        if image.mode not in ('L', '1', 'P'):
            raise InvalidLabelMap(f'{path}: expected a single-channel image, got mode {image.mode}')
        if image.mode == 'P':
            return np.array(image, dtype=np.uint8)
        return np.array(image.convert('L'), dtype=np.uint8)


def _write_gray(path, array):
    path = Path(path)
    buffer = BytesIO()
    Image.fromarray(np.ascontiguousarray(array, dtype=np.uint8)).save(
        buffer, format=FORMATS.get(path.suffix.lower(), 'PNG'))
    atomic_write(path, buffer.getvalue())


def read_label_map(path):
    labels = _read_gray(path)
    if labels.max(initial=0) > 6:
        raise InvalidLabelMap(f'{path}: label values must lie in 0..6')
    return LabelMap(labels)


def write_label_map(path, label_map):
    _write_gray(path, label_map.labels)


def read_mask(path, shape=None):
    mask = _read_gray(path) > 0
    if shape is not None and mask.shape != tuple(shape):
        raise DimensionMismatch(f'{path}: mask shape {mask.shape} differs from {tuple(shape)}')
    return mask


def write_mask(path, mask):
    _write_gray(path, (np.asarray(mask) > 0).astype(np.uint8) * 255)


def write_silhouette(path, silhouette):
    pixels = getattr(silhouette, 'pixels', silhouette)
    write_mask(path, pixels)


def read_silhouette(path):
    return read_mask(path).astype(np.uint8)


def read_tracklet(root, record):
    """A record's silhouettes as one frames x 64 x 44 uint8 stack."""
    frames = [read_silhouette(resolve(root, frame)) for frame in record.frames]
    expected = (settings.SILHOUETTE_HEIGHT, settings.SILHOUETTE_WIDTH)
    for path, pixels in zip(record.frames, frames):
        if pixels.shape != expected:
            raise DimensionMismatch(
                f'{path}: silhouettes must be {expected}, got {pixels.shape}',
                tracklet_id=record.tracklet_id)
    return np.stack(frames)
