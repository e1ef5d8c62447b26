"""
Manifest builder for the CASIA-B silhouette layout ``ID/COND-SEQ/VIEW/frames``.

A complete identity has 11 views x (6 NM + 2 BG + 2 CL) = 110 sequences.
The first 74 identities are the training split, the rest are test.
"""

import logging
from pathlib import Path

from partialgait import settings
from partialgait.exceptions import LayoutError

from .models import TrackletRecord

logger = logging.getLogger(__name__)

FRAME_SUFFIXES = ('.png', '.pgm')


def expected_sequences():
    for condition, count in settings.CASIA_CONDITIONS.items():
        for sequence in range(1, count + 1):
            yield condition, sequence


def build_casia_manifest(root, allow_incomplete=False):
    root = Path(root)
    if not root.is_dir():
        raise LayoutError(f'{root} is not a directory', paths=[str(root)])
    identities = sorted(p for p in root.iterdir() if p.is_dir() and p.name.isdigit())
    if not identities:
        raise LayoutError(f'no identity directories under {root}', paths=[str(root)])

    records = []
    problems = []
    for identity_dir in identities:
        person_id = identity_dir.name
        split = 'train' if int(person_id) <= settings.CASIA_TRAIN_IDENTITIES else 'test'
        for condition, sequence in expected_sequences():
            sequence_dir = identity_dir / f'{condition.lower()}-{sequence:02d}'
            if not sequence_dir.is_dir():
                problems.append(str(sequence_dir.relative_to(root)))
                continue
            for view in settings.CASIA_VIEWS:
                view_dir = sequence_dir / f'{view:03d}'
                frames = sorted(
                    p for p in view_dir.glob('*') if p.suffix.lower() in FRAME_SUFFIXES
                ) if view_dir.is_dir() else []
                if not frames:
                    problems.append(str(view_dir.relative_to(root)))
                    continue
                records.append(TrackletRecord(
                    tracklet_id=f'{person_id}-{condition.lower()}-{sequence:02d}-{view:03d}',
                    person_id=person_id,
                    camera_id=f'{view:03d}',
                    split=split,
                    frames=tuple(str(p.relative_to(root).as_posix()) for p in frames),
                    view=view,
                    condition=condition,
                    sequence=sequence,
                ))

    if problems:
        if not allow_incomplete:
            raise LayoutError(f'{len(problems)} missing or empty sequence directories',
                              paths=problems)
        logger.warning('skipping incomplete sequences', extra={'missing': len(problems)})
    return records
