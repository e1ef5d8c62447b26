"""JSON-lines manifests: one TrackletRecord per line."""

import json
import logging

from jsonschema import Draft202012Validator

from partialgait.exceptions import DuplicateId, MalformedLine

from .files import atomic_write
from .models import SPLITS, TrackletRecord

logger = logging.getLogger(__name__)

non_empty_string = {'type': 'string', 'minLength': 1}

TRACKLET_SCHEMA = {
    'type': 'object',
    'required': ['tracklet_id', 'person_id', 'camera_id', 'split', 'frames'],
    'properties': {
        'tracklet_id': non_empty_string,
        'person_id': non_empty_string,
        'camera_id': non_empty_string,
        'split': {'enum': list(SPLITS)},
        'frames': {'type': 'array', 'minItems': 1, 'items': non_empty_string},
        'view': {'type': ['integer', 'null']},
        'condition': {'enum': ['NM', 'BG', 'CL', None]},
        'sequence': {'type': ['integer', 'null'], 'minimum': 1},
    },
    'additionalProperties': False,
}

validator = Draft202012Validator(TRACKLET_SCHEMA)


def record_from_dict(data, line=None):
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.path))
    if errors:
        error = errors[0]
        where = '.'.join(str(p) for p in error.path) or 'record'
        raise MalformedLine(f'line {line}: {where}: {error.message}', line=line)
    return TrackletRecord(**data)


def parse_manifest(path):
    records = []
    seen = set()
    with open(path, encoding='utf-8') as handle:
        for line_no, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MalformedLine(f'line {line_no}: {exc.msg}', line=line_no) from exc
            record = record_from_dict(data, line=line_no)
            if record.tracklet_id in seen:
                raise DuplicateId(f'line {line_no}: duplicate tracklet_id {record.tracklet_id!r}',
                                  line=line_no, tracklet_id=record.tracklet_id)
            seen.add(record.tracklet_id)
            records.append(record)
    logger.debug('parsed manifest', extra={'path': str(path), 'records': len(records)})
    return records


def dumps_manifest(records):
    return ''.join(json.dumps(r.to_dict(), sort_keys=True) + '\n' for r in records)


def write_manifest(path, records):
    records = list(records)
    ids = [r.tracklet_id for r in records]
    if len(set(ids)) != len(ids):
        raise DuplicateId('manifest contains duplicate tracklet ids')
    atomic_write(path, dumps_manifest(records).encode('utf-8'))
