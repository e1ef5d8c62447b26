import math
from dataclasses import dataclass, field

import numpy as np

from partialgait import settings
from partialgait.exceptions import DimensionMismatch, InvalidConfig

CONDITIONS = tuple(settings.CASIA_CONDITIONS)


@dataclass(frozen=True, eq=False)
class GalleryEntry:
    tracklet_id: str
    person_id: str
    camera_id: str
    vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'vector', np.asarray(self.vector, dtype=np.float64).reshape(-1))


@dataclass(frozen=True, eq=False)
class GallerySet:
    """Every entry is a query against the entries of the other cameras."""

    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        dims = {e.vector.size for e in entries}
        if len(dims) > 1:
            raise DimensionMismatch(f'gallery vectors have differing dims {sorted(dims)}')
        if not all(np.all(np.isfinite(e.vector)) for e in entries):
            raise InvalidConfig('gallery vectors must be finite')
        object.__setattr__(self, 'entries', entries)

    def __len__(self):
        return len(self.entries)

    @property
    def dim(self):
        return self.entries[0].vector.size if self.entries else 0

    @property
    def vectors(self):
        return np.stack([e.vector for e in self.entries])

    @property
    def person_ids(self):
        return np.array([e.person_id for e in self.entries])

    @property
    def camera_ids(self):
        return np.array([e.camera_id for e in self.entries])


@dataclass(frozen=True)
class CasiaMeta:
    person_id: str
    view: int
    condition: str
    sequence: int

    def __post_init__(self):
        if self.view not in settings.CASIA_VIEWS:
            raise InvalidConfig(f'view {self.view} is not a CASIA-B view')
        if self.condition not in CONDITIONS:
            raise InvalidConfig(f'condition must be one of {CONDITIONS}, got {self.condition!r}')
        if not 1 <= self.sequence <= settings.CASIA_CONDITIONS[self.condition]:
            raise InvalidConfig(f'{self.condition} has no sequence {self.sequence}')


@dataclass
class MetricsReport:
    mAP: float
    ranks: dict
    per_query_ap: list = field(default_factory=list)
    excluded: int = 0
    valid: int = 0

    def to_dict(self, per_query=False):
        data = {'mAP': self.mAP, 'valid_queries': self.valid, 'excluded_queries': self.excluded}
        data.update({f'rank-{k}': value for k, value in sorted(self.ranks.items())})
        if per_query:
            data['per_query_ap'] = [{'tracklet_id': tid, 'ap': ap} for tid, ap in self.per_query_ap]
        return data


@dataclass
class CasiaReport:
    condition: str
    views: tuple
    matrix: np.ndarray
    per_view: dict
    frontal: float
    oblique: float
    lateral: float
    mean: float

    def to_dict(self):
        return {
            'condition': self.condition,
            'views': list(self.views),
            'matrix': [[None if math.isnan(v) else float(v) for v in row] for row in self.matrix],
            'per_view': {str(view): acc for view, acc in self.per_view.items()},
            'frontal': self.frontal,
            'oblique': self.oblique,
            'lateral': self.lateral,
            'mean': self.mean,
        }
