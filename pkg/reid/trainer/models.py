import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from gaitdata.files import atomic_write
from partialgait import settings
from partialgait.exceptions import InvalidConfig

AVERAGING = ('all-triplets', 'nonzero-only')
HISTORY_COLUMNS = ['iteration', 'loss', 'nonzero_fraction', 'val_mAP']


@dataclass(frozen=True)
class BatchSpec:
    p: int = 8
    k: int = 4
    c: int = 30
    flip_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.p < 2:
            raise InvalidConfig('p must be at least 2: a batch needs negatives')
        if self.k < 2:
            raise InvalidConfig('k must be at least 2: a batch needs positives')
        if self.c < 1:
            raise InvalidConfig('c must be at least 1')
        if not 0.0 <= self.flip_prob <= 1.0:
            raise InvalidConfig('flip_prob must lie in [0, 1]')

    @property
    def size(self):
        return self.p * self.k


@dataclass(frozen=True)
class LossConfig:
    margin: float = settings.TRIPLET_MARGIN
    averaging: str = 'all-triplets'

    def __post_init__(self):
        if self.margin < 0:
            raise InvalidConfig('margin must be non-negative')
        if self.averaging not in AVERAGING:
            raise InvalidConfig(f'averaging must be one of {AVERAGING}, got {self.averaging!r}')


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 200
    learning_rate: float = settings.LEARNING_RATE
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    checkpoint_every: int = settings.CHECKPOINT_EVERY
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'betas', tuple(self.betas))
        if self.learning_rate <= 0:
            raise InvalidConfig('learning_rate must be positive')
        if self.iterations < 1 or self.checkpoint_every < 1:
            raise InvalidConfig('iterations and checkpoint_every must be positive')
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise InvalidConfig(f'betas must be two values in [0, 1), got {self.betas}')


@dataclass(frozen=True, eq=False)
class LabelledTracklet:
    """A tracklet's silhouettes (frames x 64 x 44, uint8) with its labels."""

    tracklet_id: str
    person_id: str
    camera_id: str
    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.uint8)
        expected = (settings.SILHOUETTE_HEIGHT, settings.SILHOUETTE_WIDTH)
        if frames.ndim != 3 or frames.shape[1:] != expected or len(frames) == 0:
            raise InvalidConfig(f'tracklet {self.tracklet_id} has frames of shape {frames.shape}')
        object.__setattr__(self, 'frames', frames)


class TrackletIndex:
    """Training tracklets grouped by identity."""

    def __init__(self, tracklets=()):
        self.tracklets = defaultdict(list)
        for tracklet in tracklets:
            self.add(tracklet)

    def add(self, tracklet):
        self.tracklets[tracklet.person_id].append(tracklet.frames)

    @property
    def identities(self):
        return sorted(self.tracklets)

    def __len__(self):
        return len(self.tracklets)


@dataclass
class Batch:
    samples: list
    labels: list
    flipped: list

    @property
    def frame_count(self):
        return sum(len(s) for s in self.samples)


@dataclass
class LossResult:
    loss: float
    strip_losses: np.ndarray
    nonzero: int
    triplets: int
    grad: np.ndarray

    @property
    def nonzero_fraction(self):
        total = self.triplets * len(self.strip_losses)
        return self.nonzero / total if total else 0.0


@dataclass
class TrainResult:
    model: object
    best_map: float = math.nan
    best_iteration: int = None
    history: list = field(default_factory=list)

    def history_frame(self):
        return pd.DataFrame(self.history, columns=HISTORY_COLUMNS)

    def write_history(self, path):
        csv = self.history_frame().to_csv(index=False, float_format='%.10g')
        atomic_write(path, csv.encode('utf-8'))
