from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from partialgait import settings
from partialgait.exceptions import (
    DimensionMismatch, EmptySilhouette, InvalidConfig, InvalidLabelMap,
)


class BodyPart(IntEnum):
    BACKGROUND = 0
    HEAD = 1
    TORSO = 2
    UPPER_ARMS = 3
    LOWER_ARMS = 4
    UPPER_LEGS = 5
    LOWER_LEGS = 6


class InstanceSource(Enum):
    EXTERNAL_FILE = 'external-file'
    CONNECTED_COMPONENTS = 'connected-components'
    NONE = 'none'


class SilhouetteSource(Enum):
    PARSING = 'parsing'
    INSTANCE = 'instance'


@dataclass(frozen=True, eq=False)
class LabelMap:
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.shape[0] < 1 or labels.shape[1] < 1:
            raise InvalidLabelMap(f'label map must be a non-empty 2-D grid, got shape {labels.shape}')
        if labels.size and (labels.min() < 0 or labels.max() > BodyPart.LOWER_LEGS):
            raise InvalidLabelMap(f'label values must lie in 0..6, got max {int(labels.max())}')
        labels = labels.astype(np.uint8)
        labels.setflags(write=False)
        object.__setattr__(self, 'labels', labels)

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    @property
    def shape(self):
        return self.labels.shape


@dataclass(frozen=True, eq=False)
class InstanceMaskSet:
    masks: tuple = ()
    source: InstanceSource = InstanceSource.NONE

    def __post_init__(self):
        masks = tuple(np.asarray(m).astype(bool) for m in self.masks)
        object.__setattr__(self, 'masks', masks)

    def check_shape(self, shape):
        for index, mask in enumerate(self.masks):
            if mask.shape != tuple(shape):
                raise DimensionMismatch(
                    f'instance mask {index} has shape {mask.shape}, expected {tuple(shape)}')

    def largest(self):
        """Largest mask by pixel count; ties go to the lowest index."""
        if not self.masks:
            return None
        areas = [int(m.sum()) for m in self.masks]
        return self.masks[int(np.argmax(areas))]


@dataclass(frozen=True)
class PartSubset:
    included: frozenset

    def __post_init__(self):
        included = frozenset(int(p) for p in self.included)
        if not included:
            raise InvalidConfig('a part subset cannot be empty')
        if not included <= {int(p) for p in BodyPart if p != BodyPart.BACKGROUND}:
            raise InvalidConfig(f'part subset must use labels 1..6, got {sorted(included)}')
        object.__setattr__(self, 'included', included)

    @classmethod
    def parse(cls, text):
        """``full``, ``partial`` or a comma separated list of label ids."""
        text = str(text).strip().lower()
        if text == 'full':
            return FULL_BODY
        if text == 'partial':
            return PARTIAL
        try:
            return cls(frozenset(int(part) for part in text.split(',') if part.strip()))
        except ValueError as exc:
            raise InvalidConfig(f'cannot parse part subset {text!r}') from exc

    def as_array(self):
        return np.array(sorted(self.included), dtype=np.uint8)


FULL_BODY = PartSubset(frozenset(range(1, 7)))
PARTIAL = PartSubset(frozenset({1, 3, 4, 5, 6}))


@dataclass(frozen=True, eq=False)
class Silhouette:
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        expected = (settings.SILHOUETTE_HEIGHT, settings.SILHOUETTE_WIDTH)
        if pixels.shape != expected:
            raise DimensionMismatch(f'silhouette must be {expected}, got {pixels.shape}')
        pixels = (pixels > 0).astype(np.uint8)
        if not pixels.any():
            raise EmptySilhouette('a silhouette needs at least one foreground pixel')
        pixels.setflags(write=False)
        object.__setattr__(self, 'pixels', pixels)

    @property
    def foreground_count(self):
        return int(self.pixels.sum())


@dataclass(frozen=True)
class AlignmentFrame:
    row_top: int
    row_bottom: int
    scale: float
    center_x: float
    source_shape: tuple = None

    def __post_init__(self):
        if self.row_top > self.row_bottom or self.scale <= 0:
            raise InvalidConfig(f'invalid alignment frame {self}')


@dataclass(frozen=True)
class PipelineConfig:
    min_foreground: int = settings.MIN_FOREGROUND
    connected_components: bool = False
    source: SilhouetteSource = SilhouetteSource.PARSING
    n_jobs: int = 1


@dataclass(frozen=True)
class DroppedFrame:
    index: int
    reason: str


@dataclass
class TrackletSilhouettes:
    silhouettes: list
    kept: list = field(default_factory=list)
    dropped: list = field(default_factory=list)

    def stack(self):
        return np.stack([s.pixels for s in self.silhouettes])
