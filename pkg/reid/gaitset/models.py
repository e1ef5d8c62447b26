from dataclasses import asdict, dataclass, field

import numpy as np

from partialgait.exceptions import InvalidConfig, NonFiniteEmbedding


@dataclass(frozen=True)
class ModelConfig:
    conv_channels: tuple = (8, 16, 32)
    pyramid_scales: tuple = (1, 2, 4)
    strip_dim: int = 32
    branches: int = 1
    leaky_slope: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'conv_channels', tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, 'pyramid_scales', tuple(int(s) for s in self.pyramid_scales))
        if len(self.conv_channels) != 3 or min(self.conv_channels, default=0) <= 0:
            raise InvalidConfig(f'conv_channels needs three positive widths, got {self.conv_channels}')
        if not self.pyramid_scales or min(self.pyramid_scales) <= 0:
            raise InvalidConfig(f'pyramid_scales must be positive and non-empty, got {self.pyramid_scales}')
        if self.strip_dim <= 0:
            raise InvalidConfig('strip_dim must be positive')
        if self.branches not in (1, 2):
            raise InvalidConfig(f'branches must be 1 or 2, got {self.branches}')

    @classmethod
    def desk(cls, **overrides):
        return cls(**overrides)

    @classmethod
    def large(cls, **overrides):
        values = dict(conv_channels=(32, 64, 128), pyramid_scales=(1, 2, 4, 8, 16),
                      strip_dim=256, branches=2)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        preset = data.pop('preset', 'desk')
        if preset not in ('desk', 'large'):
            raise InvalidConfig(f'unknown model preset {preset!r}')
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InvalidConfig(f'unknown model config keys: {sorted(unknown)}')
        return getattr(cls, preset)(**data)

    def to_dict(self):
        data = asdict(self)
        data['conv_channels'] = list(self.conv_channels)
        data['pyramid_scales'] = list(self.pyramid_scales)
        return data

    @property
    def strips_per_branch(self):
        return sum(self.pyramid_scales)

    @property
    def strip_count(self):
        return self.branches * self.strips_per_branch

    @property
    def flat_dim(self):
        return self.strip_count * self.strip_dim

    def weight_shapes(self):
        """Name -> shape, in initialisation order."""
        c1, c2, c3 = self.conv_channels
        shapes = {}

        def conv(name, out_channels, in_channels, kernel):
            shapes[f'{name}.weight'] = (out_channels, in_channels, kernel, kernel)
            shapes[f'{name}.bias'] = (out_channels,)

        conv('stage1.conv1', c1, 1, 5)
        conv('stage1.conv2', c1, c1, 3)
        conv('stage2.conv1', c2, c1, 3)
        conv('stage2.conv2', c2, c2, 3)
        conv('stage3.conv1', c3, c2, 3)
        conv('stage3.conv2', c3, c3, 3)
        shapes['hpp.main.projection'] = (self.strips_per_branch, c3, self.strip_dim)
        if self.branches == 2:
            conv('global.conv1', c3, c2, 3)
            conv('global.conv2', c3, c3, 3)
            shapes['hpp.global.projection'] = (self.strips_per_branch, c3, self.strip_dim)
        return shapes


def fan_in(name, shape):
    if name.endswith('.projection'):
        return shape[1]
    if name.endswith('.bias'):
        return None
    return int(np.prod(shape[1:]))


@dataclass
class GaitModel:
    config: ModelConfig
    weights: dict = field(default_factory=dict)

    def copy(self):
        return GaitModel(self.config, {name: w.copy() for name, w in self.weights.items()})

    def parameter_count(self):
        return int(sum(w.size for w in self.weights.values()))


@dataclass(frozen=True, eq=False)
class Embedding:
    strips: np.ndarray

    def __post_init__(self):
        strips = np.asarray(self.strips, dtype=np.float64)
        if strips.ndim != 2:
            raise InvalidConfig(f'embedding strips must be 2-D, got shape {strips.shape}')
        if not np.all(np.isfinite(strips)):
            raise NonFiniteEmbedding('embedding has non-finite entries')
        object.__setattr__(self, 'strips', strips)

    @property
    def flat(self):
        return self.strips.reshape(-1)

    @property
    def strip_count(self):
        return self.strips.shape[0]
