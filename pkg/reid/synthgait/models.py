import math
from dataclasses import asdict, dataclass, replace

from partialgait.exceptions import InvalidConfig

# (low, high) for every per-identity quantity; lengths in pixels, angles in radians.
RANGES = {
    'head_radius': (5.0, 7.0),
    'torso_width': (16.0, 22.0),
    'torso_height': (30.0, 38.0),
    'upper_arm': (14.0, 18.0),
    'lower_arm': (12.0, 16.0),
    'upper_leg': (20.0, 26.0),
    'lower_leg': (20.0, 26.0),
    'arm_amplitude': (0.2, 1.0),
    'leg_amplitude': (0.2, 0.8),
    'phase_offset': (0.0, 2 * math.pi),
}
PERIOD_FRAMES = (10, 18)

VIEW_ANGLES = {'frontal': 0, 'oblique': 45, 'lateral': 90}
MAX_DROPOUT = 0.2


@dataclass(frozen=True)
class IdentityParams:
    head_radius: float
    torso_width: float
    torso_height: float
    upper_arm: float
    lower_arm: float
    upper_leg: float
    lower_leg: float
    arm_amplitude: float
    leg_amplitude: float
    phase_offset: float
    period_frames: int

    def __post_init__(self):
        lengths = (self.head_radius, self.torso_width, self.torso_height, self.upper_arm,
                   self.lower_arm, self.upper_leg, self.lower_leg)
        if min(lengths) <= 0:
            raise InvalidConfig('segment lengths must be positive')
        for amplitude in (self.arm_amplitude, self.leg_amplitude):
            if not 0 <= amplitude <= math.pi / 2:
                raise InvalidConfig(f'swing amplitude {amplitude} outside [0, pi/2]')
        if self.period_frames < 2:
            raise InvalidConfig('period_frames must be at least 2')

    @property
    def cadence(self):
        """Radians per frame."""
        return 2 * math.pi / self.period_frames

    def to_dict(self):
        return asdict(self)

    def with_changes(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class CameraSpec:
    view: str = 'frontal'
    scale: float = 1.0
    mirror: bool = False
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.view not in VIEW_ANGLES:
            raise InvalidConfig(f'view must be one of {sorted(VIEW_ANGLES)}, got {self.view!r}')
        if self.scale <= 0:
            raise InvalidConfig('scale must be positive')
        if not 0 <= self.dropout <= MAX_DROPOUT:
            raise InvalidConfig(f'dropout must lie in [0, {MAX_DROPOUT}]')

    @property
    def angle(self):
        return math.radians(VIEW_ANGLES[self.view])

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def with_seed(self, seed):
        return replace(self, seed=seed)
