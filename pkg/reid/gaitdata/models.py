from dataclasses import asdict, dataclass, field

SPLITS = ('train', 'val', 'test')


@dataclass(frozen=True)
class TrackletRecord:
    tracklet_id: str
    person_id: str
    camera_id: str
    split: str
    frames: tuple = field(default_factory=tuple)
    view: int = None
    condition: str = None
    sequence: int = None

    def __post_init__(self):
        object.__setattr__(self, 'frames', tuple(self.frames))

    def __str__(self):
        return self.tracklet_id

    def to_dict(self):
        data = asdict(self)
        data['frames'] = list(self.frames)
        return {key: value for key, value in data.items() if value is not None}

    def with_frames(self, frames, **changes):
        data = asdict(self)
        data.update(changes, frames=tuple(frames))
        return TrackletRecord(**data)


@dataclass
class EmbeddingEntry:
    tracklet_id: str
    vector: object
