"""
Error types shared by every app.

Each error carries a stable ``code`` (its class name) so the command line can
report failures as a single machine-readable line.
"""


class GaitReidError(Exception):
    """Base class for data and configuration errors."""

    def __init__(self, message='', **detail):
        super().__init__(message)
        self.message = message
        self.detail = detail

    @property
    def code(self):
        return type(self).__name__

    def as_dict(self):
        payload = {'error': self.code, 'message': self.message}
        if self.detail:
            payload['detail'] = self.detail
        return payload


# Configuration
class InvalidConfig(GaitReidError):
    pass


# Silhouette pipeline
class InvalidLabelMap(GaitReidError):
    pass


class DimensionMismatch(GaitReidError):
    pass


class EmptySilhouette(GaitReidError):
    pass


class AllFramesDropped(GaitReidError):
    pass


# Embedder
class EmptySet(GaitReidError):
    pass


class IndivisibleHeight(GaitReidError):
    pass


class ShapeMismatch(GaitReidError):
    pass


class NonFiniteEmbedding(GaitReidError):
    pass


# Trainer
class InsufficientIdentities(GaitReidError):
    pass


class NoValidTriplets(GaitReidError):
    pass


# Retrieval
class ZeroVector(GaitReidError):
    pass


class NoPositives(GaitReidError):
    pass


class NoValidQueries(GaitReidError):
    pass


class MissingView(GaitReidError):
    pass


class EmptyInput(GaitReidError):
    pass


class IdMismatch(GaitReidError):
    pass


# Files
class MalformedLine(GaitReidError):
    def __init__(self, message='', line=None, **detail):
        super().__init__(message, line=line, **detail)
        self.line = line


class DuplicateId(GaitReidError):
    pass


class LayoutError(GaitReidError):
    def __init__(self, message='', paths=(), **detail):
        super().__init__(message, paths=list(paths), **detail)
        self.paths = list(paths)


class BadMagic(GaitReidError):
    pass


class DimMismatch(GaitReidError):
    pass


class Truncated(GaitReidError):
    pass


# Synthetic data
class InvalidCanvas(GaitReidError):
    pass
