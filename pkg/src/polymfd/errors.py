"""Exception hierarchy shared by all modules."""


class PolyMFDError(Exception):
    """Base class for every error raised by polymfd."""


class MeshError(PolyMFDError):
    pass


class DegenerateFace(MeshError):
    pass


class NonPlanarFace(MeshError):
    pass


class OpenSurface(MeshError):
    pass


class NegativeVolume(MeshError):
    pass


class InvalidParam(PolyMFDError, ValueError):
    pass


class ParseError(PolyMFDError):
    pass


class SchemaVersionMismatch(ParseError):
    pass


class WeightSolveFailure(PolyMFDError):
    pass


class RankDeficiency(PolyMFDError):
    pass


class RankDeficientN(RankDeficiency):
    pass


class SingularKTilde(PolyMFDError):
    pass


class NonPositive(PolyMFDError):
    """Scalar product spectrum is not strictly positive."""


class EmptyInterior(PolyMFDError):
    pass


class SingularSystem(PolyMFDError):
    pass


class SingularFactorization(SingularSystem):
    pass


class NoConvergence(PolyMFDError):
    pass


class MissingExact(PolyMFDError):
    pass


class BadSequence(PolyMFDError, ValueError):
    pass
