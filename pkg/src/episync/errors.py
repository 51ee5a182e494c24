"""Exception hierarchy shared by all episync modules."""


class EpisyncError(Exception):
    """Base class for every error raised by this package."""


# geometry
class OutOfRange(EpisyncError):
    pass


class DegenerateBaseline(EpisyncError):
    pass


class BehindCamera(EpisyncError):
    pass


# energy
class DegenerateResidual(EpisyncError):
    pass


# pairwise / global
class NoOverlap(EpisyncError):
    pass


class SingularSystem(EpisyncError):
    pass


# synth
class InfeasibleSpec(EpisyncError):
    pass


# metrics
class UnknownVideo(EpisyncError):
    pass


class EmptyInput(EpisyncError):
    pass


class MissingReference(EpisyncError):
    pass


# io
class DataError(EpisyncError):
    """Anything wrong with an input file. Maps to CLI exit code 2."""


class ParseError(DataError):
    pass


class SchemaError(DataError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class IntegrityError(DataError):
    pass


class InvariantError(DataError):
    pass
