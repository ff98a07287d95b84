"""Exception hierarchy."""


class QmcrError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(QmcrError, ValueError):
    pass


class SingularMatrix(QmcrError):
    pass


class NoConvergence(QmcrError):
    pass


class BranchCut(QmcrError):
    pass


class NoInvariantState(QmcrError):
    pass


class ResolventSingular(QmcrError):
    pass


class StateOutsideSubspace(QmcrError, ValueError):
    pass


class NonIdempotent(QmcrError, ValueError):
    pass


class NotUnitalOnEnclosure(QmcrError):
    pass


class NotInvariant(QmcrError):
    pass


class NotIrreducible(QmcrError):
    pass


class InvalidPartition(QmcrError, ValueError):
    pass


class StateOutsideOverlap(QmcrError, ValueError):
    pass


class LeftNotRecurrent(QmcrError):
    pass


class SingularIterate(QmcrError):
    pass


class HypothesisViolated(QmcrError):
    pass


class InvalidWeights(QmcrError, ValueError):
    pass


class ModelFileError(QmcrError):
    """Parse or validation error located inside a model file."""

    def __init__(self, message, path=None, key=None, index=None):
        self.path = path
        self.key = key
        self.index = index
        where = [str(x) for x in (path, key, index) if x is not None]
        super().__init__(f"{':'.join(where)}: {message}" if where else message)
