"""Exception hierarchy shared by every module."""


class SameStyleError(Exception):
    """Base class for all package errors."""


class ValidationError(SameStyleError):
    """Input data or configuration violates a documented contract."""


class UnknownId(ValidationError, KeyError):
    """A record references a node that does not exist."""

    def __str__(self):
        return Exception.__str__(self)


class UnknownQuery(UnknownId):
    pass


class ShapeMismatch(ValidationError, ValueError):
    pass


class NonScalarRoot(SameStyleError, ValueError):
    pass


class BackwardError(SameStyleError, RuntimeError):
    """Raised when backward is invoked twice on the same graph."""


class DegenerateBatch(ValidationError, ValueError):
    pass


class EmptyTrainingSet(ValidationError, ValueError):
    pass


class EmptyCatalog(ValidationError, ValueError):
    pass


class EmptyTestSet(ValidationError, ValueError):
    pass


class EmptyList(ValidationError, ValueError):
    pass
