class StructuralError(ValueError):
    """Malformed input: wrong shapes, missing vertices, disconnected graphs."""


class ParameterError(ValueError):
    """A numeric parameter outside its admissible range."""


class ResourceError(RuntimeError):
    """A configured size cap would be exceeded."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConditionError(AssertionError):
    """A structural condition failed on a built object; carries the witness."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
