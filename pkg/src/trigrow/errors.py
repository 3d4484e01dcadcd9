"""Exception hierarchy shared by every trigrow module."""


class TrigrowError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""


class ParseError(TrigrowError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ValidationError(TrigrowError):
    pass


class DegenerateInputError(TrigrowError):
    pass


class DegenerateTriangleError(DegenerateInputError):
    pass


class DegenerateConfigurationError(DegenerateInputError):
    pass


class DegeneratePairError(DegenerateInputError):
    """Two keypoints of a triangle coincide, so their direction is undefined."""


class ConstraintConflictError(TrigrowError):
    pass


class InfeasiblePartitionError(TrigrowError):
    pass


class ContractViolationError(TrigrowError):
    pass
