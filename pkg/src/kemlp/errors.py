"""Exception hierarchy shared by all kemlp modules."""


class KemlpError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(KemlpError, ValueError):
    """An argument violates a documented precondition."""


class UnsupportedShapeError(KemlpError, ValueError):
    """The operation is not defined for this graph or profile shape."""


class NumericalOverflowError(KemlpError, ArithmeticError):
    """A computed score or probability is not finite."""


class TrainingDivergedError(KemlpError, ArithmeticError):
    def __init__(self, iteration: int, message: str = "") -> None:
        self.iteration = iteration
        super().__init__(message or f"training diverged at iteration {iteration}")


class EnumerationTooLargeError(KemlpError):
    """Exact enumeration would exceed the configured budget."""


class ParseError(KemlpError, ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None) -> None:
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class SchemaError(KemlpError, ValueError):
    def __init__(self, message: str, field: str = "") -> None:
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class HeaderMismatchError(KemlpError, ValueError):
    """A sensor log header does not match the governing graph spec."""
