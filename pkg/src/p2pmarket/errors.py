"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when user-supplied data violates a documented contract."""


class CapExceededError(ValidationError):
    """Raised when an exhaustive check is asked to enumerate too many prosumers."""

    def __init__(self, check, n, max_n):
        self.check = check
        self.n = n
        self.max_n = max_n
        super().__init__(f"{check}: {n} prosumers exceeds the enumeration cap of {max_n}")


class SourceError(ValidationError):
    """A parse error tied to a location in an input file."""

    def __init__(self, message, source="<input>", line=None):
        self.source = source
        self.line = line
        where = f"{source}:{line}" if line is not None else str(source)
        super().__init__(f"{where}: {message}")


class SolverError(RuntimeError):
    """Internal inconsistency detected by the LP solver."""
