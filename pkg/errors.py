"""Exception types shared across the package."""


class PlsaeError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(PlsaeError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class DataValidationError(PlsaeError, ValueError):
    """An input file or table failed validation.

    ``source`` names the file (or table) and ``line`` the 1-based line in it,
    when known.
    """

    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(f"{where}{message}")


class NumericalError(PlsaeError, ArithmeticError):
    """A numerical step failed (non-SPD precision, non-finite update)."""

    def __init__(
        self,
        message: str,
        stage: str | None = None,
        iteration: int | None = None,
        condition: float | None = None,
    ):
        self.stage = stage
        self.iteration = iteration
        self.condition = condition
        parts = [message]
        if stage is not None:
            parts.append(f"stage={stage}")
        if iteration is not None:
            parts.append(f"iteration={iteration}")
        if condition is not None:
            parts.append(f"cond={condition:.3e}")
        super().__init__(" | ".join(parts))


class ReplicateOverflowError(PlsaeError):
    """Too many simulation replicates failed."""


class ConfigError(PlsaeError, ValueError):
    """The run configuration is malformed or refers to missing files."""
