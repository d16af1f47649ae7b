"""Exception types shared across the toolkit."""


class CrashLabError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgument(CrashLabError, ValueError):
    pass


class ParseError(CrashLabError, ValueError):
    """Malformed input file. Carries the offending row and column when known."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.row = row
        self.column = column


class InvalidGeometry(CrashLabError, ValueError):
    pass


class ContractViolation(CrashLabError):
    pass


class SingularInput(CrashLabError, ValueError):
    pass


class SolverError(CrashLabError, RuntimeError):
    pass


class UndefinedMetric(CrashLabError, ValueError):
    pass


class InconsistentTrace(CrashLabError, ValueError):
    pass


class InvalidExpression(CrashLabError, ValueError):
    pass


class EmptyFront(CrashLabError):
    pass


class ConfigError(CrashLabError):
    pass


class StageError(CrashLabError):
    """A pipeline stage failed; names the stage and, when relevant, the sample."""

    def __init__(self, stage, message, sample_id=None):
        prefix = f"stage {stage!r}"
        if sample_id is not None:
            prefix += f", sample {sample_id}"
        super().__init__(f"{prefix}: {message}")
        self.stage = stage
        self.sample_id = sample_id


class MissingArtifact(CrashLabError, FileNotFoundError):
    pass
