"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SemgAuditError(Exception):
    exit_code = 1


class ConfigError(SemgAuditError):
    exit_code = 2


class DataError(SemgAuditError):
    exit_code = 3


class SchemaError(DataError):
    def __init__(self, message, field=None, subject=None):
        where = []
        if subject is not None:
            where.append(f"subject={subject!r}")
        if field is not None:
            where.append(f"field={field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.subject = subject


class ShapeMismatchError(DataError):
    pass


class NumericError(SemgAuditError):
    exit_code = 4
