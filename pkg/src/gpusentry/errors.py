"""Exception hierarchy shared by all gpusentry modules."""


class GpuSentryError(Exception):
    """Base class for every error raised by this package."""


class EmptySeries(GpuSentryError, ValueError):
    pass


class EmptyWindow(GpuSentryError, ValueError):
    pass


class PidMismatch(GpuSentryError, ValueError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"sample pid {got} does not match window pid {expected}")
        self.expected = expected
        self.got = got


class NonMonotonicTime(GpuSentryError, ValueError):
    """A sample arrived with a timestamp not after its predecessor."""

    def __init__(self, pid: int, t: float, last_t: float, line_no: int | None = None):
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"pid {pid}: t={t} is not after previous t={last_t}{where}")
        self.pid = pid
        self.t = t
        self.last_t = last_t
        self.line_no = line_no


class MalformedHeader(GpuSentryError, ValueError):
    pass


class UnparsableField(GpuSentryError, ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class UnknownGpuIndex(GpuSentryError, KeyError):
    def __init__(self, index: int):
        super().__init__(index)
        self.index = index

    def __str__(self) -> str:
        return f"no GPU with index {self.index}"


class MalformedLine(GpuSentryError, ValueError):
    def __init__(self, line_no: int, detail: str):
        super().__init__(f"line {line_no}: {detail}")
        self.line_no = line_no


class InvariantViolation(GpuSentryError, ValueError):
    def __init__(self, field: str, value, line_no: int | None = None):
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}field {field!r} has invalid value {value!r}")
        self.field = field
        self.value = value
        self.line_no = line_no


class ProfileError(GpuSentryError, ValueError):
    pass


class ConfigError(GpuSentryError, ValueError):
    pass


class TraceError(GpuSentryError):
    """Wraps a validation failure with the identity of the offending trace."""

    def __init__(self, trace_id: str, cause: Exception):
        super().__init__(f"trace {trace_id}: {cause}")
        self.trace_id = trace_id
        self.cause = cause
