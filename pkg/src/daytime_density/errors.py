"""Exception hierarchy shared by every pipeline stage.

The CLI maps the three top-level families onto exit codes: validation
problems exit 1, ingest problems exit 2 and I/O problems exit 3.
"""

from __future__ import annotations


class DaytimeDensityError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DaytimeDensityError):
    """Bad configuration or arguments, detected before any data is read."""


class IngestError(DaytimeDensityError):
    """Input data could not be decoded or violates its format contract."""


class MissingColumn(IngestError):
    pass


class MalformedRow(IngestError):
    def __init__(self, lineno: int, reason: str, line: str | None = None):
        self.lineno = lineno
        self.reason = reason
        self.line = line
        msg = f"line {lineno}: {reason}"
        if line is not None:
            msg += f" ({line[:80]!r})"
        super().__init__(msg)


class TruncatedGzip(IngestError):
    pass


class MissingField(IngestError):
    pass


class GeometryDecode(IngestError):
    pass


class DuplicateGeoid(IngestError):
    pass


class StateNotFound(IngestError):
    pass


class BadGeoid(IngestError, ValueError):
    pass


class GeoidMismatch(DaytimeDensityError, ValueError):
    pass


class DegenerateInput(DaytimeDensityError, ValueError):
    pass


class DegenerateInputWarning(UserWarning):
    """Quantile classes collapsed because there are fewer distinct values than classes."""


class AllZero(DaytimeDensityError, ValueError):
    pass


class InvalidGeometry(DaytimeDensityError, ValueError):
    pass


class PaletteMismatch(DaytimeDensityError, ValueError):
    pass


class OutputError(DaytimeDensityError, OSError):
    """Writing an output file failed."""


class NetworkError(DaytimeDensityError, OSError):
    pass


class ChecksumMismatch(NetworkError):
    pass
