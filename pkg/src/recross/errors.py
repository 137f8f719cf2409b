"""Error taxonomy shared by the engine and the backend protocol.

The four protocol kinds (transport, not_found, precondition,
protocol_violation) match the wire format's ``error.kind`` field, so a
remote failure surfaces as the same exception type a local one would.
"""

from __future__ import annotations


class RecrossError(Exception):
    """Base class for all engine errors."""


class BackendError(RecrossError):
    """Base class for backend-protocol failures; ``kind`` mirrors the wire."""

    kind = "transport"


class TransportError(BackendError):
    """Backend unreachable or the response was not a valid protocol message."""

    kind = "transport"


class ModelNotFoundError(BackendError):
    """A model handle does not resolve to any backend-side state."""

    kind = "not_found"


class PreconditionError(BackendError):
    """Caller violated an operation precondition (empty input, bad sizes...)."""

    kind = "precondition"


class ProtocolViolationError(BackendError):
    """Backend returned a response that breaks the protocol contract."""

    kind = "protocol_violation"


#: Maps wire ``error.kind`` strings back to exception classes.
ERROR_KINDS: dict[str, type[BackendError]] = {
    cls.kind: cls
    for cls in (TransportError, ModelNotFoundError, PreconditionError, ProtocolViolationError)
}


class CorpusFormatError(RecrossError):
    """A corpus file line could not be parsed; message names the line."""


class DuplicateExampleError(CorpusFormatError):
    """Two corpus records share an example_id; message cites both lines."""


class IndexBuildError(RecrossError):
    """Index construction failed (zero-norm embedding, dimension drift...)."""


class IndexFormatError(RecrossError):
    """An index file is truncated, corrupt, or has an unknown version."""


class PoolTooSmallError(RecrossError):
    """The post-discard mining pool cannot supply both selection sets."""
