"""Exception taxonomy shared across the toolkit.

Agents map these onto HTTP status codes (see PROTOCOL.md); everything
else raises them directly.
"""

from __future__ import annotations


class GridmonError(Exception):
    """Base class for all toolkit errors."""


class ParseError(GridmonError):
    """Statement text could not be parsed. Carries the offset of the offending token."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class BindError(GridmonError):
    """An expression or predicate does not resolve/type-check against its table(s)."""


class ValidationError(GridmonError):
    """A tuple does not conform to its table definition."""


class SchemaConflictError(GridmonError):
    """A table is being redeclared with a different definition."""


class UnknownTableError(GridmonError):
    """The referenced table is not in the schema."""


class UnknownIdError(GridmonError):
    """No live registration/engine with this id; the client must re-register."""


class KindMismatchError(GridmonError):
    """The operation is not supported by this producer kind."""


class ViewViolationError(GridmonError):
    """A tuple falls outside the slice the producer declared it publishes."""


class OwnershipError(GridmonError):
    """Direct insert into a producer currently controlled by an archiver."""


class ConfigError(GridmonError):
    """Invalid engine or agent configuration."""


class ProtocolError(GridmonError):
    """An HTTP peer returned an error or an unreadable response."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status
