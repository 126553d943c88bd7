"""Error types shared across the package.

Every error carries a stable machine-readable ``code`` so CLI and HTTP
surfaces can emit structured failures without string matching.
"""

from __future__ import annotations


class LeastScopeError(Exception):
    """Base class for all package errors."""

    code = "error"

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


class ScopeMapParseError(LeastScopeError):
    """Scope-map document is not well-formed structured text."""

    code = "scope_map_parse_error"


class ScopeMapValidationError(LeastScopeError):
    """Scope-map document parsed but violates the schema."""

    code = "scope_map_validation_error"

    def __init__(self, message: str, path: str = "") -> None:
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class UnknownMethodError(LeastScopeError):
    """Method name not present in any scope of the app."""

    code = "unknown_method"

    def __init__(self, app_id: str, method: str, call_index: int | None = None) -> None:
        where = f" (call {call_index})" if call_index is not None else ""
        super().__init__(f"unknown method {method!r} for app {app_id!r}{where}")
        self.app_id = app_id
        self.method = method
        self.call_index = call_index


class ConfigurationError(LeastScopeError):
    """Unknown cost model, profile, persona, or missing credential."""

    code = "configuration_error"


class OracleCapacityError(LeastScopeError):
    """Brute-force oracle refused an instance above its size guard."""

    code = "oracle_capacity_exceeded"


class InstanceValidationError(LeastScopeError):
    """Cover instance references unknown nodes or empty requirement sets."""

    code = "instance_validation_error"


class PlanValidationError(LeastScopeError):
    """Execution plan is structurally invalid."""

    code = "plan_validation_error"

    def __init__(self, message: str, call_index: int | None = None) -> None:
        super().__init__(message)
        self.call_index = call_index

    def to_dict(self) -> dict:
        body = super().to_dict()
        body["call_index"] = self.call_index
        return body


class AuthenticationError(LeastScopeError):
    """Session token missing, unknown, or dead."""

    code = "authentication_rejected"


class SessionError(LeastScopeError):
    """Session id unknown or already closed."""

    code = "unknown_session"


class ConflictError(LeastScopeError):
    """Permission request already decided or expired."""

    code = "request_conflict"


class NotFoundError(LeastScopeError):
    """Referenced grant, plan, or request does not exist."""

    code = "not_found"


class InternalInvariantError(LeastScopeError):
    """A state the design proves unreachable was reached."""

    code = "internal_invariant"
