"""Custom exceptions for the SDQKD network emulator."""

from typing import Optional, Dict, Any, List


class QKDNetworkError(Exception):
    """Base exception for emulator errors."""

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)


class DomainError(QKDNetworkError):
    """Raised when an argument lies outside the domain of a model function."""

    def __init__(self, message: str, error_code: str = "DOMAIN_ERROR", **kwargs):
        super().__init__(message, error_code=error_code, details=kwargs.get('details', {}))


class TopologyError(QKDNetworkError):
    """Raised when a topology change would violate a model invariant."""

    def __init__(
        self,
        message: str,
        violations: Optional[List[Any]] = None,
        error_code: str = "TOPOLOGY_INVALID",
        **kwargs
    ):
        self.violations = violations or []
        details = kwargs.get('details', {})
        if self.violations:
            details['violations'] = [
                v.model_dump() if hasattr(v, "model_dump") else v for v in self.violations]
        super().__init__(message, error_code=error_code, details=details)


class LinkError(QKDNetworkError):
    """Raised for physical/virtual link failures (infeasible, busy, wrong kind...)."""

    def __init__(
        self,
        message: str,
        error_code: str = "LINK_ERROR",
        link_id: Optional[str] = None,
        **kwargs
    ):
        self.link_id = link_id
        details = kwargs.get('details', {})
        if link_id:
            details['link_id'] = link_id
        super().__init__(message, error_code=error_code, details=details)


class RoutingError(QKDNetworkError):
    """Raised when a relay route cannot be computed."""

    def __init__(self, message: str, error_code: str = "NO_RELAY_ROUTE", **kwargs):
        super().__init__(message, error_code=error_code, details=kwargs.get('details', {}))


class KeyDeliveryError(QKDNetworkError):
    """Raised by the application-facing key delivery interface."""

    def __init__(
        self,
        message: str,
        error_code: str = "KEY_DELIVERY_ERROR",
        session_id: Optional[str] = None,
        **kwargs
    ):
        self.session_id = session_id
        details = kwargs.get('details', {})
        if session_id:
            details['session_id'] = session_id
        super().__init__(message, error_code=error_code, details=details)


class KeyDepletionError(KeyDeliveryError):
    """Raised when a link holds too little key material for a request."""

    def __init__(
        self,
        message: str,
        link_id: str,
        available_bits: int,
        requested_bits: int,
        session_id: Optional[str] = None
    ):
        self.link_id = link_id
        self.available_bits = available_bits
        self.requested_bits = requested_bits
        details = {"link_id": link_id, "available_bits": available_bits,
                   "requested_bits": requested_bits}
        super().__init__(message, error_code="KEY_DEPLETION",
                         session_id=session_id, details=details)


class DesynchronizedLinkError(QKDNetworkError):
    """Raised when the two ends of a link disagree on block sequence or state."""

    def __init__(self, message: str, link_id: str, **kwargs):
        self.link_id = link_id
        details = kwargs.get('details', {})
        details['link_id'] = link_id
        super().__init__(message, error_code="DESYNCHRONIZED_LINK", details=details)


class RelayError(QKDNetworkError):
    """Raised when a trusted-relay operation is refused."""

    def __init__(self, message: str, error_code: str = "RELAY_ERROR", **kwargs):
        super().__init__(message, error_code=error_code, details=kwargs.get('details', {}))


class RelayDepletionError(RelayError):
    """Raised when a hop of a relay path cannot supply its one-time pad."""

    def __init__(self, message: str, hop_link_id: str, hop_index: int, available_bits: int, **kwargs):
        self.hop_link_id = hop_link_id
        self.hop_index = hop_index
        details = kwargs.get('details', {})
        details.update(hop_link_id=hop_link_id, hop_index=hop_index,
                       available_bits=available_bits)
        super().__init__(message, error_code="RELAY_KEY_DEPLETION", details=details)


class DirectiveError(QKDNetworkError):
    """Raised by an agent when a controller directive cannot be executed."""

    def __init__(
        self,
        message: str,
        error_code: str = "DIRECTIVE_ERROR",
        directive_id: Optional[str] = None,
        **kwargs
    ):
        self.directive_id = directive_id
        details = kwargs.get('details', {})
        if directive_id:
            details['directive_id'] = directive_id
        super().__init__(message, error_code=error_code, details=details)


class ScenarioError(QKDNetworkError):
    """Raised when a scenario document does not validate."""

    def __init__(self, message: str, field_paths: Optional[List[str]] = None, **kwargs):
        self.field_paths = field_paths or []
        details = kwargs.get('details', {})
        if self.field_paths:
            details['field_paths'] = self.field_paths
        super().__init__(message, error_code="SCENARIO_INVALID", details=details)


class ConfigurationError(QKDNetworkError):
    """Exception raised when configuration is invalid."""

    def __init__(self, message: str, config_key: Optional[str] = None, **kwargs):
        self.config_key = config_key
        details = kwargs.get('details', {})
        if config_key:
            details['config_key'] = config_key
        super().__init__(message, error_code="CONFIGURATION_ERROR", details=details)


class ApplicationError(QKDNetworkError):
    """Raised for application registry conflicts and unknown applications."""

    def __init__(self, message: str, error_code: str = "APPLICATION_ERROR", app_id: Optional[str] = None, **kwargs):
        self.app_id = app_id
        details = kwargs.get('details', {})
        if app_id:
            details['app_id'] = app_id
        super().__init__(message, error_code=error_code, details=details)
