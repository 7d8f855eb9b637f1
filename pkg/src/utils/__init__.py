"""Utility modules for the SDQKD network emulator."""

from .exceptions import (
    QKDNetworkError,
    DomainError,
    TopologyError,
    LinkError,
    RoutingError,
    KeyDeliveryError,
    KeyDepletionError,
    DesynchronizedLinkError,
    RelayError,
    RelayDepletionError,
    DirectiveError,
    ScenarioError,
    ConfigurationError,
    ApplicationError,
)

__all__ = [
    "QKDNetworkError",
    "DomainError",
    "TopologyError",
    "LinkError",
    "RoutingError",
    "KeyDeliveryError",
    "KeyDepletionError",
    "DesynchronizedLinkError",
    "RelayError",
    "RelayDepletionError",
    "DirectiveError",
    "ScenarioError",
    "ConfigurationError",
    "ApplicationError",
]
