"""SDN control plane: spectrum planning, relay routing, message buses and the controller."""

from .bus import CONTROLLER_ADDRESS, MessageBus, NotificationBus, agent_address, topic_matches
from .classical import DEDICATED_CHANNEL, SERVICE_CHANNEL, ClassicalNetwork
from .controller import SDNController, app_key
from .paths import bottleneck_rate, build_key_graph, compute_path
from .spectrum import assign_spectrum, spectrum_collisions

__all__ = [
    "CONTROLLER_ADDRESS",
    "MessageBus",
    "NotificationBus",
    "agent_address",
    "topic_matches",
    "DEDICATED_CHANNEL",
    "SERVICE_CHANNEL",
    "ClassicalNetwork",
    "SDNController",
    "app_key",
    "bottleneck_rate",
    "build_key_graph",
    "compute_path",
    "assign_spectrum",
    "spectrum_collisions",
]
