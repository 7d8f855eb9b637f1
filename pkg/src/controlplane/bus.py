"""In-process transports: the southbound message queue and the topic notification bus."""

from collections import deque
from typing import Any, Callable, Deque, Dict, List, Tuple

from ..models.control import Notification
from ..utils.exceptions import QKDNetworkError
from ..utils.logging_config import log_debug, log_notification

Handler = Callable[[Any], None]
Tap = Callable[[str, Any], None]

CONTROLLER_ADDRESS = "controller"


def agent_address(node_id: str) -> str:
    return f"agent/{node_id}"


class MessageBus:
    """FIFO queue of (address, message) pairs drained to quiescence by pump()."""

    def __init__(self):
        self._queue: Deque[Tuple[str, Any]] = deque()
        self._handlers: Dict[str, Handler] = {}
        self._taps: List[Tap] = []
        self.delivered = 0

    def attach(self, address: str, handler: Handler) -> None:
        self._handlers[address] = handler

    def detach(self, address: str) -> None:
        self._handlers.pop(address, None)

    def tap(self, observer: Tap) -> None:
        """Observe every delivered message, before its handler runs."""
        self._taps.append(observer)

    def send(self, address: str, message: Any) -> None:
        if address not in self._handlers:
            raise QKDNetworkError(f"No endpoint attached at '{address}'",
                                  error_code="UNKNOWN_ADDRESS", details={"address": address})
        self._queue.append((address, message))

    @property
    def in_flight(self) -> int:
        return len(self._queue)

    def pump(self) -> int:
        """Deliver queued messages, including those sent while delivering. Returns the count."""
        count = 0
        while self._queue:
            address, message = self._queue.popleft()
            handler = self._handlers.get(address)
            if handler is None:
                log_debug("warning", message="dropping message for detached endpoint",
                          address=address, kind=type(message).__name__)
                continue
            for observer in self._taps:
                observer(address, message)
            handler(message)
            count += 1
            self.delivered += 1
        return count


def topic_matches(pattern: str, topic: str) -> bool:
    """Dot-separated topic match: '*' is one word, '#' is zero or more words."""
    def match(p: List[str], t: List[str]) -> bool:
        if not p:
            return not t
        if p[0] == "#":
            return any(match(p[1:], t[i:]) for i in range(len(t) + 1))
        if not t:
            return False
        return (p[0] == "*" or p[0] == t[0]) and match(p[1:], t[1:])

    return match(pattern.split("."), topic.split("."))


class NotificationBus:
    """Topic publish/subscribe on top of the message bus, at-least-once.

    Every published notification is kept so it can be redelivered; subscribers
    deduplicate by (emitter, seq).
    """

    def __init__(self, bus: MessageBus):
        self.bus = bus
        self._subscriptions: List[Tuple[str, str]] = []
        self.published: List[Notification] = []

    def subscribe(self, address: str, pattern: str) -> None:
        if (address, pattern) not in self._subscriptions:
            self._subscriptions.append((address, pattern))

    def publish(self, notification: Notification) -> int:
        """Queue a notification for every matching subscriber; returns the fan-out."""
        self.published.append(notification)
        log_notification(notification.topic, notification.emitter, notification.seq,
                         kind=notification.kind.value)
        return self._fan_out(notification)

    def redeliver(self, last: int = 1) -> int:
        """Send the most recent notifications again, as a broker retry would."""
        return sum(self._fan_out(n) for n in self.published[-last:]) if last > 0 else 0

    def _fan_out(self, notification: Notification) -> int:
        targets = sorted({address for address, pattern in self._subscriptions
                          if topic_matches(pattern, notification.topic)})
        for address in targets:
            self.bus.send(address, notification)
        return len(targets)
