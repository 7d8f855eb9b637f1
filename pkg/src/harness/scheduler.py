"""Discrete-event scheduler on a simpy environment: timed actions and periodic loops."""

from collections import Counter
from typing import Callable, Optional

import simpy

from ..utils.exceptions import DomainError

# Events this close to the horizon still run; tick times are products of float slot lengths
TIME_EPSILON = 1e-9


class EventScheduler:
    """Owns the simulated clock. Every action runs as a simpy process.

    Actions due at the same instant run in the order they were scheduled;
    a periodic loop schedules its next firing when the current one runs.
    """

    def __init__(self):
        self.env = simpy.Environment()
        self.counts: Counter = Counter()
        self.pending = 0
        self._failure: Optional[BaseException] = None

    @property
    def now(self) -> float:
        return self.env.now

    def schedule(self, at: float, kind: str, action: Callable[[], None]) -> simpy.Process:
        """Run `action` once at simulated time `at`."""
        if at < self.now - TIME_EPSILON:
            raise DomainError(f"cannot schedule '{kind}' at {at}, clock is at {self.now}",
                              error_code="EVENT_IN_PAST")
        self.pending += 1
        return self.env.process(self._once(max(at - self.now, 0.0), kind, action))

    def every(
        self, kind: str, interval: float, action: Callable[[int], None], start: Optional[float] = None
    ) -> simpy.Process:
        """Run `action(n)` at start + n * interval for n = 1, 2, ... until the simulation stops."""
        if interval <= 0:
            raise DomainError(f"'{kind}' interval must be positive, got {interval}",
                              error_code="BAD_INTERVAL", details={"interval": interval})
        self.pending += 1
        return self.env.process(self._loop(kind, interval, action, self.now if start is None else start))

    def run_until(self, until: float) -> int:
        """Execute every action due at or before `until`; the clock ends at `until`."""
        fired = sum(self.counts.values())
        while self.env.peek() <= until + TIME_EPSILON:
            self.env.step()
            if self._failure is not None:
                failure, self._failure = self._failure, None
                raise failure
        if until > self.env.now:
            self.env.run(until=until)
        return sum(self.counts.values()) - fired

    def _once(self, delay: float, kind: str, action: Callable[[], None]):
        yield self.env.timeout(delay)
        self.pending -= 1
        self._fire(kind, action)

    def _loop(self, kind: str, interval: float, action: Callable[[int], None], start: float):
        n = 1
        while self._failure is None:
            yield self.env.timeout(max(start + n * interval - self.env.now, 0.0))
            self._fire(kind, lambda: action(n))
            n += 1
        self.pending -= 1

    def _fire(self, kind: str, action: Callable[[], None]) -> None:
        # simpy rebuilds a process's exception from its args; keep the original for run_until
        try:
            action()
        except Exception as e:
            self._failure = e
            return
        self.counts[kind] += 1
