"""Deterministic discrete-event kernel with a two-endpoint delayed link.

Events are ordered by (at, seq): equal timestamps dispatch in the order they
were scheduled. A kernel is single-threaded; run independent simulations in
separate kernels.
"""

import heapq
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

from marssearch.core.config import LinkConfig
from marssearch.utils.logger import ClockAdapter, logger

SimTime = float


class Endpoint(str, Enum):
    EARTH = "earth"
    MARS = "mars"

    @property
    def peer(self) -> "Endpoint":
        return Endpoint.MARS if self is Endpoint.EARTH else Endpoint.EARTH


@dataclass(frozen=True, order=True)
class Event:
    at: SimTime
    seq: int = -1
    endpoint: Endpoint = field(default=Endpoint.MARS, compare=False)
    payload: Any = field(default=None, compare=False)


Handler = Callable[[Event], None]
TraceEntry = Tuple[SimTime, int, str, str]


class CausalityError(ValueError):
    """An event was scheduled before the current clock."""


class SimKernel:
    """Virtual clock plus an event queue and an Earth-Mars link."""

    def __init__(self, link: Optional[LinkConfig] = None, record_trace: bool = False):
        self.link = link or LinkConfig()
        self.clock: SimTime = 0.0
        self._queue: List[Event] = []
        self._next_seq = 0
        self._handlers: Dict[Endpoint, Handler] = {}
        self.record_trace = record_trace
        self.trace: List[TraceEntry] = []
        self.transmitted = 0
        self.log = ClockAdapter(logger, lambda: self.clock)

    def __len__(self) -> int:
        return len(self._queue)

    def on(self, endpoint: Endpoint, handler: Handler) -> None:
        """Register the handler that receives events addressed to an endpoint."""
        self._handlers[Endpoint(endpoint)] = handler

    def schedule(self, event: Event) -> Event:
        """Enqueue an event; the kernel stamps its sequence number."""
        if not math.isfinite(event.at):
            raise CausalityError(f"Event time must be finite, got {event.at!r}")
        if event.at < self.clock:
            raise CausalityError(
                f"Event at t={event.at} scheduled in the past (clock={self.clock})"
            )
        stamped = replace(event, seq=self._next_seq)
        self._next_seq += 1
        heapq.heappush(self._queue, stamped)
        return stamped

    def post(self, at: SimTime, endpoint: Endpoint, payload: Any = None) -> Event:
        return self.schedule(Event(at=at, endpoint=Endpoint(endpoint), payload=payload))

    def transmit(
        self,
        payload: Any,
        src: Endpoint,
        dst: Endpoint,
        at: Optional[SimTime] = None,
    ) -> SimTime:
        """Send a message over the link; returns its arrival time at `dst`."""
        src, dst = Endpoint(src), Endpoint(dst)
        if src is dst:
            raise ValueError(f"Cannot transmit from {src.value} to itself")
        sent = self.clock if at is None else at
        arrival = sent + self.link.one_way_delay_s
        self.post(arrival, dst, payload)
        self.transmitted += 1
        return arrival

    def next_time(self) -> Optional[SimTime]:
        return self._queue[0].at if self._queue else None

    def _dispatch(self, event: Event) -> None:
        self.clock = event.at
        if self.record_trace:
            self.trace.append((event.at, event.seq, event.endpoint.value, repr(event.payload)))
        handler = self._handlers.get(event.endpoint)
        if handler is not None:
            handler(event)

    def run_until(self, t: SimTime) -> int:
        """Dispatch every event with at <= t, then set the clock to t."""
        if t < self.clock:
            raise CausalityError(f"run_until({t}) is behind the clock ({self.clock})")
        processed = 0
        while self._queue and self._queue[0].at <= t:
            self._dispatch(heapq.heappop(self._queue))
            processed += 1
        self.clock = t
        return processed

    def run(self, max_events: Optional[int] = None) -> int:
        """Dispatch until the queue is empty; the clock stays at the last event."""
        processed = 0
        while self._queue:
            if max_events is not None and processed >= max_events:
                self.log.warning(f"Kernel stopped after {processed} events with work left")
                break
            self._dispatch(heapq.heappop(self._queue))
            processed += 1
        return processed
