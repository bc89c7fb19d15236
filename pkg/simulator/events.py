"""
Event calendar for the discrete-event simulator
"""

import heapq
import itertools
from typing import Any, List, NamedTuple, Optional


class Event(NamedTuple):
    time: int
    seq: int
    kind: str
    payload: Any


class EventCalendar:
    """Time-ordered events; equal times pop in scheduling order."""

    def __init__(self):
        self._heap: List[Event] = []
        self._counter = itertools.count()
        self.now = 0

    def schedule(self, time: int, kind: str, payload: Any = None) -> None:
        if time < self.now:
            raise ValueError(f"Cannot schedule '{kind}' at {time} ns, clock is at {self.now} ns")
        heapq.heappush(self._heap, Event(int(time), next(self._counter), kind, payload))

    def pop(self) -> Event:
        event = heapq.heappop(self._heap)
        self.now = event.time
        return event

    def peek(self) -> Optional[Event]:
        return self._heap[0] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)
