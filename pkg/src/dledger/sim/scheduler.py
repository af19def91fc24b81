"""Single-threaded discrete-event scheduler.

Events at equal timestamps run in scheduling order (a monotonic sequence
number breaks ties), which keeps runs bit-reproducible.
"""

from __future__ import annotations

import heapq
from typing import Callable


class Timer:
    __slots__ = ("cancelled",)

    def __init__(self):
        self.cancelled = False

    def cancel(self):
        self.cancelled = True


class Scheduler:
    def __init__(self):
        self._heap: list = []
        self._seq = 0
        self.now = 0.0

    def call_at(self, t: float, fn: Callable, *args) -> Timer:
        if t < self.now:
            t = self.now
        timer = Timer()
        heapq.heappush(self._heap, (t, self._seq, timer, fn, args))
        self._seq += 1
        return timer

    def call_later(self, delay: float, fn: Callable, *args) -> Timer:
        return self.call_at(self.now + delay, fn, *args)

    def run_until(self, t_end: float) -> None:
        heap = self._heap
        while heap and heap[0][0] <= t_end:
            t, _, timer, fn, args = heapq.heappop(heap)
            if timer.cancelled:
                continue
            self.now = t
            fn(*args)
        if self.now < t_end:
            self.now = t_end

    def run(self) -> None:
        heap = self._heap
        while heap:
            t, _, timer, fn, args = heapq.heappop(heap)
            if timer.cancelled:
                continue
            self.now = t
            fn(*args)
