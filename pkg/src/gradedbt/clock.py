"""Engine time sources. All times are integer milliseconds from clock start.

The engine only ever asks "what time is it" and "move to time t", so episodes
run identically on the simulated clock (jumps) and the wall clock (sleeps);
wall-clock sessions process timer firings at their logical deadline, which is
what makes recorded sessions replayable on the simulated clock.
"""
from __future__ import annotations

import time


class SimulatedClock:
    def __init__(self, start: int = 0):
        self._now = start

    def now(self) -> int:
        return self._now

    def advance_to(self, t: int) -> None:
        if t < self._now:
            raise ValueError(f"clock cannot move backwards ({t} < {self._now})")
        self._now = t


class WallClock:
    def __init__(self) -> None:
        self._t0 = time.monotonic_ns()

    def now(self) -> int:
        return (time.monotonic_ns() - self._t0) // 1_000_000

    def advance_to(self, t: int) -> None:
        delta_ms = t - self.now()
        if delta_ms > 0:
            time.sleep(delta_ms / 1000.0)
