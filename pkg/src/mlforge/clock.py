"""Injectable clocks. No module reads wall time directly."""

from __future__ import annotations

import time


class SystemClock:
    """Real time; ``tick`` sleeps so paced drivers can rate-limit."""

    def now(self) -> float:
        return time.time()

    def tick(self, dt: float) -> None:
        if dt > 0:
            time.sleep(dt)


class SimClock:
    """Manually advanced clock for deterministic tests and golden outputs."""

    def __init__(self, start: float = 1_700_000_000.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def tick(self, dt: float) -> None:
        self.advance(dt)

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError("clock cannot move backwards")
        self._now += dt
        return self._now
