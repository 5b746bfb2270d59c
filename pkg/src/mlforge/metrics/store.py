"""In-memory metric series with ordered fan-out to live subscribers.

Ingestion never blocks on consumers: each subscriber owns a bounded queue
and is disconnected with an overflow notice if it falls too far behind.
"""

from __future__ import annotations

import queue
import threading
from collections import deque
from dataclasses import dataclass

from mlforge import errors
from mlforge.canonical import canonical_json, fmt_float

LIVE_STATES = ("RUNNING", "PAUSED")


@dataclass(frozen=True)
class MetricPoint:
    session_id: str
    step: int
    name: str
    value: float
    at: float

    def to_json_line(self) -> bytes:
        """Fixed-key-order JSON line for the stream wire format."""
        return (
            b'{"session_id":' + canonical_json(self.session_id)
            + b',"step":' + str(self.step).encode()
            + b',"name":' + canonical_json(self.name)
            + b',"value":' + fmt_float(self.value).encode()
            + b',"at":' + fmt_float(self.at).encode()
            + b"}"
        )


class Overflow:
    """Sentinel delivered to a subscriber dropped for falling behind."""


class Closed:
    """Sentinel marking the end of a subscription stream."""


class Subscription:
    def __init__(self, session_id: str, name: str | None, capacity: int):
        self.session_id = session_id
        self.name = name
        self.overflowed = False
        self.closed = False
        self._queue: queue.Queue = queue.Queue(maxsize=capacity)

    def push(self, item) -> bool:
        try:
            self._queue.put_nowait(item)
            return True
        except queue.Full:
            self.overflowed = True
            self.closed = True
            return False

    def get(self, timeout: float | None = None):
        """Next item, or None on timeout; Overflow/Closed end the stream."""
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            return None

    def __iter__(self):
        while True:
            item = self._queue.get()
            if isinstance(item, (Overflow, Closed)):
                return
            yield item


class MetricStore:
    def __init__(self, session_lookup=None, replay: int = 50, subscriber_capacity: int = 1024):
        """``session_lookup(session_id)`` returns the session's state name or
        None for unknown sessions; pass None to skip existence checks."""
        self._lookup = session_lookup
        self.replay = replay
        self.capacity = subscriber_capacity
        self._series: dict[str, dict[str, list[MetricPoint]]] = {}
        self._recent: dict[str, deque[MetricPoint]] = {}
        self._subs: dict[str, list[Subscription]] = {}
        self._lock = threading.RLock()

    def _check_session(self, session_id: str, for_write: bool = False) -> None:
        if self._lookup is None:
            return
        state = self._lookup(session_id)
        if state is None:
            raise errors.UnknownSession(f"session {session_id} does not exist")
        if for_write and state not in LIVE_STATES:
            raise errors.IllegalState(f"session {session_id} is {state}, not accepting metrics")

    def log(self, point: MetricPoint) -> None:
        with self._lock:
            self._check_session(point.session_id, for_write=True)
            by_name = self._series.setdefault(point.session_id, {})
            series = by_name.setdefault(point.name, [])
            if series:
                last = series[-1].step
                if point.step == last:
                    raise errors.DuplicatePoint(
                        f"({point.session_id}, {point.name}, {point.step}) already logged"
                    )
                if point.step < last:
                    raise errors.OutOfOrderPoint(
                        f"step {point.step} after {last} for ({point.session_id}, {point.name})"
                    )
            series.append(point)
            self._recent.setdefault(point.session_id, deque(maxlen=self.replay)).append(point)
            for sub in list(self._subs.get(point.session_id, ())):
                if sub.name is not None and sub.name != point.name:
                    continue
                if not sub.push(point):
                    self._subs[point.session_id].remove(sub)
                    self._force_notice(sub)

    @staticmethod
    def _force_notice(sub: Subscription) -> None:
        # make room for exactly one overflow notice so the reader learns why
        try:
            sub._queue.get_nowait()
        except queue.Empty:
            pass
        try:
            sub._queue.put_nowait(Overflow())
        except queue.Full:
            pass

    def query(
        self,
        session_id: str,
        name: str | None = None,
        from_step: int | None = None,
        to_step: int | None = None,
        tail: int | None = None,
    ) -> list[MetricPoint]:
        with self._lock:
            self._check_session(session_id)
            by_name = self._series.get(session_id, {})
            names = [name] if name is not None else sorted(by_name)
            points: list[MetricPoint] = []
            for n in names:
                points.extend(by_name.get(n, ()))
            points.sort(key=lambda p: (p.step, p.name))
            if from_step is not None:
                points = [p for p in points if p.step >= from_step]
            if to_step is not None:
                points = [p for p in points if p.step <= to_step]
            if tail is not None:
                points = points[-tail:] if tail > 0 else []
            return points

    def series_steps(self, session_id: str, name: str) -> list[int]:
        return [p.step for p in self._series.get(session_id, {}).get(name, ())]

    def export_series(self, session_ids: list[str], name: str) -> bytes:
        """CSV with one step column and one value column per session, in the
        argument order; cells are blank where a session lacks that step."""
        if not session_ids:
            raise errors.UnknownSession("export requires at least one session")
        with self._lock:
            for session_id in session_ids:
                self._check_session(session_id)
            columns: dict[str, dict[int, float]] = {}
            steps: set[int] = set()
            for session_id in session_ids:
                series = self._series.get(session_id, {}).get(name, ())
                columns[session_id] = {p.step: p.value for p in series}
                steps.update(columns[session_id])
        lines = ["step," + ",".join(session_ids)]
        for step in sorted(steps):
            cells = [str(step)]
            for session_id in session_ids:
                value = columns[session_id].get(step)
                cells.append("" if value is None else fmt_float(value))
            lines.append(",".join(cells))
        return ("\n".join(lines) + "\n").encode("utf-8")

    def export_json_lines(self, session_id: str) -> bytes:
        points = self.query(session_id)
        return b"".join(p.to_json_line() + b"\n" for p in points)

    def subscribe(self, session_id: str, name: str | None = None) -> Subscription:
        """Attach a live consumer; replays the last ``replay`` points first."""
        with self._lock:
            self._check_session(session_id)
            sub = Subscription(session_id, name, self.capacity)
            for point in self._recent.get(session_id, ()):
                if name is None or point.name == name:
                    sub.push(point)
            self._subs.setdefault(session_id, []).append(sub)
            return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            subs = self._subs.get(sub.session_id)
            if subs and sub in subs:
                subs.remove(sub)
            sub.push(Closed())

    def close_session(self, session_id: str) -> None:
        """Signal end-of-stream to every subscriber of a finished session."""
        with self._lock:
            for sub in self._subs.pop(session_id, []):
                sub.push(Closed())
